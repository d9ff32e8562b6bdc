fn main() {
    std::process::exit(spa::cli::main_entry());
}
