//! Command-line front end.
//!
//! `spa <mode> --config <path> [--out <dir>] [--steps-per-unit N] [--seed K]`
//!
//! Exit codes: 0 success, 1 bad invocation or config, 2 solver failure.
//! Solver failures still write report.json with an `error` field; config
//! errors are reported on stderr only.

pub mod config;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, ValueEnum};

use crate::bench::get_benchmark;
use crate::costate::{solve_costate, CostateTrajectory, DEFAULT_TOL_COSTATE};
use crate::error::Error;
use crate::gradient::{evaluate, EvalOptions};
use crate::integrator::{integrate_psi, Trajectory, DEFAULT_STEPS_PER_UNIT};
use crate::optimizer::{optimize, Method, OptimizeOptions};
use crate::problem::{default_eps_sep, ProblemDef, SwitchSchedule};
use crate::shooting::{
    newton_certificate, solve_boundary, CertificateOptions, ShootingResult, DEFAULT_MAX_ITER,
    DEFAULT_TOL_RES,
};
use crate::verify::{remainder_study, switch_perturbation_study, terminal_perturbation_study};

use config::RunConfig;
use report::{
    costate_section, write_trajectory_csv, CertificateSection, HistoryEntry, OptimizeSection,
    Report, ShootingSection, StudySection,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Solve the boundary problem at the given switch times.
    Solve,
    /// Solve, then compute the switch-time gradient of the objective.
    Gradient,
    /// Optimize the switch times.
    Optimize,
    /// Measure sensitivity to terminal boundary perturbations.
    PerturbTerminal,
    /// Measure sensitivity to moving one switch time.
    PerturbSwitch,
    /// Measure the Taylor remainder of the objective in one switch time.
    Remainder,
    /// Compute the Newton convergence certificate around the solution.
    Certificate,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Solve => "solve",
            Mode::Gradient => "gradient",
            Mode::Optimize => "optimize",
            Mode::PerturbTerminal => "perturb-terminal",
            Mode::PerturbSwitch => "perturb-switch",
            Mode::Remainder => "remainder",
            Mode::Certificate => "certificate",
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "spa",
    version,
    about = "Boundary-consistent trajectories and switch-time optimization for switched dynamics"
)]
pub struct Cli {
    /// What to run.
    #[arg(value_enum)]
    pub mode: Mode,
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides the config; default ".").
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Mesh density override (steps per unit time).
    #[arg(long)]
    pub steps_per_unit: Option<usize>,
    /// Sampling seed override for certificate mode.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Entry point used by main(): parses real process arguments.
pub fn main_entry() -> i32 {
    run_with_args(std::env::args_os())
}

/// Full CLI run on explicit arguments; returns the process exit code.
pub fn run_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

struct Outcome {
    report: Report,
    trajectory: Option<(Trajectory<f64>, Option<CostateTrajectory<f64>>)>,
}

/// Everything after argument parsing. `Err` is the config/IO path (exit 1);
/// `Ok` carries the solver-determined exit code.
fn run(cli: &Cli) -> Result<i32, String> {
    let text = std::fs::read_to_string(&cli.config)
        .map_err(|e| format!("reading {}: {e}", cli.config.display()))?;
    let cfg = RunConfig::from_json(&text)?;
    cfg.validate(cli.mode)?;

    let steps_per_unit = cli
        .steps_per_unit
        .or(cfg.integrator.steps_per_unit)
        .unwrap_or(DEFAULT_STEPS_PER_UNIT);
    if steps_per_unit == 0 {
        return Err("steps_per_unit must be at least 1".into());
    }
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    let out_dir = cli
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));

    let spec = get_benchmark::<f64>(&cfg.problem.name, &cfg.override_pairs())
        .map_err(|e| e.to_string())?;
    let p = &spec.problem;
    validate_lengths(&cfg, p)?;
    let schedule = SwitchSchedule::new(cfg.schedule.clone(), p.horizon(), default_eps_sep(p.horizon()))
        .map_err(|e| e.to_string())?;

    let eval_opts = EvalOptions {
        tol_res: check_positive(cfg.shooting.tol_res.unwrap_or(DEFAULT_TOL_RES), "shooting.tol_res")?,
        max_iter: cfg.shooting.max_iter.unwrap_or(DEFAULT_MAX_ITER),
        steps_per_unit,
    };

    let base_report = Report::new(
        cli.mode.as_str(),
        &cfg.problem.name,
        cfg.problem.overrides.clone(),
        cfg.schedule.clone(),
        steps_per_unit,
        seed,
    );

    let outcome = match dispatch(cli.mode, &cfg, p, &schedule, &eval_opts, seed, base_report) {
        Ok(outcome) => outcome,
        Err((mut report, e)) => {
            report.error = Some(e.to_string());
            Outcome {
                report,
                trajectory: None,
            }
        }
    };

    std::fs::create_dir_all(&out_dir)
        .map_err(|e| format!("creating {}: {e}", out_dir.display()))?;
    if let Some((traj, costate)) = &outcome.trajectory {
        write_trajectory_csv(&out_dir, traj, costate.as_ref()).map_err(|e| e.to_string())?;
    }
    outcome.report.write(&out_dir).map_err(|e| e.to_string())?;
    Ok(if outcome.report.error.is_some() { 2 } else { 0 })
}

fn check_positive(v: f64, name: &str) -> Result<f64, String> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{name} must be positive and finite"))
    }
}

/// Length checks that need the instantiated problem.
fn validate_lengths(cfg: &RunConfig, p: &ProblemDef<f64>) -> Result<(), String> {
    let nj = p.partition().j_set().len();
    let ne = p.partition().e_set().len();
    if let Some(theta0) = &cfg.shooting.theta0 {
        if theta0.len() != nj {
            return Err(format!(
                "shooting.theta0 has {} entries but the problem has {} unknown initial coordinates",
                theta0.len(),
                nj
            ));
        }
    }
    if let Some(offset) = &cfg.study.start_offset {
        if offset.len() != nj {
            return Err(format!(
                "study.start_offset has {} entries but the problem has {} unknown initial coordinates",
                offset.len(),
                nj
            ));
        }
    }
    if let Some(dirs) = &cfg.study.directions {
        for d in dirs {
            if d.len() != ne {
                return Err(format!(
                    "study direction has {} entries but the problem has {} constrained terminal coordinates",
                    d.len(),
                    ne
                ));
            }
        }
    }
    Ok(())
}

fn shooting_section(p: &ProblemDef<f64>, result: &ShootingResult<f64>) -> ShootingSection {
    let terminal = result.trajectory.terminal();
    let residuals: Vec<f64> = p
        .partition()
        .e0()
        .iter()
        .enumerate()
        .map(|(slot, &idx)| terminal[idx] - p.b_e()[slot])
        .collect();
    ShootingSection {
        theta: result.theta.clone(),
        residuals,
        residual_norm: result.residual_norm,
        iterations: result.iterations,
        gamma: result.gamma,
        converged: result.converged,
    }
}

fn theta0_of(cfg: &RunConfig) -> Vec<f64> {
    cfg.shooting.theta0.clone().unwrap_or_default()
}

fn solve_base(
    cfg: &RunConfig,
    p: &ProblemDef<f64>,
    schedule: &SwitchSchedule<f64>,
    opts: &EvalOptions<f64>,
) -> Result<ShootingResult<f64>, Error> {
    let result = solve_boundary(
        p,
        schedule,
        &theta0_of(cfg),
        &[],
        opts.tol_res,
        opts.max_iter,
        opts.steps_per_unit,
    )?;
    if !result.converged {
        return Err(Error::ShootingFailed {
            residual_norm: result.residual_norm,
            iterations: result.iterations,
        });
    }
    Ok(result)
}

// One call per process; the wide Err carries the partially filled report.
#[allow(clippy::result_large_err)]
fn dispatch(
    mode: Mode,
    cfg: &RunConfig,
    p: &ProblemDef<f64>,
    schedule: &SwitchSchedule<f64>,
    eval_opts: &EvalOptions<f64>,
    seed: u64,
    mut report: Report,
) -> Result<Outcome, (Report, Error)> {
    match mode {
        Mode::Solve => {
            let result = match solve_base(cfg, p, schedule, eval_opts) {
                Ok(r) => r,
                Err(e) => return Err((report, e)),
            };
            report.objective = Some(p.objective(result.trajectory.terminal()));
            report.shooting = Some(shooting_section(p, &result));
            Ok(Outcome {
                report,
                trajectory: Some((result.trajectory, None)),
            })
        }
        Mode::Gradient => {
            let g = match evaluate(p, schedule, &theta0_of(cfg), eval_opts) {
                Ok(g) => g,
                Err(e) => return Err((report, e)),
            };
            report.objective = Some(g.objective);
            report.shooting = Some(shooting_section(p, &g.shooting));
            let Some(grad) = g.grad.clone() else {
                return Err((
                    report,
                    Error::ShootingFailed {
                        residual_norm: g.shooting.residual_norm,
                        iterations: g.shooting.iterations,
                    },
                ));
            };
            report.gradient = Some(grad);
            report.costate = g.costate.as_ref().map(|ct| costate_section(ct, g.costate_ok));
            Ok(Outcome {
                report,
                trajectory: Some((g.shooting.trajectory, g.costate)),
            })
        }
        Mode::Optimize => {
            // Numeric ranges were checked in RunConfig::validate.
            let mut opts = OptimizeOptions::<f64>::default();
            if let Some(method) = &cfg.optimizer.method {
                opts.method = if method == "gradient-descent" {
                    Method::GradientDescent
                } else {
                    Method::Lbfgs
                };
            }
            if let Some(v) = cfg.optimizer.max_iters {
                opts.max_iters = v;
            }
            if let Some(v) = cfg.optimizer.grad_tol {
                opts.grad_tol = v;
            }
            if let Some(v) = cfg.optimizer.armijo_c {
                opts.armijo_c = v;
            }
            if let Some(v) = cfg.optimizer.backtrack_factor {
                opts.backtrack_factor = v;
            }
            if let Some(v) = cfg.optimizer.lbfgs_memory {
                opts.lbfgs_memory = v;
            }
            if let Some(v) = cfg.optimizer.eps_sep {
                opts.eps_sep = Some(v);
            }
            opts.eval = eval_opts.clone();

            let result = match optimize(p, schedule, &opts) {
                Ok(r) => r,
                Err(e) => return Err((report, e)),
            };
            report.objective = Some(result.objective);
            report.s_star = Some(result.s_star.times().to_vec());
            report.gradient = result.final_report.grad.clone();
            report.shooting = Some(shooting_section(p, &result.final_report.shooting));
            report.costate = result
                .final_report
                .costate
                .as_ref()
                .map(|ct| costate_section(ct, result.final_report.costate_ok));
            report.optimize = Some(OptimizeSection {
                objective: result.objective,
                grad_norm: result.grad_norm,
                iterations: result.iterations,
                termination: result.termination.as_str().to_string(),
                history: result
                    .history
                    .iter()
                    .map(|rec| HistoryEntry {
                        s: rec.s.clone(),
                        objective: rec.objective,
                        grad_norm: rec.grad_norm,
                    })
                    .collect(),
            });
            Ok(Outcome {
                report,
                trajectory: Some((
                    result.final_report.shooting.trajectory,
                    result.final_report.costate,
                )),
            })
        }
        Mode::PerturbTerminal => {
            let base = match solve_base(cfg, p, schedule, eval_opts) {
                Ok(r) => r,
                Err(e) => return Err((report, e)),
            };
            report.objective = Some(p.objective(base.trajectory.terminal()));
            report.shooting = Some(shooting_section(p, &base));
            let magnitudes = cfg.study.magnitudes.clone().unwrap_or_default();
            let study = match terminal_perturbation_study(
                p,
                schedule,
                &magnitudes,
                cfg.study.directions.as_deref(),
                eval_opts,
            ) {
                Ok(s) => s,
                Err(e) => return Err((report, e)),
            };
            report.study = Some(StudySection {
                kind: "perturb-terminal".into(),
                index: None,
                magnitudes: Some(study.magnitudes),
                ratios: Some(study.ratios),
                deltas: None,
                remainders: None,
                reference: study.reference,
                slope: study.slope,
                floor: None,
                failures: study.failures,
            });
            Ok(Outcome {
                report,
                trajectory: Some((base.trajectory, None)),
            })
        }
        Mode::PerturbSwitch => {
            let base = match solve_base(cfg, p, schedule, eval_opts) {
                Ok(r) => r,
                Err(e) => return Err((report, e)),
            };
            report.objective = Some(p.objective(base.trajectory.terminal()));
            report.shooting = Some(shooting_section(p, &base));
            let index = cfg.study.index.unwrap_or(1);
            let magnitudes = cfg.study.magnitudes.clone().unwrap_or_default();
            let study =
                match switch_perturbation_study(p, schedule, index, &magnitudes, eval_opts) {
                    Ok(s) => s,
                    Err(e) => return Err((report, e)),
                };
            report.study = Some(StudySection {
                kind: "perturb-switch".into(),
                index: Some(index),
                magnitudes: Some(study.magnitudes),
                ratios: Some(study.ratios),
                deltas: None,
                remainders: None,
                reference: study.reference,
                slope: study.slope,
                floor: None,
                failures: study.failures,
            });
            Ok(Outcome {
                report,
                trajectory: Some((base.trajectory, None)),
            })
        }
        Mode::Remainder => {
            let g = match evaluate(p, schedule, &theta0_of(cfg), eval_opts) {
                Ok(g) => g,
                Err(e) => return Err((report, e)),
            };
            report.objective = Some(g.objective);
            report.shooting = Some(shooting_section(p, &g.shooting));
            if g.grad.is_none() {
                return Err((
                    report,
                    Error::ShootingFailed {
                        residual_norm: g.shooting.residual_norm,
                        iterations: g.shooting.iterations,
                    },
                ));
            }
            report.gradient = g.grad.clone();
            report.costate = g.costate.as_ref().map(|ct| costate_section(ct, g.costate_ok));
            let index = cfg.study.index.unwrap_or(1);
            let deltas = cfg.study.deltas.clone().unwrap_or_default();
            let study = match remainder_study(p, schedule, index, &deltas, eval_opts) {
                Ok(s) => s,
                Err(e) => return Err((report, e)),
            };
            report.study = Some(StudySection {
                kind: "remainder".into(),
                index: Some(index),
                magnitudes: None,
                ratios: None,
                deltas: Some(study.deltas),
                remainders: Some(study.remainders),
                reference: None,
                slope: study.slope,
                floor: Some(study.floor),
                failures: study.failures,
            });
            Ok(Outcome {
                report,
                trajectory: Some((g.shooting.trajectory, g.costate)),
            })
        }
        Mode::Certificate => {
            let base = match solve_base(cfg, p, schedule, eval_opts) {
                Ok(r) => r,
                Err(e) => return Err((report, e)),
            };
            report.objective = Some(p.objective(base.trajectory.terminal()));
            report.shooting = Some(shooting_section(p, &base));
            let mut opts = CertificateOptions::new(cfg.study.radius.unwrap_or(0.0));
            if let Some(count) = cfg.study.sample_count {
                opts.sample_count = count;
            }
            if let Some(offset) = &cfg.study.start_offset {
                opts.start_offset = offset.clone();
            }
            opts.seed = seed;
            let cert = match newton_certificate(
                p,
                schedule,
                &base.theta,
                &opts,
                eval_opts.steps_per_unit,
            ) {
                Ok(c) => c,
                Err(e) => return Err((report, e)),
            };
            report.certificate = Some(CertificateSection {
                gamma: cert.gamma,
                epsilon: cert.epsilon,
                delta: cert.delta,
                radius: cert.r,
                bound: cert.bound,
                hypotheses_hold: cert.hypotheses_hold,
            });
            Ok(Outcome {
                report,
                trajectory: Some((base.trajectory, None)),
            })
        }
    }
}

/// Recomputes the costate for a solved trajectory; used by library callers
/// that want the CSV with costate columns outside gradient mode.
pub fn costate_for(
    p: &ProblemDef<f64>,
    trajectory: &Trajectory<f64>,
) -> crate::error::Result<(CostateTrajectory<f64>, bool)> {
    let psi = integrate_psi(p, trajectory)?;
    let ct = solve_costate(p, trajectory, &psi)?;
    let ok = ct.terminal_mismatch() <= DEFAULT_TOL_COSTATE;
    Ok((ct, ok))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_names_round_trip_through_clap() {
        for (mode, name) in [
            (Mode::Solve, "solve"),
            (Mode::Gradient, "gradient"),
            (Mode::Optimize, "optimize"),
            (Mode::PerturbTerminal, "perturb-terminal"),
            (Mode::PerturbSwitch, "perturb-switch"),
            (Mode::Remainder, "remainder"),
            (Mode::Certificate, "certificate"),
        ] {
            assert_eq!(mode.as_str(), name);
            let parsed = Cli::try_parse_from(["spa", name, "--config", "c.json"]).unwrap();
            assert_eq!(parsed.mode, mode);
        }
    }

    #[test]
    fn bad_flags_and_help_have_distinct_exit_codes() {
        assert_eq!(run_with_args(["spa", "--help"]), 0);
        assert_eq!(run_with_args(["spa", "--version"]), 0);
        assert_eq!(run_with_args(["spa", "frobnicate", "--config", "x"]), 1);
        assert_eq!(run_with_args(["spa"]), 1);
    }

    #[test]
    fn missing_config_file_is_a_config_error() {
        assert_eq!(
            run_with_args(["spa", "solve", "--config", "/nonexistent/run.json"]),
            1
        );
    }
}
