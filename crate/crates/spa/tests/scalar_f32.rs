//! The pipeline instantiated at f32: same closed-form answers at single
//! precision, with tolerances scaled to match.

use spa::bench::get_benchmark;
use spa::gradient::{evaluate, EvalOptions};
use spa::problem::SwitchSchedule;

#[test]
fn f32_pipeline_reproduces_closed_forms_loosely() {
    let spec = get_benchmark::<f32>("switched-integrator", &[]).unwrap();
    let p = &spec.problem;
    let schedule = SwitchSchedule::new(vec![0.5f32], p.horizon(), 1e-6).unwrap();
    let opts = EvalOptions {
        tol_res: 1e-4,
        ..EvalOptions::default()
    };
    let report = evaluate(p, &schedule, &[], &opts).unwrap();

    // theta(s) = s^2 - 4 s + 3 = 1.25, C = 2 s - 2 = -1, dC/ds = 2.
    assert!(report.shooting.converged);
    assert!((report.shooting.theta[0] - 1.25).abs() <= 1e-3);
    assert!((report.objective + 1.0).abs() <= 1e-3);
    assert!((report.shooting.gamma - 1.0).abs() <= 1e-3);
    let grad = report.grad.expect("converged");
    assert!((grad[0] - 2.0).abs() <= 1e-2);
}
