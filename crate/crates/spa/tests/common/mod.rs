#![allow(dead_code)]

use spa::gradient::{evaluate, EvalOptions};
use spa::problem::{ProblemDef, SwitchSchedule};
use spa::shooting::solve_boundary;

/// Solved objective at given switch times; panics if shooting stalls.
pub fn objective_at(p: &ProblemDef<f64>, times: Vec<f64>, opts: &EvalOptions<f64>) -> f64 {
    let schedule =
        SwitchSchedule::new(times, p.horizon(), p.default_eps_sep()).expect("feasible probe");
    let report = evaluate(p, &schedule, &[], opts).expect("probe solve failed");
    assert!(report.grad.is_some(), "probe shooting stalled");
    report.objective
}

/// Independent central-difference gradient of the solved objective.
pub fn fd_gradient(p: &ProblemDef<f64>, times: &[f64], h: f64, opts: &EvalOptions<f64>) -> Vec<f64> {
    (0..times.len())
        .map(|i| {
            let mut plus = times.to_vec();
            plus[i] += h;
            let mut minus = times.to_vec();
            minus[i] -= h;
            (objective_at(p, plus, opts) - objective_at(p, minus, opts)) / (2.0 * h)
        })
        .collect()
}

/// Dense argmin of the solved objective over one switch time.
pub fn grid_search_single_switch(
    p: &ProblemDef<f64>,
    resolution: f64,
    opts: &EvalOptions<f64>,
) -> f64 {
    let horizon = p.horizon();
    let eps = p.default_eps_sep();
    let mut best = (f64::INFINITY, f64::NAN);
    let mut k = 1usize;
    loop {
        let s = k as f64 * resolution;
        if s > horizon - eps {
            break;
        }
        if s >= eps {
            if let Ok(schedule) = SwitchSchedule::new(vec![s], horizon, eps) {
                if let Ok(r) = solve_boundary(
                    p,
                    &schedule,
                    &[],
                    &[],
                    opts.tol_res,
                    opts.max_iter,
                    opts.steps_per_unit,
                ) {
                    if r.converged {
                        let c = p.objective(r.trajectory.terminal());
                        if c < best.0 {
                            best = (c, s);
                        }
                    }
                }
            }
        }
        k += 1;
    }
    assert!(best.1.is_finite(), "grid search found no feasible point");
    best.1
}
