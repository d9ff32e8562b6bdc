//! Switch-time optimization: projected gradient descent or projected L-BFGS
//! with Armijo backtracking on the exact Hamiltonian-jump gradient.
//!
//! Feasibility means membership in the ordering polytope
//! { eps <= s_1, s_i + eps <= s_{i+1}, s_m <= T - eps }. Projection onto it
//! reduces, after shifting coordinate k by (k+1) eps, to isotonic regression
//! with box constraints, solved by pool-adjacent-violators plus a clamp.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::gradient::{evaluate, EvalOptions, GradientReport};
use crate::linalg::{dot, vec_norm_inf};
use crate::problem::{default_eps_sep, ProblemDef, SwitchSchedule};
use crate::scalar::Scalar;

/// Search direction strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    GradientDescent,
    Lbfgs,
}

/// Optimizer knobs; `Default` gives the standard configuration.
///
/// `optimize` rejects out-of-range values: armijo_c in (0, 0.5],
/// backtrack_factor in (0, 1), lbfgs_memory >= 1, grad_tol > 0.
#[derive(Debug, Clone)]
pub struct OptimizeOptions<T> {
    pub method: Method,
    pub max_iters: usize,
    /// Stop when the projected gradient infinity norm drops below this.
    pub grad_tol: T,
    pub armijo_c: T,
    pub backtrack_factor: T,
    pub lbfgs_memory: usize,
    /// Minimum switch separation; `None` means 1e-8 * horizon.
    pub eps_sep: Option<T>,
    pub eval: EvalOptions<T>,
}

impl<T: Scalar> Default for OptimizeOptions<T> {
    fn default() -> Self {
        OptimizeOptions {
            method: Method::Lbfgs,
            max_iters: 200,
            grad_tol: T::from_f64_lossy(1e-8),
            armijo_c: T::from_f64_lossy(1e-4),
            backtrack_factor: T::from_f64_lossy(0.5),
            lbfgs_memory: 10,
            eps_sep: None,
            eval: EvalOptions::default(),
        }
    }
}

/// Why the optimizer stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Projected gradient below tolerance at an interior point.
    GradTol,
    /// Iteration budget exhausted.
    MaxIters,
    /// No decreasing step above the minimum step size.
    LineSearchFailure,
    /// Projected gradient vanished while the raw gradient did not: the
    /// iterate is pinned to the ordering polytope's boundary.
    Boundary,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::GradTol => "grad_tol",
            Termination::MaxIters => "max_iters",
            Termination::LineSearchFailure => "line_search_failure",
            Termination::Boundary => "boundary",
        }
    }
}

/// One accepted iterate.
#[derive(Debug, Clone)]
pub struct IterationRecord<T> {
    pub s: Vec<T>,
    pub objective: T,
    pub grad_norm: T,
}

/// Optimization outcome with the per-iterate history.
#[derive(Debug, Clone)]
pub struct OptimizeResult<T> {
    pub s_star: SwitchSchedule<T>,
    pub objective: T,
    pub grad_norm: T,
    pub iterations: usize,
    pub history: Vec<IterationRecord<T>>,
    pub termination: Termination,
    /// Gradient report at the accepted final iterate.
    pub final_report: GradientReport<T>,
}

fn is_feasible<T: Scalar>(s: &[T], horizon: T, eps: T) -> bool {
    let mut prev = T::zero();
    for &v in s {
        if !(v - prev >= eps) {
            return false;
        }
        prev = v;
    }
    horizon - prev >= eps
}

/// Euclidean projection onto the ordering polytope.
///
/// Already-feasible inputs are returned unchanged (bit-exact); otherwise the
/// shifted coordinates are fit by pool-adjacent-violators and clamped to
/// their box.
pub fn project_schedule<T: Scalar>(s: &[T], horizon: T, eps_sep: T) -> Result<SwitchSchedule<T>> {
    let m = s.len();
    let upper = horizon - T::from_usize_lossy(m + 1) * eps_sep;
    if upper < T::zero() {
        return Err(Error::InfeasiblePolytope {
            count: m,
            eps_sep: eps_sep.to_f64_lossy(),
            horizon: horizon.to_f64_lossy(),
        });
    }
    if m == 0 {
        return Ok(SwitchSchedule::empty());
    }
    if is_feasible(s, horizon, eps_sep) {
        return Ok(SwitchSchedule::new_unchecked(s.to_vec()));
    }

    // Shift: u_k = s_k - (k+1) eps turns the separation constraints into
    // monotonicity of u within the box [0, upper].
    let u: Vec<T> = s
        .iter()
        .enumerate()
        .map(|(k, &v)| v - T::from_usize_lossy(k + 1) * eps_sep)
        .collect();

    // Pool adjacent violators for the nondecreasing fit with unit weights.
    let mut sums: Vec<T> = Vec::with_capacity(m);
    let mut counts: Vec<usize> = Vec::with_capacity(m);
    for &v in &u {
        sums.push(v);
        counts.push(1);
        while sums.len() > 1 {
            let last = sums.len() - 1;
            let mean_last = sums[last] / T::from_usize_lossy(counts[last]);
            let mean_prev = sums[last - 1] / T::from_usize_lossy(counts[last - 1]);
            if mean_prev <= mean_last {
                break;
            }
            let s_tail = sums.pop().expect("non-empty");
            let c_tail = counts.pop().expect("non-empty");
            sums[last - 1] = sums[last - 1] + s_tail;
            counts[last - 1] += c_tail;
        }
    }

    // Expand blocks, clamp to the box, and undo the shift. Clamping the
    // isotonic fit is the exact projection under box constraints.
    let mut out = Vec::with_capacity(m);
    let mut k = 0;
    for (block_sum, block_count) in sums.iter().zip(counts.iter()) {
        let mut v = *block_sum / T::from_usize_lossy(*block_count);
        if v < T::zero() {
            v = T::zero();
        }
        if v > upper {
            v = upper;
        }
        for _ in 0..*block_count {
            out.push(v + T::from_usize_lossy(k + 1) * eps_sep);
            k += 1;
        }
    }
    Ok(SwitchSchedule::new_unchecked(out))
}

/// Two-loop L-BFGS recursion; returns the descent direction -H g.
fn lbfgs_direction<T: Scalar>(g: &[T], pairs: &VecDeque<(Vec<T>, Vec<T>)>) -> Vec<T> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y) in pairs.iter().rev() {
        let rho = T::one() / dot(y, s);
        let alpha = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi = *qi - alpha * *yi;
        }
        alphas.push((alpha, rho));
    }
    if let Some((s, y)) = pairs.back() {
        let scale = dot(s, y) / dot(y, y);
        for qi in q.iter_mut() {
            *qi = *qi * scale;
        }
    }
    for ((s, y), (alpha, rho)) in pairs.iter().zip(alphas.into_iter().rev()) {
        let beta = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi = *qi + (alpha - beta) * *si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Minimizes C(s) over feasible schedules starting from `s0`.
///
/// Every accepted iterate is feasible and the objective history is
/// non-increasing (Armijo backtracking along the projection arc). A trial
/// whose evaluation fails counts as objective +infinity and is rejected; the
/// line search gives up below step size 1e-14.
pub fn optimize<T: Scalar>(
    p: &ProblemDef<T>,
    s0: &SwitchSchedule<T>,
    opts: &OptimizeOptions<T>,
) -> Result<OptimizeResult<T>> {
    if !(opts.armijo_c > T::zero()) || opts.armijo_c > T::from_f64_lossy(0.5) {
        return Err(Error::Config("armijo_c must lie in (0, 0.5]".into()));
    }
    if !(opts.backtrack_factor > T::zero()) || !(opts.backtrack_factor < T::one()) {
        return Err(Error::Config("backtrack_factor must lie in (0, 1)".into()));
    }
    if !(opts.grad_tol > T::zero()) {
        return Err(Error::Config("grad_tol must be positive".into()));
    }
    if opts.method == Method::Lbfgs && opts.lbfgs_memory == 0 {
        return Err(Error::Config("lbfgs_memory must be at least 1".into()));
    }
    if let Some(eps) = opts.eps_sep {
        if !(eps > T::zero()) || !eps.is_finite() {
            return Err(Error::Config("eps_sep must be positive and finite".into()));
        }
    }

    let horizon = p.horizon();
    let eps = opts.eps_sep.unwrap_or_else(|| default_eps_sep(horizon));
    let min_step = T::from_f64_lossy(1e-14);
    let curvature_floor = T::from_f64_lossy(1e-12);

    let mut s = s0.times().to_vec();
    let mut report = evaluate(p, s0, &[], &opts.eval)?;
    if report.grad.is_none() {
        return Err(Error::ShootingFailed {
            residual_norm: report.shooting.residual_norm.to_f64_lossy(),
            iterations: report.shooting.iterations,
        });
    }
    let mut theta_hint = report.shooting.theta.clone();
    let mut history = vec![IterationRecord {
        s: s.clone(),
        objective: report.objective,
        grad_norm: vec_norm_inf(report.grad.as_ref().expect("converged")),
    }];
    let mut pairs: VecDeque<(Vec<T>, Vec<T>)> = VecDeque::new();
    let mut iterations = 0;

    let termination = loop {
        let g = report.grad.clone().expect("converged iterate");
        let stepped: Vec<T> = s.iter().zip(&g).map(|(si, gi)| *si - *gi).collect();
        let projected_grad: Vec<T> = project_schedule(&stepped, horizon, eps)?
            .times()
            .iter()
            .zip(&s)
            .map(|(pi, si)| *si - *pi)
            .collect();
        if vec_norm_inf(&projected_grad) <= opts.grad_tol {
            break if vec_norm_inf(&g) <= opts.grad_tol {
                Termination::GradTol
            } else {
                Termination::Boundary
            };
        }
        if iterations >= opts.max_iters {
            break Termination::MaxIters;
        }

        // L-BFGS direction first; fall back to steepest descent if its line
        // search stalls (projection can spoil the quasi-Newton model).
        let mut accepted: Option<(Vec<T>, GradientReport<T>)> = None;
        'directions: for attempt in 0..2 {
            let d = match (opts.method, attempt) {
                (Method::Lbfgs, 0) if !pairs.is_empty() => lbfgs_direction(&g, &pairs),
                (Method::GradientDescent, 0) => g.iter().map(|v| -*v).collect(),
                (_, 0) => g.iter().map(|v| -*v).collect(),
                (Method::Lbfgs, _) if !pairs.is_empty() => g.iter().map(|v| -*v).collect(),
                _ => break 'directions,
            };
            let mut alpha = T::one();
            loop {
                let trial: Vec<T> = s.iter().zip(&d).map(|(si, di)| *si + alpha * *di).collect();
                let projected = project_schedule(&trial, horizon, eps)?;
                let displacement: Vec<T> = projected
                    .times()
                    .iter()
                    .zip(&s)
                    .map(|(ti, si)| *ti - *si)
                    .collect();
                let step_size = vec_norm_inf(&displacement);
                if step_size < min_step {
                    continue 'directions;
                }
                // Accept only genuine descent (projection can turn a
                // quasi-Newton step uphill); failed trial evaluations count
                // as +infinity. Either way, reject and shrink.
                let slope = dot(&g, &displacement);
                if slope < T::zero() {
                    if let Ok(trial_report) = evaluate(p, &projected, &theta_hint, &opts.eval) {
                        if trial_report.grad.is_some()
                            && trial_report.objective
                                <= report.objective + opts.armijo_c * slope
                        {
                            accepted = Some((projected.times().to_vec(), trial_report));
                            break 'directions;
                        }
                    }
                }
                alpha = alpha * opts.backtrack_factor;
            }
        }

        let (s_new, report_new) = match accepted {
            Some(pair) => pair,
            None => break Termination::LineSearchFailure,
        };

        if opts.method == Method::Lbfgs {
            let g_new = report_new.grad.as_ref().expect("converged iterate");
            let s_diff: Vec<T> = s_new.iter().zip(&s).map(|(a, b)| *a - *b).collect();
            let y_diff: Vec<T> = g_new.iter().zip(&g).map(|(a, b)| *a - *b).collect();
            // Projection can break curvature; keep the inverse Hessian model
            // positive definite by skipping flat pairs.
            if dot(&y_diff, &s_diff) > curvature_floor {
                if pairs.len() == opts.lbfgs_memory {
                    pairs.pop_front();
                }
                pairs.push_back((s_diff, y_diff));
            }
        }

        s = s_new;
        report = report_new;
        theta_hint = report.shooting.theta.clone();
        iterations += 1;
        history.push(IterationRecord {
            s: s.clone(),
            objective: report.objective,
            grad_norm: vec_norm_inf(report.grad.as_ref().expect("converged")),
        });
    };

    Ok(OptimizeResult {
        s_star: SwitchSchedule::new_unchecked(s),
        objective: report.objective,
        grad_norm: vec_norm_inf(report.grad.as_ref().expect("converged")),
        iterations,
        history,
        termination,
        final_report: report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::get_benchmark;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn projection_is_identity_on_feasible_input() {
        let s = vec![0.25, 0.5, 0.75];
        let proj = project_schedule(&s, 1.0, 1e-8).unwrap();
        assert_eq!(proj.times(), s.as_slice());
    }

    #[test]
    fn projection_averages_violators() {
        let proj = project_schedule(&[0.7, 0.3], 1.0, 0.0).unwrap();
        assert_eq!(proj.times(), &[0.5, 0.5]);
    }

    #[test]
    fn projection_clamps_to_lower_bound() {
        let eps = 1e-8;
        let proj = project_schedule(&[-0.2], 1.0, eps).unwrap();
        assert_eq!(proj.times(), &[eps]);
    }

    #[test]
    fn projection_rejects_empty_polytope() {
        assert!(matches!(
            project_schedule(&[0.3, 0.6], 1.0, 0.4),
            Err(Error::InfeasiblePolytope { .. })
        ));
    }

    /// Dykstra's alternating projections onto the defining half-spaces; an
    /// independent (slow) oracle for the polytope projection.
    fn dykstra_oracle(s: &[f64], horizon: f64, eps: f64) -> Vec<f64> {
        let m = s.len();
        // Half-spaces a.x >= b: s_1 >= eps; s_{k+1} - s_k >= eps; -s_m >= eps - T.
        let mut constraints: Vec<(Vec<f64>, f64)> = Vec::new();
        let mut a = vec![0.0; m];
        a[0] = 1.0;
        constraints.push((a, eps));
        for k in 0..m - 1 {
            let mut a = vec![0.0; m];
            a[k] = -1.0;
            a[k + 1] = 1.0;
            constraints.push((a, eps));
        }
        let mut a = vec![0.0; m];
        a[m - 1] = -1.0;
        constraints.push((a, eps - horizon));

        let mut x = s.to_vec();
        let mut corrections = vec![vec![0.0; m]; constraints.len()];
        for _ in 0..20000 {
            for (ci, (a, b)) in constraints.iter().enumerate() {
                let y: Vec<f64> = x
                    .iter()
                    .zip(&corrections[ci])
                    .map(|(xi, pi)| xi + pi)
                    .collect();
                let viol = b - y.iter().zip(a).map(|(yi, ai)| yi * ai).sum::<f64>();
                let norm2: f64 = a.iter().map(|ai| ai * ai).sum();
                let lift = viol.max(0.0) / norm2;
                let x_new: Vec<f64> = y.iter().zip(a).map(|(yi, ai)| yi + lift * ai).collect();
                corrections[ci] = y.iter().zip(&x_new).map(|(yi, xn)| yi - xn).collect();
                x = x_new;
            }
        }
        x
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn projection_matches_dykstra_and_is_idempotent(
            raw in proptest::collection::vec(-0.5f64..1.5, 1..5)
        ) {
            let horizon = 1.0;
            let eps = 1e-3;
            let proj = project_schedule(&raw, horizon, eps).unwrap();
            // Feasible (up to roundoff slack on the separation).
            let t = proj.times();
            prop_assert!(t[0] >= eps * (1.0 - 1e-9));
            for w in t.windows(2) {
                prop_assert!(w[1] - w[0] >= eps * (1.0 - 1e-9));
            }
            prop_assert!(t[t.len() - 1] <= horizon - eps * (1.0 - 1e-9));
            // Idempotent.
            let again = project_schedule(t, horizon, eps).unwrap();
            prop_assert_eq!(again.times(), t);
            // Agrees with the independent oracle.
            let oracle = dykstra_oracle(&raw, horizon, eps);
            for (a, b) in t.iter().zip(&oracle) {
                prop_assert!((a - b).abs() < 1e-6, "pav {:?} vs dykstra {:?}", t, oracle);
            }
        }
    }

    #[test]
    fn double_integrator_reaches_the_interior_minimum() {
        let spec = get_benchmark::<f64>("double-integrator-target", &[]).unwrap();
        let s0 = SwitchSchedule::new(vec![0.5], 2.0, 1e-8).unwrap();
        let result = optimize(&spec.problem, &s0, &OptimizeOptions::default()).unwrap();
        assert_eq!(result.termination, Termination::GradTol);
        assert_relative_eq!(result.s_star.times()[0], 1.0, epsilon = 1e-6);
        assert!(result.objective <= 1e-10);
        assert!(result.iterations <= 15, "took {}", result.iterations);
        // Monotone history, feasible iterates.
        for w in result.history.windows(2) {
            assert!(w[1].objective <= w[0].objective);
        }
        for rec in &result.history {
            assert!(is_feasible(&rec.s, 2.0, 1e-8 * 2.0 * (1.0 - 1e-6)));
        }
    }

    #[test]
    fn monotone_objective_runs_into_the_boundary() {
        let spec = get_benchmark::<f64>("switched-integrator", &[]).unwrap();
        let s0 = SwitchSchedule::new(vec![1.0], 2.0, 1e-8).unwrap();
        let result = optimize(&spec.problem, &s0, &OptimizeOptions::default()).unwrap();
        assert_eq!(result.termination, Termination::Boundary);
        let eps = default_eps_sep(2.0);
        assert_relative_eq!(result.s_star.times()[0], eps, max_relative = 1e-6);
    }

    #[test]
    fn stationary_start_terminates_immediately() {
        let spec = get_benchmark::<f64>("double-integrator-target", &[]).unwrap();
        let s0 = SwitchSchedule::new(vec![1.0], 2.0, 1e-8).unwrap();
        let result = optimize(&spec.problem, &s0, &OptimizeOptions::default()).unwrap();
        assert_eq!(result.iterations, 0);
        assert_eq!(result.termination, Termination::GradTol);
        assert_eq!(result.history.len(), 1);
    }

    #[test]
    fn gradient_descent_also_converges() {
        let spec = get_benchmark::<f64>("double-integrator-target", &[]).unwrap();
        let s0 = SwitchSchedule::new(vec![0.5], 2.0, 1e-8).unwrap();
        let opts = OptimizeOptions {
            method: Method::GradientDescent,
            max_iters: 500,
            ..OptimizeOptions::default()
        };
        let result = optimize(&spec.problem, &s0, &opts).unwrap();
        assert!(matches!(
            result.termination,
            Termination::GradTol | Termination::MaxIters
        ));
        assert_relative_eq!(result.s_star.times()[0], 1.0, epsilon = 1e-4);
    }

    #[test]
    fn out_of_range_options_are_rejected() {
        let spec = get_benchmark::<f64>("double-integrator-target", &[]).unwrap();
        let s0 = SwitchSchedule::new(vec![0.5], 2.0, 1e-8).unwrap();
        for opts in [
            OptimizeOptions {
                armijo_c: 0.6,
                ..OptimizeOptions::default()
            },
            OptimizeOptions {
                backtrack_factor: 1.0,
                ..OptimizeOptions::default()
            },
            OptimizeOptions {
                lbfgs_memory: 0,
                ..OptimizeOptions::default()
            },
            OptimizeOptions {
                grad_tol: 0.0,
                ..OptimizeOptions::default()
            },
        ] {
            assert!(matches!(
                optimize(&spec.problem, &s0, &opts),
                Err(Error::Config(_))
            ));
        }
    }
}
