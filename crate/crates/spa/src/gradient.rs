//! Objective and exact switch-time gradient.
//!
//! One state integration (inside the shooting solve) and one costate
//! integration yield every partial at once: the derivative of C(x(T)) in the
//! switch time s_i is the jump H_{i-1} - H_i of the phase Hamiltonians
//! H_j = p F_j(x, t), evaluated at the switch node (x(s_i), p(s_i), s_i).

use crate::costate::{solve_costate, CostateTrajectory, DEFAULT_TOL_COSTATE};
use crate::error::{Error, Result};
use crate::integrator::{integrate_psi, DEFAULT_STEPS_PER_UNIT};
use crate::linalg::dot;
use crate::problem::{default_eps_sep, ProblemDef, SwitchSchedule};
use crate::scalar::Scalar;
use crate::shooting::{solve_boundary, ShootingResult, DEFAULT_MAX_ITER, DEFAULT_TOL_RES};

/// Shooting and mesh parameters for a gradient evaluation.
#[derive(Debug, Clone)]
pub struct EvalOptions<T> {
    pub tol_res: T,
    pub max_iter: usize,
    pub steps_per_unit: usize,
}

impl<T: Scalar> Default for EvalOptions<T> {
    fn default() -> Self {
        EvalOptions {
            tol_res: T::from_f64_lossy(DEFAULT_TOL_RES),
            max_iter: DEFAULT_MAX_ITER,
            steps_per_unit: DEFAULT_STEPS_PER_UNIT,
        }
    }
}

/// Left and right Hamiltonian values at one switch point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianPair<T> {
    /// H_{i-1}(x(s_i), p(s_i), s_i): outgoing phase.
    pub left: T,
    /// H_i(x(s_i), p(s_i), s_i): incoming phase.
    pub right: T,
}

/// Objective, gradient, and the intermediate solves behind them.
///
/// When the shooting solve does not converge the gradient is withheld
/// (`grad`, `hamiltonians`, and `costate` are `None`) and the report carries
/// the failed [`ShootingResult`] for inspection.
#[derive(Debug, Clone)]
pub struct GradientReport<T> {
    /// C(x(T)) at the final shooting iterate.
    pub objective: T,
    /// One partial per interior switch time; each equals the corresponding
    /// Hamiltonian jump exactly.
    pub grad: Option<Vec<T>>,
    pub hamiltonians: Option<Vec<HamiltonianPair<T>>>,
    pub shooting: ShootingResult<T>,
    pub costate: Option<CostateTrajectory<T>>,
    /// Costate terminal boundary error within tolerance.
    pub costate_ok: bool,
}

/// Phase Hamiltonian H_phase = pvec . F_phase(x, t).
pub fn hamiltonian<T: Scalar>(
    p: &ProblemDef<T>,
    phase: usize,
    x: &[T],
    pvec: &[T],
    t: T,
) -> T {
    dot(pvec, &p.phase(phase).eval(x, t))
}

/// Full evaluation pipeline: shooting solve (warm-started at `theta_hint`),
/// adjoint transition matrix, costate solve, Hamiltonian jumps.
///
/// An empty `theta_hint` stands for the zero vector.
pub fn evaluate<T: Scalar>(
    p: &ProblemDef<T>,
    schedule: &SwitchSchedule<T>,
    theta_hint: &[T],
    opts: &EvalOptions<T>,
) -> Result<GradientReport<T>> {
    let j_len = p.partition().j0().len();
    let theta0: Vec<T> = if theta_hint.is_empty() {
        vec![T::zero(); j_len]
    } else {
        theta_hint.to_vec()
    };
    let pi = vec![T::zero(); p.partition().e0().len()];
    let shooting = solve_boundary(
        p,
        schedule,
        &theta0,
        &pi,
        opts.tol_res,
        opts.max_iter,
        opts.steps_per_unit,
    )?;
    let objective = p.objective(shooting.trajectory.terminal());

    if !shooting.converged {
        return Ok(GradientReport {
            objective,
            grad: None,
            hamiltonians: None,
            shooting,
            costate: None,
            costate_ok: false,
        });
    }

    let psi = integrate_psi(p, &shooting.trajectory)?;
    let costate = solve_costate(p, &shooting.trajectory, &psi)?;
    let costate_ok = costate.terminal_mismatch() <= T::from_f64_lossy(DEFAULT_TOL_COSTATE);

    let traj = &shooting.trajectory;
    let mesh = traj.mesh();
    let mut pairs = Vec::with_capacity(schedule.len());
    let mut grad = Vec::with_capacity(schedule.len());
    for (i, &node) in mesh.switch_nodes().iter().enumerate() {
        let t = mesh.nodes()[node];
        let x = traj.value(node);
        let pvec = costate.value(node);
        let pair = HamiltonianPair {
            left: hamiltonian(p, i, x, pvec, t),
            right: hamiltonian(p, i + 1, x, pvec, t),
        };
        grad.push(pair.left - pair.right);
        pairs.push(pair);
    }

    Ok(GradientReport {
        objective,
        grad: Some(grad),
        hamiltonians: Some(pairs),
        shooting,
        costate: Some(costate),
        costate_ok,
    })
}

/// Independent verification oracle: central differences of C over the switch
/// times, each side a fully converged shooting solve warm-started from the
/// base solution.
///
/// If a probe's schedule is infeasible or its solve fails, the step is halved
/// up to 3 times before the failure is reported.
pub fn fd_gradient_oracle<T: Scalar>(
    p: &ProblemDef<T>,
    schedule: &SwitchSchedule<T>,
    h: T,
    opts: &EvalOptions<T>,
) -> Result<Vec<T>> {
    if !(h > T::zero()) {
        return Err(Error::InvalidStudy("probe step h must be positive".into()));
    }
    let base = evaluate(p, schedule, &[], opts)?;
    if !base.shooting.converged {
        return Err(Error::ShootingFailed {
            residual_norm: base.shooting.residual_norm.to_f64_lossy(),
            iterations: base.shooting.iterations,
        });
    }
    let theta_hint = base.shooting.theta.clone();
    let eps_sep = default_eps_sep(p.horizon());
    let two = T::from_f64_lossy(2.0);

    let probe = |times: Vec<T>| -> Result<T> {
        let sched = SwitchSchedule::new(times, p.horizon(), eps_sep)?;
        let pi = vec![T::zero(); p.partition().e0().len()];
        let sol = solve_boundary(
            p,
            &sched,
            &theta_hint,
            &pi,
            opts.tol_res,
            opts.max_iter,
            opts.steps_per_unit,
        )?;
        if !sol.converged {
            return Err(Error::ShootingFailed {
                residual_norm: sol.residual_norm.to_f64_lossy(),
                iterations: sol.iterations,
            });
        }
        Ok(p.objective(sol.trajectory.terminal()))
    };

    let mut grad = Vec::with_capacity(schedule.len());
    for i in 0..schedule.len() {
        let mut this_h = h;
        let mut last_err: Option<Error> = None;
        let mut value = None;
        for _ in 0..=3 {
            let mut up = schedule.times().to_vec();
            up[i] = up[i] + this_h;
            let mut down = schedule.times().to_vec();
            down[i] = down[i] - this_h;
            match probe(up).and_then(|c_up| probe(down).map(|c_down| (c_up, c_down))) {
                Ok((c_up, c_down)) => {
                    value = Some((c_up - c_down) / (two * this_h));
                    break;
                }
                Err(e) => {
                    last_err = Some(e);
                    this_h = this_h / two;
                }
            }
        }
        match value {
            Some(v) => grad.push(v),
            None => return Err(last_err.expect("probe failed without an error")),
        }
    }
    Ok(grad)
}
