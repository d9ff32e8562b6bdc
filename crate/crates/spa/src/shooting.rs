//! Single shooting: solve for the unknown initial components theta = x_J(0)
//! so that x_E(T) = b_E + pi.
//!
//! Newton's method uses the exact Jacobian of the residual, the terminal
//! sensitivity block Phi_EJ(T) recomputed along the current trajectory each
//! iteration. A certificate instantiates the existence hypotheses
//! (eps * gamma < 1 and delta <= r (1 - gamma eps) / gamma) with sampled
//! Jacobian-variation and initial-residual data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::integrator::{integrate_phi, integrate_state, Trajectory};
use crate::linalg::{cond_one, vec_norm_inf, Lu, Matrix};
use crate::problem::{ProblemDef, SwitchSchedule};
use crate::scalar::Scalar;

/// Default residual tolerance (infinity norm).
pub const DEFAULT_TOL_RES: f64 = 1e-10;

/// Default Newton iteration cap.
pub const DEFAULT_MAX_ITER: usize = 50;

/// Condition-estimate ceiling beyond which the Jacobian counts as singular.
const COND_LIMIT: f64 = 1e12;

/// Maximum step halvings in the guarded Newton line search.
const MAX_HALVINGS: usize = 20;

/// Converged (or stalled) shooting solve.
#[derive(Debug, Clone)]
pub struct ShootingResult<T> {
    pub theta: Vec<T>,
    pub trajectory: Trajectory<T>,
    /// Infinity norm of the final boundary residual.
    pub residual_norm: T,
    pub iterations: usize,
    /// Operator infinity norm of Phi_EJ(T)^-1 at the final iterate;
    /// infinite if that block is singular, zero when E is empty.
    pub gamma: T,
    pub converged: bool,
}

/// Numerically instantiated existence certificate for the Newton solve.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonCertificate<T> {
    /// Norm of Phi_EJ(T)^-1 at the solution.
    pub gamma: T,
    /// Max observed Jacobian variation over sampled theta in the radius-r ball.
    pub epsilon: T,
    /// Residual norm at the certified start theta_star + start_offset.
    pub delta: T,
    /// Ball radius the certificate was evaluated on.
    pub r: T,
    /// delta * gamma / (1 - eps * gamma); present only when hypotheses hold.
    pub bound: Option<T>,
    /// eps * gamma < 1 and delta <= r (1 - gamma eps) / gamma.
    pub hypotheses_hold: bool,
}

/// Sampling and start data for [`newton_certificate`].
#[derive(Debug, Clone)]
pub struct CertificateOptions<T> {
    /// Ball radius around theta_star.
    pub radius: T,
    /// Pseudo-random theta samples used to estimate the variation bound.
    pub sample_count: usize,
    /// Offset of the certified Newton start from theta_star; empty means zero.
    pub start_offset: Vec<T>,
    /// Seed of the sampling stream (part of the input for determinism).
    pub seed: u64,
}

impl<T: Scalar> CertificateOptions<T> {
    pub fn new(radius: T) -> Self {
        CertificateOptions {
            radius,
            sample_count: 16,
            start_offset: Vec::new(),
            seed: 0,
        }
    }
}

/// Boundary residual g(theta) = x_E(T) - b_E - pi and the trajectory behind it.
pub fn shoot_residual<T: Scalar>(
    p: &ProblemDef<T>,
    schedule: &SwitchSchedule<T>,
    theta: &[T],
    pi: &[T],
    steps_per_unit: usize,
) -> Result<(Vec<T>, Trajectory<T>)> {
    let e0 = p.partition().e0();
    if pi.len() != e0.len() {
        return Err(Error::DimensionMismatch(format!(
            "pi has {} entries but |E| = {}",
            pi.len(),
            e0.len()
        )));
    }
    let traj = integrate_state(p, schedule, theta, steps_per_unit)?;
    let terminal = traj.terminal();
    let residual: Vec<T> = e0
        .iter()
        .enumerate()
        .map(|(slot, &idx)| terminal[idx] - p.b_e()[slot] - pi[slot])
        .collect();
    Ok((residual, traj))
}

/// Extracts the shooting Jacobian Phi_EJ(T) from a transition matrix.
fn terminal_sensitivity<T: Scalar>(p: &ProblemDef<T>, phi_terminal: &Matrix<T>) -> Matrix<T> {
    phi_terminal.submatrix(&p.partition().e0(), &p.partition().j0())
}

fn gamma_of<T: Scalar>(phi_ej: &Matrix<T>) -> T {
    if phi_ej.rows() == 0 {
        return T::zero();
    }
    let lu = Lu::new(phi_ej);
    match lu.inverse() {
        Ok(inv) => inv.norm_inf(),
        Err(_) => T::infinity(),
    }
}

/// Newton iteration theta <- theta - Phi_EJ(T; theta)^-1 g(theta), guarded by
/// step halving when the residual norm fails to decrease.
///
/// Empty `theta0` or `pi` stand for zero vectors of the right size. Stops
/// when the residual infinity norm drops to `tol_res`, the iteration cap is
/// reached, or 20 halvings fail to find a decreasing step (reported as not
/// converged, not an error). A condition estimate of Phi_EJ(T) above 1e12 is
/// an error.
pub fn solve_boundary<T: Scalar>(
    p: &ProblemDef<T>,
    schedule: &SwitchSchedule<T>,
    theta0: &[T],
    pi: &[T],
    tol_res: T,
    max_iter: usize,
    steps_per_unit: usize,
) -> Result<ShootingResult<T>> {
    let theta0_zeros;
    let theta0 = if theta0.is_empty() {
        theta0_zeros = vec![T::zero(); p.partition().j_set().len()];
        &theta0_zeros[..]
    } else {
        theta0
    };
    let pi_zeros;
    let pi = if pi.is_empty() {
        pi_zeros = vec![T::zero(); p.partition().e_set().len()];
        &pi_zeros[..]
    } else {
        pi
    };
    let (mut residual, mut trajectory) = shoot_residual(p, schedule, theta0, pi, steps_per_unit)?;
    let mut theta = theta0.to_vec();
    let mut residual_norm = vec_norm_inf(&residual);
    let mut iterations = 0;
    let mut converged = residual.is_empty() || residual_norm <= tol_res;
    let two = T::from_f64_lossy(2.0);

    while !converged && iterations < max_iter {
        let phi = integrate_phi(p, &trajectory)?;
        let phi_ej = terminal_sensitivity(p, phi.terminal());
        let cond = cond_one(&phi_ej);
        if cond > COND_LIMIT {
            return Err(Error::SingularShootingJacobian { cond });
        }
        let step = Lu::new(&phi_ej).solve(&residual)?;

        let mut alpha = T::one();
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let theta_try: Vec<T> = theta
                .iter()
                .zip(step.iter())
                .map(|(t, d)| *t - alpha * *d)
                .collect();
            // A blow-up at an overshooting trial is treated like an increase.
            match shoot_residual(p, schedule, &theta_try, pi, steps_per_unit) {
                Ok((res_try, traj_try)) => {
                    let norm_try = vec_norm_inf(&res_try);
                    if norm_try < residual_norm {
                        theta = theta_try;
                        residual = res_try;
                        trajectory = traj_try;
                        residual_norm = norm_try;
                        accepted = true;
                        break;
                    }
                }
                Err(Error::NonFiniteState { .. }) => {}
                Err(e) => return Err(e),
            }
            alpha = alpha / two;
        }
        if !accepted {
            break;
        }
        iterations += 1;
        converged = residual_norm <= tol_res;
    }

    let gamma = if p.partition().e0().is_empty() {
        T::zero()
    } else {
        let phi = integrate_phi(p, &trajectory)?;
        gamma_of(&terminal_sensitivity(p, phi.terminal()))
    };

    Ok(ShootingResult {
        theta,
        trajectory,
        residual_norm,
        iterations,
        gamma,
        converged,
    })
}

/// Evaluates the existence certificate at a converged solution `theta_star`.
///
/// gamma comes from Phi_EJ(T)^-1 at theta_star; epsilon is the max of
/// ‖Phi_EJ(T; theta) - Phi_EJ(T; theta_star)‖ over `sample_count` seeded
/// pseudo-random theta in the infinity ball of radius r (a reproducible lower
/// estimate of the supremum); delta is the residual norm at
/// theta_star + start_offset. A sample whose integration blows up forces
/// epsilon to infinity, failing the hypotheses conservatively.
pub fn newton_certificate<T: Scalar>(
    p: &ProblemDef<T>,
    schedule: &SwitchSchedule<T>,
    theta_star: &[T],
    opts: &CertificateOptions<T>,
    steps_per_unit: usize,
) -> Result<NewtonCertificate<T>> {
    let m = theta_star.len();
    if !opts.start_offset.is_empty() && opts.start_offset.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "start_offset has {} entries but |J| = {}",
            opts.start_offset.len(),
            m
        )));
    }
    if p.partition().e0().is_empty() {
        // Nothing to solve: the certificate degenerates to the trivial bound.
        return Ok(NewtonCertificate {
            gamma: T::zero(),
            epsilon: T::zero(),
            delta: T::zero(),
            r: opts.radius,
            bound: Some(T::zero()),
            hypotheses_hold: true,
        });
    }

    let pi = vec![T::zero(); p.partition().e0().len()];
    let (_, base_traj) = shoot_residual(p, schedule, theta_star, &pi, steps_per_unit)?;
    let phi = integrate_phi(p, &base_traj)?;
    let phi_ej_base = terminal_sensitivity(p, phi.terminal());
    let cond = cond_one(&phi_ej_base);
    if cond > COND_LIMIT {
        return Err(Error::SingularShootingJacobian { cond });
    }
    let gamma = gamma_of(&phi_ej_base);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut epsilon = T::zero();
    for _ in 0..opts.sample_count {
        let theta_sample: Vec<T> = theta_star
            .iter()
            .map(|t| {
                *t + opts.radius * T::from_f64_lossy(rng.gen::<f64>() * 2.0 - 1.0)
            })
            .collect();
        match shoot_residual(p, schedule, &theta_sample, &pi, steps_per_unit)
            .and_then(|(_, traj)| integrate_phi(p, &traj))
        {
            Ok(phi_s) => {
                let diff = terminal_sensitivity(p, phi_s.terminal())
                    .add_scaled(&phi_ej_base, -T::one())
                    .norm_inf();
                if diff > epsilon {
                    epsilon = diff;
                }
            }
            Err(Error::NonFiniteState { .. }) | Err(Error::NonFiniteMatrix { .. }) => {
                epsilon = T::infinity();
                break;
            }
            Err(e) => return Err(e),
        }
    }

    let start: Vec<T> = if opts.start_offset.is_empty() {
        theta_star.to_vec()
    } else {
        theta_star
            .iter()
            .zip(opts.start_offset.iter())
            .map(|(t, o)| *t + *o)
            .collect()
    };
    let (start_residual, _) = shoot_residual(p, schedule, &start, &pi, steps_per_unit)?;
    let delta = vec_norm_inf(&start_residual);

    let eps_gamma = epsilon * gamma;
    let hypotheses_hold =
        eps_gamma < T::one() && delta * gamma <= opts.radius * (T::one() - eps_gamma);
    let bound = if hypotheses_hold {
        Some(delta * gamma / (T::one() - eps_gamma))
    } else {
        None
    };

    Ok(NewtonCertificate {
        gamma,
        epsilon,
        delta,
        r: opts.radius,
        bound,
        hypotheses_hold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::get_benchmark;
    use crate::problem::{partition_indices, PhaseDynamics};
    use approx::assert_relative_eq;

    const SPU: usize = 200;

    fn schedule(times: Vec<f64>, horizon: f64) -> SwitchSchedule<f64> {
        SwitchSchedule::new(times, horizon, 1e-8 * horizon).unwrap()
    }

    #[test]
    fn residual_is_zero_at_solution() {
        let spec = get_benchmark::<f64>("switched-integrator", &[]).unwrap();
        let (res, _) =
            shoot_residual(&spec.problem, &schedule(vec![1.0], 2.0), &[0.0], &[0.0], SPU).unwrap();
        assert!(res[0].abs() < 1e-10);
    }

    #[test]
    fn residual_is_affine_in_theta() {
        let spec = get_benchmark::<f64>("switched-integrator", &[]).unwrap();
        let (res, _) =
            shoot_residual(&spec.problem, &schedule(vec![1.0], 2.0), &[0.3], &[0.0], SPU).unwrap();
        assert_relative_eq!(res[0], 0.3, epsilon = 1e-10);
    }

    #[test]
    fn empty_terminal_constraint_gives_empty_residual() {
        let spec = get_benchmark::<f64>("switched-integrator-ivp", &[]).unwrap();
        let (res, _) =
            shoot_residual(&spec.problem, &schedule(vec![1.0], 2.0), &[], &[], SPU).unwrap();
        assert!(res.is_empty());
    }

    #[test]
    fn linear_problem_converges_in_one_iteration() {
        let spec = get_benchmark::<f64>("switched-integrator", &[]).unwrap();
        let r = solve_boundary(
            &spec.problem,
            &schedule(vec![1.0], 2.0),
            &[5.0],
            &[0.0],
            1e-10,
            50,
            SPU,
        )
        .unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
        assert!(r.theta[0].abs() < 1e-12);
        assert!(r.residual_norm <= 1e-10);
        assert_relative_eq!(r.gamma, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn double_integrator_solves_to_closed_form_theta() {
        let spec = get_benchmark::<f64>("double-integrator-target", &[]).unwrap();
        let r = solve_boundary(
            &spec.problem,
            &schedule(vec![0.5], 2.0),
            &[0.0],
            &[0.0],
            1e-10,
            50,
            SPU,
        )
        .unwrap();
        assert!(r.converged);
        assert!((r.theta[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ivp_returns_start_unchanged() {
        let spec = get_benchmark::<f64>("switched-integrator-ivp", &[]).unwrap();
        let r = solve_boundary(
            &spec.problem,
            &schedule(vec![1.0], 2.0),
            &[],
            &[],
            1e-10,
            50,
            SPU,
        )
        .unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 0);
        assert!(r.theta.is_empty());
        assert_eq!(r.gamma, 0.0);
    }

    #[test]
    fn certificate_on_linear_problem() {
        let spec = get_benchmark::<f64>("switched-integrator", &[]).unwrap();
        let sched = schedule(vec![1.0], 2.0);
        let sol = solve_boundary(&spec.problem, &sched, &[0.4], &[0.0], 1e-10, 50, SPU).unwrap();
        let mut opts = CertificateOptions::new(0.5);
        opts.start_offset = vec![0.2];
        let cert = newton_certificate(&spec.problem, &sched, &sol.theta, &opts, SPU).unwrap();
        assert!(cert.epsilon < 1e-9, "epsilon = {}", cert.epsilon);
        assert!(cert.hypotheses_hold);
        let bound = cert.bound.unwrap();
        assert_relative_eq!(bound, 0.2, epsilon = 1e-8);
        // Converged theta sits within the certified distance of the start.
        let dist = (sol.theta[0] - (sol.theta[0] + 0.2)).abs();
        assert!(dist <= bound * (1.0 + 1e-6));
    }

    #[test]
    fn certificate_with_zero_offset_has_zero_bound() {
        let spec = get_benchmark::<f64>("switched-integrator", &[]).unwrap();
        let sched = schedule(vec![1.0], 2.0);
        let sol = solve_boundary(&spec.problem, &sched, &[0.0], &[0.0], 1e-10, 50, SPU).unwrap();
        let cert = newton_certificate(
            &spec.problem,
            &sched,
            &sol.theta,
            &CertificateOptions::new(0.5),
            SPU,
        )
        .unwrap();
        assert!(cert.hypotheses_hold);
        assert!(cert.bound.unwrap() < 1e-9);
    }

    #[test]
    fn strongly_nonlinear_problem_fails_the_hypotheses() {
        // x2' = x2^3 makes the terminal sensitivity vary sharply with theta:
        // at radius 0.4 the observed variation alone exceeds 1/gamma.
        let partition = partition_indices(&[1], &[2], 2).unwrap();
        let p = ProblemDef::new(
            2.0,
            partition,
            vec![0.0],
            vec![0.0],
            vec![PhaseDynamics::new(
                0,
                |x: &[f64], _t| vec![0.0, x[1] * x[1] * x[1]],
                |x: &[f64], _t| {
                    Matrix::from_rows(2, 2, &[0.0, 0.0, 0.0, 3.0 * x[1] * x[1]])
                },
            )],
            |x: &[f64]| x[0],
            |_x: &[f64]| vec![1.0, 0.0],
        )
        .unwrap();
        let sched = SwitchSchedule::empty();
        let sol = solve_boundary(&p, &sched, &[0.0], &[0.0], 1e-10, 50, SPU).unwrap();
        assert!(sol.converged);
        let cert =
            newton_certificate(&p, &sched, &sol.theta, &CertificateOptions::new(0.4), SPU)
                .unwrap();
        assert!(cert.epsilon * cert.gamma >= 1.0);
        assert!(!cert.hypotheses_hold);
        assert_eq!(cert.bound, None);
    }

    #[test]
    fn perturbed_target_shifts_theta_by_gamma_times_pi() {
        let spec = get_benchmark::<f64>("switched-integrator", &[]).unwrap();
        let sched = schedule(vec![1.0], 2.0);
        let base =
            solve_boundary(&spec.problem, &sched, &[0.0], &[0.0], 1e-10, 50, SPU).unwrap();
        let shifted =
            solve_boundary(&spec.problem, &sched, &[0.0], &[1e-3], 1e-10, 50, SPU).unwrap();
        assert_relative_eq!(shifted.theta[0] - base.theta[0], 1e-3, max_relative = 1e-8);
    }
}
