//! Empirical checks of the solver's sensitivity claims: boundary
//! perturbations move the solved initial state by at most gamma, switch
//! perturbations move it at the rate visible in closed forms, and the
//! first-order objective model has a quadratic remainder.

use crate::error::{Error, Result};
use crate::gradient::{evaluate, EvalOptions};
use crate::integrator::integrate_phi;
use crate::linalg::{vec_norm_inf, Lu};
use crate::problem::{ProblemDef, SwitchSchedule};
use crate::scalar::Scalar;
use crate::shooting::{solve_boundary, ShootingResult};

/// Noise floor scale for remainder fits.
const REMAINDER_FLOOR_SCALE: f64 = 1e-13;

/// Sensitivity ratios measured at several perturbation magnitudes.
///
/// `magnitudes` keeps only the entries that evaluated successfully; skipped
/// ones are described in `failures`.
#[derive(Debug, Clone)]
pub struct PerturbationStudy<T> {
    pub magnitudes: Vec<T>,
    /// Displacement of the solved initial state per unit perturbation.
    pub ratios: Vec<T>,
    /// Predicted bound on the ratios where one exists (the conditioning
    /// estimate gamma for boundary perturbations).
    pub reference: Option<T>,
    /// Log-log slope of displacement against magnitude.
    pub slope: Option<f64>,
    pub failures: Vec<String>,
}

/// Taylor remainders |C(s + d e_i) - C(s) - d * grad_i| per step size.
#[derive(Debug, Clone)]
pub struct RemainderStudy<T> {
    pub deltas: Vec<T>,
    pub remainders: Vec<T>,
    /// Log-log slope fitted over remainders above the noise floor.
    pub slope: Option<f64>,
    pub floor: T,
    pub failures: Vec<String>,
}

/// Least-squares slope of ln y against ln x; `None` below two points.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in lx.iter().zip(&ly) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    if den == 0.0 {
        return None;
    }
    Some(num / den)
}

/// Empty lists are allowed (the study comes back empty). `decreasing`
/// additionally demands a strictly decreasing sequence, the shape the
/// ratio tables assume.
fn check_magnitudes<T: Scalar>(magnitudes: &[T], decreasing: bool) -> Result<()> {
    if magnitudes.iter().any(|m| !(*m > T::zero()) || !m.is_finite()) {
        return Err(Error::InvalidStudy(
            "perturbation magnitudes must be positive and finite".into(),
        ));
    }
    if decreasing && magnitudes.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::InvalidStudy(
            "perturbation magnitudes must be strictly decreasing".into(),
        ));
    }
    Ok(())
}

fn empty_study<T: Scalar>() -> PerturbationStudy<T> {
    PerturbationStudy {
        magnitudes: Vec::new(),
        ratios: Vec::new(),
        reference: None,
        slope: None,
        failures: Vec::new(),
    }
}

/// Sign pattern of the worst row of the inverse terminal sensitivity: the
/// perturbation direction along which the first-order displacement attains
/// gamma. `None` if the sensitivity is singular.
fn extremal_direction<T: Scalar>(
    p: &ProblemDef<T>,
    base: &ShootingResult<T>,
) -> Result<Option<Vec<T>>> {
    let phi = integrate_phi(p, &base.trajectory)?;
    let phi_ej = phi
        .terminal()
        .submatrix(&p.partition().e0(), &p.partition().j0());
    let inv = match Lu::new(&phi_ej).inverse() {
        Ok(inv) => inv,
        Err(_) => return Ok(None),
    };
    let mut worst_row = 0;
    let mut worst_sum = T::neg_infinity();
    for i in 0..inv.rows() {
        let sum = (0..inv.cols()).fold(T::zero(), |acc, j| acc + inv.get(i, j).abs());
        if sum > worst_sum {
            worst_sum = sum;
            worst_row = i;
        }
    }
    Ok(Some(
        (0..inv.cols())
            .map(|j| {
                if inv.get(worst_row, j) < T::zero() {
                    -T::one()
                } else {
                    T::one()
                }
            })
            .collect(),
    ))
}

/// Measures how far boundary-value perturbations move the solved initial
/// state, against the conditioning estimate gamma.
///
/// For each magnitude the terminal target is shifted by `magnitude *
/// direction` and the boundary problem re-solved from the unperturbed
/// solution; the reported ratio is the worst displacement-to-perturbation
/// quotient over the directions. The default directions are the canonical
/// basis of the constrained terminal coordinates plus the sign pattern
/// along which the first-order displacement attains gamma.
///
/// Magnitudes must be positive and strictly decreasing; an empty list
/// yields an empty study without solving anything.
pub fn terminal_perturbation_study<T: Scalar>(
    p: &ProblemDef<T>,
    schedule: &SwitchSchedule<T>,
    magnitudes: &[T],
    directions: Option<&[Vec<T>]>,
    opts: &EvalOptions<T>,
) -> Result<PerturbationStudy<T>> {
    check_magnitudes(magnitudes, true)?;
    let ne = p.partition().e_set().len();
    if ne == 0 {
        return Err(Error::InvalidStudy(
            "terminal perturbation needs constrained terminal coordinates".into(),
        ));
    }
    if magnitudes.is_empty() {
        return Ok(empty_study());
    }

    let base = solve_boundary(
        p,
        schedule,
        &[],
        &[],
        opts.tol_res,
        opts.max_iter,
        opts.steps_per_unit,
    )?;
    if !base.converged {
        return Err(Error::ShootingFailed {
            residual_norm: base.residual_norm.to_f64_lossy(),
            iterations: base.iterations,
        });
    }

    let default_dirs: Vec<Vec<T>>;
    let dirs: &[Vec<T>] = match directions {
        Some(d) => d,
        None => {
            let mut all: Vec<Vec<T>> = (0..ne)
                .map(|k| {
                    let mut e = vec![T::zero(); ne];
                    e[k] = T::one();
                    e
                })
                .collect();
            if let Some(extremal) = extremal_direction(p, &base)? {
                all.push(extremal);
            }
            default_dirs = all;
            &default_dirs
        }
    };
    if dirs.is_empty() {
        return Err(Error::InvalidStudy("no perturbation directions given".into()));
    }
    for d in dirs {
        if d.len() != ne {
            return Err(Error::DimensionMismatch(format!(
                "direction has {} entries, expected {}",
                d.len(),
                ne
            )));
        }
        if vec_norm_inf(d) == T::zero() {
            return Err(Error::InvalidStudy("zero perturbation direction".into()));
        }
    }

    let mut study = PerturbationStudy {
        magnitudes: Vec::new(),
        ratios: Vec::new(),
        reference: Some(base.gamma),
        slope: None,
        failures: Vec::new(),
    };
    let mut displacements = Vec::new();
    for &mu in magnitudes {
        let mut worst: Option<T> = None;
        for d in dirs {
            let pi: Vec<T> = d.iter().map(|di| mu * *di).collect();
            let pi_norm = vec_norm_inf(&pi);
            let solved = solve_boundary(
                p,
                schedule,
                &base.theta,
                &pi,
                opts.tol_res,
                opts.max_iter,
                opts.steps_per_unit,
            );
            match solved {
                Ok(r) if r.converged => {
                    let shift: Vec<T> = r
                        .theta
                        .iter()
                        .zip(&base.theta)
                        .map(|(a, b)| *a - *b)
                        .collect();
                    let ratio = vec_norm_inf(&shift) / pi_norm;
                    worst = Some(match worst {
                        Some(w) if w >= ratio => w,
                        _ => ratio,
                    });
                }
                Ok(r) => study.failures.push(format!(
                    "magnitude {:e}: shooting stalled at residual {:e}",
                    mu.to_f64_lossy(),
                    r.residual_norm.to_f64_lossy()
                )),
                Err(e) => study
                    .failures
                    .push(format!("magnitude {:e}: {}", mu.to_f64_lossy(), e)),
            }
        }
        if let Some(w) = worst {
            study.magnitudes.push(mu);
            study.ratios.push(w);
            displacements.push((mu.to_f64_lossy(), (w * mu).to_f64_lossy()));
        }
    }
    let xs: Vec<f64> = displacements.iter().map(|(x, _)| *x).collect();
    let ys: Vec<f64> = displacements.iter().map(|(_, y)| *y).collect();
    study.slope = log_log_slope(&xs, &ys);
    Ok(study)
}

/// Measures how far moving one switch time moves the solved initial state.
///
/// `index` is 1-based. Each ratio is ||theta(s + delta e_index) -
/// theta(s)||_inf / delta; there is no generic bound, so `reference` is
/// `None` and callers compare against problem-specific values.
///
/// Magnitudes must be positive and strictly decreasing; an empty list
/// yields an empty study without solving anything.
pub fn switch_perturbation_study<T: Scalar>(
    p: &ProblemDef<T>,
    schedule: &SwitchSchedule<T>,
    index: usize,
    magnitudes: &[T],
    opts: &EvalOptions<T>,
) -> Result<PerturbationStudy<T>> {
    check_magnitudes(magnitudes, true)?;
    let m = schedule.len();
    if index == 0 || index > m {
        return Err(Error::IndexOutOfRange { index, n: m });
    }
    if magnitudes.is_empty() {
        return Ok(empty_study());
    }

    let base = solve_boundary(
        p,
        schedule,
        &[],
        &[],
        opts.tol_res,
        opts.max_iter,
        opts.steps_per_unit,
    )?;
    if !base.converged {
        return Err(Error::ShootingFailed {
            residual_norm: base.residual_norm.to_f64_lossy(),
            iterations: base.iterations,
        });
    }

    let mut study = PerturbationStudy {
        magnitudes: Vec::new(),
        ratios: Vec::new(),
        reference: None,
        slope: None,
        failures: Vec::new(),
    };
    let mut displacements = Vec::new();
    for &delta in magnitudes {
        let mut times = schedule.times().to_vec();
        times[index - 1] = times[index - 1] + delta;
        let perturbed = match SwitchSchedule::new(times, p.horizon(), p.default_eps_sep()) {
            Ok(s) => s,
            Err(e) => {
                study
                    .failures
                    .push(format!("magnitude {:e}: {}", delta.to_f64_lossy(), e));
                continue;
            }
        };
        let solved = solve_boundary(
            p,
            &perturbed,
            &base.theta,
            &[],
            opts.tol_res,
            opts.max_iter,
            opts.steps_per_unit,
        );
        match solved {
            Ok(r) if r.converged => {
                let shift: Vec<T> = r
                    .theta
                    .iter()
                    .zip(&base.theta)
                    .map(|(a, b)| *a - *b)
                    .collect();
                let ratio = vec_norm_inf(&shift) / delta;
                study.magnitudes.push(delta);
                study.ratios.push(ratio);
                displacements.push((delta.to_f64_lossy(), (ratio * delta).to_f64_lossy()));
            }
            Ok(r) => study.failures.push(format!(
                "magnitude {:e}: shooting stalled at residual {:e}",
                delta.to_f64_lossy(),
                r.residual_norm.to_f64_lossy()
            )),
            Err(e) => study
                .failures
                .push(format!("magnitude {:e}: {}", delta.to_f64_lossy(), e)),
        }
    }
    let xs: Vec<f64> = displacements.iter().map(|(x, _)| *x).collect();
    let ys: Vec<f64> = displacements.iter().map(|(_, y)| *y).collect();
    study.slope = log_log_slope(&xs, &ys);
    Ok(study)
}

/// Checks that the switch-time gradient is exact to first order: the
/// remainder of C against its linear model in s_index shrinks
/// quadratically.
///
/// `index` is 1-based. Remainders at or below `floor` (roundoff in the
/// objective) are excluded from the slope fit. An empty delta list gives
/// an empty table; the floor is still reported.
pub fn remainder_study<T: Scalar>(
    p: &ProblemDef<T>,
    schedule: &SwitchSchedule<T>,
    index: usize,
    deltas: &[T],
    opts: &EvalOptions<T>,
) -> Result<RemainderStudy<T>> {
    check_magnitudes(deltas, false)?;
    let m = schedule.len();
    if index == 0 || index > m {
        return Err(Error::IndexOutOfRange { index, n: m });
    }

    let base = evaluate(p, schedule, &[], opts)?;
    let grad = match &base.grad {
        Some(g) => g.clone(),
        None => {
            return Err(Error::ShootingFailed {
                residual_norm: base.shooting.residual_norm.to_f64_lossy(),
                iterations: base.shooting.iterations,
            })
        }
    };
    let g_i = grad[index - 1];
    let floor = T::from_f64_lossy(REMAINDER_FLOOR_SCALE)
        * T::one().max(base.objective.abs());

    let mut study = RemainderStudy {
        deltas: Vec::new(),
        remainders: Vec::new(),
        slope: None,
        floor,
        failures: Vec::new(),
    };
    for &delta in deltas {
        let mut times = schedule.times().to_vec();
        times[index - 1] = times[index - 1] + delta;
        let perturbed = match SwitchSchedule::new(times, p.horizon(), p.default_eps_sep()) {
            Ok(s) => s,
            Err(e) => {
                study
                    .failures
                    .push(format!("delta {:e}: {}", delta.to_f64_lossy(), e));
                continue;
            }
        };
        match evaluate(p, &perturbed, &base.shooting.theta, opts) {
            Ok(r) if r.grad.is_some() => {
                let remainder = (r.objective - base.objective - delta * g_i).abs();
                study.deltas.push(delta);
                study.remainders.push(remainder);
            }
            Ok(r) => study.failures.push(format!(
                "delta {:e}: shooting stalled at residual {:e}",
                delta.to_f64_lossy(),
                r.shooting.residual_norm.to_f64_lossy()
            )),
            Err(e) => study
                .failures
                .push(format!("delta {:e}: {}", delta.to_f64_lossy(), e)),
        }
    }

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (d, r) in study.deltas.iter().zip(&study.remainders) {
        if *r > floor {
            xs.push(d.to_f64_lossy());
            ys.push(r.to_f64_lossy());
        }
    }
    study.slope = log_log_slope(&xs, &ys);
    Ok(study)
}
