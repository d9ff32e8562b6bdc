//! Problem definition: switched dynamics, mixed boundary data, objective.
//!
//! A problem couples `N` phase dynamics `F_0 .. F_{N-1}` active on consecutive
//! time intervals, boundary data fixing the `I` components of `x(0)` and the
//! `E` components of `x(T)`, and a terminal objective `C(x(T))`. Index sets
//! are 1-based externally; complements `J = I^c` and `F = E^c` are derived.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Seed for the deterministic sample draw in [`validate_problem`].
const VALIDATION_SEED: u64 = 42;

/// Half-width of the state box sampled by [`validate_problem`].
const VALIDATION_BOX: f64 = 2.0;

/// Partition of `{1..n}` into initially-constrained indices `I` (complement
/// `J`) and terminally-constrained indices `E` (complement `F`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexPartition {
    n: usize,
    i_set: Vec<usize>,
    e_set: Vec<usize>,
    j_set: Vec<usize>,
    f_set: Vec<usize>,
}

impl IndexPartition {
    pub fn n(&self) -> usize {
        self.n
    }

    /// 1-based indices fixed at t = 0.
    pub fn i_set(&self) -> &[usize] {
        &self.i_set
    }

    /// 1-based indices constrained at t = T.
    pub fn e_set(&self) -> &[usize] {
        &self.e_set
    }

    /// 1-based complement of I: the unknown initial components.
    pub fn j_set(&self) -> &[usize] {
        &self.j_set
    }

    /// 1-based complement of E: the free terminal components.
    pub fn f_set(&self) -> &[usize] {
        &self.f_set
    }

    /// 0-based variants, for indexing into state vectors.
    pub fn i0(&self) -> Vec<usize> {
        self.i_set.iter().map(|&k| k - 1).collect()
    }

    pub fn e0(&self) -> Vec<usize> {
        self.e_set.iter().map(|&k| k - 1).collect()
    }

    pub fn j0(&self) -> Vec<usize> {
        self.j_set.iter().map(|&k| k - 1).collect()
    }

    pub fn f0(&self) -> Vec<usize> {
        self.f_set.iter().map(|&k| k - 1).collect()
    }
}

/// Builds an [`IndexPartition`], deriving the complements J and F.
///
/// `i_set` and `e_set` are 1-based and must satisfy `|I| + |E| = n`.
pub fn partition_indices(i_set: &[usize], e_set: &[usize], n: usize) -> Result<IndexPartition> {
    for &idx in i_set.iter().chain(e_set.iter()) {
        if idx == 0 || idx > n {
            return Err(Error::IndexOutOfRange { index: idx, n });
        }
    }
    let mut i_sorted = i_set.to_vec();
    i_sorted.sort_unstable();
    i_sorted.dedup();
    if i_sorted.len() != i_set.len() {
        return Err(Error::DimensionMismatch("duplicate index in I".into()));
    }
    let mut e_sorted = e_set.to_vec();
    e_sorted.sort_unstable();
    e_sorted.dedup();
    if e_sorted.len() != e_set.len() {
        return Err(Error::DimensionMismatch("duplicate index in E".into()));
    }
    if i_sorted.len() + e_sorted.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "|I| + |E| = {} but n = {}",
            i_sorted.len() + e_sorted.len(),
            n
        )));
    }
    let j_set: Vec<usize> = (1..=n).filter(|k| !i_sorted.contains(k)).collect();
    let f_set: Vec<usize> = (1..=n).filter(|k| !e_sorted.contains(k)).collect();
    Ok(IndexPartition {
        n,
        i_set: i_sorted,
        e_set: e_sorted,
        j_set,
        f_set,
    })
}

type EvalFn<T> = Arc<dyn Fn(&[T], T) -> Vec<T> + Send + Sync>;
type JacobianFn<T> = Arc<dyn Fn(&[T], T) -> Matrix<T> + Send + Sync>;
type ObjectiveFn<T> = Arc<dyn Fn(&[T]) -> T + Send + Sync>;
type ObjectiveGradFn<T> = Arc<dyn Fn(&[T]) -> Vec<T> + Send + Sync>;

/// One phase of the switched dynamics: the vector field and its state
/// Jacobian, both pure functions of `(x, t)`.
#[derive(Clone)]
pub struct PhaseDynamics<T> {
    label: usize,
    eval: EvalFn<T>,
    jacobian: JacobianFn<T>,
    approximate_jacobian: bool,
}

impl<T: Scalar> PhaseDynamics<T> {
    /// Phase with an analytic Jacobian.
    pub fn new(
        label: usize,
        eval: impl Fn(&[T], T) -> Vec<T> + Send + Sync + 'static,
        jacobian: impl Fn(&[T], T) -> Matrix<T> + Send + Sync + 'static,
    ) -> Self {
        PhaseDynamics {
            label,
            eval: Arc::new(eval),
            jacobian: Arc::new(jacobian),
            approximate_jacobian: false,
        }
    }

    /// Phase whose Jacobian is built by central finite differences on `eval`.
    /// Flagged "approximate" in validation reports.
    pub fn with_fd_jacobian(
        label: usize,
        eval: impl Fn(&[T], T) -> Vec<T> + Send + Sync + 'static,
    ) -> Self {
        let eval: EvalFn<T> = Arc::new(eval);
        let eval_for_jac = Arc::clone(&eval);
        PhaseDynamics {
            label,
            eval,
            jacobian: Arc::new(move |x, t| fd_jacobian(eval_for_jac.as_ref(), x, t)),
            approximate_jacobian: true,
        }
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn eval(&self, x: &[T], t: T) -> Vec<T> {
        (self.eval)(x, t)
    }

    pub fn jacobian(&self, x: &[T], t: T) -> Matrix<T> {
        (self.jacobian)(x, t)
    }

    pub fn jacobian_is_approximate(&self) -> bool {
        self.approximate_jacobian
    }
}

impl<T> fmt::Debug for PhaseDynamics<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhaseDynamics")
            .field("label", &self.label)
            .field("approximate_jacobian", &self.approximate_jacobian)
            .finish()
    }
}

/// Central finite-difference state Jacobian of `eval` at `(x, t)`, step
/// `1e-6 * max(1, |x_k|)` per component.
pub fn fd_jacobian<T: Scalar>(eval: &dyn Fn(&[T], T) -> Vec<T>, x: &[T], t: T) -> Matrix<T> {
    let n = x.len();
    let base_step = T::from_f64_lossy(1e-6);
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    let mut jac = Matrix::zeros(n, n);
    for k in 0..n {
        let scale = if x[k].abs() > T::one() { x[k].abs() } else { T::one() };
        let h = base_step * scale;
        xp[k] = x[k] + h;
        xm[k] = x[k] - h;
        let fp = eval(&xp, t);
        let fm = eval(&xm, t);
        for r in 0..n.min(fp.len()).min(fm.len()) {
            jac.set(r, k, (fp[r] - fm[r]) / (h + h));
        }
        xp[k] = x[k];
        xm[k] = x[k];
    }
    jac
}

/// Fixed-horizon switched boundary-value problem with terminal objective.
#[derive(Clone)]
pub struct ProblemDef<T> {
    horizon: T,
    partition: IndexPartition,
    b_i: Vec<T>,
    b_e: Vec<T>,
    phases: Vec<PhaseDynamics<T>>,
    objective: ObjectiveFn<T>,
    objective_gradient: ObjectiveGradFn<T>,
}

impl<T: Scalar> ProblemDef<T> {
    /// Assembles a problem, checking structural dimensions.
    ///
    /// `b_i` pairs with `partition.i_set()` in sorted order, `b_e` with
    /// `partition.e_set()`. `phases` lists the dynamics in order of activity.
    pub fn new(
        horizon: T,
        partition: IndexPartition,
        b_i: Vec<T>,
        b_e: Vec<T>,
        phases: Vec<PhaseDynamics<T>>,
        objective: impl Fn(&[T]) -> T + Send + Sync + 'static,
        objective_gradient: impl Fn(&[T]) -> Vec<T> + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(horizon > T::zero()) {
            return Err(Error::DimensionMismatch("horizon must be positive".into()));
        }
        if b_i.len() != partition.i_set().len() {
            return Err(Error::DimensionMismatch(format!(
                "b_I has {} entries but |I| = {}",
                b_i.len(),
                partition.i_set().len()
            )));
        }
        if b_e.len() != partition.e_set().len() {
            return Err(Error::DimensionMismatch(format!(
                "b_E has {} entries but |E| = {}",
                b_e.len(),
                partition.e_set().len()
            )));
        }
        if phases.is_empty() {
            return Err(Error::DimensionMismatch("at least one phase required".into()));
        }
        Ok(ProblemDef {
            horizon,
            partition,
            b_i,
            b_e,
            phases,
            objective: Arc::new(objective),
            objective_gradient: Arc::new(objective_gradient),
        })
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.partition.n()
    }

    pub fn partition(&self) -> &IndexPartition {
        &self.partition
    }

    pub fn b_i(&self) -> &[T] {
        &self.b_i
    }

    pub fn b_e(&self) -> &[T] {
        &self.b_e
    }

    pub fn phases(&self) -> &[PhaseDynamics<T>] {
        &self.phases
    }

    pub fn phase(&self, idx: usize) -> &PhaseDynamics<T> {
        &self.phases[idx]
    }

    pub fn num_phases(&self) -> usize {
        self.phases.len()
    }

    /// Number of interior switch times: one fewer than the phase count.
    pub fn num_switches(&self) -> usize {
        self.phases.len() - 1
    }

    pub fn objective(&self, x_terminal: &[T]) -> T {
        (self.objective)(x_terminal)
    }

    pub fn objective_gradient(&self, x_terminal: &[T]) -> Vec<T> {
        (self.objective_gradient)(x_terminal)
    }

    /// Replaces the objective, keeping dynamics and boundary data. Used by
    /// tests probing objective-scaling behavior.
    pub fn with_objective(
        &self,
        objective: impl Fn(&[T]) -> T + Send + Sync + 'static,
        objective_gradient: impl Fn(&[T]) -> Vec<T> + Send + Sync + 'static,
    ) -> Self {
        let mut out = self.clone();
        out.objective = Arc::new(objective);
        out.objective_gradient = Arc::new(objective_gradient);
        out
    }

    /// Minimum allowed separation between consecutive switch times.
    pub fn default_eps_sep(&self) -> T {
        default_eps_sep(self.horizon)
    }
}

impl<T: Scalar> fmt::Debug for ProblemDef<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemDef")
            .field("horizon", &self.horizon)
            .field("n", &self.partition.n())
            .field("phases", &self.phases.len())
            .field("partition", &self.partition)
            .finish()
    }
}

/// Default minimum switch separation: `1e-8 * horizon`.
pub fn default_eps_sep<T: Scalar>(horizon: T) -> T {
    T::from_f64_lossy(1e-8) * horizon
}

/// Ordered interior switch times `0 < s_1 < ... < s_{N-1} < T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchSchedule<T> {
    times: Vec<T>,
}

impl<T: Scalar> SwitchSchedule<T> {
    /// Validates ordering, interiority, and pairwise separation `eps_sep`.
    ///
    /// Separation is checked with a 1e-6 relative slack on `eps_sep` so that
    /// schedules produced by projection (separations equal to `eps_sep` up to
    /// roundoff) are accepted.
    pub fn new(times: Vec<T>, horizon: T, eps_sep: T) -> Result<Self> {
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidSchedule("non-finite switch time".into()));
        }
        let slack = eps_sep * T::from_f64_lossy(1.0 - 1e-6);
        let mut prev = T::zero();
        for (k, &t) in times.iter().enumerate() {
            if !(t > prev) || t - prev < slack {
                return Err(Error::InvalidSchedule(format!(
                    "switch time {} at position {} violates ordering or separation",
                    t,
                    k + 1
                )));
            }
            prev = t;
        }
        if let Some(&last) = times.last() {
            if !(last < horizon) || horizon - last < slack {
                return Err(Error::InvalidSchedule(format!(
                    "last switch time {} too close to horizon {}",
                    last, horizon
                )));
            }
        }
        Ok(SwitchSchedule { times })
    }

    /// Empty schedule (single-phase problem).
    pub fn empty() -> Self {
        SwitchSchedule { times: Vec::new() }
    }

    /// Constructs without validation. Callers guarantee feasibility (used by
    /// the projection, whose output is feasible by construction).
    pub(crate) fn new_unchecked(times: Vec<T>) -> Self {
        SwitchSchedule { times }
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Outcome of [`validate_problem`]: violated invariants plus advisory notes.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    /// Violated invariants; empty means valid.
    pub findings: Vec<String>,
    /// Labels of phases whose Jacobians are finite-difference approximations.
    pub approximate_jacobians: Vec<usize>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Checks a problem's semantic invariants: phase labels in activity order,
/// eval/jacobian shape, Jacobian and objective-gradient consistency with
/// central finite differences at 20 deterministic sample points in the box
/// `[-2, 2]^n x [0, T]`.
pub fn validate_problem<T: Scalar>(p: &ProblemDef<T>) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = p.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(VALIDATION_SEED);
    let samples: Vec<(Vec<T>, T)> = (0..20)
        .map(|_| {
            let x: Vec<T> = (0..n)
                .map(|_| T::from_f64_lossy((rng.gen::<f64>() * 2.0 - 1.0) * VALIDATION_BOX))
                .collect();
            let t = T::from_f64_lossy(rng.gen::<f64>()) * p.horizon();
            (x, t)
        })
        .collect();

    for (idx, phase) in p.phases().iter().enumerate() {
        if phase.label() != idx {
            report.findings.push(format!(
                "phase at position {} has label {}; phases must be listed in activity order",
                idx,
                phase.label()
            ));
        }
        if phase.jacobian_is_approximate() {
            report.approximate_jacobians.push(phase.label());
        }
        let mut shape_ok = true;
        for (x, t) in &samples {
            let f = phase.eval(x, *t);
            if f.len() != n {
                report.findings.push(format!(
                    "phase {} eval returns {} components, expected {}",
                    phase.label(),
                    f.len(),
                    n
                ));
                shape_ok = false;
                break;
            }
            if f.iter().any(|v| !v.is_finite()) {
                report
                    .findings
                    .push(format!("phase {} eval non-finite at a sample point", phase.label()));
                shape_ok = false;
                break;
            }
        }
        if !shape_ok {
            continue;
        }
        let mut worst = T::zero();
        let mut scale = T::one();
        for (x, t) in &samples {
            let jac = phase.jacobian(x, *t);
            if jac.rows() != n || jac.cols() != n {
                report.findings.push(format!(
                    "phase {} jacobian is {}x{}, expected {}x{}",
                    phase.label(),
                    jac.rows(),
                    jac.cols(),
                    n,
                    n
                ));
                worst = T::zero();
                break;
            }
            let fd = fd_jacobian(&|x: &[T], t: T| phase.eval(x, t), x, *t);
            let mut diff = T::zero();
            for r in 0..n {
                for c in 0..n {
                    let d = (jac.get(r, c) - fd.get(r, c)).abs();
                    if d > diff {
                        diff = d;
                    }
                }
            }
            if jac.norm_inf() > scale {
                scale = jac.norm_inf();
            }
            if diff > worst {
                worst = diff;
            }
        }
        if worst > T::from_f64_lossy(1e-5) * scale {
            report.findings.push(format!(
                "phase {} jacobian disagrees with finite differences: max deviation {} exceeds 1e-5 * max(1, |jacobian|)",
                phase.label(),
                worst
            ));
        }
    }

    // Objective gradient vs central differences at the same sample states.
    let mut worst = T::zero();
    let mut scale = T::one();
    let mut grad_shape_ok = true;
    for (x, _) in &samples {
        let grad = p.objective_gradient(x);
        if grad.len() != n {
            report.findings.push(format!(
                "objective gradient returns {} components, expected {}",
                grad.len(),
                n
            ));
            grad_shape_ok = false;
            break;
        }
        let mut xp = x.clone();
        let mut xm = x.clone();
        for k in 0..n {
            let sc = if x[k].abs() > T::one() { x[k].abs() } else { T::one() };
            let h = T::from_f64_lossy(1e-6) * sc;
            xp[k] = x[k] + h;
            xm[k] = x[k] - h;
            let fd = (p.objective(&xp) - p.objective(&xm)) / (h + h);
            xp[k] = x[k];
            xm[k] = x[k];
            let d = (grad[k] - fd).abs();
            if d > worst {
                worst = d;
            }
            if grad[k].abs() > scale {
                scale = grad[k].abs();
            }
        }
    }
    if grad_shape_ok && worst > T::from_f64_lossy(1e-5) * scale {
        report.findings.push(format!(
            "objective gradient disagrees with finite differences: max deviation {}",
            worst
        ));
    }

    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pendulum_like() -> ProblemDef<f64> {
        let partition = partition_indices(&[1, 2], &[], 2).unwrap();
        ProblemDef::new(
            1.0,
            partition,
            vec![0.5, 0.0],
            vec![],
            vec![PhaseDynamics::new(
                0,
                |x: &[f64], _t| vec![x[1], -x[0].sin()],
                |x: &[f64], _t| Matrix::from_rows(2, 2, &[0.0, 1.0, -x[0].cos(), 0.0]),
            )],
            |x: &[f64]| x[0] * x[0],
            |x: &[f64]| vec![2.0 * x[0], 0.0],
        )
        .unwrap()
    }

    #[test]
    fn partition_pure_initial_value() {
        let p = partition_indices(&[1, 2], &[], 2).unwrap();
        assert!(p.j_set().is_empty());
        assert_eq!(p.f_set(), &[1, 2]);
    }

    #[test]
    fn partition_mixed() {
        let p = partition_indices(&[1], &[2], 2).unwrap();
        assert_eq!(p.j_set(), &[2]);
        assert_eq!(p.f_set(), &[1]);
        assert_eq!(p.j0(), vec![1]);
        assert_eq!(p.f0(), vec![0]);
    }

    #[test]
    fn partition_size_mismatch() {
        assert!(matches!(
            partition_indices(&[1], &[1], 3),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn partition_index_out_of_range() {
        assert!(matches!(
            partition_indices(&[3], &[1], 2),
            Err(Error::IndexOutOfRange { index: 3, n: 2 })
        ));
    }

    #[test]
    fn valid_problem_has_empty_report() {
        let report = validate_problem(&pendulum_like());
        assert!(report.is_valid(), "findings: {:?}", report.findings);
        assert!(report.approximate_jacobians.is_empty());
    }

    #[test]
    fn perturbed_jacobian_is_flagged() {
        let partition = partition_indices(&[1, 2], &[], 2).unwrap();
        let bad = ProblemDef::new(
            1.0,
            partition,
            vec![0.5, 0.0],
            vec![],
            vec![PhaseDynamics::new(
                0,
                |x: &[f64], _t| vec![x[1], -x[0].sin()],
                |x: &[f64], _t| {
                    Matrix::from_rows(2, 2, &[0.1, 1.0, -x[0].cos(), 0.0])
                },
            )],
            |x: &[f64]| x[0] * x[0],
            |x: &[f64]| vec![2.0 * x[0], 0.0],
        )
        .unwrap();
        let report = validate_problem(&bad);
        assert!(report
            .findings
            .iter()
            .any(|f| f.contains("jacobian disagrees")));
    }

    #[test]
    fn fd_jacobian_helper_is_flagged_approximate_but_valid() {
        let partition = partition_indices(&[1, 2], &[], 2).unwrap();
        let p = ProblemDef::new(
            1.0,
            partition,
            vec![0.5, 0.0],
            vec![],
            vec![PhaseDynamics::with_fd_jacobian(0, |x: &[f64], _t| {
                vec![x[1], -x[0].sin()]
            })],
            |x: &[f64]| x[0] * x[0],
            |x: &[f64]| vec![2.0 * x[0], 0.0],
        )
        .unwrap();
        let report = validate_problem(&p);
        assert!(report.is_valid(), "findings: {:?}", report.findings);
        assert_eq!(report.approximate_jacobians, vec![0]);
    }

    #[test]
    fn single_phase_empty_schedule_is_valid() {
        let p = pendulum_like();
        assert_eq!(p.num_switches(), 0);
        assert!(SwitchSchedule::<f64>::new(vec![], 1.0, 1e-8).is_ok());
        assert!(validate_problem(&p).is_valid());
    }

    #[test]
    fn schedule_rejects_disorder_and_boundary_contact() {
        let eps = 1e-8;
        assert!(SwitchSchedule::new(vec![0.7, 0.3], 1.0, eps).is_err());
        assert!(SwitchSchedule::new(vec![0.0], 1.0, eps).is_err());
        assert!(SwitchSchedule::new(vec![1.0], 1.0, eps).is_err());
        assert!(SwitchSchedule::new(vec![0.3, 0.3], 1.0, eps).is_err());
        assert!(SwitchSchedule::new(vec![0.3, 0.7], 1.0, eps).is_ok());
    }

    #[test]
    fn inconsistent_objective_gradient_is_flagged() {
        let p = pendulum_like().with_objective(|x: &[f64]| x[0] * x[0], |_x| vec![0.0, 0.0]);
        let report = validate_problem(&p);
        assert!(report
            .findings
            .iter()
            .any(|f| f.contains("objective gradient disagrees")));
    }

    proptest! {
        #[test]
        fn complements_partition_everything(n in 1usize..8, mask in 0usize..256) {
            let mask = mask % (1 << n);
            let i_set: Vec<usize> = (1..=n).filter(|k| mask & (1 << (k - 1)) != 0).collect();
            let e_set: Vec<usize> = (1..=n).filter(|k| mask & (1 << (k - 1)) == 0).collect();
            let p = partition_indices(&i_set, &e_set, n).unwrap();
            let mut all: Vec<usize> = p.i_set().iter().chain(p.j_set()).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (1..=n).collect::<Vec<_>>());
            let mut all: Vec<usize> = p.e_set().iter().chain(p.f_set()).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (1..=n).collect::<Vec<_>>());
            prop_assert!(p.i_set().iter().all(|k| !p.j_set().contains(k)));
            prop_assert!(p.e_set().iter().all(|k| !p.f_set().contains(k)));
        }
    }
}
