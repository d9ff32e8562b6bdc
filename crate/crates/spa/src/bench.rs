//! Built-in benchmark problems with closed-form reference solutions.
//!
//! The closed forms below were derived by elementary antiderivatives of the
//! piecewise dynamics and are cross-checked against fine-mesh integration in
//! the test suite; they serve as independent oracles for the solvers.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::problem::{partition_indices, PhaseDynamics, ProblemDef};
use crate::scalar::Scalar;

type ScheduleMapVec<T> = Arc<dyn Fn(&[T]) -> Vec<T> + Send + Sync>;
type ScheduleMapScalar<T> = Arc<dyn Fn(&[T]) -> T + Send + Sync>;

/// Closed-form maps from a schedule to reference solution data.
#[derive(Clone)]
pub struct ClosedFormReference<T> {
    theta: ScheduleMapVec<T>,
    objective: ScheduleMapScalar<T>,
    gradient: ScheduleMapVec<T>,
    p0: ScheduleMapVec<T>,
    p_terminal: ScheduleMapVec<T>,
}

impl<T: Scalar> ClosedFormReference<T> {
    pub fn theta(&self, s: &[T]) -> Vec<T> {
        (self.theta)(s)
    }

    pub fn objective(&self, s: &[T]) -> T {
        (self.objective)(s)
    }

    pub fn gradient(&self, s: &[T]) -> Vec<T> {
        (self.gradient)(s)
    }

    pub fn p0(&self, s: &[T]) -> Vec<T> {
        (self.p0)(s)
    }

    pub fn p_terminal(&self, s: &[T]) -> Vec<T> {
        (self.p_terminal)(s)
    }
}

/// A registry entry: the problem plus optional closed-form reference.
#[derive(Clone)]
pub struct BenchmarkSpec<T> {
    pub name: String,
    pub problem: ProblemDef<T>,
    pub reference: Option<ClosedFormReference<T>>,
    /// Provenance of the closed forms.
    pub notes: String,
}

/// Reference data evaluated at one schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceValues<T> {
    pub theta: Vec<T>,
    pub objective: T,
    pub gradient: Vec<T>,
    pub p0: Vec<T>,
    pub p_terminal: Vec<T>,
}

/// Names accepted by [`get_benchmark`].
pub fn benchmark_names() -> &'static [&'static str] {
    &[
        "switched-integrator",
        "switched-integrator-ivp",
        "double-integrator-target",
        "lti-nilpotent",
        "stacked-pair",
    ]
}

struct Overrides<'a> {
    name: &'a str,
    params: &'a [(&'a str, f64)],
}

impl<'a> Overrides<'a> {
    fn get(&self, key: &str, default: f64) -> f64 {
        self.params
            .iter()
            .rev()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .unwrap_or(default)
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for (k, _) in self.params {
            if !allowed.contains(k) {
                return Err(Error::InvalidOverride {
                    name: self.name.to_string(),
                    key: (*k).to_string(),
                    reason: format!("supported keys: {}", allowed.join(", ")),
                });
            }
        }
        Ok(())
    }

    fn positive(&self, key: &str, value: f64) -> Result<f64> {
        if value > 0.0 && value.is_finite() {
            Ok(value)
        } else {
            Err(Error::InvalidOverride {
                name: self.name.to_string(),
                key: key.to_string(),
                reason: "must be positive and finite".into(),
            })
        }
    }
}

/// Looks up a benchmark by name, applying parameter overrides.
pub fn get_benchmark<T: Scalar>(name: &str, params: &[(&str, f64)]) -> Result<BenchmarkSpec<T>> {
    let ov = Overrides { name, params };
    match name {
        "switched-integrator" => switched_integrator(&ov, false),
        "switched-integrator-ivp" => switched_integrator(&ov, true),
        "double-integrator-target" => double_integrator_target(&ov),
        "lti-nilpotent" => lti_nilpotent(&ov),
        "stacked-pair" => stacked_pair(&ov),
        _ => Err(Error::UnknownBenchmark(name.to_string())),
    }
}

/// Evaluates a benchmark's closed forms at a schedule.
pub fn reference_values<T: Scalar>(
    spec: &BenchmarkSpec<T>,
    s: &[T],
) -> Result<ReferenceValues<T>> {
    let r = spec
        .reference
        .as_ref()
        .ok_or_else(|| Error::NoReference(spec.name.clone()))?;
    Ok(ReferenceValues {
        theta: r.theta(s),
        objective: r.objective(s),
        gradient: r.gradient(s),
        p0: r.p0(s),
        p_terminal: r.p_terminal(s),
    })
}

/// Two-state system with switched drive: x1' = +/-1, x2' = x1.
///
/// Unknowns and closed forms (u = +1 then -1, switch at s):
///   x1(t) = b1 + t on [0, s], b1 + 2s - t after;
///   C = x1(T) = b1 + 2s - T, so dC/ds = 2;
///   integral of x1 over [0, T] is b1*T + 2sT - s^2 - T^2/2, which gives
///   theta(s) = bE - b1*T - 2sT + s^2 + T^2/2 in the constrained variant;
///   costate: p2' = 0, p1' = -p2, p2(0) = 0, p1(T) = 1, so p = (1, 0).
/// The IVP variant fixes both initial components (E empty) and shares every
/// closed form except theta, which is empty.
fn switched_integrator<T: Scalar>(ov: &Overrides, ivp: bool) -> Result<BenchmarkSpec<T>> {
    if ivp {
        ov.check_keys(&["horizon", "b_i", "x2_0"])?;
    } else {
        ov.check_keys(&["horizon", "b_i", "b_e"])?;
    }
    let horizon = ov.positive("horizon", ov.get("horizon", 2.0))?;
    let b1 = ov.get("b_i", 0.0);
    let t_h = T::from_f64_lossy(horizon);
    let b1_t = T::from_f64_lossy(b1);
    let two = T::from_f64_lossy(2.0);

    let jac = |_x: &[T], _t: T| {
        let mut m = Matrix::zeros(2, 2);
        m.set(1, 0, T::one());
        m
    };
    let phases = vec![
        PhaseDynamics::new(0, |x: &[T], _t| vec![T::one(), x[0]], jac),
        PhaseDynamics::new(1, |x: &[T], _t| vec![-T::one(), x[0]], jac),
    ];
    let objective = |x: &[T]| x[0];
    let objective_gradient = |_x: &[T]| vec![T::one(), T::zero()];

    let obj_ref: ScheduleMapScalar<T> =
        Arc::new(move |s: &[T]| b1_t + two * s[0] - t_h);
    let grad_ref: ScheduleMapVec<T> = Arc::new(move |_s: &[T]| vec![two]);
    let p_ref: ScheduleMapVec<T> = Arc::new(|_s: &[T]| vec![T::one(), T::zero()]);

    let (partition, b_i, b_e, theta_ref, name) = if ivp {
        let x2_0 = ov.get("x2_0", 1.0);
        let theta_ref: ScheduleMapVec<T> = Arc::new(|_s: &[T]| Vec::new());
        (
            partition_indices(&[1, 2], &[], 2)?,
            vec![b1_t, T::from_f64_lossy(x2_0)],
            vec![],
            theta_ref,
            "switched-integrator-ivp",
        )
    } else {
        let b_e = ov.get("b_e", 1.0);
        let b_e_t = T::from_f64_lossy(b_e);
        let theta_ref: ScheduleMapVec<T> = Arc::new(move |s: &[T]| {
            let s0 = s[0];
            vec![b_e_t - b1_t * t_h - two * s0 * t_h + s0 * s0 + t_h * t_h / two]
        });
        (
            partition_indices(&[1], &[2], 2)?,
            vec![b1_t],
            vec![b_e_t],
            theta_ref,
            "switched-integrator",
        )
    };

    Ok(BenchmarkSpec {
        name: name.to_string(),
        problem: ProblemDef::new(
            t_h,
            partition,
            b_i,
            b_e,
            phases,
            objective,
            objective_gradient,
        )?,
        reference: Some(ClosedFormReference {
            theta: theta_ref,
            objective: obj_ref,
            gradient: grad_ref,
            p0: Arc::clone(&p_ref),
            p_terminal: p_ref,
        }),
        notes: "closed forms by elementary antiderivatives of the piecewise-constant drive, \
                cross-checked against fine-mesh integration"
            .to_string(),
    })
}

/// Double integrator with full thrust then full brake: x1' = x2, x2' = +/-1,
/// terminal speed pinned to b_e, objective (x1(T) - target)^2.
///
/// Closed forms: theta(s) = b_e + T - 2s; x1(T) = b1 + b_e*T + T^2/2 - s^2;
/// dC/ds = -4s (x1(T) - target); costate p = (c, -c t) with
/// c = 2 (x1(T) - target).
fn double_integrator_target<T: Scalar>(ov: &Overrides) -> Result<BenchmarkSpec<T>> {
    ov.check_keys(&["horizon", "b_i", "b_e", "target"])?;
    let horizon = ov.positive("horizon", ov.get("horizon", 2.0))?;
    let b1 = ov.get("b_i", 0.0);
    let b_e = ov.get("b_e", 0.0);
    let target = ov.get("target", 1.0);
    let t_h = T::from_f64_lossy(horizon);
    let b1_t = T::from_f64_lossy(b1);
    let b_e_t = T::from_f64_lossy(b_e);
    let target_t = T::from_f64_lossy(target);
    let two = T::from_f64_lossy(2.0);
    let four = T::from_f64_lossy(4.0);

    let jac = |_x: &[T], _t: T| {
        let mut m = Matrix::zeros(2, 2);
        m.set(0, 1, T::one());
        m
    };
    let phases = vec![
        PhaseDynamics::new(0, |x: &[T], _t| vec![x[1], T::one()], jac),
        PhaseDynamics::new(1, |x: &[T], _t| vec![x[1], -T::one()], jac),
    ];
    let objective = move |x: &[T]| (x[0] - target_t) * (x[0] - target_t);
    let objective_gradient =
        move |x: &[T]| vec![two * (x[0] - target_t), T::zero()];

    let x1_terminal = move |s0: T| b1_t + b_e_t * t_h + t_h * t_h / two - s0 * s0;
    let theta_ref: ScheduleMapVec<T> =
        Arc::new(move |s: &[T]| vec![b_e_t + t_h - two * s[0]]);
    let obj_ref: ScheduleMapScalar<T> = Arc::new(move |s: &[T]| {
        let d = x1_terminal(s[0]) - target_t;
        d * d
    });
    let grad_ref: ScheduleMapVec<T> =
        Arc::new(move |s: &[T]| vec![-four * s[0] * (x1_terminal(s[0]) - target_t)]);
    let p0_ref: ScheduleMapVec<T> =
        Arc::new(move |s: &[T]| vec![two * (x1_terminal(s[0]) - target_t), T::zero()]);
    let p_terminal_ref: ScheduleMapVec<T> = Arc::new(move |s: &[T]| {
        let c = two * (x1_terminal(s[0]) - target_t);
        vec![c, -c * t_h]
    });

    Ok(BenchmarkSpec {
        name: "double-integrator-target".to_string(),
        problem: ProblemDef::new(
            t_h,
            partition_indices(&[1], &[2], 2)?,
            vec![b1_t],
            vec![b_e_t],
            phases,
            objective,
            objective_gradient,
        )?,
        reference: Some(ClosedFormReference {
            theta: theta_ref,
            objective: obj_ref,
            gradient: grad_ref,
            p0: p0_ref,
            p_terminal: p_terminal_ref,
        }),
        notes: "closed forms by elementary integration of the piecewise-linear velocity, \
                cross-checked against fine-mesh integration and finite differences"
            .to_string(),
    })
}

/// Single-phase linear system x' = A x with nilpotent A = [[0,1],[0,0]]:
/// Phi(t) = I + A t and Psi(t) = I - A^T t exactly.
fn lti_nilpotent<T: Scalar>(ov: &Overrides) -> Result<BenchmarkSpec<T>> {
    ov.check_keys(&["horizon", "b_i", "b_e"])?;
    let horizon = ov.positive("horizon", ov.get("horizon", 2.0))?;
    let b1 = ov.get("b_i", 0.0);
    let b_e = ov.get("b_e", 1.0);
    let t_h = T::from_f64_lossy(horizon);
    let b1_t = T::from_f64_lossy(b1);
    let b_e_t = T::from_f64_lossy(b_e);

    let jac = |_x: &[T], _t: T| {
        let mut m = Matrix::zeros(2, 2);
        m.set(0, 1, T::one());
        m
    };
    let phases = vec![PhaseDynamics::new(
        0,
        |x: &[T], _t| vec![x[1], T::zero()],
        jac,
    )];

    let theta_ref: ScheduleMapVec<T> = Arc::new(move |_s: &[T]| vec![b_e_t]);
    let obj_ref: ScheduleMapScalar<T> = Arc::new(move |_s: &[T]| b1_t + b_e_t * t_h);
    let grad_ref: ScheduleMapVec<T> = Arc::new(|_s: &[T]| Vec::new());
    let p0_ref: ScheduleMapVec<T> = Arc::new(|_s: &[T]| vec![T::one(), T::zero()]);
    let p_terminal_ref: ScheduleMapVec<T> = Arc::new(move |_s: &[T]| vec![T::one(), -t_h]);

    Ok(BenchmarkSpec {
        name: "lti-nilpotent".to_string(),
        problem: ProblemDef::new(
            t_h,
            partition_indices(&[1], &[2], 2)?,
            vec![b1_t],
            vec![b_e_t],
            phases,
            |x: &[T]| x[0],
            |_x: &[T]| vec![T::one(), T::zero()],
        )?,
        reference: Some(ClosedFormReference {
            theta: theta_ref,
            objective: obj_ref,
            gradient: grad_ref,
            p0: p0_ref,
            p_terminal: p_terminal_ref,
        }),
        notes: "transition matrices from the nilpotent matrix exponential e^{At} = I + At, \
                cross-checked against a scaling-and-squaring exponential oracle"
            .to_string(),
    })
}

/// Four-state problem stacking a driven pendulum (w1, w2) with its linearized
/// adjoint pair (w3, w4) as one generalized state:
///   w1' = w2, w2' = -sin w1 +/- 1, w3' = w4 cos w1, w4' = -w3.
/// The (w3, w4) block is fixed at T and unknown at 0, exercising shooting on
/// a genuinely nonlinear trajectory. No closed-form reference; validated by
/// the finite-difference oracle.
fn stacked_pair<T: Scalar>(ov: &Overrides) -> Result<BenchmarkSpec<T>> {
    ov.check_keys(&["horizon"])?;
    let horizon = ov.positive("horizon", ov.get("horizon", 2.0))?;
    let t_h = T::from_f64_lossy(horizon);
    let two = T::from_f64_lossy(2.0);

    let eval = |drive: T| {
        move |x: &[T], _t: T| {
            vec![
                x[1],
                -x[0].sin() + drive,
                x[3] * x[0].cos(),
                -x[2],
            ]
        }
    };
    let jac = |x: &[T], _t: T| {
        let mut m = Matrix::zeros(4, 4);
        m.set(0, 1, T::one());
        m.set(1, 0, -x[0].cos());
        m.set(2, 0, -x[3] * x[0].sin());
        m.set(2, 3, x[0].cos());
        m.set(3, 2, -T::one());
        m
    };
    let phases = vec![
        PhaseDynamics::new(0, eval(T::one()), jac),
        PhaseDynamics::new(1, eval(-T::one()), jac),
    ];

    Ok(BenchmarkSpec {
        name: "stacked-pair".to_string(),
        problem: ProblemDef::new(
            t_h,
            partition_indices(&[1, 2], &[3, 4], 4)?,
            vec![T::from_f64_lossy(0.2), T::zero()],
            vec![T::from_f64_lossy(0.05), T::from_f64_lossy(-0.05)],
            phases,
            move |x: &[T]| x[0] * x[0] + x[1] * x[1],
            move |x: &[T]| vec![two * x[0], two * x[1], T::zero(), T::zero()],
        )?,
        reference: None,
        notes: "no closed form; gradient validated against the finite-difference oracle"
            .to_string(),
    })
}
