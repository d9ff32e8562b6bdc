//! Switch-aligned fixed-step RK4 integration of the state and of the
//! fundamental matrices.
//!
//! The mesh contains every switch time as an exact node, so each RK4 step
//! sees a single smooth phase; the discontinuity in the vector field is never
//! stepped across. Both fundamental matrices run forward from the identity on
//! the same mesh: Phi solves M' = A(t) M and Psi solves M' = -A(t)^T M, with
//! A(t) the state Jacobian of the active phase along the stored trajectory.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::problem::{ProblemDef, SwitchSchedule};
use crate::scalar::Scalar;

/// Default mesh resolution: steps per unit time.
pub const DEFAULT_STEPS_PER_UNIT: usize = 200;

/// Time grid containing 0, T, and every switch time, with the active phase
/// recorded per interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh<T> {
    nodes: Vec<T>,
    phase_of_interval: Vec<usize>,
    switch_nodes: Vec<usize>,
}

impl<T: Scalar> Mesh<T> {
    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Phase active on `(nodes[k], nodes[k+1])`.
    pub fn phase_of_interval(&self, k: usize) -> usize {
        self.phase_of_interval[k]
    }

    /// Node indices of the interior switch times, in schedule order.
    pub fn switch_nodes(&self) -> &[usize] {
        &self.switch_nodes
    }

    /// Index of the node holding exactly time `t`.
    pub fn node_at(&self, t: T) -> Result<usize> {
        let pos = self.nodes.partition_point(|&n| n < t);
        if pos < self.nodes.len() && self.nodes[pos] == t {
            Ok(pos)
        } else {
            Err(Error::NotANode {
                time: t.to_f64_lossy(),
            })
        }
    }
}

/// Builds the switch-aligned mesh: each phase band `(s_i, s_{i+1})` is split
/// into `ceil(steps_per_unit * length)` uniform steps, and band endpoints are
/// pushed bit-exactly.
pub fn build_mesh<T: Scalar>(
    horizon: T,
    schedule: &SwitchSchedule<T>,
    steps_per_unit: usize,
) -> Result<Mesh<T>> {
    if steps_per_unit == 0 {
        return Err(Error::InvalidSchedule("steps_per_unit must be >= 1".into()));
    }
    let mut band_edges = Vec::with_capacity(schedule.len() + 2);
    band_edges.push(T::zero());
    band_edges.extend_from_slice(schedule.times());
    band_edges.push(horizon);

    let mut nodes = vec![T::zero()];
    let mut phase_of_interval = Vec::new();
    let mut switch_nodes = Vec::with_capacity(schedule.len());
    for (phase, window) in band_edges.windows(2).enumerate() {
        let (a, b) = (window[0], window[1]);
        if !(b > a) {
            return Err(Error::InvalidSchedule(format!(
                "band ({}, {}) is empty or reversed",
                a, b
            )));
        }
        let len = (b - a).to_f64_lossy();
        let steps = ((steps_per_unit as f64 * len).ceil() as usize).max(1);
        let width = b - a;
        for k in 1..steps {
            nodes.push(a + width * T::from_usize_lossy(k) / T::from_usize_lossy(steps));
        }
        nodes.push(b);
        phase_of_interval.extend(std::iter::repeat_n(phase, steps));
        if phase < schedule.len() {
            switch_nodes.push(nodes.len() - 1);
        }
    }
    debug_assert!(nodes.windows(2).all(|w| w[0] < w[1]));
    Ok(Mesh {
        nodes,
        phase_of_interval,
        switch_nodes,
    })
}

/// State samples on a mesh, together with the unknown initial block used.
#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    mesh: Mesh<T>,
    values: Vec<Vec<T>>,
    theta: Vec<T>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn mesh(&self) -> &Mesh<T> {
        &self.mesh
    }

    pub fn values(&self) -> &[Vec<T>] {
        &self.values
    }

    pub fn value(&self, node: usize) -> &[T] {
        &self.values[node]
    }

    pub fn initial(&self) -> &[T] {
        &self.values[0]
    }

    pub fn terminal(&self) -> &[T] {
        self.values.last().expect("trajectory has at least one node")
    }

    /// The unknown initial components `x_J(0)` this trajectory was built with.
    pub fn theta(&self) -> &[T] {
        &self.theta
    }
}

fn axpy<T: Scalar>(x: &[T], y: &[T], a: T) -> Vec<T> {
    x.iter().zip(y.iter()).map(|(xi, yi)| *xi + a * *yi).collect()
}

/// One classic RK4 step of the state under a single phase.
fn rk4_state_step<T: Scalar>(
    f: &dyn Fn(&[T], T) -> Vec<T>,
    x: &[T],
    t0: T,
    h: T,
) -> Vec<T> {
    let two = T::from_f64_lossy(2.0);
    let six = T::from_f64_lossy(6.0);
    let half_h = h / two;
    let t_mid = t0 + half_h;
    let k1 = f(x, t0);
    let k2 = f(&axpy(x, &k1, half_h), t_mid);
    let k3 = f(&axpy(x, &k2, half_h), t_mid);
    let k4 = f(&axpy(x, &k3, h), t0 + h);
    let mut out = x.to_vec();
    for i in 0..x.len() {
        out[i] = out[i] + h / six * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);
    }
    out
}

/// Integrates the state ODE with RK4 on the switch-aligned mesh.
///
/// The initial state copies `b_I` bit-exactly into the I components and
/// `theta` into the J components; each mesh interval advances one RK4 step
/// under its phase dynamics.
pub fn integrate_state<T: Scalar>(
    p: &ProblemDef<T>,
    schedule: &SwitchSchedule<T>,
    theta: &[T],
    steps_per_unit: usize,
) -> Result<Trajectory<T>> {
    if schedule.len() != p.num_switches() {
        return Err(Error::DimensionMismatch(format!(
            "schedule has {} switch times but the problem has {} phases",
            schedule.len(),
            p.num_phases()
        )));
    }
    let j0 = p.partition().j0();
    if theta.len() != j0.len() {
        return Err(Error::DimensionMismatch(format!(
            "theta has {} entries but |J| = {}",
            theta.len(),
            j0.len()
        )));
    }
    let mesh = build_mesh(p.horizon(), schedule, steps_per_unit)?;

    let mut x0 = vec![T::zero(); p.dim()];
    for (slot, &idx) in p.partition().i0().iter().enumerate() {
        x0[idx] = p.b_i()[slot];
    }
    for (slot, &idx) in j0.iter().enumerate() {
        x0[idx] = theta[slot];
    }

    let mut values = Vec::with_capacity(mesh.num_nodes());
    values.push(x0);
    for k in 0..mesh.num_intervals() {
        let t0 = mesh.nodes[k];
        let h = mesh.nodes[k + 1] - t0;
        let phase = p.phase(mesh.phase_of_interval(k));
        let next = rk4_state_step(&|x: &[T], t: T| phase.eval(x, t), &values[k], t0, h);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState {
                node: k + 1,
                time: mesh.nodes[k + 1].to_f64_lossy(),
            });
        }
        values.push(next);
    }

    Ok(Trajectory {
        mesh,
        values,
        theta: theta.to_vec(),
    })
}

/// Which fundamental matrix a [`MatrixTrajectory`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    /// State transition matrix: M' = A(t) M, M(0) = I.
    Phi,
    /// Adjoint transition matrix: M' = -A(t)^T M, M(0) = I.
    Psi,
}

/// Fundamental matrix sampled at every mesh node.
#[derive(Debug, Clone)]
pub struct MatrixTrajectory<T> {
    mesh: Mesh<T>,
    matrices: Vec<Matrix<T>>,
    kind: MatrixKind,
}

impl<T: Scalar> MatrixTrajectory<T> {
    pub fn mesh(&self) -> &Mesh<T> {
        &self.mesh
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn at(&self, node: usize) -> &Matrix<T> {
        &self.matrices[node]
    }

    pub fn terminal(&self) -> &Matrix<T> {
        self.matrices.last().expect("matrix trajectory is non-empty")
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }
}

/// Shared RK4 driver for both fundamental matrices.
///
/// Stage values of the state at step midpoints come from the cubic Hermite
/// interpolant x_mid = (x0 + x1)/2 + h/8 (f0 - f1), which keeps the stage
/// error at the same O(h^4) order as the state integration itself.
fn integrate_fundamental<T: Scalar>(
    p: &ProblemDef<T>,
    traj: &Trajectory<T>,
    kind: MatrixKind,
) -> Result<MatrixTrajectory<T>> {
    let n = p.dim();
    let mesh = traj.mesh().clone();
    let two = T::from_f64_lossy(2.0);
    let six = T::from_f64_lossy(6.0);
    let eighth = T::from_f64_lossy(0.125);

    let coefficient = |phase_idx: usize, x: &[T], t: T| -> Matrix<T> {
        let a = p.phase(phase_idx).jacobian(x, t);
        match kind {
            MatrixKind::Phi => a,
            MatrixKind::Psi => {
                let at = a.transpose();
                Matrix::zeros(n, n).add_scaled(&at, -T::one())
            }
        }
    };

    let mut matrices = Vec::with_capacity(mesh.num_nodes());
    matrices.push(Matrix::identity(n));
    for k in 0..mesh.num_intervals() {
        let t0 = mesh.nodes[k];
        let t1 = mesh.nodes[k + 1];
        let h = t1 - t0;
        let t_mid = t0 + h / two;
        let phase_idx = mesh.phase_of_interval(k);
        let phase = p.phase(phase_idx);
        let x0 = traj.value(k);
        let x1 = traj.value(k + 1);
        let f0 = phase.eval(x0, t0);
        let f1 = phase.eval(x1, t1);
        let x_mid: Vec<T> = (0..n)
            .map(|i| (x0[i] + x1[i]) / two + h * eighth * (f0[i] - f1[i]))
            .collect();

        let a0 = coefficient(phase_idx, x0, t0);
        let a_mid = coefficient(phase_idx, &x_mid, t_mid);
        let a1 = coefficient(phase_idx, x1, t1);

        let m = &matrices[k];
        let k1 = a0.matmul(m);
        let k2 = a_mid.matmul(&m.add_scaled(&k1, h / two));
        let k3 = a_mid.matmul(&m.add_scaled(&k2, h / two));
        let k4 = a1.matmul(&m.add_scaled(&k3, h));
        let increment = k1
            .add_scaled(&k2, two)
            .add_scaled(&k3, two)
            .add_scaled(&k4, T::one());
        let next = m.add_scaled(&increment, h / six);
        if !next.is_finite() {
            return Err(Error::NonFiniteMatrix {
                node: k + 1,
                time: t1.to_f64_lossy(),
            });
        }
        matrices.push(next);
    }

    Ok(MatrixTrajectory {
        mesh,
        matrices,
        kind,
    })
}

/// Integrates the state transition matrix Phi along `traj` (Phi(0) = I).
pub fn integrate_phi<T: Scalar>(
    p: &ProblemDef<T>,
    traj: &Trajectory<T>,
) -> Result<MatrixTrajectory<T>> {
    integrate_fundamental(p, traj, MatrixKind::Phi)
}

/// Integrates the adjoint transition matrix Psi along `traj` (Psi(0) = I).
pub fn integrate_psi<T: Scalar>(
    p: &ProblemDef<T>,
    traj: &Trajectory<T>,
) -> Result<MatrixTrajectory<T>> {
    integrate_fundamental(p, traj, MatrixKind::Psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::get_benchmark;
    use crate::problem::{partition_indices, PhaseDynamics};
    use approx::assert_relative_eq;

    fn schedule(times: Vec<f64>, horizon: f64) -> SwitchSchedule<f64> {
        SwitchSchedule::new(times, horizon, 1e-8 * horizon).unwrap()
    }

    #[test]
    fn mesh_uniform_when_no_switches() {
        let m = build_mesh(1.0, &SwitchSchedule::empty(), 4).unwrap();
        assert_eq!(m.nodes(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!((0..m.num_intervals()).all(|k| m.phase_of_interval(k) == 0));
        assert!(m.switch_nodes().is_empty());
    }

    #[test]
    fn mesh_contains_switch_time_exactly() {
        let m = build_mesh(2.0, &schedule(vec![0.5], 2.0), 2).unwrap();
        let sw = m.switch_nodes()[0];
        assert_eq!(m.nodes()[sw], 0.5);
        for k in 0..m.num_intervals() {
            let expect = if m.nodes()[k] < 0.5 { 0 } else { 1 };
            assert_eq!(m.phase_of_interval(k), expect);
        }
        assert_eq!(m.node_at(0.5).unwrap(), sw);
        assert!(m.node_at(0.51).is_err());
    }

    #[test]
    fn mesh_three_phase_bands() {
        let m = build_mesh(1.0, &schedule(vec![0.3, 0.7], 1.0), 10).unwrap();
        assert_eq!(m.switch_nodes().len(), 2);
        assert_eq!(m.nodes()[m.switch_nodes()[0]], 0.3);
        assert_eq!(m.nodes()[m.switch_nodes()[1]], 0.7);
        let phases: Vec<usize> = (0..m.num_intervals()).map(|k| m.phase_of_interval(k)).collect();
        let mut bands = phases.clone();
        bands.dedup();
        assert_eq!(bands, vec![0, 1, 2]);
    }

    #[test]
    fn switched_integrator_hits_closed_form() {
        let spec = get_benchmark::<f64>("switched-integrator", &[]).unwrap();
        let traj =
            integrate_state(&spec.problem, &schedule(vec![1.0], 2.0), &[0.0], 200).unwrap();
        let terminal = traj.terminal();
        assert_relative_eq!(terminal[0], 0.0, epsilon = 1e-10);
        assert_relative_eq!(terminal[1], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn zero_dynamics_is_constant() {
        let partition = partition_indices(&[1, 2], &[], 2).unwrap();
        let p = ProblemDef::new(
            1.0,
            partition,
            vec![0.3, -0.7],
            vec![],
            vec![PhaseDynamics::new(
                0,
                |_x: &[f64], _t| vec![0.0, 0.0],
                |_x: &[f64], _t| Matrix::zeros(2, 2),
            )],
            |x: &[f64]| x[0],
            |_x: &[f64]| vec![1.0, 0.0],
        )
        .unwrap();
        let traj = integrate_state(&p, &SwitchSchedule::empty(), &[], 50).unwrap();
        for v in traj.values() {
            assert_eq!(v, &vec![0.3, -0.7]);
        }
        let phi = integrate_phi(&p, &traj).unwrap();
        let psi = integrate_psi(&p, &traj).unwrap();
        for k in 0..phi.len() {
            assert_eq!(phi.at(k), &Matrix::identity(2));
            assert_eq!(psi.at(k), &Matrix::identity(2));
        }
    }

    #[test]
    fn double_integrator_hits_closed_form() {
        let spec = get_benchmark::<f64>("double-integrator-target", &[]).unwrap();
        let traj =
            integrate_state(&spec.problem, &schedule(vec![0.5], 2.0), &[1.0], 200).unwrap();
        let terminal = traj.terminal();
        assert_relative_eq!(terminal[1], 0.0, epsilon = 1e-10);
        assert_relative_eq!(terminal[0], 1.75, epsilon = 1e-10);
    }

    #[test]
    fn initial_constrained_block_is_copied_bit_exactly() {
        let spec = get_benchmark::<f64>("switched-integrator", &[("b_i", 0.1 + 0.2)]).unwrap();
        let traj =
            integrate_state(&spec.problem, &schedule(vec![1.0], 2.0), &[2.5], 200).unwrap();
        assert_eq!(traj.initial()[0], 0.1 + 0.2);
        assert_eq!(traj.initial()[1], 2.5);
        assert_eq!(traj.theta(), &[2.5]);
    }

    #[test]
    fn nilpotent_phi_matches_closed_form() {
        let spec = get_benchmark::<f64>("lti-nilpotent", &[]).unwrap();
        let traj = integrate_state(&spec.problem, &SwitchSchedule::empty(), &[1.0], 200).unwrap();
        let phi = integrate_phi(&spec.problem, &traj).unwrap();
        let end = phi.terminal();
        let t = spec.problem.horizon();
        for (got, want) in end.as_slice().iter().zip([1.0, t, 0.0, 1.0]) {
            assert_relative_eq!(*got, want, epsilon = 1e-10);
        }
    }

    #[test]
    fn switched_integrator_phi_is_lower_unitriangular_in_t() {
        let spec = get_benchmark::<f64>("switched-integrator", &[]).unwrap();
        let traj =
            integrate_state(&spec.problem, &schedule(vec![1.0], 2.0), &[0.0], 200).unwrap();
        let phi = integrate_phi(&spec.problem, &traj).unwrap();
        for (k, &t) in traj.mesh().nodes().iter().enumerate() {
            let m = phi.at(k);
            for (got, want) in m.as_slice().iter().zip([1.0, 0.0, t, 1.0]) {
                assert_relative_eq!(*got, want, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn double_integrator_psi_matches_closed_form() {
        let spec = get_benchmark::<f64>("double-integrator-target", &[]).unwrap();
        let traj =
            integrate_state(&spec.problem, &schedule(vec![0.5], 2.0), &[1.0], 200).unwrap();
        let psi = integrate_psi(&spec.problem, &traj).unwrap();
        for (k, &t) in traj.mesh().nodes().iter().enumerate() {
            let m = psi.at(k);
            for (got, want) in m.as_slice().iter().zip([1.0, 0.0, -t, 1.0]) {
                assert_relative_eq!(*got, want, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn psi_transpose_phi_is_identity_on_nonlinear_problem() {
        let spec = get_benchmark::<f64>("stacked-pair", &[]).unwrap();
        let traj =
            integrate_state(&spec.problem, &schedule(vec![1.0], 2.0), &[0.2, -0.1], 200).unwrap();
        let phi = integrate_phi(&spec.problem, &traj).unwrap();
        let psi = integrate_psi(&spec.problem, &traj).unwrap();
        let eye = Matrix::identity(4);
        for k in 0..phi.len() {
            let product = psi.at(k).transpose().matmul(phi.at(k));
            let diff = product.add_scaled(&eye, -1.0);
            assert!(diff.norm_inf() < 1e-8, "node {}: {:?}", k, product);
        }
    }
}
