//! Costate boundary-value problem.
//!
//! The costate row vector solves p' = -p A(t) with p_J(0) = 0 and
//! p_F(T) = grad_F C(x(T)). Because the equation is linear, the whole
//! trajectory is p(t)^T = Psi(t) p(0)^T once the unknown I-block of p(0) is
//! found from the |F| x |I| terminal system Psi_FI(T) p_I(0)^T = grad_F C^T.

use crate::error::{Error, Result};
use crate::integrator::{MatrixKind, MatrixTrajectory, Mesh, Trajectory};
use crate::linalg::{cond_one, vec_norm_inf, Lu};
use crate::problem::ProblemDef;
use crate::scalar::Scalar;

/// Terminal boundary tolerance at default mesh resolution.
pub const DEFAULT_TOL_COSTATE: f64 = 1e-9;

/// Condition-estimate ceiling for the costate boundary matrix.
const COND_LIMIT: f64 = 1e12;

/// Costate samples on the state mesh.
#[derive(Debug, Clone)]
pub struct CostateTrajectory<T> {
    mesh: Mesh<T>,
    values: Vec<Vec<T>>,
    p0: Vec<T>,
    terminal_gradient: Vec<T>,
    f0: Vec<usize>,
}

impl<T: Scalar> CostateTrajectory<T> {
    pub fn mesh(&self) -> &Mesh<T> {
        &self.mesh
    }

    pub fn values(&self) -> &[Vec<T>] {
        &self.values
    }

    pub fn value(&self, node: usize) -> &[T] {
        &self.values[node]
    }

    /// p(0); its J components are exactly zero by construction.
    pub fn p0(&self) -> &[T] {
        &self.p0
    }

    pub fn terminal(&self) -> &[T] {
        self.values.last().expect("costate trajectory is non-empty")
    }

    /// The terminal gradient block grad_F C(x(T)) the solve targeted.
    pub fn terminal_gradient(&self) -> &[T] {
        &self.terminal_gradient
    }

    /// Infinity norm of p_F(T) - grad_F C(x(T)): the achieved terminal
    /// boundary error.
    pub fn terminal_mismatch(&self) -> T {
        let p_t = self.terminal();
        let diff: Vec<T> = self
            .f0
            .iter()
            .zip(self.terminal_gradient.iter())
            .map(|(&idx, g)| p_t[idx] - *g)
            .collect();
        vec_norm_inf(&diff)
    }
}

/// Solves the costate boundary-value problem along `traj` using the adjoint
/// transition matrix `psi` (both on the same mesh).
pub fn solve_costate<T: Scalar>(
    p: &ProblemDef<T>,
    traj: &Trajectory<T>,
    psi: &MatrixTrajectory<T>,
) -> Result<CostateTrajectory<T>> {
    if psi.kind() != MatrixKind::Psi {
        return Err(Error::DimensionMismatch(
            "solve_costate needs the adjoint transition matrix (Psi)".into(),
        ));
    }
    if psi.mesh() != traj.mesh() {
        return Err(Error::DimensionMismatch(
            "state and Psi trajectories live on different meshes".into(),
        ));
    }
    let n = p.dim();
    let i0 = p.partition().i0();
    let f0 = p.partition().f0();
    let grad_full = p.objective_gradient(traj.terminal());
    if grad_full.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "objective gradient has {} components, expected {}",
            grad_full.len(),
            n
        )));
    }
    let terminal_gradient: Vec<T> = f0.iter().map(|&idx| grad_full[idx]).collect();

    // p(0)^T is supported on I; its block solves Psi_FI(T) p_I(0)^T = grad_F C^T.
    let mut p0 = vec![T::zero(); n];
    if !i0.is_empty() {
        let psi_fi = psi.terminal().submatrix(&f0, &i0);
        let cond = cond_one(&psi_fi);
        if cond > COND_LIMIT {
            return Err(Error::SingularCostateMatrix { cond });
        }
        let p_i0 = Lu::new(&psi_fi).solve(&terminal_gradient).map_err(|_| {
            Error::SingularCostateMatrix { cond: f64::INFINITY }
        })?;
        for (slot, &idx) in i0.iter().enumerate() {
            p0[idx] = p_i0[slot];
        }
    }

    let values: Vec<Vec<T>> = (0..psi.len()).map(|k| psi.at(k).matvec(&p0)).collect();

    Ok(CostateTrajectory {
        mesh: traj.mesh().clone(),
        values,
        p0,
        terminal_gradient,
        f0,
    })
}

/// Exact stored costate value at a mesh node time; no interpolation.
pub fn costate_at<T: Scalar>(ct: &CostateTrajectory<T>, t: T) -> Result<&[T]> {
    let node = ct.mesh.node_at(t)?;
    Ok(&ct.values[node])
}
