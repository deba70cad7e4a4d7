//! SQP solver with a structured primal-dual interior-point QP solver.
//!
//! Residual conventions, shared with the sensitivity module: with the
//! Lagrangian
//!
//! `L = costs + chi_0^T (s - x_0) + sum_k chi_{k+1}^T (f(x_k, u_k) - x_{k+1})
//!      + zeta^T (u_0 - a) + sum_k lam_k^T c_k(z_k)`
//!
//! the residual holds `grad_z L` on the primal offsets, `s - x_0` and
//! `f(x_{k-1}, u_{k-1}) - x_k` on the `chi` offsets, `c_k + t_k` on the `lam`
//! offsets, `lam_k * t_k - tau` on the `t` offsets and `u_0 - a` on the
//! `zeta` offset.

mod ip;
mod kkt;
mod linearize;
mod riccati;
mod sqp;

pub use ip::ip_solve_qp;
pub use kkt::{KktBlocks, StageBlocks};
pub use linearize::{kkt_residual, QpModel};
pub use riccati::{factorization_count, RiccatiFactorization};
pub use sqp::{exact_hessian, sqp_solve};

pub(crate) use linearize::{linearize, LinearizeOptions, ThetaLevel};

use crate::{Error, Mode, PrimalDualPoint, Real, Result};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Which Hessian of the Lagrangian the QP subproblems use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HessianMode {
    /// Full second derivatives of costs and multiplier-weighted constraints.
    #[default]
    Exact,
    /// Cost curvature only; dynamics and constraint curvature is dropped.
    GaussNewton,
    /// Exact stage blocks with eigenvalues lifted to at least `reg_eps`.
    Regularized,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub kkt_tol: f64,
    pub tau_min: f64,
    pub tau_decrease: f64,
    pub max_ip_iters: usize,
    pub max_sqp_iters: usize,
    pub hessian_mode: HessianMode,
    pub reg_eps: f64,
    pub fraction_to_boundary: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            kkt_tol: 1e-8,
            tau_min: 1e-8,
            tau_decrease: 0.2,
            max_ip_iters: 100,
            max_sqp_iters: 50,
            hessian_mode: HessianMode::Exact,
            reg_eps: 1e-8,
            fraction_to_boundary: 0.995,
        }
    }
}

impl SolverSettings {
    pub fn check(&self) -> Result<()> {
        let ok = self.tau_decrease > 0.0
            && self.tau_decrease < 1.0
            && self.kkt_tol > 0.0
            && self.tau_min > 0.0
            && self.reg_eps > 0.0
            && self.fraction_to_boundary > 0.0
            && self.fraction_to_boundary < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("solver settings {self:?}")))
        }
    }

    pub(crate) fn get<T: Real>(&self) -> Tolerances<T> {
        Tolerances {
            kkt_tol: T::of(self.kkt_tol),
            tau_min: T::of(self.tau_min),
            tau_decrease: T::of(self.tau_decrease),
            reg_eps: T::of(self.reg_eps),
            ftb: T::of(self.fraction_to_boundary),
        }
    }
}

pub(crate) struct Tolerances<T> {
    pub kkt_tol: T,
    pub tau_min: T,
    pub tau_decrease: T,
    pub reg_eps: T,
    pub ftb: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIters,
    QpFailure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveInfo {
    pub status: SolveStatus,
    pub sqp_iters: usize,
    pub ip_iters_total: usize,
    pub final_kkt_residual: f64,
    pub final_tau: f64,
    pub objective_value: f64,
}

impl SolveInfo {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

/// A solver result together with the problem data it was computed for.
#[derive(Clone, Debug)]
pub struct Solution<T: Real> {
    pub point: PrimalDualPoint<T>,
    pub info: SolveInfo,
    pub s: DVector<T>,
    pub a: Option<DVector<T>>,
}

impl<T: Real> Solution<T> {
    pub fn mode(&self) -> Mode {
        self.point.mode()
    }

    /// First input of the solution.
    pub fn u0(&self) -> &DVector<T> {
        &self.point.u[0]
    }

    /// Optimal objective value.
    pub fn value(&self) -> T {
        T::of(self.info.objective_value)
    }

    pub fn require_converged(&self) -> Result<()> {
        if self.info.converged() {
            Ok(())
        } else {
            Err(Error::NotConverged(format!(
                "solution status {:?}, residual {:e}",
                self.info.status, self.info.final_kkt_residual
            )))
        }
    }
}
