//! Parametric model predictive control as a differentiable function
//! approximator.
//!
//! The crate solves optimal control problems whose costs, dynamics and
//! constraints depend on a parameter vector `theta`, differentiates the
//! solutions with respect to `theta`, and uses those derivatives to tune the
//! controller with Q-learning.

// `!(x <= tol)` is used deliberately so that NaN counts as a failure.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod error;
mod scalar;

pub mod ad;
pub mod agent;
pub mod bench;
pub mod checks;
pub mod envs;
pub mod models;
pub mod ocp;
pub mod rl;
pub mod sensitivity;
pub mod solver;
pub mod testing;

pub use agent::MpcAgent;
pub use error::{Error, Result};
pub use ocp::{
    validate, Dims, Mismatch, Mode, OcpBuilder, PackedLayout, PackedVector, ParametricOcp, PrimalDualPoint,
    StageOffsets, ThetaRegistry, ValidationReport, ZeroFunction,
};
pub use scalar::Real;

/// Double-precision problem.
pub type Ocp = ParametricOcp<f64>;
/// Double-precision primal-dual point.
pub type Point = PrimalDualPoint<f64>;
/// Double-precision agent.
pub type Agent = MpcAgent<f64>;
pub use sensitivity::{
    fd_policy_gradient, grad_q_theta, grad_v_theta, kkt_jacobians, lagrangian, policy_gradient, sensitivities,
    solution_sensitivity, KktJacobians, SensitivityBundle, SensitivityMethod,
};
pub use solver::{
    ip_solve_qp, kkt_residual, sqp_solve, HessianMode, KktBlocks, QpModel, RiccatiFactorization, Solution, SolveInfo,
    SolveStatus, SolverSettings, StageBlocks,
};
