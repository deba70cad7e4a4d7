//! Simulated plants behind a small episodic interface.

mod chain;
mod lti;

pub use chain::{ChainMassConfig, ChainMassEnv, ChainMassModel};
pub use lti::{LtiEnv, LtiEnvConfig};

use nalgebra::DVector;

/// Result of one environment step.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub state: DVector<f64>,
    pub cost: f64,
    /// Number of state bounds violated by `state`.
    pub violations: usize,
}

/// Episodic environment `s+ = F(s, a, w)` with a seeded disturbance stream.
pub trait Environment {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Restarts the disturbance stream from `seed`.
    fn seed(&mut self, seed: u64);
    /// Sets the state to `s0`, reseeding first if `seed` is given.
    fn reset(&mut self, s0: &DVector<f64>, seed: Option<u64>) -> DVector<f64>;
    fn state(&self) -> &DVector<f64>;
    fn step(&mut self, a: &DVector<f64>) -> Step;
}
