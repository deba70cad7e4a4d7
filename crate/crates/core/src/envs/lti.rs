use super::{Environment, Step};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// True plant of the linear example. It differs from the controller's model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LtiEnvConfig {
    /// Row-major.
    pub a: [f64; 4],
    pub b: [f64; 2],
    /// Uniform disturbance range on the first state.
    pub disturbance: (f64, f64),
    pub x_lower: [f64; 2],
    pub x_upper: [f64; 2],
    /// Penalty per unit of bound violation.
    pub w: [f64; 2],
    pub u_bound: f64,
}

impl Default for LtiEnvConfig {
    fn default() -> Self {
        Self {
            a: [0.9, 0.35, 0.0, 1.1],
            b: [0.0813, 0.2],
            disturbance: (-0.1, 0.0),
            x_lower: [0.0, -1.0],
            x_upper: [1.0, 1.0],
            w: [100.0, 100.0],
            u_bound: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LtiEnv {
    cfg: LtiEnvConfig,
    a: DMatrix<f64>,
    b: DVector<f64>,
    rng: ChaCha8Rng,
    state: DVector<f64>,
}

impl LtiEnv {
    pub fn new(cfg: LtiEnvConfig, seed: u64) -> Self {
        Self {
            a: DMatrix::from_row_slice(2, 2, &cfg.a),
            b: DVector::from_row_slice(&cfg.b),
            rng: ChaCha8Rng::seed_from_u64(seed),
            state: DVector::zeros(2),
            cfg,
        }
    }

    pub fn config(&self) -> &LtiEnvConfig {
        &self.cfg
    }

    /// Draws the next disturbance.
    pub fn sample_disturbance(&mut self) -> f64 {
        let (lo, hi) = self.cfg.disturbance;
        if hi > lo {
            self.rng.random_range(lo..hi)
        } else {
            lo
        }
    }

    /// Per-component bound violation of `s`.
    pub fn violation(&self, s: &DVector<f64>) -> [f64; 2] {
        std::array::from_fn(|i| (self.cfg.x_lower[i] - s[i]).max(s[i] - self.cfg.x_upper[i]).max(0.0))
    }

    /// Deterministic transition with a given disturbance `e`.
    pub fn transition(&self, s: &DVector<f64>, a: &DVector<f64>, e: f64) -> Step {
        let u = a[0].clamp(-self.cfg.u_bound, self.cfg.u_bound);
        let mut next = &self.a * s + &self.b * u;
        next[0] += e;
        let v = self.violation(&next);
        let cost = 0.5 * (s.norm_squared() + u * u) + self.cfg.w[0] * v[0] + self.cfg.w[1] * v[1];
        Step {
            violations: v.iter().filter(|&&x| x > 0.0).count(),
            state: next,
            cost,
        }
    }
}

impl Environment for LtiEnv {
    fn state_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn seed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    fn reset(&mut self, s0: &DVector<f64>, seed: Option<u64>) -> DVector<f64> {
        if let Some(seed) = seed {
            self.seed(seed);
        }
        self.state = s0.clone();
        self.state.clone()
    }

    fn state(&self) -> &DVector<f64> {
        &self.state
    }

    fn step(&mut self, a: &DVector<f64>) -> Step {
        let e = self.sample_disturbance();
        let step = self.transition(&self.state, a, e);
        self.state = step.state.clone();
        step
    }
}
