//! Linear system with soft state bounds whose model, cost offsets and bias
//! are learnable.
//!
//! Parameters, in order: `V0` (1), `b` (2), `f` (3), `A` (4, row-major),
//! `B` (2). The problem is
//!
//! ```text
//! min  V0 + gamma^N/2 x_N' S x_N + sum_k f'[x_k; u_k]
//!         + sum_k gamma^k/2 (|x_k|^2 + |u_k|^2 + w' s_k)
//! s.t. x_{k+1} = A x_k + B u_k + b,  lb - s_k <= x_k <= ub + s_k,
//!      -1 <= u_k <= 1,  x_0 = s
//! ```
//!
//! State bounds are imposed on stages `1..N`; at stage `N` they are the
//! terminal constraint with its own slack and penalty `gamma^N/2 w' s_N`.

use super::dare;
use crate::ad::{AdFunction, Autodiff, Scalar};
use crate::{Dims, ParametricOcp, Real, Result, ThetaRegistry};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LtiConfig {
    pub horizon: usize,
    pub gamma: f64,
    /// Slack weights of the two state bounds.
    pub w: [f64; 2],
    /// Initial model, row-major.
    pub a: [f64; 4],
    pub b: [f64; 2],
    pub x_lower: [f64; 2],
    pub x_upper: [f64; 2],
    pub u_bound: f64,
}

impl Default for LtiConfig {
    fn default() -> Self {
        Self {
            horizon: 40,
            gamma: 0.9,
            w: [100.0, 100.0],
            a: [1.0, 0.25, 0.0, 1.0],
            b: [0.0312, 0.25],
            x_lower: [0.0, -1.0],
            x_upper: [1.0, 1.0],
            u_bound: 1.0,
        }
    }
}

pub const NX: usize = 2;
pub const NU: usize = 1;
pub const N_THETA: usize = 12;

pub fn registry() -> ThetaRegistry {
    ThetaRegistry::new()
        .push("V0", 1)
        .push("b", 2)
        .push("f", 3)
        .push("A", 4)
        .push("B", 2)
}

/// Initial parameters: the given model, everything else zero.
pub fn initial_theta<T: Real>(cfg: &LtiConfig) -> DVector<T> {
    let mut th = vec![0.0; N_THETA];
    th[6..10].copy_from_slice(&cfg.a);
    th[10..12].copy_from_slice(&cfg.b);
    DVector::from_iterator(N_THETA, th.into_iter().map(T::of))
}

/// Terminal weight: DARE solution for the initial model with unit weights.
pub fn terminal_weight(cfg: &LtiConfig) -> DMatrix<f64> {
    let a = DMatrix::from_row_slice(2, 2, &cfg.a);
    let b = DMatrix::from_row_slice(2, 1, &cfg.b);
    dare(&a, &b, &DMatrix::identity(2, 2), &DMatrix::identity(1, 1)).expect("initial model is stabilizable")
}

#[derive(Clone, Debug)]
struct StageCost {
    gamma: f64,
}

impl<T: Real> AdFunction<T> for StageCost {
    fn n_in(&self) -> usize {
        NX + NU
    }
    fn n_out(&self) -> usize {
        1
    }
    fn eval<S: Scalar<T>>(&self, k: usize, v: &[S], th: &[S]) -> Vec<S> {
        let disc = T::of(0.5 * self.gamma.powi(k as i32));
        let mut c = S::zero();
        for i in 0..3 {
            c = c + th[3 + i].clone() * v[i].clone() + v[i].clone() * v[i].clone() * disc;
        }
        if k == 0 {
            c = c + th[0].clone();
        }
        vec![c]
    }
}

#[derive(Clone, Debug)]
struct Dynamics;

impl<T: Real> AdFunction<T> for Dynamics {
    fn n_in(&self) -> usize {
        NX + NU
    }
    fn n_out(&self) -> usize {
        NX
    }
    fn eval<S: Scalar<T>>(&self, _k: usize, v: &[S], th: &[S]) -> Vec<S> {
        (0..NX)
            .map(|i| {
                th[6 + 2 * i].clone() * v[0].clone()
                    + th[7 + 2 * i].clone() * v[1].clone()
                    + th[10 + i].clone() * v[2].clone()
                    + th[1 + i].clone()
            })
            .collect()
    }
}

/// `gamma^k / 2 * w' s`.
#[derive(Clone, Debug)]
struct SlackPenalty {
    gamma: f64,
    w: [f64; 2],
}

impl<T: Real> AdFunction<T> for SlackPenalty {
    fn n_in(&self) -> usize {
        2
    }
    fn n_out(&self) -> usize {
        1
    }
    fn uses_theta(&self) -> bool {
        false
    }
    fn eval<S: Scalar<T>>(&self, k: usize, v: &[S], _th: &[S]) -> Vec<S> {
        let disc = 0.5 * self.gamma.powi(k as i32);
        vec![v[0].clone() * T::of(disc * self.w[0]) + v[1].clone() * T::of(disc * self.w[1])]
    }
}

#[derive(Clone, Debug)]
struct TerminalCost {
    scale: f64,
    s: [f64; 4],
}

impl<T: Real> AdFunction<T> for TerminalCost {
    fn n_in(&self) -> usize {
        NX
    }
    fn n_out(&self) -> usize {
        1
    }
    fn uses_theta(&self) -> bool {
        false
    }
    fn eval<S: Scalar<T>>(&self, _k: usize, v: &[S], _th: &[S]) -> Vec<S> {
        let mut c = S::zero();
        for i in 0..2 {
            for j in 0..2 {
                c = c + v[i].clone() * v[j].clone() * T::of(0.5 * self.scale * self.s[2 * i + j]);
            }
        }
        vec![c]
    }
}

#[derive(Clone, Debug)]
struct InputBounds {
    bound: f64,
}

impl<T: Real> AdFunction<T> for InputBounds {
    fn n_in(&self) -> usize {
        NU
    }
    fn n_out(&self) -> usize {
        2
    }
    fn uses_theta(&self) -> bool {
        false
    }
    fn eval<S: Scalar<T>>(&self, _k: usize, v: &[S], _th: &[S]) -> Vec<S> {
        let b = T::of(self.bound);
        vec![v[0].clone() - b, -v[0].clone() - b]
    }
}

/// Rows `lb - s - x <= 0` and `x - ub - s <= 0`. The input is `(x, u, s)`
/// on path stages and `(x, s)` at the terminal stage.
#[derive(Clone, Debug)]
struct StateBounds {
    lower: [f64; 2],
    upper: [f64; 2],
    with_input: bool,
}

impl<T: Real> AdFunction<T> for StateBounds {
    fn n_in(&self) -> usize {
        if self.with_input {
            NX + NU + 2
        } else {
            NX + 2
        }
    }
    fn n_out(&self) -> usize {
        4
    }
    fn uses_theta(&self) -> bool {
        false
    }
    fn eval<S: Scalar<T>>(&self, _k: usize, v: &[S], _th: &[S]) -> Vec<S> {
        let so = if self.with_input { NX + NU } else { NX };
        let x = &v[..NX];
        let s = &v[so..so + 2];
        let mut out = Vec::with_capacity(4);
        for i in 0..2 {
            out.push(-(x[i].clone() + s[i].clone()) + T::of(self.lower[i]));
        }
        for i in 0..2 {
            out.push(x[i].clone() - s[i].clone() - T::of(self.upper[i]));
        }
        out
    }
}

pub fn dims(cfg: &LtiConfig) -> Dims {
    Dims::new(NX, NU, N_THETA, cfg.horizon)
        .with_input_constraints(2)
        .with_path_constraints(4, 2, 1)
        .with_terminal_constraints(4, 2)
}

/// Builds the problem with the initial parameters of `cfg`.
pub fn ocp<T: Real>(cfg: &LtiConfig) -> Result<ParametricOcp<T>> {
    let s = terminal_weight(cfg);
    let scale = cfg.gamma.powi(cfg.horizon as i32);
    let bounds = |with_input| StateBounds {
        lower: cfg.x_lower,
        upper: cfg.x_upper,
        with_input,
    };
    let slack = SlackPenalty {
        gamma: cfg.gamma,
        w: cfg.w,
    };
    ParametricOcp::builder(dims(cfg), initial_theta(cfg))
        .registry(registry())
        .stage_cost(Autodiff(StageCost { gamma: cfg.gamma }))
        .dynamics(Autodiff(Dynamics))
        .slack_penalty(Autodiff(slack.clone()))
        .terminal_slack_penalty(Autodiff(slack))
        .terminal_cost(Autodiff(TerminalCost {
            scale,
            s: [s[(0, 0)], s[(0, 1)], s[(1, 0)], s[(1, 1)]],
        }))
        .input_constraint(Autodiff(InputBounds { bound: cfg.u_bound }))
        .path_constraint(Autodiff(bounds(true)))
        .terminal_constraint(Autodiff(bounds(false)))
        .build()
}
