//! Chain of masses driven by the velocity of its last mass, with dense
//! learnable cost weights.
//!
//! Parameters: `Q` (`nx * nx`, row-major) then `R` (`3 * 3`). Stage cost
//! `1/2 (x - x_ref)' Q (x - x_ref) + 1/2 u' R u`, terminal cost with `Q`
//! only, dynamics one RK4 step of the chain model, inputs in a box.

use crate::ad::{AdFunction, Autodiff, Hessians, Jacobians, Scalar, StageFunction};
use crate::envs::{ChainMassConfig, ChainMassModel};
use crate::{Dims, ParametricOcp, Real, Result, ThetaRegistry};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainOcpConfig {
    pub chain: ChainMassConfig,
    pub horizon: usize,
    pub u_bound: f64,
    /// Position of the driven mass at the reference rest state.
    pub end_reference: [f64; 3],
    /// Position of the driven mass at the initial rest state.
    pub end_initial: [f64; 3],
}

impl Default for ChainOcpConfig {
    fn default() -> Self {
        Self {
            chain: ChainMassConfig::default(),
            horizon: 20,
            u_bound: 1.0,
            end_reference: [1.0, 0.0, 0.0],
            end_initial: [0.8, 0.3, 0.1],
        }
    }
}

pub fn n_theta(model: &ChainMassModel) -> usize {
    model.nx() * model.nx() + 9
}

pub fn registry(model: &ChainMassModel) -> ThetaRegistry {
    let nx = model.nx();
    ThetaRegistry::new().push("Q", nx * nx).push("R", 9)
}

/// Identity weights.
pub fn initial_theta<T: Real>(model: &ChainMassModel) -> DVector<T> {
    let nx = model.nx();
    let mut th = DVector::zeros(n_theta(model));
    for i in 0..nx {
        th[i * nx + i] = T::one();
    }
    for i in 0..3 {
        th[nx * nx + 4 * i] = T::one();
    }
    th
}

/// `1/2 d' Q d + 1/2 u' R u` with `d = x - x_ref` and both matrices read
/// from the parameters. Derivatives are written out by hand because seeding
/// every weight into a jet would be wasteful.
#[derive(Clone, Debug)]
struct DenseQuadratic {
    nx: usize,
    /// 0 at the terminal stage.
    nu: usize,
    x_ref: Vec<f64>,
}

impl DenseQuadratic {
    fn split<T: Real>(&self, v: &[T]) -> (Vec<T>, Vec<T>) {
        let d = (0..self.nx).map(|i| v[i] - T::of(self.x_ref[i])).collect();
        (d, v[self.nx..self.nx + self.nu].to_vec())
    }

    fn r_off(&self) -> usize {
        self.nx * self.nx
    }

    /// Symmetric part of the `n x n` parameter block at `off`.
    fn sym<T: Real>(theta: &[T], off: usize, n: usize) -> DMatrix<T> {
        DMatrix::from_fn(n, n, |i, j| {
            (theta[off + i * n + j] + theta[off + j * n + i]) * T::of(0.5)
        })
    }
}

impl<T: Real> StageFunction<T> for DenseQuadratic {
    fn n_in(&self) -> usize {
        self.nx + self.nu
    }

    fn n_out(&self) -> usize {
        1
    }

    fn eval(&self, _k: usize, v: &[T], theta: &[T]) -> DVector<T> {
        let (d, u) = self.split(v);
        let mut c = T::zero();
        for i in 0..self.nx {
            for j in 0..self.nx {
                c += theta[i * self.nx + j] * d[i] * d[j];
            }
        }
        for i in 0..self.nu {
            for j in 0..self.nu {
                c += theta[self.r_off() + i * self.nu + j] * u[i] * u[j];
            }
        }
        DVector::from_element(1, c * T::of(0.5))
    }

    fn jacobians(&self, k: usize, v: &[T], theta: &[T], with_theta: bool) -> Jacobians<T> {
        let (d, u) = self.split(v);
        let q = Self::sym(theta, 0, self.nx);
        let gd = &q * DVector::from_column_slice(&d);
        let mut d_v = DMatrix::zeros(1, self.nx + self.nu);
        for i in 0..self.nx {
            d_v[(0, i)] = gd[i];
        }
        if self.nu > 0 {
            let r = Self::sym(theta, self.r_off(), self.nu);
            let gu = &r * DVector::from_column_slice(&u);
            for i in 0..self.nu {
                d_v[(0, self.nx + i)] = gu[i];
            }
        }
        let mut d_theta = DMatrix::zeros(1, if with_theta { theta.len() } else { 0 });
        if with_theta {
            let half = T::of(0.5);
            for i in 0..self.nx {
                for j in 0..self.nx {
                    d_theta[(0, i * self.nx + j)] = half * d[i] * d[j];
                }
            }
            for i in 0..self.nu {
                for j in 0..self.nu {
                    d_theta[(0, self.r_off() + i * self.nu + j)] = half * u[i] * u[j];
                }
            }
        }
        Jacobians {
            value: self.eval(k, v, theta),
            d_v,
            d_theta,
        }
    }

    fn weighted_hessians(&self, _k: usize, v: &[T], theta: &[T], w: &[T], with_theta: bool) -> Result<Hessians<T>> {
        let w = w[0];
        let n = self.nx + self.nu;
        let mut d_vv = DMatrix::zeros(n, n);
        d_vv.view_mut((0, 0), (self.nx, self.nx))
            .copy_from(&(Self::sym(theta, 0, self.nx) * w));
        if self.nu > 0 {
            d_vv.view_mut((self.nx, self.nx), (self.nu, self.nu))
                .copy_from(&(Self::sym(theta, self.r_off(), self.nu) * w));
        }
        let mut d_vtheta = DMatrix::zeros(n, if with_theta { theta.len() } else { 0 });
        if with_theta {
            let (d, u) = self.split(v);
            let half = T::of(0.5) * w;
            // d/dv_m of 1/2 d_i d_j is 1/2 (delta_im d_j + d_i delta_jm).
            for m in 0..self.nx {
                for j in 0..self.nx {
                    d_vtheta[(m, m * self.nx + j)] += half * d[j];
                    d_vtheta[(m, j * self.nx + m)] += half * d[j];
                }
            }
            for m in 0..self.nu {
                for j in 0..self.nu {
                    d_vtheta[(self.nx + m, self.r_off() + m * self.nu + j)] += half * u[j];
                    d_vtheta[(self.nx + m, self.r_off() + j * self.nu + m)] += half * u[j];
                }
            }
        }
        Ok(Hessians { d_vv, d_vtheta })
    }
}

#[derive(Clone, Debug)]
struct RkStep {
    model: ChainMassModel,
}

impl<T: Real> AdFunction<T> for RkStep {
    fn n_in(&self) -> usize {
        self.model.nx() + 3
    }
    fn n_out(&self) -> usize {
        self.model.nx()
    }
    fn uses_theta(&self) -> bool {
        false
    }
    fn eval<S: Scalar<T>>(&self, _k: usize, v: &[S], _th: &[S]) -> Vec<S> {
        let nx = self.model.nx();
        self.model.rk4_generic(&v[..nx], &v[nx..], self.model.dt)
    }
}

/// RK4 step with the analytic Jacobian; second derivatives by jets.
#[derive(Clone, Debug)]
struct Dynamics(Autodiff<RkStep>);

impl<T: Real> StageFunction<T> for Dynamics {
    fn n_in(&self) -> usize {
        self.0 .0.model.nx() + 3
    }

    fn n_out(&self) -> usize {
        self.0 .0.model.nx()
    }

    fn eval(&self, k: usize, v: &[T], theta: &[T]) -> DVector<T> {
        self.0.eval(k, v, theta)
    }

    fn jacobians(&self, k: usize, v: &[T], theta: &[T], with_theta: bool) -> Jacobians<T> {
        let model = &self.0 .0.model;
        let nx = model.nx();
        let n_th = if with_theta { theta.len() } else { 0 };
        Jacobians {
            value: self.eval(k, v, theta),
            d_v: model.rk4_jacobian(&v[..nx], &v[nx..], model.dt),
            d_theta: DMatrix::zeros(nx, n_th),
        }
    }

    fn weighted_hessians(&self, k: usize, v: &[T], theta: &[T], w: &[T], with_theta: bool) -> Result<Hessians<T>> {
        self.0.weighted_hessians(k, v, theta, w, with_theta)
    }
}

#[derive(Clone, Debug)]
struct InputBox {
    bound: f64,
}

impl<T: Real> AdFunction<T> for InputBox {
    fn n_in(&self) -> usize {
        3
    }
    fn n_out(&self) -> usize {
        6
    }
    fn uses_theta(&self) -> bool {
        false
    }
    fn eval<S: Scalar<T>>(&self, _k: usize, v: &[S], _th: &[S]) -> Vec<S> {
        let b = T::of(self.bound);
        let mut out: Vec<S> = v.iter().map(|u| u.clone() - b).collect();
        out.extend(v.iter().map(|u| -u.clone() - b));
        out
    }
}

pub fn dims(model: &ChainMassModel, horizon: usize) -> Dims {
    Dims::new(model.nx(), 3, n_theta(model), horizon).with_input_constraints(6)
}

/// Rest states with the driven mass at the reference and initial positions.
pub fn rest_states(model: &ChainMassModel, cfg: &ChainOcpConfig) -> Result<(DVector<f64>, DVector<f64>)> {
    Ok((
        model.equilibrium(cfg.end_reference)?,
        model.equilibrium(cfg.end_initial)?,
    ))
}

/// Problem steering `model` towards `x_ref`, with identity weights.
pub fn ocp<T: Real>(model: &ChainMassModel, x_ref: &DVector<f64>, cfg: &ChainOcpConfig) -> Result<ParametricOcp<T>> {
    let nx = model.nx();
    let cost = |nu| DenseQuadratic {
        nx,
        nu,
        x_ref: x_ref.as_slice().to_vec(),
    };
    ParametricOcp::builder(dims(model, cfg.horizon), initial_theta(model))
        .registry(registry(model))
        .stage_cost(cost(3))
        .terminal_cost(cost(0))
        .dynamics(Dynamics(Autodiff(RkStep { model: model.clone() })))
        .input_constraint(Autodiff(InputBox { bound: cfg.u_bound }))
        .build()
}
