//! Parametric optimal control problem data model.
//!
//! The value NLP minimizes
//! `V_f(x_N) + rho_f(sigma_N) + sum_k l(k, x_k, u_k) + rho(k, sigma_k)`
//! subject to `x_0 = s`, `x_{k+1} = f(x_k, u_k)`, `g(u_k) <= 0`,
//! `h(x_k, u_k, sigma_k) <= 0`, `h_f(x_N, sigma_N) <= 0` and `sigma >= 0`.
//! The action-value NLP adds `u_0 = a`.

mod dims;
mod packed;
mod point;

pub use dims::Dims;
pub use packed::{PackedLayout, PackedVector, StageOffsets};
pub use point::{Mode, PrimalDualPoint};

use crate::ad::{Hessians, Jacobians, StageFunction};
use crate::{Error, Real, Result};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::ops::Range;
use std::sync::Arc;

/// A function that is identically zero.
#[derive(Clone, Copy, Debug)]
pub struct ZeroFunction {
    pub n_in: usize,
    pub n_out: usize,
}

impl<T: Real> StageFunction<T> for ZeroFunction {
    fn n_in(&self) -> usize {
        self.n_in
    }
    fn n_out(&self) -> usize {
        self.n_out
    }
    fn eval(&self, _k: usize, _v: &[T], _theta: &[T]) -> DVector<T> {
        DVector::zeros(self.n_out)
    }
    fn jacobians(&self, _k: usize, v: &[T], theta: &[T], with_theta: bool) -> Jacobians<T> {
        Jacobians {
            value: DVector::zeros(self.n_out),
            d_v: DMatrix::zeros(self.n_out, v.len()),
            d_theta: DMatrix::zeros(self.n_out, if with_theta { theta.len() } else { 0 }),
        }
    }
    fn weighted_hessians(&self, _k: usize, v: &[T], theta: &[T], _w: &[T], with_theta: bool) -> Result<Hessians<T>> {
        Ok(Hessians {
            d_vv: DMatrix::zeros(v.len(), v.len()),
            d_vtheta: DMatrix::zeros(v.len(), if with_theta { theta.len() } else { 0 }),
        })
    }
}

/// Named slices of the flat parameter vector.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ThetaRegistry {
    entries: Vec<(String, Range<usize>)>,
}

impl ThetaRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a slice of length `len` after the previously registered ones.
    pub fn push(mut self, name: &str, len: usize) -> Self {
        let start = self.entries.last().map_or(0, |(_, r)| r.end);
        self.entries.push((name.to_string(), start..start + len));
        self
    }

    pub fn get(&self, name: &str) -> Option<Range<usize>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, r)| r.clone())
    }

    pub fn len(&self) -> usize {
        self.entries.last().map_or(0, |(_, r)| r.end)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Range<usize>)> {
        self.entries.iter().map(|(n, r)| (n.as_str(), r.clone()))
    }
}

type Func<T> = Arc<dyn StageFunction<T>>;

/// The parametric NLP: dimensions, parameter vector and model functions.
///
/// Function inputs are `(x, u)` for the stage cost and dynamics, `u` for the
/// input constraint, `(x, u, sigma)` for the path constraint, `x` for the
/// terminal cost, `(x, sigma)` for the terminal constraint and `sigma` for the
/// slack penalties. Every function also receives the stage index and `theta`.
#[derive(Clone)]
pub struct ParametricOcp<T: Real> {
    dims: Dims,
    theta: DVector<T>,
    registry: ThetaRegistry,
    pub(crate) stage_cost: Func<T>,
    pub(crate) terminal_cost: Func<T>,
    pub(crate) slack_penalty: Func<T>,
    pub(crate) terminal_slack_penalty: Func<T>,
    pub(crate) dynamics: Func<T>,
    pub(crate) input_constraint: Func<T>,
    pub(crate) path_constraint: Func<T>,
    pub(crate) terminal_constraint: Func<T>,
}

impl<T: Real> std::fmt::Debug for ParametricOcp<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParametricOcp")
            .field("dims", &self.dims)
            .field("theta", &self.theta.as_slice())
            .finish_non_exhaustive()
    }
}

pub struct OcpBuilder<T: Real> {
    dims: Dims,
    theta: DVector<T>,
    registry: ThetaRegistry,
    stage_cost: Option<Func<T>>,
    terminal_cost: Option<Func<T>>,
    slack_penalty: Option<Func<T>>,
    terminal_slack_penalty: Option<Func<T>>,
    dynamics: Option<Func<T>>,
    input_constraint: Option<Func<T>>,
    path_constraint: Option<Func<T>>,
    terminal_constraint: Option<Func<T>>,
}

impl<T: Real> OcpBuilder<T> {
    pub fn registry(mut self, r: ThetaRegistry) -> Self {
        self.registry = r;
        self
    }
    pub fn stage_cost(mut self, f: impl StageFunction<T> + 'static) -> Self {
        self.stage_cost = Some(Arc::new(f));
        self
    }
    pub fn terminal_cost(mut self, f: impl StageFunction<T> + 'static) -> Self {
        self.terminal_cost = Some(Arc::new(f));
        self
    }
    pub fn slack_penalty(mut self, f: impl StageFunction<T> + 'static) -> Self {
        self.slack_penalty = Some(Arc::new(f));
        self
    }
    pub fn terminal_slack_penalty(mut self, f: impl StageFunction<T> + 'static) -> Self {
        self.terminal_slack_penalty = Some(Arc::new(f));
        self
    }
    pub fn dynamics(mut self, f: impl StageFunction<T> + 'static) -> Self {
        self.dynamics = Some(Arc::new(f));
        self
    }
    pub fn input_constraint(mut self, f: impl StageFunction<T> + 'static) -> Self {
        self.input_constraint = Some(Arc::new(f));
        self
    }
    pub fn path_constraint(mut self, f: impl StageFunction<T> + 'static) -> Self {
        self.path_constraint = Some(Arc::new(f));
        self
    }
    pub fn terminal_constraint(mut self, f: impl StageFunction<T> + 'static) -> Self {
        self.terminal_constraint = Some(Arc::new(f));
        self
    }

    pub fn build(self) -> Result<ParametricOcp<T>> {
        let d = self.dims;
        if !d.is_consistent() {
            return Err(Error::InvalidArgument(format!("inconsistent dims {d:?}")));
        }
        if self.theta.len() != d.n_theta {
            return Err(Error::Dimension {
                what: "theta".into(),
                expected: d.n_theta,
                got: self.theta.len(),
            });
        }
        let zero = |n_in: usize, n_out: usize| -> Func<T> { Arc::new(ZeroFunction { n_in, n_out }) };
        let dynamics = self
            .dynamics
            .ok_or_else(|| Error::InvalidArgument("dynamics function is required".into()))?;
        let stage_cost = self
            .stage_cost
            .ok_or_else(|| Error::InvalidArgument("stage cost function is required".into()))?;
        Ok(ParametricOcp {
            dims: d,
            theta: self.theta,
            registry: self.registry,
            stage_cost,
            terminal_cost: self.terminal_cost.unwrap_or_else(|| zero(d.nx, 1)),
            slack_penalty: self.slack_penalty.unwrap_or_else(|| zero(d.ns, 1)),
            terminal_slack_penalty: self.terminal_slack_penalty.unwrap_or_else(|| zero(d.ns_terminal, 1)),
            dynamics,
            input_constraint: self.input_constraint.unwrap_or_else(|| zero(d.nu, d.ng)),
            path_constraint: self.path_constraint.unwrap_or_else(|| zero(d.nx + d.nu + d.ns, d.nh)),
            terminal_constraint: self
                .terminal_constraint
                .unwrap_or_else(|| zero(d.nx + d.ns_terminal, d.nh_terminal)),
        })
    }
}

impl<T: Real> ParametricOcp<T> {
    pub fn builder(dims: Dims, theta: DVector<T>) -> OcpBuilder<T> {
        OcpBuilder {
            dims,
            theta,
            registry: ThetaRegistry::new(),
            stage_cost: None,
            terminal_cost: None,
            slack_penalty: None,
            terminal_slack_penalty: None,
            dynamics: None,
            input_constraint: None,
            path_constraint: None,
            terminal_constraint: None,
        }
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn theta(&self) -> &DVector<T> {
        &self.theta
    }

    pub fn registry(&self) -> &ThetaRegistry {
        &self.registry
    }

    pub fn set_theta(&mut self, theta: &DVector<T>) -> Result<()> {
        if theta.len() != self.dims.n_theta {
            return Err(Error::Dimension {
                what: "theta".into(),
                expected: self.dims.n_theta,
                got: theta.len(),
            });
        }
        self.theta.copy_from(theta);
        Ok(())
    }

    /// Copy of the problem with a different parameter vector.
    pub fn with_theta(&self, theta: &DVector<T>) -> Result<Self> {
        let mut o = self.clone();
        o.set_theta(theta)?;
        Ok(o)
    }

    /// Named parameter slice, if registered.
    pub fn theta_slice(&self, name: &str) -> Option<&[T]> {
        self.registry.get(name).map(|r| &self.theta.as_slice()[r])
    }

    /// Objective of the NLP at the primal part of `p`.
    pub fn objective(&self, p: &PrimalDualPoint<T>) -> T {
        let th = self.theta.as_slice();
        let n = self.dims.horizon;
        let mut obj = T::zero();
        for k in 0..n {
            let xu = xu_vector(&p.x[k], &p.u[k]);
            obj += self.stage_cost.eval(k, xu.as_slice(), th)[0];
            if !p.sigma[k].is_empty() {
                obj += self.slack_penalty.eval(k, p.sigma[k].as_slice(), th)[0];
            }
        }
        obj += self.terminal_cost.eval(n, p.x[n].as_slice(), th)[0];
        if !p.sigma[n].is_empty() {
            obj += self.terminal_slack_penalty.eval(n, p.sigma[n].as_slice(), th)[0];
        }
        obj
    }

    /// Inequality values `c_k(z_k)` in row order `[g; h; -sigma]` (or `[h_f; -sigma_N]`).
    pub fn inequality(&self, k: usize, p: &PrimalDualPoint<T>) -> DVector<T> {
        let d = &self.dims;
        let th = self.theta.as_slice();
        let mut c = Vec::with_capacity(d.n_ineq(k));
        let z = p.stage_vector(k);
        if k < d.horizon {
            c.extend(self.input_constraint.eval(k, p.u[k].as_slice(), th).iter());
            if d.nh_at(k) > 0 {
                c.extend(self.path_constraint.eval(k, z.as_slice(), th).iter());
            }
        } else if d.nh_terminal > 0 {
            c.extend(self.terminal_constraint.eval(k, z.as_slice(), th).iter());
        }
        c.extend(p.sigma[k].iter().map(|s| -*s));
        DVector::from_vec(c)
    }
}

pub(crate) fn xu_vector<T: Real>(x: &DVector<T>, u: &DVector<T>) -> DVector<T> {
    let mut v = Vec::with_capacity(x.len() + u.len());
    v.extend_from_slice(x.as_slice());
    v.extend_from_slice(u.as_slice());
    DVector::from_vec(v)
}

/// One size disagreement found by [`validate`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mismatch {
    pub function: &'static str,
    pub what: &'static str,
    pub expected: usize,
    pub got: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub mismatches: Vec<Mismatch>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Compares declared dimensions against what every function actually
/// returns at a pseudo-random probe point.
pub fn validate<T: Real>(ocp: &ParametricOcp<T>) -> ValidationReport {
    let d = &ocp.dims;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut rand_vec = |n: usize| -> Vec<T> { (0..n).map(|_| T::of(rng.random_range(-1.0..1.0))).collect() };
    let theta = ocp.theta.as_slice();
    let mut report = ValidationReport::default();
    if theta.len() != d.n_theta {
        report.mismatches.push(Mismatch {
            function: "theta",
            what: "length",
            expected: d.n_theta,
            got: theta.len(),
        });
    }

    let path_stage = d.first_path_stage.min(d.horizon.saturating_sub(1));
    // (name, function, inputs, outputs, probe stage, evaluate it)
    type Check<'a, T> = (&'static str, &'a Func<T>, usize, usize, usize, bool);
    let checks: [Check<T>; 8] = [
        ("stage_cost", &ocp.stage_cost, d.nx + d.nu, 1, 0, true),
        ("terminal_cost", &ocp.terminal_cost, d.nx, 1, d.horizon, true),
        ("slack_penalty", &ocp.slack_penalty, d.ns, 1, path_stage, d.ns > 0),
        (
            "terminal_slack_penalty",
            &ocp.terminal_slack_penalty,
            d.ns_terminal,
            1,
            d.horizon,
            d.ns_terminal > 0,
        ),
        ("dynamics", &ocp.dynamics, d.nx + d.nu, d.nx, 0, true),
        ("input_constraint", &ocp.input_constraint, d.nu, d.ng, 0, d.ng > 0),
        (
            "path_constraint",
            &ocp.path_constraint,
            d.nx + d.nu + d.ns,
            d.nh,
            path_stage,
            d.nh > 0,
        ),
        (
            "terminal_constraint",
            &ocp.terminal_constraint,
            d.nx + d.ns_terminal,
            d.nh_terminal,
            d.horizon,
            d.nh_terminal > 0,
        ),
    ];
    for (name, f, n_in, n_out, k, probe) in checks {
        if f.n_in() != n_in {
            report.mismatches.push(Mismatch {
                function: name,
                what: "declared input size",
                expected: n_in,
                got: f.n_in(),
            });
            continue;
        }
        if !probe {
            if f.n_out() != n_out {
                report.mismatches.push(Mismatch {
                    function: name,
                    what: "declared output size",
                    expected: n_out,
                    got: f.n_out(),
                });
            }
            continue;
        }
        let v = rand_vec(n_in);
        let out = f.eval(k, &v, theta);
        if out.len() != n_out {
            report.mismatches.push(Mismatch {
                function: name,
                what: "output size",
                expected: n_out,
                got: out.len(),
            });
            continue;
        }
        let jac = f.jacobians(k, &v, theta, true);
        if jac.d_v.shape() != (n_out, n_in) || jac.d_theta.shape() != (n_out, d.n_theta) {
            report.mismatches.push(Mismatch {
                function: name,
                what: "jacobian size",
                expected: n_out * (n_in + d.n_theta),
                got: jac.d_v.len() + jac.d_theta.len(),
            });
        }
    }
    report
}
