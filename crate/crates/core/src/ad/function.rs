use super::{Jet1, Jet2, Scalar};
use crate::{Error, Real, Result};
use nalgebra::{DMatrix, DVector};

/// Value and first derivatives of a stage function.
#[derive(Clone, Debug)]
pub struct Jacobians<T: Real> {
    pub value: DVector<T>,
    /// `n_out x n_in`
    pub d_v: DMatrix<T>,
    /// `n_out x n_theta`, or `n_out x 0` when the theta block was not requested.
    pub d_theta: DMatrix<T>,
}

/// Second derivatives of the weighted sum `w^T F(v, theta)`.
#[derive(Clone, Debug)]
pub struct Hessians<T: Real> {
    /// `n_in x n_in`
    pub d_vv: DMatrix<T>,
    /// `n_in x n_theta`, or `n_in x 0` when the theta block was not requested.
    pub d_vtheta: DMatrix<T>,
}

/// A vector function of the stage variables `v` and the parameters `theta`,
/// evaluated at stage index `k`, with its derivatives.
///
/// Implementations must be deterministic and free of side effects.
pub trait StageFunction<T: Real>: Send + Sync {
    fn n_in(&self) -> usize;
    fn n_out(&self) -> usize;

    fn eval(&self, k: usize, v: &[T], theta: &[T]) -> DVector<T>;

    fn jacobians(&self, k: usize, v: &[T], theta: &[T], with_theta: bool) -> Jacobians<T>;

    /// Hessian blocks of `w^T F`. Functions without second derivatives
    /// return [`Error::Capability`].
    fn weighted_hessians(&self, k: usize, v: &[T], theta: &[T], w: &[T], with_theta: bool) -> Result<Hessians<T>>;
}

/// A model function written once, generic over the scalar type.
pub trait AdFunction<T: Real>: Send + Sync {
    fn n_in(&self) -> usize;
    fn n_out(&self) -> usize;

    /// Returning `false` skips seeding the parameters, which matters when
    /// `theta` is long and the function ignores it.
    fn uses_theta(&self) -> bool {
        true
    }

    fn eval<S: Scalar<T>>(&self, k: usize, v: &[S], theta: &[S]) -> Vec<S>;
}

/// Derivatives of an [`AdFunction`] by forward-mode jets.
#[derive(Clone, Debug)]
pub struct Autodiff<F>(pub F);

impl<T: Real, F: AdFunction<T>> StageFunction<T> for Autodiff<F> {
    fn n_in(&self) -> usize {
        self.0.n_in()
    }

    fn n_out(&self) -> usize {
        self.0.n_out()
    }

    fn eval(&self, k: usize, v: &[T], theta: &[T]) -> DVector<T> {
        DVector::from_vec(self.0.eval::<T>(k, v, theta))
    }

    fn jacobians(&self, k: usize, v: &[T], theta: &[T], with_theta: bool) -> Jacobians<T> {
        let n = v.len();
        let seed_theta = with_theta && self.0.uses_theta();
        let n_th = if seed_theta { theta.len() } else { 0 };
        let total = n + n_th;
        let vj = Jet1::vars(v, 0, total);
        let tj: Vec<Jet1<T>> = if seed_theta {
            Jet1::vars(theta, n, total)
        } else {
            theta.iter().map(|&t| Jet1::constant(t)).collect()
        };
        let out = self.0.eval(k, &vj, &tj);
        let m = out.len();
        let mut value = DVector::zeros(m);
        let mut d_v = DMatrix::zeros(m, n);
        let mut d_theta = DMatrix::zeros(m, if with_theta { theta.len() } else { 0 });
        for (i, o) in out.iter().enumerate() {
            value[i] = o.v;
            if o.g.is_empty() {
                continue;
            }
            for j in 0..n {
                d_v[(i, j)] = o.g[j];
            }
            for j in 0..n_th {
                d_theta[(i, j)] = o.g[n + j];
            }
        }
        Jacobians { value, d_v, d_theta }
    }

    fn weighted_hessians(&self, k: usize, v: &[T], theta: &[T], w: &[T], with_theta: bool) -> Result<Hessians<T>> {
        let n = v.len();
        let n_theta_out = if with_theta { theta.len() } else { 0 };
        let mut d_vv = DMatrix::zeros(n, n);
        let mut d_vtheta = DMatrix::zeros(n, n_theta_out);
        if w.iter().all(|&wi| wi == T::zero()) {
            return Ok(Hessians { d_vv, d_vtheta });
        }
        let seed_theta = with_theta && self.0.uses_theta();
        let n_th = if seed_theta { theta.len() } else { 0 };
        let total = n + n_th;
        let vj = Jet2::vars(v, 0, total);
        let tj: Vec<Jet2<T>> = if seed_theta {
            Jet2::vars(theta, n, total)
        } else {
            theta.iter().map(|&t| Jet2::constant(t)).collect()
        };
        let out = self.0.eval(k, &vj, &tj);
        if out.len() != w.len() {
            return Err(Error::Dimension {
                what: "hessian weights".into(),
                expected: out.len(),
                got: w.len(),
            });
        }
        let phi = out
            .into_iter()
            .zip(w)
            .filter(|(_, &wi)| wi != T::zero())
            .fold(Jet2::constant(T::zero()), |acc, (o, &wi)| acc + o * wi);
        for i in 0..n {
            for j in 0..n {
                d_vv[(i, j)] = phi.hess(i, j);
            }
            for j in 0..n_th {
                d_vtheta[(i, j)] = phi.hess(i, n + j);
            }
        }
        Ok(Hessians { d_vv, d_vtheta })
    }
}

type EvalFn<T> = dyn Fn(usize, &[T], &[T]) -> DVector<T> + Send + Sync;

/// A function given only by an evaluation closure. First derivatives come
/// from central finite differences; second derivatives are unavailable.
pub struct ClosureFunction<T: Real> {
    n_in: usize,
    n_out: usize,
    step: T,
    f: Box<EvalFn<T>>,
}

impl<T: Real> ClosureFunction<T> {
    pub fn new(n_in: usize, n_out: usize, f: impl Fn(usize, &[T], &[T]) -> DVector<T> + Send + Sync + 'static) -> Self {
        Self {
            n_in,
            n_out,
            step: T::of(1e-6),
            f: Box::new(f),
        }
    }
}

impl<T: Real> StageFunction<T> for ClosureFunction<T> {
    fn n_in(&self) -> usize {
        self.n_in
    }

    fn n_out(&self) -> usize {
        self.n_out
    }

    fn eval(&self, k: usize, v: &[T], theta: &[T]) -> DVector<T> {
        (self.f)(k, v, theta)
    }

    fn jacobians(&self, k: usize, v: &[T], theta: &[T], with_theta: bool) -> Jacobians<T> {
        super::fd::jacobians(self, k, v, theta, with_theta, self.step)
    }

    fn weighted_hessians(&self, _k: usize, _v: &[T], _theta: &[T], _w: &[T], _with_theta: bool) -> Result<Hessians<T>> {
        Err(Error::Capability(
            "closure-defined function has no second derivatives".into(),
        ))
    }
}
