//! Central finite differences, used as a derivative fallback and as an
//! independent oracle in tests.

use super::{Hessians, Jacobians, StageFunction};
use crate::Real;
use nalgebra::{DMatrix, DVector};

/// Central-difference Jacobian of `f` at `x`.
pub fn jacobian<T: Real>(f: impl Fn(&[T]) -> DVector<T>, x: &[T], step: T) -> DMatrix<T> {
    let mut xp = x.to_vec();
    let two = T::of(2.0);
    let mut cols = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = xp[i];
        xp[i] = orig + step;
        let fp = f(&xp);
        xp[i] = orig - step;
        let fm = f(&xp);
        xp[i] = orig;
        cols.push((fp - fm) / (two * step));
    }
    if cols.is_empty() {
        let m = f(x).len();
        return DMatrix::zeros(m, 0);
    }
    DMatrix::from_columns(&cols)
}

/// Central-difference gradient of a scalar function.
pub fn gradient<T: Real>(f: impl Fn(&[T]) -> T, x: &[T], step: T) -> DVector<T> {
    let j = jacobian(|y| DVector::from_element(1, f(y)), x, step);
    j.row(0).transpose()
}

pub fn jacobians<T: Real, F: StageFunction<T> + ?Sized>(
    f: &F,
    k: usize,
    v: &[T],
    theta: &[T],
    with_theta: bool,
    step: T,
) -> Jacobians<T> {
    let value = f.eval(k, v, theta);
    let d_v = jacobian(|y| f.eval(k, y, theta), v, step);
    let d_theta = if with_theta {
        jacobian(|th| f.eval(k, v, th), theta, step)
    } else {
        DMatrix::zeros(value.len(), 0)
    };
    Jacobians { value, d_v, d_theta }
}

/// Hessian blocks of `w^T F` by differencing the analytic (or FD) Jacobians.
pub fn weighted_hessians<T: Real, F: StageFunction<T> + ?Sized>(
    f: &F,
    k: usize,
    v: &[T],
    theta: &[T],
    w: &[T],
    with_theta: bool,
    step: T,
) -> Hessians<T> {
    let wv = DVector::from_column_slice(w);
    let grad_v = |y: &[T], th: &[T]| f.jacobians(k, y, th, false).d_v.tr_mul(&wv);
    let d_vv = jacobian(|y| grad_v(y, theta), v, step);
    let d_vtheta = if with_theta {
        jacobian(|th| grad_v(v, th), theta, step)
    } else {
        DMatrix::zeros(v.len(), 0)
    };
    Hessians {
        d_vv: (&d_vv + d_vv.transpose()) * T::of(0.5),
        d_vtheta,
    }
}
