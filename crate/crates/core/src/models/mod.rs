//! Ready-made parametric problems.

pub mod chain;
pub mod lti;

use crate::Real;
use nalgebra::DMatrix;

/// Solves the discrete algebraic Riccati equation
/// `P = Q + A^T P A - A^T P B (R + B^T P B)^{-1} B^T P A` by fixed-point
/// iteration. Returns `None` if the iteration does not settle.
pub fn dare<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, q: &DMatrix<T>, r: &DMatrix<T>) -> Option<DMatrix<T>> {
    let mut p = q.clone();
    for _ in 0..100_000 {
        let bt_p = b.transpose() * &p;
        let gain = (r + &bt_p * b).lu().solve(&(&bt_p * a))?;
        let next = q + a.transpose() * &p * a - a.transpose() * &p * b * gain;
        let next = (&next + next.transpose()) * T::of(0.5);
        let diff = (&next - &p).amax();
        p = next;
        if diff <= T::of(1e-13) * (T::one() + p.amax()) {
            return Some(p);
        }
        if !p.amax().is_finite() {
            return None;
        }
    }
    None
}
