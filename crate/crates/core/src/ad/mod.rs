//! Forward-mode automatic differentiation.
//!
//! Model functions are written once, generic over [`Scalar`], and evaluated
//! with plain reals, first-order jets ([`Jet1`]) or second-order jets
//! ([`Jet2`]). [`Autodiff`] turns such a function into a [`StageFunction`]
//! that the solver and the sensitivity code consume. A central
//! finite-difference fallback lives in [`fd`] for cross-checks.

mod function;
mod jet1;
mod jet2;

pub mod fd;

pub use function::{AdFunction, Autodiff, ClosureFunction, Hessians, Jacobians, StageFunction};
pub use jet1::Jet1;
pub use jet2::Jet2;

use crate::Real;
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Arithmetic needed to write differentiable model code.
pub trait Scalar<T: Real>:
    Clone
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<T, Output = Self>
    + Sub<T, Output = Self>
    + Mul<T, Output = Self>
    + Div<T, Output = Self>
{
    /// A constant with zero derivative.
    fn cst(v: T) -> Self;

    fn value(&self) -> T;

    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;

    #[inline]
    fn lit(v: f64) -> Self {
        Self::cst(T::of(v))
    }

    fn powi(self, n: i32) -> Self {
        match n {
            0 => Self::lit(1.0),
            1 => self,
            n if n < 0 => Self::lit(1.0) / self.powi(-n),
            n => {
                let half = self.clone().powi(n / 2);
                let sq = half.clone() * half;
                if n % 2 == 0 {
                    sq
                } else {
                    sq * self
                }
            }
        }
    }

    fn zero() -> Self {
        Self::lit(0.0)
    }
}

impl<T: Real> Scalar<T> for T {
    #[inline]
    fn cst(v: T) -> Self {
        v
    }
    #[inline]
    fn value(&self) -> T {
        *self
    }
    #[inline]
    fn sqrt(self) -> Self {
        nalgebra::ComplexField::sqrt(self)
    }
    #[inline]
    fn exp(self) -> Self {
        nalgebra::ComplexField::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        nalgebra::ComplexField::ln(self)
    }
    #[inline]
    fn sin(self) -> Self {
        nalgebra::ComplexField::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        nalgebra::ComplexField::cos(self)
    }
}

/// Sums a slice of scalars; returns zero for an empty slice.
pub fn sum<T: Real, S: Scalar<T>>(terms: impl IntoIterator<Item = S>) -> S {
    terms.into_iter().fold(S::zero(), |acc, t| acc + t)
}

/// Inner product of two equally long slices.
pub fn dot<T: Real, S: Scalar<T>>(a: &[S], b: &[S]) -> S {
    sum(a.iter().zip(b).map(|(x, y)| x.clone() * y.clone()))
}
