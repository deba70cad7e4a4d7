use super::Scalar;
use crate::Real;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Value plus gradient. An empty gradient stands for zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet1<T> {
    pub v: T,
    pub g: Vec<T>,
}

impl<T: Real> Jet1<T> {
    pub fn constant(v: T) -> Self {
        Self { v, g: Vec::new() }
    }

    /// Independent variable `i` out of `n`.
    pub fn var(v: T, i: usize, n: usize) -> Self {
        let mut g = vec![T::zero(); n];
        g[i] = T::one();
        Self { v, g }
    }

    /// Seeds `values` as independent variables `offset..offset + values.len()` of `n`.
    pub fn vars(values: &[T], offset: usize, n: usize) -> Vec<Self> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| Self::var(v, offset + i, n))
            .collect()
    }

    /// Gradient padded to length `n`.
    pub fn grad(&self, n: usize) -> Vec<T> {
        if self.g.is_empty() {
            vec![T::zero(); n]
        } else {
            self.g.clone()
        }
    }

    fn chain(self, f: T, df: T) -> Self {
        let g = self.g.into_iter().map(|x| x * df).collect();
        Self { v: f, g }
    }

    fn combine(a: Vec<T>, ca: T, b: &[T], cb: T) -> Vec<T> {
        match (a.is_empty(), b.is_empty()) {
            (true, true) => a,
            (false, true) => a.into_iter().map(|x| x * ca).collect(),
            (true, false) => b.iter().map(|&x| x * cb).collect(),
            (false, false) => a.into_iter().zip(b).map(|(x, &y)| x * ca + y * cb).collect(),
        }
    }
}

impl<T: Real> Add for Jet1<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let g = Self::combine(self.g, T::one(), &rhs.g, T::one());
        Self { v: self.v + rhs.v, g }
    }
}

impl<T: Real> Sub for Jet1<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let g = Self::combine(self.g, T::one(), &rhs.g, -T::one());
        Self { v: self.v - rhs.v, g }
    }
}

impl<T: Real> Mul for Jet1<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let g = Self::combine(self.g, rhs.v, &rhs.g, self.v);
        Self { v: self.v * rhs.v, g }
    }
}

impl<T: Real> Div for Jet1<T> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let inv = T::one() / rhs.v;
        let v = self.v * inv;
        let g = Self::combine(self.g, inv, &rhs.g, -v * inv);
        Self { v, g }
    }
}

impl<T: Real> Neg for Jet1<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self {
            v: -self.v,
            g: self.g.into_iter().map(|x| -x).collect(),
        }
    }
}

impl<T: Real> Add<T> for Jet1<T> {
    type Output = Self;
    fn add(mut self, rhs: T) -> Self {
        self.v += rhs;
        self
    }
}

impl<T: Real> Sub<T> for Jet1<T> {
    type Output = Self;
    fn sub(mut self, rhs: T) -> Self {
        self.v -= rhs;
        self
    }
}

impl<T: Real> Mul<T> for Jet1<T> {
    type Output = Self;
    fn mul(self, rhs: T) -> Self {
        Self {
            v: self.v * rhs,
            g: self.g.into_iter().map(|x| x * rhs).collect(),
        }
    }
}

impl<T: Real> Div<T> for Jet1<T> {
    type Output = Self;
    fn div(self, rhs: T) -> Self {
        self * (T::one() / rhs)
    }
}

impl<T: Real> Scalar<T> for Jet1<T> {
    fn cst(v: T) -> Self {
        Self::constant(v)
    }
    fn value(&self) -> T {
        self.v
    }
    fn sqrt(self) -> Self {
        let f = self.v.sqrt();
        self.chain(f, T::of(0.5) / f)
    }
    fn exp(self) -> Self {
        let f = self.v.exp();
        self.chain(f, f)
    }
    fn ln(self) -> Self {
        let d = T::one() / self.v;
        let f = self.v.ln();
        self.chain(f, d)
    }
    fn sin(self) -> Self {
        let (s, c) = (self.v.sin(), self.v.cos());
        self.chain(s, c)
    }
    fn cos(self) -> Self {
        let (s, c) = (self.v.sin(), self.v.cos());
        self.chain(c, -s)
    }
}
