use super::Scalar;
use crate::Real;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Value, gradient and Hessian propagated together.
///
/// The Hessian is stored as the packed upper triangle, row-major. Empty
/// vectors stand for zero derivatives so constants cost no allocation.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet2<T> {
    pub v: T,
    pub n: usize,
    pub g: Vec<T>,
    pub h: Vec<T>,
}

#[inline]
fn packed_len(n: usize) -> usize {
    n * (n + 1) / 2
}

#[inline]
fn packed_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + j
}

impl<T: Real> Jet2<T> {
    pub fn constant(v: T) -> Self {
        Self {
            v,
            n: 0,
            g: Vec::new(),
            h: Vec::new(),
        }
    }

    pub fn var(v: T, i: usize, n: usize) -> Self {
        let mut g = vec![T::zero(); n];
        g[i] = T::one();
        Self { v, n, g, h: Vec::new() }
    }

    pub fn vars(values: &[T], offset: usize, n: usize) -> Vec<Self> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| Self::var(v, offset + i, n))
            .collect()
    }

    pub fn grad(&self, n: usize) -> Vec<T> {
        if self.g.is_empty() {
            vec![T::zero(); n]
        } else {
            self.g.clone()
        }
    }

    /// Hessian entry `(i, j)`.
    pub fn hess(&self, i: usize, j: usize) -> T {
        if self.h.is_empty() {
            T::zero()
        } else {
            self.h[packed_index(self.n, i, j)]
        }
    }

    fn scaled(self, c: T) -> Self {
        Self {
            v: self.v * c,
            n: self.n,
            g: self.g.into_iter().map(|x| x * c).collect(),
            h: self.h.into_iter().map(|x| x * c).collect(),
        }
    }

    /// `ca * a + cb * b` on derivative storage of possibly different sparsity.
    fn lin(a: Vec<T>, ca: T, b: &[T], cb: T) -> Vec<T> {
        match (a.is_empty(), b.is_empty()) {
            (true, true) => a,
            (false, true) => a.into_iter().map(|x| x * ca).collect(),
            (true, false) => b.iter().map(|&x| x * cb).collect(),
            (false, false) => a.into_iter().zip(b).map(|(x, &y)| x * ca + y * cb).collect(),
        }
    }

    fn chain(self, f: T, df: T, ddf: T) -> Self {
        let n = self.n;
        let mut h: Vec<T> = self.h.iter().map(|&x| x * df).collect();
        if !self.g.is_empty() && ddf != T::zero() {
            if h.is_empty() {
                h = vec![T::zero(); packed_len(n)];
            }
            let mut idx = 0;
            for i in 0..n {
                let gi = self.g[i] * ddf;
                for j in i..n {
                    h[idx] += gi * self.g[j];
                    idx += 1;
                }
            }
        }
        Self {
            v: f,
            n,
            g: self.g.into_iter().map(|x| x * df).collect(),
            h,
        }
    }

    fn recip(self) -> Self {
        let inv = T::one() / self.v;
        self.chain(inv, -inv * inv, T::of(2.0) * inv * inv * inv)
    }
}

impl<T: Real> Add for Jet2<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let n = self.n.max(rhs.n);
        Self {
            v: self.v + rhs.v,
            n,
            g: Self::lin(self.g, T::one(), &rhs.g, T::one()),
            h: Self::lin(self.h, T::one(), &rhs.h, T::one()),
        }
    }
}

impl<T: Real> Sub for Jet2<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl<T: Real> Mul for Jet2<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let n = self.n.max(rhs.n);
        let mut h = Self::lin(self.h, rhs.v, &rhs.h, self.v);
        if !self.g.is_empty() && !rhs.g.is_empty() {
            if h.is_empty() {
                h = vec![T::zero(); packed_len(n)];
            }
            let mut idx = 0;
            for i in 0..n {
                let (ai, bi) = (self.g[i], rhs.g[i]);
                for j in i..n {
                    h[idx] += ai * rhs.g[j] + bi * self.g[j];
                    idx += 1;
                }
            }
        }
        Self {
            v: self.v * rhs.v,
            n,
            g: Self::lin(self.g, rhs.v, &rhs.g, self.v),
            h,
        }
    }
}

impl<T: Real> Div for Jet2<T> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        if rhs.g.is_empty() {
            let inv = T::one() / rhs.v;
            return self.scaled(inv);
        }
        self * rhs.recip()
    }
}

impl<T: Real> Neg for Jet2<T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scaled(-T::one())
    }
}

impl<T: Real> Add<T> for Jet2<T> {
    type Output = Self;
    fn add(mut self, rhs: T) -> Self {
        self.v += rhs;
        self
    }
}

impl<T: Real> Sub<T> for Jet2<T> {
    type Output = Self;
    fn sub(mut self, rhs: T) -> Self {
        self.v -= rhs;
        self
    }
}

impl<T: Real> Mul<T> for Jet2<T> {
    type Output = Self;
    fn mul(self, rhs: T) -> Self {
        self.scaled(rhs)
    }
}

impl<T: Real> Div<T> for Jet2<T> {
    type Output = Self;
    fn div(self, rhs: T) -> Self {
        self.scaled(T::one() / rhs)
    }
}

impl<T: Real> Scalar<T> for Jet2<T> {
    fn cst(v: T) -> Self {
        Self::constant(v)
    }
    fn value(&self) -> T {
        self.v
    }
    fn sqrt(self) -> Self {
        let f = self.v.sqrt();
        let df = T::of(0.5) / f;
        let ddf = -df / (T::of(2.0) * self.v);
        self.chain(f, df, ddf)
    }
    fn exp(self) -> Self {
        let f = self.v.exp();
        self.chain(f, f, f)
    }
    fn ln(self) -> Self {
        let inv = T::one() / self.v;
        let f = self.v.ln();
        self.chain(f, inv, -inv * inv)
    }
    fn sin(self) -> Self {
        let (s, c) = (self.v.sin(), self.v.cos());
        self.chain(s, c, -s)
    }
    fn cos(self) -> Self {
        let (s, c) = (self.v.sin(), self.v.cos());
        self.chain(c, -s, -c)
    }
}
