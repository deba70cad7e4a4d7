use super::{Dims, Mode};
use crate::Real;
use nalgebra::DVector;
use std::ops::Range;

/// Start offsets of one stage block inside a packed vector.
///
/// Variable order per stage: `x_k, u_k, sigma_k, chi_k, [nu_k; mu_k], t_k`.
/// KKT residual rows use the same offsets: stationarity rows sit on the
/// primal offsets, the equality defining `x_k` on `chi`, the primal
/// inequality rows `c + t` on `lam`, and complementarity on `t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StageOffsets {
    pub x: usize,
    pub u: usize,
    pub sigma: usize,
    pub chi: usize,
    pub lam: usize,
    pub t: usize,
    pub end: usize,
    /// Slack dimension.
    pub ns: usize,
    /// Inequality rows.
    pub m: usize,
}

impl StageOffsets {
    /// Range of the stage vector `z_k = (x_k, u_k, sigma_k)`.
    pub fn z(&self) -> Range<usize> {
        self.x..self.chi
    }
}

/// Closed-form index map between a [`crate::PrimalDualPoint`] and its packed vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PackedLayout {
    dims: Dims,
    mode: Mode,
    stages: Vec<StageOffsets>,
    zeta: Option<usize>,
    len: usize,
}

impl PackedLayout {
    pub fn new(dims: &Dims, mode: Mode) -> Self {
        let mut stages = Vec::with_capacity(dims.horizon + 1);
        let mut off = 0;
        for k in 0..=dims.horizon {
            let (nx, nu, ns, m) = (dims.nx, dims.nu_at(k), dims.ns_at(k), dims.n_ineq(k));
            let x = off;
            let u = x + nx;
            let sigma = u + nu;
            let chi = sigma + ns;
            let lam = chi + nx;
            let t = lam + m;
            let end = t + m;
            stages.push(StageOffsets {
                x,
                u,
                sigma,
                chi,
                lam,
                t,
                end,
                ns,
                m,
            });
            off = end;
        }
        let zeta = match mode {
            Mode::Value => None,
            Mode::ActionValue => Some(off),
        };
        if zeta.is_some() {
            off += dims.nu;
        }
        Self {
            dims: *dims,
            mode,
            stages,
            zeta,
            len: off,
        }
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn stage(&self, k: usize) -> StageOffsets {
        self.stages[k]
    }

    pub fn zeta(&self) -> Option<usize> {
        self.zeta
    }

    /// Indices of `u_0`; the policy sensitivity is read from these rows.
    pub fn u0_range(&self) -> Range<usize> {
        self.dims.nx..self.dims.nx + self.dims.nu
    }
}

/// A flat vector in [`PackedLayout`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct PackedVector<T: Real> {
    pub layout: PackedLayout,
    pub data: DVector<T>,
}

impl<T: Real> PackedVector<T> {
    pub fn zeros(layout: PackedLayout) -> Self {
        let data = DVector::zeros(layout.len());
        Self { layout, data }
    }

    pub fn from_data(layout: PackedLayout, data: DVector<T>) -> Self {
        assert_eq!(layout.len(), data.len(), "packed vector length");
        Self { layout, data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn norm_inf(&self) -> T {
        self.data.iter().fold(T::zero(), |a, b| a.max(b.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> Dims {
        Dims::new(2, 1, 3, 4)
            .with_input_constraints(2)
            .with_path_constraints(4, 2, 1)
            .with_terminal_constraints(4, 2)
    }

    #[test]
    fn value_layout_is_shorter_by_nu() {
        let d = dims();
        let v = PackedLayout::new(&d, Mode::Value);
        let q = PackedLayout::new(&d, Mode::ActionValue);
        assert_eq!(v.len(), q.len() - d.nu);
    }

    #[test]
    fn layout_length_counts_every_field() {
        let d = dims();
        // stage 0: x2 u1 chi2 ineq 2+2 ; stages 1..3: x2 u1 s2 chi2 ineq (2+4+2)*2 ; terminal: x2 s2 chi2 (4+2)*2
        let expected = (2 + 1 + 2 + 4) + 3 * (2 + 1 + 2 + 2 + 16) + (2 + 2 + 2 + 12);
        assert_eq!(PackedLayout::new(&d, Mode::Value).len(), expected);
    }

    #[test]
    fn u0_index_is_closed_form() {
        let d = dims();
        let l = PackedLayout::new(&d, Mode::ActionValue);
        assert_eq!(l.u0_range(), l.stage(0).u..l.stage(0).u + d.nu);
    }
}
