use super::{Dims, PackedLayout, PackedVector};
use crate::{Error, Real, Result};
use nalgebra::DVector;

/// Which NLP a point belongs to: the value NLP, or the action-value NLP
/// with its first input pinned.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Value,
    ActionValue,
}

/// Primal-dual iterate `y = (x, u, sigma, chi, mu, nu, zeta)` plus the
/// inequality slacks `t`.
///
/// Inequality multipliers and slacks are stored per stage in one vector each:
/// stage `k < N` holds `[nu_k; mu_k]`, stage `N` holds `mu_N`. Within `mu` the
/// path rows come first, followed by one `-sigma <= 0` row per slack.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimalDualPoint<T: Real> {
    pub dims: Dims,
    pub x: Vec<DVector<T>>,
    pub u: Vec<DVector<T>>,
    pub sigma: Vec<DVector<T>>,
    pub chi: Vec<DVector<T>>,
    pub lam: Vec<DVector<T>>,
    pub t: Vec<DVector<T>>,
    pub zeta: Option<DVector<T>>,
}

impl<T: Real> PrimalDualPoint<T> {
    pub fn zeros(dims: &Dims, mode: Mode) -> Self {
        let n = dims.horizon;
        let z = |len: usize| DVector::zeros(len);
        Self {
            dims: *dims,
            x: (0..=n).map(|_| z(dims.nx)).collect(),
            u: (0..n).map(|_| z(dims.nu)).collect(),
            sigma: (0..=n).map(|k| z(dims.ns_at(k))).collect(),
            chi: (0..=n).map(|_| z(dims.nx)).collect(),
            lam: (0..=n).map(|k| z(dims.n_ineq(k))).collect(),
            t: (0..=n).map(|k| z(dims.n_ineq(k))).collect(),
            zeta: match mode {
                Mode::Value => None,
                Mode::ActionValue => Some(z(dims.nu)),
            },
        }
    }

    pub fn mode(&self) -> Mode {
        if self.zeta.is_some() {
            Mode::ActionValue
        } else {
            Mode::Value
        }
    }

    pub fn horizon(&self) -> usize {
        self.dims.horizon
    }

    pub fn nu_mult(&self, k: usize) -> &[T] {
        &self.lam[k].as_slice()[..self.dims.ng_at(k)]
    }

    pub fn mu(&self, k: usize) -> &[T] {
        &self.lam[k].as_slice()[self.dims.ng_at(k)..]
    }

    pub fn t_nu(&self, k: usize) -> &[T] {
        &self.t[k].as_slice()[..self.dims.ng_at(k)]
    }

    pub fn t_mu(&self, k: usize) -> &[T] {
        &self.t[k].as_slice()[self.dims.ng_at(k)..]
    }

    /// Stage vector `z_k = (x_k, u_k, sigma_k)`.
    pub fn stage_vector(&self, k: usize) -> DVector<T> {
        let n = self.dims.horizon;
        let mut z = Vec::with_capacity(self.dims.nz(k));
        z.extend_from_slice(self.x[k].as_slice());
        if k < n {
            z.extend_from_slice(self.u[k].as_slice());
        }
        z.extend_from_slice(self.sigma[k].as_slice());
        DVector::from_vec(z)
    }

    /// Writes the stage vector back into `x_k`, `u_k`, `sigma_k`.
    pub fn set_stage_vector(&mut self, k: usize, z: &DVector<T>) {
        let (nx, nu) = (self.dims.nx, self.dims.nu_at(k));
        self.x[k].copy_from(&z.rows(0, nx));
        if k < self.dims.horizon {
            self.u[k].copy_from(&z.rows(nx, nu));
        }
        let ns = self.sigma[k].len();
        self.sigma[k].copy_from(&z.rows(nx + nu, ns));
    }

    /// Smallest entry over all multipliers and slacks of the inequalities.
    pub fn min_interior(&self) -> T {
        self.lam
            .iter()
            .chain(self.t.iter())
            .flat_map(|v| v.iter().copied())
            .fold(T::max_value().unwrap_or(T::of(f64::MAX)), |a, b| a.min(b))
    }

    pub fn is_strictly_interior(&self) -> bool {
        self.min_interior() > T::zero()
    }

    /// Average complementarity product `mean(lam_i t_i)`, or zero without inequalities.
    pub fn mean_complementarity(&self) -> T {
        let mut sum = T::zero();
        let mut count = 0usize;
        for (l, t) in self.lam.iter().zip(&self.t) {
            for (a, b) in l.iter().zip(t.iter()) {
                sum += *a * *b;
                count += 1;
            }
        }
        if count == 0 {
            T::zero()
        } else {
            sum / T::from_usize(count).unwrap()
        }
    }

    pub fn layout(&self) -> PackedLayout {
        PackedLayout::new(&self.dims, self.mode())
    }

    pub fn pack(&self) -> PackedVector<T> {
        let layout = self.layout();
        let mut data = DVector::zeros(layout.len());
        for k in 0..=self.dims.horizon {
            let o = layout.stage(k);
            data.rows_mut(o.x, self.dims.nx).copy_from(&self.x[k]);
            if k < self.dims.horizon {
                data.rows_mut(o.u, self.dims.nu).copy_from(&self.u[k]);
            }
            data.rows_mut(o.sigma, o.ns).copy_from(&self.sigma[k]);
            data.rows_mut(o.chi, self.dims.nx).copy_from(&self.chi[k]);
            data.rows_mut(o.lam, o.m).copy_from(&self.lam[k]);
            data.rows_mut(o.t, o.m).copy_from(&self.t[k]);
        }
        if let (Some(zo), Some(z)) = (layout.zeta(), &self.zeta) {
            data.rows_mut(zo, self.dims.nu).copy_from(z);
        }
        PackedVector { layout, data }
    }

    pub fn unpack(v: &PackedVector<T>, dims: &Dims, mode: Mode) -> Result<Self> {
        let layout = PackedLayout::new(dims, mode);
        if v.data.len() != layout.len() {
            return Err(Error::Dimension {
                what: "packed primal-dual vector".into(),
                expected: layout.len(),
                got: v.data.len(),
            });
        }
        let mut p = Self::zeros(dims, mode);
        let d = &v.data;
        for k in 0..=dims.horizon {
            let o = layout.stage(k);
            p.x[k].copy_from(&d.rows(o.x, dims.nx));
            if k < dims.horizon {
                p.u[k].copy_from(&d.rows(o.u, dims.nu));
            }
            p.sigma[k].copy_from(&d.rows(o.sigma, o.ns));
            p.chi[k].copy_from(&d.rows(o.chi, dims.nx));
            p.lam[k].copy_from(&d.rows(o.lam, o.m));
            p.t[k].copy_from(&d.rows(o.t, o.m));
        }
        if let (Some(zo), Some(z)) = (layout.zeta(), p.zeta.as_mut()) {
            z.copy_from(&d.rows(zo, dims.nu));
        }
        Ok(p)
    }

    /// `self += alpha * step` with `step` in packed form of the same layout.
    pub fn axpy(&mut self, alpha: T, step: &PackedVector<T>) {
        let mut packed = self.pack();
        packed.data.axpy(alpha, &step.data, T::one());
        *self = Self::unpack(&packed, &self.dims, self.mode()).expect("same layout");
    }

    /// The same point viewed in the other mode: switching to the action-value
    /// NLP adds `zeta = 0`, switching back drops it.
    pub fn with_mode(&self, mode: Mode) -> Self {
        let mut p = self.clone();
        p.zeta = match mode {
            Mode::Value => None,
            Mode::ActionValue => Some(self.zeta.clone().unwrap_or_else(|| DVector::zeros(self.dims.nu))),
        };
        p
    }
}
