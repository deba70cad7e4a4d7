use crate::{Dims, Mode, PackedLayout, PackedVector, Real};
use nalgebra::{DMatrix, DVector};

/// Per-stage pieces of the Newton matrix of the KKT residual.
#[derive(Clone, Debug, PartialEq)]
pub struct StageBlocks<T: Real> {
    /// Hessian of the Lagrangian with respect to `z_k`, `nz x nz`.
    pub h: DMatrix<T>,
    /// Dynamics Jacobian `[A B 0]`, `nx x nz`; `0 x nz` at the terminal stage.
    pub f: DMatrix<T>,
    /// Inequality Jacobian, `m x nz`.
    pub j: DMatrix<T>,
    pub lam: DVector<T>,
    pub t: DVector<T>,
}

/// Stage-structured Jacobian of the KKT residual with respect to the
/// packed primal-dual vector.
#[derive(Clone, Debug, PartialEq)]
pub struct KktBlocks<T: Real> {
    pub dims: Dims,
    pub mode: Mode,
    pub stages: Vec<StageBlocks<T>>,
}

impl<T: Real> KktBlocks<T> {
    pub fn layout(&self) -> PackedLayout {
        PackedLayout::new(&self.dims, self.mode)
    }

    /// Dense Jacobian in packed row and column order.
    pub fn dense(&self) -> DMatrix<T> {
        let d = &self.dims;
        let layout = self.layout();
        let len = layout.len();
        let n = d.horizon;
        let nx = d.nx;
        let mut m = DMatrix::zeros(len, len);
        for k in 0..=n {
            let o = layout.stage(k);
            let b = &self.stages[k];
            let nz = o.chi - o.x;
            m.view_mut((o.x, o.x), (nz, nz)).copy_from(&b.h);
            for i in 0..nx {
                m[(o.x + i, o.chi + i)] = -T::one();
                m[(o.chi + i, o.x + i)] = -T::one();
            }
            if k < n {
                let on = layout.stage(k + 1);
                m.view_mut((o.x, on.chi), (nz, nx)).copy_from(&b.f.transpose());
                m.view_mut((on.chi, o.x), (nx, nz)).copy_from(&b.f);
            }
            if o.m > 0 {
                m.view_mut((o.x, o.lam), (nz, o.m)).copy_from(&b.j.transpose());
                m.view_mut((o.lam, o.x), (o.m, nz)).copy_from(&b.j);
                for i in 0..o.m {
                    m[(o.lam + i, o.t + i)] = T::one();
                    m[(o.t + i, o.lam + i)] = b.t[i];
                    m[(o.t + i, o.t + i)] = b.lam[i];
                }
            }
        }
        if let Some(zo) = layout.zeta() {
            let u = layout.stage(0).u;
            for i in 0..d.nu {
                m[(u + i, zo + i)] = T::one();
                m[(zo + i, u + i)] = T::one();
            }
        }
        m
    }

    /// Matrix-vector product with the Jacobian, stage by stage.
    pub fn apply(&self, v: &PackedVector<T>) -> PackedVector<T> {
        let d = &self.dims;
        let layout = self.layout();
        assert_eq!(v.layout, layout, "layout of the multiplied vector");
        let n = d.horizon;
        let nx = d.nx;
        let x = &v.data;
        let mut y = DVector::zeros(layout.len());
        for k in 0..=n {
            let o = layout.stage(k);
            let b = &self.stages[k];
            let nz = o.chi - o.x;
            let z = x.rows(o.x, nz);
            let mut stat = &b.h * z;
            {
                let mut sx = stat.rows_mut(0, nx);
                sx -= x.rows(o.chi, nx);
            }
            if k < n {
                let on = layout.stage(k + 1);
                stat += b.f.tr_mul(&x.rows(on.chi, nx));
                let mut eq = y.rows_mut(on.chi, nx);
                eq += &b.f * z;
            }
            if o.m > 0 {
                let lam = x.rows(o.lam, o.m);
                let t = x.rows(o.t, o.m);
                stat += b.j.tr_mul(&lam);
                let prim = &b.j * z + t;
                y.rows_mut(o.lam, o.m).copy_from(&prim);
                let comp = b.t.component_mul(&lam) + b.lam.component_mul(&t);
                y.rows_mut(o.t, o.m).copy_from(&comp);
            }
            if k == 0 {
                if let Some(zo) = layout.zeta() {
                    let mut su = stat.rows_mut(nx, d.nu);
                    su += x.rows(zo, d.nu);
                    y.rows_mut(zo, d.nu).copy_from(&x.rows(o.u, d.nu));
                }
            }
            let mut ys = y.rows_mut(o.x, nz);
            ys += &stat;
            let mut eq = y.rows_mut(o.chi, nx);
            eq -= x.rows(o.x, nx);
        }
        PackedVector::from_data(layout, y)
    }
}
