use super::KktBlocks;
use crate::{Dims, Error, Mode, PackedLayout, PackedVector, Real, Result};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use std::cell::Cell;
use std::ops::Range;

thread_local! {
    static FACTORIZATIONS: Cell<usize> = const { Cell::new(0) };
}

/// Number of Riccati factorizations performed on the current thread.
pub fn factorization_count() -> usize {
    FACTORIZATIONS.with(|c| c.get())
}

struct StageFactor<T: Real> {
    /// `H + J^T W J` (plus any regularization).
    ht: DMatrix<T>,
    f: DMatrix<T>,
    j: DMatrix<T>,
    lam: DVector<T>,
    t: DVector<T>,
    w: DVector<T>,
    /// Free generalized inputs eliminated at this stage.
    q: Range<usize>,
    /// Inputs fixed by the action constraint.
    fixed: Range<usize>,
    chol: Option<Cholesky<T, Dyn>>,
    gain: DMatrix<T>,
    /// Cost-to-go Hessian of the stage state.
    p: DMatrix<T>,
}

/// Riccati factorization of the barrier-condensed Newton matrix.
///
/// The inequality multipliers and slacks are eliminated stagewise with
/// `W = diag(lam / t)`, which leaves an equality-constrained problem in the
/// stage vectors solved by a backward Riccati sweep. A factorization can be
/// reused for any number of right-hand sides.
pub struct RiccatiFactorization<T: Real> {
    dims: Dims,
    mode: Mode,
    stages: Vec<StageFactor<T>>,
    reg: T,
}

fn sub<T: Real>(m: &DMatrix<T>, r: Range<usize>, c: Range<usize>) -> DMatrix<T> {
    m.view((r.start, c.start), (r.len(), c.len())).into_owned()
}

impl<T: Real> RiccatiFactorization<T> {
    /// Factorizes the Newton matrix described by `blocks` with `reg * I`
    /// added to every stage Hessian.
    pub fn factorize(blocks: &KktBlocks<T>, reg: T) -> Result<Self> {
        FACTORIZATIONS.with(|c| c.set(c.get() + 1));
        let d = blocks.dims;
        let n = d.horizon;
        let nx = d.nx;
        let q_mode = blocks.mode == Mode::ActionValue;
        let mut stages: Vec<StageFactor<T>> = Vec::with_capacity(n + 1);
        for (k, b) in blocks.stages.iter().enumerate() {
            let nz = d.nz(k);
            if b.t.iter().any(|&ti| ti <= T::zero()) {
                return Err(Error::NotInterior(format!("stage {k} has a non-positive slack")));
            }
            let w = b.lam.component_div(&b.t);
            let mut ht = b.h.clone();
            if b.j.nrows() > 0 {
                let wj = DMatrix::from_diagonal(&w) * &b.j;
                ht += b.j.tr_mul(&wj);
            }
            if reg != T::zero() {
                for i in 0..nz {
                    ht[(i, i)] += reg;
                }
            }
            let (q, fixed) = if k == 0 && q_mode {
                (nx + d.nu..nz, nx..nx + d.nu)
            } else {
                (nx..nz, nx..nx)
            };
            stages.push(StageFactor {
                ht,
                f: b.f.clone(),
                j: b.j.clone(),
                lam: b.lam.clone(),
                t: b.t.clone(),
                w,
                q,
                fixed,
                chol: None,
                gain: DMatrix::zeros(0, nx),
                p: DMatrix::zeros(nx, nx),
            });
        }

        for k in (0..=n).rev() {
            let (p_next, st) = if k < n {
                let (lo, hi) = stages.split_at_mut(k + 1);
                (Some(&hi[0].p), &mut lo[k])
            } else {
                (None, &mut stages[k])
            };
            let x = 0..nx;
            let q = st.q.clone();
            let mut qxx = sub(&st.ht, x.clone(), x.clone());
            let mut s = sub(&st.ht, q.clone(), x.clone());
            let mut r = sub(&st.ht, q.clone(), q.clone());
            if let Some(pn) = p_next {
                let a = sub(&st.f, 0..nx, x.clone());
                let bq = sub(&st.f, 0..nx, q.clone());
                let pa = pn * &a;
                qxx += a.tr_mul(&pa);
                s += bq.tr_mul(&pa);
                r += bq.tr_mul(&(pn * &bq));
            }
            if q.is_empty() {
                st.gain = DMatrix::zeros(0, nx);
                st.p = qxx;
            } else {
                let r = (&r + r.transpose()) * T::of(0.5);
                let chol = Cholesky::new(r).ok_or(Error::Factorization { stage: k })?;
                let gain = -chol.solve(&s);
                let mut p = qxx + s.tr_mul(&gain);
                p = (&p + p.transpose()) * T::of(0.5);
                st.gain = gain;
                st.p = p;
                st.chol = Some(chol);
            }
        }
        Ok(Self {
            dims: d,
            mode: blocks.mode,
            stages,
            reg,
        })
    }

    /// Regularization shift the factorization was computed with.
    pub fn regularization(&self) -> T {
        self.reg
    }

    pub fn layout(&self) -> PackedLayout {
        PackedLayout::new(&self.dims, self.mode)
    }

    /// Solves `M delta = rhs` for the factorized Newton matrix `M`.
    pub fn backsolve(&self, rhs: &PackedVector<T>) -> PackedVector<T> {
        let mut neg = rhs.clone();
        neg.data.neg_mut();
        self.newton_step(&neg)
    }

    /// Solves `M delta = -r`.
    pub fn newton_step(&self, r: &PackedVector<T>) -> PackedVector<T> {
        let d = &self.dims;
        let n = d.horizon;
        let nx = d.nx;
        let layout = self.layout();
        assert_eq!(r.layout, layout, "right-hand side layout");
        let rv = &r.data;
        let x = 0..nx;

        let mut rho = Vec::with_capacity(n + 1);
        let mut rt = Vec::with_capacity(n + 1);
        let mut req = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let o = layout.stage(k);
            let st = &self.stages[k];
            let nz = o.chi - o.x;
            let mut r_stat = rv.rows(o.x, nz).into_owned();
            let rh = if o.m > 0 {
                let rp = rv.rows(o.lam, o.m);
                let rc = rv.rows(o.t, o.m);
                let rh = (st.lam.component_mul(&rp) - rc).component_div(&st.t);
                r_stat += st.j.tr_mul(&rh);
                rh
            } else {
                DVector::zeros(0)
            };
            rho.push(rh);
            rt.push(r_stat);
            req.push(rv.rows(o.chi, nx).into_owned());
        }
        let du_fixed: DVector<T> = match layout.zeta() {
            Some(zo) => -rv.rows(zo, d.nu).into_owned(),
            None => DVector::zeros(0),
        };

        // Backward sweep for the affine terms.
        let mut kff: Vec<DVector<T>> = vec![DVector::zeros(0); n + 1];
        let mut p_next: DVector<T> = DVector::zeros(nx);
        for k in (0..=n).rev() {
            let st = &self.stages[k];
            let q = st.q.clone();
            let mut qx = rt[k].rows(0, nx).into_owned();
            let mut qq = rt[k].rows(q.start, q.len()).into_owned();
            if k < n {
                let mut e = req[k + 1].clone();
                if !st.fixed.is_empty() {
                    e += sub(&st.f, 0..nx, st.fixed.clone()) * &du_fixed;
                    qx += sub(&st.ht, x.clone(), st.fixed.clone()) * &du_fixed;
                    qq += sub(&st.ht, q.clone(), st.fixed.clone()) * &du_fixed;
                }
                let v = &self.stages[k + 1].p * e + &p_next;
                qx += sub(&st.f, 0..nx, x.clone()).tr_mul(&v);
                qq += sub(&st.f, 0..nx, q.clone()).tr_mul(&v);
            }
            let kf = match &st.chol {
                Some(c) => -c.solve(&qq),
                None => DVector::zeros(0),
            };
            p_next = qx + st.gain.tr_mul(&qq);
            kff[k] = kf;
        }

        // Forward sweep for the stage vectors.
        let mut dz: Vec<DVector<T>> = Vec::with_capacity(n + 1);
        let mut dx = req[0].clone();
        for k in 0..=n {
            let st = &self.stages[k];
            let nz = d.nz(k);
            let mut z = DVector::zeros(nz);
            z.rows_mut(0, nx).copy_from(&dx);
            if !st.fixed.is_empty() {
                z.rows_mut(st.fixed.start, st.fixed.len()).copy_from(&du_fixed);
            }
            let dq = &st.gain * &dx + &kff[k];
            z.rows_mut(st.q.start, st.q.len()).copy_from(&dq);
            if k < n {
                dx = &st.f * &z + &req[k + 1];
            }
            dz.push(z);
        }

        // Costates from the state rows of stationarity.
        let mut dchi: Vec<DVector<T>> = vec![DVector::zeros(nx); n + 1];
        for k in (0..=n).rev() {
            let st = &self.stages[k];
            let hz = &st.ht * &dz[k] + &rt[k];
            let mut c = hz.rows(0, nx).into_owned();
            if k < n {
                c += sub(&st.f, 0..nx, x.clone()).tr_mul(&dchi[k + 1]);
            }
            dchi[k] = c;
        }

        let mut out = DVector::zeros(layout.len());
        for k in 0..=n {
            let o = layout.stage(k);
            let st = &self.stages[k];
            out.rows_mut(o.x, dz[k].len()).copy_from(&dz[k]);
            out.rows_mut(o.chi, nx).copy_from(&dchi[k]);
            if o.m > 0 {
                let jdz = &st.j * &dz[k];
                let dl = st.w.component_mul(&jdz) + &rho[k];
                let dt = -rv.rows(o.lam, o.m) - jdz;
                out.rows_mut(o.lam, o.m).copy_from(&dl);
                out.rows_mut(o.t, o.m).copy_from(&dt);
            }
        }
        if let Some(zo) = layout.zeta() {
            let st = &self.stages[0];
            let u = nx..nx + d.nu;
            let hz = &st.ht * &dz[0] + &rt[0];
            let mut dzeta = -hz.rows(u.start, u.len()).into_owned();
            if n > 0 {
                dzeta -= sub(&st.f, 0..nx, u).tr_mul(&dchi[1]);
            }
            out.rows_mut(zo, d.nu).copy_from(&dzeta);
        }
        PackedVector::from_data(layout, out)
    }
}
