//! Random problem generators and dense reference solvers for validating the
//! structured solver.

use crate::solver::{KktBlocks, QpModel, StageBlocks};
use crate::{Dims, Mode, PrimalDualPoint, Real};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Shape of a random stage-structured QP.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RandomQpSpec {
    pub nx: usize,
    pub nu: usize,
    pub horizon: usize,
    /// Box constraints on every input.
    pub input_box: bool,
    /// Soft path rows per stage `1..N`, each with its own slack.
    pub soft_rows: usize,
    pub terminal_soft_rows: usize,
    pub mode: Mode,
}

impl RandomQpSpec {
    pub fn dims(&self) -> Dims {
        Dims::new(self.nx, self.nu, 0, self.horizon)
            .with_input_constraints(if self.input_box { 2 * self.nu } else { 0 })
            .with_path_constraints(self.soft_rows, self.soft_rows, 1)
            .with_terminal_constraints(self.terminal_soft_rows, self.terminal_soft_rows)
    }

    /// Total number of primal variables `x, u, sigma`.
    pub fn n_primal(&self) -> usize {
        let d = self.dims();
        (0..=d.horizon).map(|k| d.nz(k)).sum()
    }
}

fn uniform<R: Rng, T: Real>(rng: &mut R, lo: f64, hi: f64) -> T {
    T::of(rng.random_range(lo..hi))
}

fn random_matrix<R: Rng, T: Real>(rng: &mut R, r: usize, c: usize, scale: f64) -> DMatrix<T> {
    DMatrix::from_fn(r, c, |_, _| uniform(rng, -scale, scale))
}

/// Strictly convex, feasible random QP linearized at `zbar = 0`.
pub fn random_qp<R: Rng, T: Real>(rng: &mut R, spec: &RandomQpSpec) -> QpModel<T> {
    let d = spec.dims();
    let n = d.horizon;
    let (nx, nu) = (d.nx, d.nu);
    let mut stages = Vec::with_capacity(n + 1);
    let mut grad = Vec::with_capacity(n + 1);
    let mut fval = Vec::with_capacity(n);
    let mut cval = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let nz = d.nz(k);
        let m = d.n_ineq(k);
        let ns = d.ns_at(k);
        let nh = d.nh_at(k);
        let ng = d.ng_at(k);
        let nxu = nz - ns;
        let l: DMatrix<T> = random_matrix(rng, nz, nz, 1.0);
        let mut h = &l * l.transpose() / T::from_usize(nz).unwrap();
        for i in 0..nz {
            h[(i, i)] += T::of(0.2);
        }
        let mut g: DVector<T> = DVector::from_fn(nz, |_, _| uniform(rng, -1.0, 1.0));
        for i in 0..ns {
            g[nxu + i] = uniform(rng, 1.0, 10.0);
        }
        let f = if k < n {
            let mut f = DMatrix::zeros(nx, nz);
            let a: DMatrix<T> = random_matrix(rng, nx, nx, 0.6);
            f.view_mut((0, 0), (nx, nx))
                .copy_from(&(a + DMatrix::identity(nx, nx) * T::of(0.5)));
            let b: DMatrix<T> = random_matrix(rng, nx, nu, 1.0);
            f.view_mut((0, nx), (nx, nu)).copy_from(&b);
            fval.push(DVector::from_fn(nx, |_, _| uniform(rng, -0.2, 0.2)));
            f
        } else {
            DMatrix::zeros(0, nz)
        };
        let mut j = DMatrix::zeros(m, nz);
        let mut c = DVector::zeros(m);
        if ng > 0 {
            for i in 0..nu {
                let bound: T = uniform(rng, 0.1, 1.0);
                j[(2 * i, nx + i)] = T::one();
                j[(2 * i + 1, nx + i)] = -T::one();
                c[2 * i] = -bound;
                c[2 * i + 1] = -bound;
            }
        }
        for i in 0..nh {
            for col in 0..nxu {
                j[(ng + i, col)] = uniform(rng, -1.0, 1.0);
            }
            j[(ng + i, nxu + i)] = -T::one();
            c[ng + i] = uniform(rng, -0.5, 0.2);
        }
        for i in 0..ns {
            j[(ng + nh + i, nxu + i)] = -T::one();
        }
        stages.push(StageBlocks {
            h,
            f,
            j,
            lam: DVector::from_element(m, T::one()),
            t: DVector::from_element(m, T::one()),
        });
        grad.push(g);
        cval.push(c);
    }
    let s = DVector::from_fn(nx, |_, _| uniform(rng, -2.0, 2.0));
    let a = match spec.mode {
        Mode::Value => None,
        Mode::ActionValue => Some(DVector::from_fn(nu, |_, _| uniform(rng, -0.1, 0.1))),
    };
    let zbar = (0..=n).map(|k| DVector::zeros(d.nz(k))).collect();
    QpModel::new(
        KktBlocks {
            dims: d,
            mode: spec.mode,
            stages,
        },
        zbar,
        grad,
        fval,
        cval,
        s,
        a,
    )
    .expect("consistent random blocks")
}

/// Random strictly interior primal-dual point for the dimensions of `qp`.
pub fn random_point<R: Rng, T: Real>(rng: &mut R, dims: &Dims, mode: Mode) -> PrimalDualPoint<T> {
    let mut p = PrimalDualPoint::zeros(dims, mode);
    let mut fill = |v: &mut DVector<T>, lo: f64, hi: f64| {
        for e in v.iter_mut() {
            *e = uniform(rng, lo, hi);
        }
    };
    for v in
        p.x.iter_mut()
            .chain(p.u.iter_mut())
            .chain(p.sigma.iter_mut())
            .chain(p.chi.iter_mut())
    {
        fill(v, -1.0, 1.0);
    }
    for v in p.lam.iter_mut().chain(p.t.iter_mut()) {
        fill(v, 0.1, 2.0);
    }
    if let Some(z) = p.zeta.as_mut() {
        fill(z, -1.0, 1.0);
    }
    p
}

/// The QP of a [`QpModel`] written over the stacked primal vector:
/// `min 1/2 z'Hz + g'z  s.t.  E z = e,  C z <= d`.
#[derive(Clone, Debug)]
pub struct DenseQp<T: Real> {
    pub h: DMatrix<T>,
    pub g: DVector<T>,
    pub e_mat: DMatrix<T>,
    pub e_rhs: DVector<T>,
    pub c_mat: DMatrix<T>,
    pub c_rhs: DVector<T>,
    /// Offset of each stage vector in the stacked primal vector.
    pub offsets: Vec<usize>,
}

impl<T: Real> DenseQp<T> {
    pub fn from_model(qp: &QpModel<T>) -> Self {
        let d = *qp.dims();
        let n = d.horizon;
        let nx = d.nx;
        let mut offsets = Vec::with_capacity(n + 1);
        let mut nzt = 0;
        for k in 0..=n {
            offsets.push(nzt);
            nzt += d.nz(k);
        }
        let n_eq = (n + 1) * nx + if qp.a.is_some() { d.nu } else { 0 };
        let n_in: usize = (0..=n).map(|k| d.n_ineq(k)).sum();
        let mut h = DMatrix::zeros(nzt, nzt);
        let mut g = DVector::zeros(nzt);
        let mut em = DMatrix::zeros(n_eq, nzt);
        let mut er = DVector::zeros(n_eq);
        let mut cm = DMatrix::zeros(n_in, nzt);
        let mut cr = DVector::zeros(n_in);
        let mut ci = 0;
        for k in 0..=n {
            let b = &qp.blocks.stages[k];
            let o = offsets[k];
            let nz = d.nz(k);
            h.view_mut((o, o), (nz, nz)).copy_from(&b.h);
            // grad + H (z - zbar)
            let gk = &qp.grad[k] - &b.h * &qp.zbar[k];
            g.rows_mut(o, nz).copy_from(&gk);
            for i in 0..nx {
                em[(k * nx + i, o + i)] = -T::one();
            }
            if k == 0 {
                er.rows_mut(0, nx).copy_from(&(-&qp.s));
            } else {
                let bp = &qp.blocks.stages[k - 1];
                let op = offsets[k - 1];
                let nzp = d.nz(k - 1);
                em.view_mut((k * nx, op), (nx, nzp)).copy_from(&bp.f);
                let rhs = -(&qp.fval[k - 1] - &bp.f * &qp.zbar[k - 1]);
                er.rows_mut(k * nx, nx).copy_from(&rhs);
            }
            let m = d.n_ineq(k);
            if m > 0 {
                cm.view_mut((ci, o), (m, nz)).copy_from(&b.j);
                let rhs = -(&qp.cval[k] - &b.j * &qp.zbar[k]);
                cr.rows_mut(ci, m).copy_from(&rhs);
                ci += m;
            }
        }
        if let Some(a) = &qp.a {
            let row = (n + 1) * nx;
            for i in 0..d.nu {
                em[(row + i, offsets[0] + nx + i)] = T::one();
                er[row + i] = a[i];
            }
        }
        Self {
            h,
            g,
            e_mat: em,
            e_rhs: er,
            c_mat: cm,
            c_rhs: cr,
            offsets,
        }
    }

    /// Stacks the stage vectors of `p`.
    pub fn primal_of(&self, p: &PrimalDualPoint<T>) -> DVector<T> {
        let mut z = DVector::zeros(self.g.len());
        for (k, &o) in self.offsets.iter().enumerate() {
            let zk = p.stage_vector(k);
            z.rows_mut(o, zk.len()).copy_from(&zk);
        }
        z
    }

    /// Dense primal-dual interior-point solve, driven to barrier `tau_end`.
    /// Returns `None` if it stalls.
    pub fn solve(&self, tau_end: T) -> Option<DVector<T>> {
        let nz = self.g.len();
        let ne = self.e_rhs.len();
        let ni = self.c_rhs.len();
        let mut z = DVector::zeros(nz);
        let mut y = DVector::zeros(ne);
        let mut lam = DVector::from_element(ni, T::one());
        let mut t = (&self.c_rhs - &self.c_mat * &z).map(|v| v.max(T::one()));
        let mut tau = T::one();
        for _ in 0..300 {
            let rd = &self.h * &z + &self.g + self.e_mat.tr_mul(&y) + self.c_mat.tr_mul(&lam);
            let re = &self.e_mat * &z - &self.e_rhs;
            let rp = &self.c_mat * &z - &self.c_rhs + &t;
            let rc = lam.component_mul(&t).add_scalar(-tau);
            let res = rd.amax().max(re.amax()).max(rp.amax()).max(rc.amax());
            if tau <= tau_end && res <= T::of(1e-13) * (T::one() + self.g.amax()) {
                return Some(z);
            }
            // Reduced system in (dz, dy) after eliminating dt and dlam.
            let w = lam.component_div(&t);
            let rho = (lam.component_mul(&rp) - &rc).component_div(&t);
            let mut k = DMatrix::zeros(nz + ne, nz + ne);
            let hc = &self.h + self.c_mat.tr_mul(&(DMatrix::from_diagonal(&w) * &self.c_mat));
            k.view_mut((0, 0), (nz, nz)).copy_from(&hc);
            k.view_mut((0, nz), (nz, ne)).copy_from(&self.e_mat.transpose());
            k.view_mut((nz, 0), (ne, nz)).copy_from(&self.e_mat);
            let mut rhs = DVector::zeros(nz + ne);
            rhs.rows_mut(0, nz).copy_from(&(-(rd + self.c_mat.tr_mul(&rho))));
            rhs.rows_mut(nz, ne).copy_from(&(-re));
            let sol = k.lu().solve(&rhs)?;
            let dz = sol.rows(0, nz).into_owned();
            let dy = sol.rows(nz, ne).into_owned();
            let cdz = &self.c_mat * &dz;
            let dlam = w.component_mul(&cdz) + rho;
            let dt = -rp - cdz;
            let mut alpha = T::one();
            for i in 0..ni {
                if dlam[i] < T::zero() {
                    alpha = alpha.min(-T::of(0.99) * lam[i] / dlam[i]);
                }
                if dt[i] < T::zero() {
                    alpha = alpha.min(-T::of(0.99) * t[i] / dt[i]);
                }
            }
            z += &dz * alpha;
            y += &dy * alpha;
            lam += &dlam * alpha;
            t += &dt * alpha;
            if alpha > T::of(0.2) {
                tau = (tau * T::of(0.1)).max(tau_end);
            }
        }
        None
    }
}
