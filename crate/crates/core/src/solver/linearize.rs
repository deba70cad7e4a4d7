use super::{HessianMode, KktBlocks, StageBlocks};
use crate::ad::StageFunction;
use crate::{Dims, Error, Mode, PackedLayout, PackedVector, ParametricOcp, PrimalDualPoint, Real, Result};
use nalgebra::{DMatrix, DVector};
use std::ops::Range;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum ThetaLevel {
    None,
    /// First derivatives of all functions with respect to theta.
    Jacobian,
    /// Also the mixed block `d/dtheta grad_z L`.
    Full,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct LinearizeOptions {
    pub hessian: Option<HessianMode>,
    pub theta: ThetaLevel,
    /// Eigenvalue floor of the regularized Hessian mode.
    pub reg_eps: f64,
}

impl LinearizeOptions {
    pub const JACOBIAN: Self = Self {
        hessian: None,
        theta: ThetaLevel::None,
        reg_eps: 1e-8,
    };
}

enum Role {
    Cost,
    Dynamics,
    Ineq(usize),
}

struct Piece<'a, T: Real> {
    f: &'a dyn StageFunction<T>,
    range: Range<usize>,
    role: Role,
    name: &'static str,
}

fn pieces<T: Real>(ocp: &ParametricOcp<T>, k: usize) -> Vec<Piece<'_, T>> {
    let d = ocp.dims();
    let (nx, nu) = (d.nx, d.nu);
    let nz = d.nz(k);
    let mut v = Vec::with_capacity(5);
    if k < d.horizon {
        v.push(Piece {
            f: &*ocp.stage_cost,
            range: 0..nx + nu,
            role: Role::Cost,
            name: "stage_cost",
        });
        if d.ns_at(k) > 0 {
            v.push(Piece {
                f: &*ocp.slack_penalty,
                range: nx + nu..nz,
                role: Role::Cost,
                name: "slack_penalty",
            });
        }
        v.push(Piece {
            f: &*ocp.dynamics,
            range: 0..nx + nu,
            role: Role::Dynamics,
            name: "dynamics",
        });
        if d.ng > 0 {
            v.push(Piece {
                f: &*ocp.input_constraint,
                range: nx..nx + nu,
                role: Role::Ineq(0),
                name: "input_constraint",
            });
        }
        if d.nh_at(k) > 0 {
            v.push(Piece {
                f: &*ocp.path_constraint,
                range: 0..nz,
                role: Role::Ineq(d.ng),
                name: "path_constraint",
            });
        }
    } else {
        v.push(Piece {
            f: &*ocp.terminal_cost,
            range: 0..nx,
            role: Role::Cost,
            name: "terminal_cost",
        });
        if d.ns_terminal > 0 {
            v.push(Piece {
                f: &*ocp.terminal_slack_penalty,
                range: nx..nz,
                role: Role::Cost,
                name: "terminal_slack_penalty",
            });
        }
        if d.nh_terminal > 0 {
            v.push(Piece {
                f: &*ocp.terminal_constraint,
                range: 0..nz,
                role: Role::Ineq(0),
                name: "terminal_constraint",
            });
        }
    }
    v
}

/// Parameter derivatives of one stage.
#[derive(Clone, Debug)]
pub(crate) struct StageTheta<T: Real> {
    /// Gradient of the stage cost terms.
    pub cost: DVector<T>,
    /// `nx x n_theta`, empty at the terminal stage.
    pub f: DMatrix<T>,
    /// `m x n_theta`
    pub c: DMatrix<T>,
    /// `nz x n_theta`: mixed derivative of `grad_z L_k`; zero unless requested.
    pub stat: DMatrix<T>,
}

/// Local quadratic model of the NLP around a primal point `zbar`.
///
/// The QP has the same residual layout as the NLP: stationarity
/// `grad + H (z - zbar) - E chi_k + F^T chi_{k+1} + J^T lam`, dynamics
/// `fval + F (z_{k-1} - zbar_{k-1}) - x_k`, inequalities
/// `cval + J (z - zbar) + t`. At `z = zbar` it coincides with the NLP
/// residual.
#[derive(Clone, Debug)]
pub struct QpModel<T: Real> {
    pub blocks: KktBlocks<T>,
    pub zbar: Vec<DVector<T>>,
    pub grad: Vec<DVector<T>>,
    /// Dynamics values `f(zbar_k)`, one per stage `k < N`.
    pub fval: Vec<DVector<T>>,
    pub cval: Vec<DVector<T>>,
    pub s: DVector<T>,
    pub a: Option<DVector<T>>,
    pub(crate) theta: Option<Vec<StageTheta<T>>>,
}

impl<T: Real> QpModel<T> {
    /// A QP given directly by its blocks. Multipliers and slacks stored in
    /// `blocks` are ignored by the solver.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        blocks: KktBlocks<T>,
        zbar: Vec<DVector<T>>,
        grad: Vec<DVector<T>>,
        fval: Vec<DVector<T>>,
        cval: Vec<DVector<T>>,
        s: DVector<T>,
        a: Option<DVector<T>>,
    ) -> Result<Self> {
        let d = blocks.dims;
        let n = d.horizon;
        let ok = blocks.stages.len() == n + 1
            && zbar.len() == n + 1
            && grad.len() == n + 1
            && fval.len() == n
            && cval.len() == n + 1
            && s.len() == d.nx
            && a.is_some() == (blocks.mode == Mode::ActionValue)
            && a.as_ref().is_none_or(|a| a.len() == d.nu)
            && (0..=n).all(|k| {
                let b = &blocks.stages[k];
                let (nz, m) = (d.nz(k), d.n_ineq(k));
                b.h.shape() == (nz, nz)
                    && b.f.shape() == (if k < n { d.nx } else { 0 }, nz)
                    && b.j.shape() == (m, nz)
                    && zbar[k].len() == nz
                    && grad[k].len() == nz
                    && cval[k].len() == m
                    && (k == n || fval[k].len() == d.nx)
            });
        if !ok {
            return Err(Error::InvalidArgument("QP block dimensions are inconsistent".into()));
        }
        Ok(Self {
            blocks,
            zbar,
            grad,
            fval,
            cval,
            s,
            a,
            theta: None,
        })
    }

    pub fn dims(&self) -> &Dims {
        &self.blocks.dims
    }

    pub fn mode(&self) -> Mode {
        self.blocks.mode
    }

    fn dz(&self, p: &PrimalDualPoint<T>, k: usize) -> DVector<T> {
        p.stage_vector(k) - &self.zbar[k]
    }

    /// Evaluates the QP residual at `p` with barrier parameter `tau`.
    pub fn residual(&self, p: &PrimalDualPoint<T>, tau: T) -> PackedVector<T> {
        let d = *self.dims();
        let n = d.horizon;
        let layout = PackedLayout::new(&d, self.mode());
        let mut r = DVector::zeros(layout.len());
        let dzs: Vec<DVector<T>> = (0..=n).map(|k| self.dz(p, k)).collect();
        for k in 0..=n {
            let o = layout.stage(k);
            let b = &self.blocks.stages[k];
            let mut stat = &self.grad[k] + &b.h * &dzs[k];
            if b.j.nrows() > 0 {
                stat += b.j.tr_mul(&p.lam[k]);
            }
            {
                let mut sx = stat.rows_mut(0, d.nx);
                sx -= &p.chi[k];
            }
            if k < n {
                stat += b.f.tr_mul(&p.chi[k + 1]);
            }
            if k == 0 {
                if let Some(z) = &p.zeta {
                    let mut su = stat.rows_mut(d.nx, d.nu);
                    su += z;
                }
            }
            r.rows_mut(o.x, stat.len()).copy_from(&stat);

            let eq = if k == 0 {
                &self.s - &p.x[0]
            } else {
                let bp = &self.blocks.stages[k - 1];
                &self.fval[k - 1] + &bp.f * &dzs[k - 1] - &p.x[k]
            };
            r.rows_mut(o.chi, d.nx).copy_from(&eq);

            if o.m > 0 {
                let prim = &self.cval[k] + &b.j * &dzs[k] + &p.t[k];
                r.rows_mut(o.lam, o.m).copy_from(&prim);
                let comp = p.lam[k].component_mul(&p.t[k]).add_scalar(-tau);
                r.rows_mut(o.t, o.m).copy_from(&comp);
            }
        }
        if let (Some(zo), Some(a)) = (layout.zeta(), &self.a) {
            let row = &p.u[0] - a;
            r.rows_mut(zo, d.nu).copy_from(&row);
        }
        PackedVector::from_data(layout, r)
    }

    /// Inequality values of the model at the primal part of `p`.
    pub(crate) fn constraint_values(&self, p: &PrimalDualPoint<T>, k: usize) -> DVector<T> {
        &self.cval[k] + &self.blocks.stages[k].j * self.dz(p, k)
    }

    /// Loads multipliers and slacks of `p` into the KKT blocks.
    pub(crate) fn load_duals(&mut self, p: &PrimalDualPoint<T>) {
        for (k, b) in self.blocks.stages.iter_mut().enumerate() {
            b.lam.copy_from(&p.lam[k]);
            b.t.copy_from(&p.t[k]);
        }
    }
}

/// Linearizes the NLP at `p`: constraint values and Jacobians, cost
/// gradients and, if requested, Hessian blocks and parameter derivatives.
pub(crate) fn linearize<T: Real>(
    ocp: &ParametricOcp<T>,
    p: &PrimalDualPoint<T>,
    s: &DVector<T>,
    a: Option<&DVector<T>>,
    opts: LinearizeOptions,
) -> Result<QpModel<T>> {
    let d = *ocp.dims();
    check_point(&d, p, s, a)?;
    let n = d.horizon;
    let th = ocp.theta().as_slice();
    let n_theta = th.len();
    let mode = p.mode();
    let with_theta = opts.theta != ThetaLevel::None;
    let full_theta = opts.theta == ThetaLevel::Full;

    let mut stages = Vec::with_capacity(n + 1);
    let mut zbar = Vec::with_capacity(n + 1);
    let mut grads = Vec::with_capacity(n + 1);
    let mut fvals = Vec::with_capacity(n);
    let mut cvals = Vec::with_capacity(n + 1);
    let mut thetas = Vec::with_capacity(if with_theta { n + 1 } else { 0 });

    for k in 0..=n {
        let nz = d.nz(k);
        let m = d.n_ineq(k);
        let z = p.stage_vector(k);
        let mut grad = DVector::zeros(nz);
        let mut h = DMatrix::zeros(nz, nz);
        let mut f = DMatrix::zeros(if k < n { d.nx } else { 0 }, nz);
        let mut fval = DVector::zeros(if k < n { d.nx } else { 0 });
        let mut c = DVector::zeros(m);
        let mut j = DMatrix::zeros(m, nz);
        let tcols = if with_theta { n_theta } else { 0 };
        let mut st = StageTheta {
            cost: DVector::zeros(tcols),
            f: DMatrix::zeros(fval.len(), tcols),
            c: DMatrix::zeros(m, tcols),
            stat: DMatrix::zeros(nz, if full_theta { n_theta } else { 0 }),
        };

        for piece in pieces(ocp, k) {
            let v = &z.as_slice()[piece.range.clone()];
            let len = piece.range.len();
            let r0 = piece.range.start;
            let jac = piece.f.jacobians(k, v, th, with_theta);
            let n_out = jac.value.len();
            let weights: Vec<T> = match piece.role {
                Role::Cost => {
                    let mut g = grad.rows_mut(r0, len);
                    g += jac.d_v.row(0).transpose();
                    if with_theta {
                        st.cost += jac.d_theta.row(0).transpose();
                    }
                    vec![T::one()]
                }
                Role::Dynamics => {
                    fval.copy_from(&jac.value);
                    f.view_mut((0, r0), (d.nx, len)).copy_from(&jac.d_v);
                    if with_theta {
                        st.f.copy_from(&jac.d_theta);
                    }
                    p.chi[k + 1].as_slice().to_vec()
                }
                Role::Ineq(off) => {
                    c.rows_mut(off, n_out).copy_from(&jac.value);
                    j.view_mut((off, r0), (n_out, len)).copy_from(&jac.d_v);
                    if with_theta {
                        st.c.rows_mut(off, n_out).copy_from(&jac.d_theta);
                    }
                    p.lam[k].as_slice()[off..off + n_out].to_vec()
                }
            };
            let want_h = match opts.hessian {
                None => false,
                Some(HessianMode::GaussNewton) => matches!(piece.role, Role::Cost),
                Some(_) => true,
            };
            if want_h || full_theta {
                let hs = piece
                    .f
                    .weighted_hessians(k, v, th, &weights, full_theta)
                    .map_err(|e| match e {
                        Error::Capability(msg) => Error::Capability(format!("{} at stage {k}: {msg}", piece.name)),
                        other => other,
                    })?;
                if want_h {
                    let mut hb = h.view_mut((r0, r0), (len, len));
                    hb += &hs.d_vv;
                }
                if full_theta {
                    let mut sb = st.stat.rows_mut(r0, len);
                    sb += &hs.d_vtheta;
                }
            }
        }
        let ns = d.ns_at(k);
        let row0 = m - ns;
        let col0 = nz - ns;
        for i in 0..ns {
            c[row0 + i] = -z[col0 + i];
            j[(row0 + i, col0 + i)] = -T::one();
        }
        if opts.hessian == Some(HessianMode::Regularized) {
            h = project_pd(h, T::of(opts.reg_eps));
        }

        stages.push(StageBlocks {
            h,
            f,
            j,
            lam: p.lam[k].clone(),
            t: p.t[k].clone(),
        });
        zbar.push(z);
        grads.push(grad);
        if k < n {
            fvals.push(fval);
        }
        cvals.push(c);
        if with_theta {
            thetas.push(st);
        }
    }
    Ok(QpModel {
        blocks: KktBlocks { dims: d, mode, stages },
        zbar,
        grad: grads,
        fval: fvals,
        cval: cvals,
        s: s.clone(),
        a: a.cloned(),
        theta: if with_theta { Some(thetas) } else { None },
    })
}

/// Symmetric eigenvalue projection onto matrices with spectrum `>= eps`.
pub(crate) fn project_pd<T: Real>(h: DMatrix<T>, eps: T) -> DMatrix<T> {
    if h.nrows() == 0 {
        return h;
    }
    let sym = (&h + h.transpose()) * T::of(0.5);
    let eig = sym.symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= eps) {
        return h;
    }
    let lam = eig.eigenvalues.map(|l| l.max(eps));
    &eig.eigenvectors * DMatrix::from_diagonal(&lam) * eig.eigenvectors.transpose()
}

pub(crate) fn check_point<T: Real>(
    d: &Dims,
    p: &PrimalDualPoint<T>,
    s: &DVector<T>,
    a: Option<&DVector<T>>,
) -> Result<()> {
    if p.dims != *d {
        return Err(Error::InvalidArgument("point dimensions differ from problem".into()));
    }
    if s.len() != d.nx {
        return Err(Error::Dimension {
            what: "initial state".into(),
            expected: d.nx,
            got: s.len(),
        });
    }
    match (p.mode(), a) {
        (Mode::Value, None) => Ok(()),
        (Mode::ActionValue, Some(a)) if a.len() == d.nu => Ok(()),
        (Mode::ActionValue, Some(a)) => Err(Error::Dimension {
            what: "action".into(),
            expected: d.nu,
            got: a.len(),
        }),
        (Mode::Value, Some(_)) => Err(Error::InvalidArgument("action given for a value-mode point".into())),
        (Mode::ActionValue, None) => Err(Error::InvalidArgument("action-value point requires an action".into())),
    }
}

/// Residual of the interior-point KKT system of the NLP at `p`.
///
/// `a` selects the action-value NLP; `p` must then carry `zeta`.
pub fn kkt_residual<T: Real>(
    ocp: &ParametricOcp<T>,
    s: &DVector<T>,
    a: Option<&DVector<T>>,
    p: &PrimalDualPoint<T>,
    tau: T,
) -> Result<PackedVector<T>> {
    if !p.is_strictly_interior() {
        return Err(Error::NotInterior(format!(
            "smallest multiplier or slack is {:e}",
            p.min_interior()
        )));
    }
    let model = linearize(ocp, p, s, a, LinearizeOptions::JACOBIAN)?;
    Ok(model.residual(p, tau))
}
