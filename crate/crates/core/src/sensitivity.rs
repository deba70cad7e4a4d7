//! Parametric sensitivities of NLP solutions.
//!
//! Value and action-value gradients follow from the parameter gradient of
//! the Lagrangian at the solution. The policy gradient differentiates the
//! interior-point KKT system `xi(y, theta) = 0` at fixed `tau`:
//! `d_y xi * dy/dtheta = -d_theta xi`, and reads the `u_0` rows of
//! `dy/dtheta`. The structured method solves the columns with one Riccati
//! factorization; the dense method factorizes the assembled matrix.

use crate::solver::{linearize, sqp_solve, LinearizeOptions, QpModel, RiccatiFactorization, ThetaLevel};
use crate::solver::{HessianMode, Solution, SolverSettings};
use crate::{Error, Mode, PackedLayout, PackedVector, ParametricOcp, PrimalDualPoint, Real, Result};
use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivityMethod {
    /// Riccati factorization reused for every parameter column.
    Structured,
    /// LU factorization of the assembled KKT Jacobian.
    Dense,
    /// One warm-started re-solve per parameter.
    FiniteDifference,
}

/// Jacobians of the KKT residual in packed ordering.
#[derive(Clone, Debug)]
pub struct KktJacobians<T: Real> {
    pub layout: PackedLayout,
    pub d_xi_d_y: DMatrix<T>,
    pub d_xi_d_theta: DMatrix<T>,
}

#[derive(Clone, Debug)]
pub struct SensitivityBundle<T: Real> {
    pub grad_v: DVector<T>,
    /// Action-value gradient at `a = pi(s)`, which equals `grad_v`.
    pub grad_q: DVector<T>,
    /// `nu x n_theta`
    pub grad_pi: DMatrix<T>,
    pub method: SensitivityMethod,
    /// `|d_y xi * dy/dtheta + d_theta xi|_inf`; NaN for finite differences.
    pub residual_check: f64,
}

/// Full solution sensitivity `dy/dtheta` (packed rows, one column per
/// parameter) with its linear-system residual.
#[derive(Clone, Debug)]
pub struct SolutionSensitivity<T: Real> {
    pub layout: PackedLayout,
    pub dy_dtheta: DMatrix<T>,
    pub residual_check: f64,
}

impl<T: Real> SolutionSensitivity<T> {
    /// The `u_0` rows.
    pub fn policy_rows(&self) -> DMatrix<T> {
        let r = self.layout.u0_range();
        self.dy_dtheta.rows(r.start, r.len()).into_owned()
    }
}

/// Lagrangian at `point`: objective plus multiplier-weighted constraints.
pub fn lagrangian<T: Real>(
    ocp: &ParametricOcp<T>,
    s: &DVector<T>,
    a: Option<&DVector<T>>,
    point: &PrimalDualPoint<T>,
) -> Result<T> {
    let d = *ocp.dims();
    if point.dims != d || s.len() != d.nx {
        return Err(Error::InvalidArgument(
            "point or state dimensions differ from problem".into(),
        ));
    }
    let th = ocp.theta().as_slice();
    let mut l = ocp.objective(point);
    l += point.chi[0].dot(&(s - &point.x[0]));
    for k in 0..d.horizon {
        let xu = crate::ocp::xu_vector(&point.x[k], &point.u[k]);
        let f = ocp.dynamics.eval(k, xu.as_slice(), th);
        l += point.chi[k + 1].dot(&(f - &point.x[k + 1]));
    }
    for k in 0..=d.horizon {
        if !point.lam[k].is_empty() {
            l += point.lam[k].dot(&ocp.inequality(k, point));
        }
    }
    if let (Some(z), Some(a)) = (&point.zeta, a) {
        l += z.dot(&(&point.u[0] - a));
    }
    Ok(l)
}

fn theta_gradient<T: Real>(ocp: &ParametricOcp<T>, sol: &Solution<T>) -> Result<DVector<T>> {
    let opts = LinearizeOptions {
        hessian: None,
        theta: ThetaLevel::Jacobian,
        reg_eps: 0.0,
    };
    let model = linearize(ocp, &sol.point, &sol.s, sol.a.as_ref(), opts)?;
    let p = &sol.point;
    let mut g = DVector::zeros(ocp.dims().n_theta);
    for (k, st) in model.theta.as_ref().expect("requested").iter().enumerate() {
        g += &st.cost;
        if k < ocp.dims().horizon {
            g += st.f.tr_mul(&p.chi[k + 1]);
        }
        if st.c.nrows() > 0 {
            g += st.c.tr_mul(&p.lam[k]);
        }
    }
    Ok(g)
}

fn require(sol: &Solution<impl Real>, mode: Mode) -> Result<()> {
    sol.require_converged()?;
    if sol.mode() != mode {
        return Err(Error::InvalidArgument(format!(
            "expected a {mode:?} solution, got {:?}",
            sol.mode()
        )));
    }
    Ok(())
}

/// Gradient of the value function: `d/dtheta L` at a converged value solution.
pub fn grad_v_theta<T: Real>(ocp: &ParametricOcp<T>, sol: &Solution<T>) -> Result<DVector<T>> {
    require(sol, Mode::Value)?;
    theta_gradient(ocp, sol)
}

/// Gradient of the action-value function at a converged action-value solution.
pub fn grad_q_theta<T: Real>(ocp: &ParametricOcp<T>, sol: &Solution<T>) -> Result<DVector<T>> {
    require(sol, Mode::ActionValue)?;
    theta_gradient(ocp, sol)
}

fn ift_model<T: Real>(
    ocp: &ParametricOcp<T>,
    s: &DVector<T>,
    a: Option<&DVector<T>>,
    point: &PrimalDualPoint<T>,
    theta: bool,
) -> Result<QpModel<T>> {
    let opts = LinearizeOptions {
        hessian: Some(HessianMode::Exact),
        theta: if theta { ThetaLevel::Full } else { ThetaLevel::None },
        reg_eps: 0.0,
    };
    linearize(ocp, point, s, a, opts)
}

fn theta_jacobian<T: Real>(model: &QpModel<T>) -> DMatrix<T> {
    let d = *model.dims();
    let layout = model.blocks.layout();
    let stages = model.theta.as_ref().expect("requested");
    let n_theta = stages.first().map_or(0, |s| s.cost.len());
    let mut m = DMatrix::zeros(layout.len(), n_theta);
    for k in 0..=d.horizon {
        let o = layout.stage(k);
        let st = &stages[k];
        m.view_mut((o.x, 0), (st.stat.nrows(), n_theta)).copy_from(&st.stat);
        if k > 0 {
            m.view_mut((o.chi, 0), (d.nx, n_theta)).copy_from(&stages[k - 1].f);
        }
        if o.m > 0 {
            m.view_mut((o.lam, 0), (o.m, n_theta)).copy_from(&st.c);
        }
    }
    m
}

/// Jacobians of the KKT residual with respect to the packed point and the
/// parameters. The complementarity rows treat `tau` as a constant, so the
/// result does not depend on it.
pub fn kkt_jacobians<T: Real>(
    ocp: &ParametricOcp<T>,
    s: &DVector<T>,
    a: Option<&DVector<T>>,
    point: &PrimalDualPoint<T>,
) -> Result<KktJacobians<T>> {
    let model = ift_model(ocp, s, a, point, true)?;
    Ok(KktJacobians {
        layout: model.blocks.layout(),
        d_xi_d_y: model.blocks.dense(),
        d_xi_d_theta: theta_jacobian(&model),
    })
}

/// Condition estimate from the diagonal of the LU factor.
fn lu_condition<T: Real>(u_diag: &DVector<T>) -> f64 {
    let mut hi = 0.0f64;
    let mut lo = f64::INFINITY;
    for v in u_diag.iter() {
        let a = v.to_f64_lossy().abs();
        hi = hi.max(a);
        lo = lo.min(a);
    }
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

const REFINE_STEPS: usize = 3;
const REFINE_BELOW: f64 = 1e-10;

/// Full solution sensitivity `dy/dtheta` of a converged solution.
pub fn solution_sensitivity<T: Real>(
    ocp: &ParametricOcp<T>,
    sol: &Solution<T>,
    method: SensitivityMethod,
) -> Result<SolutionSensitivity<T>> {
    sol.require_converged()?;
    let model = ift_model(ocp, &sol.s, sol.a.as_ref(), &sol.point, true)?;
    let rhs = theta_jacobian(&model);
    let layout = model.blocks.layout();
    let n_theta = rhs.ncols();
    match method {
        SensitivityMethod::Structured => {
            let fact = RiccatiFactorization::factorize(&model.blocks, T::zero()).map_err(|e| {
                warn!("sensitivity factorization failed: {e}");
                Error::Singular {
                    condition: f64::INFINITY,
                }
            })?;
            let mut w = DMatrix::zeros(layout.len(), n_theta);
            let mut residual = 0.0f64;
            let mut col = PackedVector::zeros(layout.clone());
            for i in 0..n_theta {
                col.data.copy_from(&rhs.column(i));
                // Solving M w = -rhs_i is the Newton step for residual rhs_i.
                let mut wi = fact.newton_step(&col);
                let mut check = model.blocks.apply(&wi);
                check.data += &col.data;
                // Condensation loses digits when lam/t is extreme; refine.
                for _ in 0..REFINE_STEPS {
                    if check.norm_inf().to_f64_lossy() <= REFINE_BELOW {
                        break;
                    }
                    let corr = fact.newton_step(&check);
                    wi.data += &corr.data;
                    check = model.blocks.apply(&wi);
                    check.data += &col.data;
                }
                residual = residual.max(check.norm_inf().to_f64_lossy());
                w.set_column(i, &wi.data);
            }
            Ok(SolutionSensitivity {
                layout,
                dy_dtheta: w,
                residual_check: residual,
            })
        }
        SensitivityMethod::Dense => {
            let m = model.blocks.dense();
            let lu = m.clone().lu();
            let cond = lu_condition(&lu.u().diagonal());
            if !cond.is_finite() || cond > 1.0 / f64::EPSILON {
                return Err(Error::Singular { condition: cond });
            }
            if cond > 1e12 {
                warn!("KKT Jacobian is badly conditioned (estimate {cond:.3e})");
            }
            let w = lu.solve(&(-&rhs)).ok_or(Error::Singular { condition: cond })?;
            let check = &m * &w + &rhs;
            Ok(SolutionSensitivity {
                layout,
                dy_dtheta: w,
                residual_check: check.amax().to_f64_lossy(),
            })
        }
        SensitivityMethod::FiniteDifference => Err(Error::InvalidArgument(
            "finite differences do not yield the full solution sensitivity".into(),
        )),
    }
}

/// Policy gradient `d u_0 / d theta` of a converged value solution.
pub fn policy_gradient<T: Real>(
    ocp: &ParametricOcp<T>,
    sol: &Solution<T>,
    method: SensitivityMethod,
) -> Result<(DMatrix<T>, f64)> {
    require(sol, Mode::Value)?;
    let sens = solution_sensitivity(ocp, sol, method)?;
    Ok((sens.policy_rows(), sens.residual_check))
}

/// Forward-difference policy gradient with its solve count.
#[derive(Clone, Debug)]
pub struct FdPolicyGradient<T: Real> {
    pub grad_pi: DMatrix<T>,
    pub solves: usize,
}

/// Forward differences `(pi_{theta + h e_i}(s) - pi_theta(s)) / h`, one
/// re-solve per parameter, warm-started from `sol`.
pub fn fd_policy_gradient<T: Real>(
    ocp: &ParametricOcp<T>,
    sol: &Solution<T>,
    step: T,
    settings: &SolverSettings,
) -> Result<FdPolicyGradient<T>> {
    if !(step.is_finite() && step > T::zero()) {
        return Err(Error::Precondition(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    require(sol, Mode::Value)?;
    let n_theta = ocp.dims().n_theta;
    let nu = ocp.dims().nu;
    let base = sol.u0().clone();
    let mut perturbed = ocp.clone();
    let mut theta = ocp.theta().clone();
    let mut grad = DMatrix::zeros(nu, n_theta);
    let mut solves = 0;
    for i in 0..n_theta {
        let orig = theta[i];
        theta[i] = orig + step;
        perturbed.set_theta(&theta)?;
        theta[i] = orig;
        let r = sqp_solve(&perturbed, &sol.s, None, Some(&sol.point), settings);
        solves += 1;
        let r = r.map_err(|e| Error::PerturbedSolve {
            index: i,
            reason: e.to_string(),
        })?;
        if !r.info.converged() {
            return Err(Error::PerturbedSolve {
                index: i,
                reason: format!("{:?}", r.info.status),
            });
        }
        grad.set_column(i, &((r.u0() - &base) / step));
    }
    Ok(FdPolicyGradient { grad_pi: grad, solves })
}

/// Value, action-value and policy gradients at a converged value solution.
pub fn sensitivities<T: Real>(
    ocp: &ParametricOcp<T>,
    sol: &Solution<T>,
    method: SensitivityMethod,
    settings: &SolverSettings,
) -> Result<SensitivityBundle<T>> {
    let grad_v = grad_v_theta(ocp, sol)?;
    let (grad_pi, residual_check) = match method {
        SensitivityMethod::FiniteDifference => {
            let fd = fd_policy_gradient(ocp, sol, T::of(1e-6), settings)?;
            (fd.grad_pi, f64::NAN)
        }
        m => policy_gradient(ocp, sol, m)?,
    };
    Ok(SensitivityBundle {
        grad_q: grad_v.clone(),
        grad_v,
        grad_pi,
        method,
        residual_check,
    })
}
