use super::ip::cold_start;
use super::linearize::{check_point, linearize, LinearizeOptions, ThetaLevel};
use super::{ip_solve_qp, QpModel, Solution, SolveInfo, SolveStatus, SolverSettings};
use crate::{Error, Mode, ParametricOcp, PrimalDualPoint, Real, Result};
use log::debug;
use nalgebra::{DMatrix, DVector};

fn options(settings: &SolverSettings) -> LinearizeOptions {
    LinearizeOptions {
        hessian: Some(settings.hessian_mode),
        theta: ThetaLevel::None,
        reg_eps: settings.reg_eps,
    }
}

/// Brings a warm start into the requested mode; `None` if unusable.
fn adapt_warm<T: Real>(
    ocp: &ParametricOcp<T>,
    warm: Option<&PrimalDualPoint<T>>,
    a: Option<&DVector<T>>,
) -> Option<PrimalDualPoint<T>> {
    let w = warm?;
    if w.dims != *ocp.dims() || !w.is_strictly_interior() {
        return None;
    }
    let mode = if a.is_some() { Mode::ActionValue } else { Mode::Value };
    let mut p = w.with_mode(mode);
    if let Some(a) = a {
        p.u[0].copy_from(a);
    }
    Some(p)
}

/// Solves the value NLP (`a = None`) or the action-value NLP.
///
/// Every iteration linearizes at the current point, solves the QP with the
/// interior-point method and moves towards its solution, halving the step
/// until the KKT residual at `tau_min` decreases.
pub fn sqp_solve<T: Real>(
    ocp: &ParametricOcp<T>,
    s: &DVector<T>,
    a: Option<&DVector<T>>,
    warm: Option<&PrimalDualPoint<T>>,
    settings: &SolverSettings,
) -> Result<Solution<T>> {
    settings.check()?;
    let tol = settings.get::<T>();
    let mode = if a.is_some() { Mode::ActionValue } else { Mode::Value };
    let d = *ocp.dims();

    check_point(&d, &PrimalDualPoint::zeros(&d, mode), s, a)?;
    let mut p = match adapt_warm(ocp, warm, a) {
        Some(p) => p,
        None => {
            let mut base = PrimalDualPoint::zeros(&d, mode);
            for x in base.x.iter_mut() {
                x.copy_from(s);
            }
            cold_start(&linearize(ocp, &base, s, a, LinearizeOptions::JACOBIAN)?)
        }
    };

    let mut res = linearize(ocp, &p, s, a, LinearizeOptions::JACOBIAN)?
        .residual(&p, tol.tau_min)
        .norm_inf();
    let mut ip_total = 0;
    let mut sqp_iters = 0;
    let status = loop {
        if res <= tol.kkt_tol {
            break SolveStatus::Converged;
        }
        if !res.is_finite() {
            break SolveStatus::QpFailure;
        }
        if sqp_iters >= settings.max_sqp_iters {
            break SolveStatus::MaxIters;
        }
        let qp: QpModel<T> = linearize(ocp, &p, s, a, options(settings))?;
        let (q, qinfo) = ip_solve_qp(&qp, Some(&p), settings);
        ip_total += qinfo.ip_iters_total;
        sqp_iters += 1;
        if !qinfo.converged() {
            debug!("QP failed in SQP iteration {sqp_iters}: {qinfo:?}");
            break SolveStatus::QpFailure;
        }
        let mut dir = q.pack();
        dir.data -= p.pack().data;
        let mut alpha = T::one();
        let mut accepted = None;
        for _ in 0..30 {
            let mut trial = p.clone();
            trial.axpy(alpha, &dir);
            let tl = linearize(ocp, &trial, s, a, LinearizeOptions::JACOBIAN)?;
            let tr = tl.residual(&trial, tol.tau_min).norm_inf();
            if tr.is_finite() && tr < (T::one() - T::of(1e-4) * alpha) * res {
                accepted = Some((trial, tr));
                break;
            }
            alpha *= T::of(0.5);
        }
        match accepted {
            Some((trial, tr)) => {
                p = trial;
                res = tr;
            }
            None => {
                debug!("SQP line search failed at iteration {sqp_iters}, residual {res:e}");
                break SolveStatus::MaxIters;
            }
        }
    };
    let info = SolveInfo {
        status,
        sqp_iters,
        ip_iters_total: ip_total,
        final_kkt_residual: res.to_f64_lossy(),
        final_tau: tol.tau_min.to_f64_lossy(),
        objective_value: ocp.objective(&p).to_f64_lossy(),
    };
    Ok(Solution {
        point: p,
        info,
        s: s.clone(),
        a: a.cloned(),
    })
}

/// Exact Hessian blocks of the Lagrangian with respect to each stage vector.
pub fn exact_hessian<T: Real>(ocp: &ParametricOcp<T>, point: &PrimalDualPoint<T>) -> Result<Vec<DMatrix<T>>> {
    let d = ocp.dims();
    let s = point.x[0].clone();
    let a = point.zeta.as_ref().map(|_| point.u[0].clone());
    if point.dims != *d {
        return Err(Error::InvalidArgument("point dimensions differ from problem".into()));
    }
    let opts = LinearizeOptions {
        hessian: Some(super::HessianMode::Exact),
        theta: ThetaLevel::None,
        reg_eps: 0.0,
    };
    let model = linearize(ocp, point, &s, a.as_ref(), opts)?;
    Ok(model.blocks.stages.into_iter().map(|b| b.h).collect())
}
