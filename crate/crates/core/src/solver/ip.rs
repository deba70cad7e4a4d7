use super::{QpModel, RiccatiFactorization, SolveInfo, SolveStatus, SolverSettings};
use crate::{Mode, PackedVector, PrimalDualPoint, Real, Result};
use log::{debug, trace};

/// Cold-start point: `x_k = s`, `u = 0` (or `u_0 = a`), `sigma = 0`, unit
/// multipliers and slacks `t = max(-c, 1)`.
pub(crate) fn cold_start<T: Real>(qp: &QpModel<T>) -> PrimalDualPoint<T> {
    let d = *qp.dims();
    let mut p = PrimalDualPoint::zeros(&d, qp.mode());
    for x in p.x.iter_mut() {
        x.copy_from(&qp.s);
    }
    if let Some(a) = &qp.a {
        p.u[0].copy_from(a);
    }
    for k in 0..=d.horizon {
        p.lam[k].fill(T::one());
        let c = qp.constraint_values(&p, k);
        p.t[k] = c.map(|ci| (-ci).max(T::one()));
    }
    p
}

/// Largest step in `(0, 1]` keeping multipliers and slacks above
/// `(1 - ftb)` times their current values.
pub(crate) fn step_length<T: Real>(p: &PrimalDualPoint<T>, step: &PackedVector<T>, ftb: T) -> T {
    let layout = &step.layout;
    let mut alpha = T::one();
    for k in 0..=p.dims.horizon {
        let o = layout.stage(k);
        for i in 0..o.m {
            for (val, delta) in [(p.lam[k][i], step.data[o.lam + i]), (p.t[k][i], step.data[o.t + i])] {
                if delta < T::zero() {
                    alpha = alpha.min(-ftb * val / delta);
                }
            }
        }
    }
    alpha
}

/// Factorizes the current Newton matrix, shifting the stage Hessians by
/// growing multiples of `reg_eps` when a stage is not positive definite.
pub(crate) fn factorize_regularized<T: Real>(qp: &QpModel<T>, reg_eps: T) -> Result<RiccatiFactorization<T>> {
    match RiccatiFactorization::factorize(&qp.blocks, T::zero()) {
        Ok(f) => Ok(f),
        Err(first) => {
            let mut reg = reg_eps;
            for _ in 0..16 {
                if let Ok(f) = RiccatiFactorization::factorize(&qp.blocks, reg) {
                    debug!("riccati regularized with shift {reg:e}");
                    return Ok(f);
                }
                reg *= T::of(10.0);
            }
            Err(first)
        }
    }
}

/// Solves the QP with a primal-dual interior-point method.
///
/// `warm` is used as the initial iterate when it is strictly interior and
/// belongs to the same mode; otherwise the method starts cold. If the warm
/// started run fails, the solve is repeated from a cold start.
pub fn ip_solve_qp<T: Real>(
    qp: &QpModel<T>,
    warm: Option<&PrimalDualPoint<T>>,
    settings: &SolverSettings,
) -> (PrimalDualPoint<T>, SolveInfo) {
    let usable = warm.filter(|w| w.dims == *qp.dims() && w.mode() == qp.mode() && w.is_strictly_interior());
    match usable {
        Some(w) => {
            let (p, info) = ip_run(qp, w.clone(), settings);
            if info.converged() {
                return (p, info);
            }
            debug!("warm-started interior point failed, retrying cold");
            let (p2, mut info2) = ip_run(qp, cold_start(qp), settings);
            info2.ip_iters_total += info.ip_iters_total;
            (p2, info2)
        }
        None => ip_run(qp, cold_start(qp), settings),
    }
}

/// A barrier level counts as solved when its residual is below this multiple
/// of the level.
const CENTERING: f64 = 10.0;

fn ip_run<T: Real>(
    qp: &QpModel<T>,
    mut p: PrimalDualPoint<T>,
    settings: &SolverSettings,
) -> (PrimalDualPoint<T>, SolveInfo) {
    let tol = settings.get::<T>();
    let mut model = qp.clone();
    if let (Mode::ActionValue, Some(a)) = (p.mode(), &qp.a) {
        p.u[0].copy_from(a);
    }
    let mut tau = p.mean_complementarity().max(tol.tau_min);
    let mut best: Option<(T, PrimalDualPoint<T>)> = None;
    let mut iters = 0;
    let mut status = SolveStatus::QpFailure;
    loop {
        let r_final = model.residual(&p, tol.tau_min).norm_inf();
        if !r_final.is_finite() {
            status = SolveStatus::QpFailure;
            break;
        }
        if best.as_ref().is_none_or(|(b, _)| r_final < *b) {
            best = Some((r_final, p.clone()));
        }
        trace!("ip iter {iters}: tau {tau:e} residual {r_final:e}");
        if tau <= tol.tau_min && r_final <= tol.kkt_tol {
            status = SolveStatus::Converged;
            break;
        }
        if iters >= settings.max_ip_iters {
            break;
        }
        // Move to the next barrier level once the current one is solved to
        // within a multiple of itself.
        while tau > tol.tau_min && model.residual(&p, tau).norm_inf() <= T::of(CENTERING) * tau {
            tau = (tau * tol.tau_decrease).max(tol.tau_min);
        }
        let r = model.residual(&p, tau);
        model.load_duals(&p);
        let fact = match factorize_regularized(&model, tol.reg_eps) {
            Ok(f) => f,
            Err(e) => {
                debug!("interior point factorization failed: {e}");
                status = SolveStatus::QpFailure;
                break;
            }
        };
        let step = fact.newton_step(&r);
        if !step.data.iter().all(|v| v.is_finite()) {
            status = SolveStatus::QpFailure;
            break;
        }
        let alpha = step_length(&p, &step, tol.ftb);
        p.axpy(alpha, &step);
        iters += 1;
    }
    let (res, point) = match status {
        SolveStatus::Converged => (model.residual(&p, tol.tau_min).norm_inf(), p),
        _ => best.unwrap_or_else(|| (T::of(f64::INFINITY), p)),
    };
    let info = SolveInfo {
        status,
        sqp_iters: 0,
        ip_iters_total: iters,
        final_kkt_residual: res.to_f64_lossy(),
        final_tau: tau.to_f64_lossy(),
        objective_value: f64::NAN,
    };
    (point, info)
}
