use approx::assert_relative_eq;
use diffmpc::checks::has_stable_active_set;
use diffmpc::models::lti::{self, LtiConfig};
use diffmpc::solver::exact_hessian;
use diffmpc::{
    fd_policy_gradient, grad_q_theta, grad_v_theta, kkt_jacobians, kkt_residual, lagrangian, policy_gradient,
    sensitivities, solution_sensitivity, sqp_solve, Error, Mode, Ocp, PackedVector, Point, SensitivityMethod, Solution,
    SolverSettings,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn ocp() -> Ocp {
    lti::ocp(&LtiConfig::default()).unwrap()
}

fn tight() -> SolverSettings {
    SolverSettings {
        kkt_tol: 1e-11,
        tau_min: 1e-12,
        ..Default::default()
    }
}

fn state(x0: f64, x1: f64) -> DVector<f64> {
    DVector::from_vec(vec![x0, x1])
}

fn solve_v(ocp: &Ocp, s: &DVector<f64>, st: &SolverSettings) -> Solution<f64> {
    let sol = sqp_solve(ocp, s, None, None, st).unwrap();
    assert!(sol.info.converged(), "{:?}", sol.info);
    sol
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

#[test]
fn lagrangian_with_zero_multipliers_is_the_objective() {
    let ocp = ocp();
    let sol = solve_v(&ocp, &state(0.5, 0.5), &SolverSettings::default());
    let mut p = sol.point.clone();
    for v in p.chi.iter_mut().chain(p.lam.iter_mut()) {
        v.fill(0.0);
    }
    let l = lagrangian(&ocp, &sol.s, None, &p).unwrap();
    assert_relative_eq!(l, ocp.objective(&p), max_relative = 1e-14);
}

#[test]
fn lagrangian_equality_terms_vanish_on_a_rollout() {
    let ocp = ocp();
    let sol = solve_v(&ocp, &state(0.2, -0.3), &SolverSettings::default());
    let l = lagrangian(&ocp, &sol.s, None, &sol.point).unwrap();
    let mut ineq = 0.0;
    for k in 0..=ocp.dims().horizon {
        ineq += sol.point.lam[k].dot(&ocp.inequality(k, &sol.point));
    }
    // Dynamics hold to solver accuracy at the solution.
    assert!((l - sol.value() - ineq).abs() < 1e-8);
}

#[test]
fn value_offset_has_unit_gradient_and_no_policy_effect() {
    let ocp = ocp();
    let sol = solve_v(&ocp, &state(0.5, 0.5), &SolverSettings::default());
    let i = ocp.registry().get("V0").unwrap().start;
    let g = grad_v_theta(&ocp, &sol).unwrap();
    assert!((g[i] - 1.0).abs() <= 1e-10);
    let (gp, _) = policy_gradient(&ocp, &sol, SensitivityMethod::Structured).unwrap();
    assert!(gp.column(i).amax() <= 1e-8);

    let mut th = ocp.theta().clone();
    th[i] += 3.0;
    let shifted = solve_v(&ocp.with_theta(&th).unwrap(), &sol.s, &SolverSettings::default());
    assert!((shifted.value() - sol.value() - 3.0).abs() < 1e-8);
    assert!((shifted.u0() - sol.u0()).amax() < 1e-8);
}

#[test]
fn bias_slice_of_value_gradient_matches_central_differences() {
    let ocp = ocp();
    let st = tight();
    let sol = solve_v(&ocp, &state(0.5, 0.5), &st);
    let g = grad_v_theta(&ocp, &sol).unwrap();
    let h = 1e-6;
    for i in ocp.registry().get("b").unwrap() {
        let mut vals = [0.0; 2];
        for (j, sign) in [1.0, -1.0].into_iter().enumerate() {
            let mut th = ocp.theta().clone();
            th[i] += sign * h;
            vals[j] = sqp_solve(&ocp.with_theta(&th).unwrap(), &sol.s, None, Some(&sol.point), &st)
                .unwrap()
                .value();
        }
        let fd = (vals[0] - vals[1]) / (2.0 * h);
        assert!(rel(g[i], fd) <= 1e-4, "entry {i}: {} vs {fd}", g[i]);
    }
}

#[test]
fn action_value_gradient_at_the_policy_equals_value_gradient() {
    let ocp = ocp();
    let st = SolverSettings::default();
    let vsol = solve_v(&ocp, &state(0.3, -0.2), &st);
    let qsol = sqp_solve(&ocp, &vsol.s, Some(vsol.u0()), Some(&vsol.point), &st).unwrap();
    assert!(qsol.info.converged());
    let gv = grad_v_theta(&ocp, &vsol).unwrap();
    let gq = grad_q_theta(&ocp, &qsol).unwrap();
    assert!((gv - gq).amax() <= 1e-6);
}

#[test]
fn action_value_gradient_matches_central_differences_off_policy() {
    let ocp = ocp();
    let st = tight();
    let vsol = solve_v(&ocp, &state(0.5, 0.5), &st);
    let a = vsol.u0().add_scalar(0.1);
    let qsol = sqp_solve(&ocp, &vsol.s, Some(&a), Some(&vsol.point), &st).unwrap();
    assert!(qsol.info.converged());
    let g = grad_q_theta(&ocp, &qsol).unwrap();
    let h = 1e-6;
    for i in 0..ocp.dims().n_theta {
        let mut vals = [0.0; 2];
        for (j, sign) in [1.0, -1.0].into_iter().enumerate() {
            let mut th = ocp.theta().clone();
            th[i] += sign * h;
            vals[j] = sqp_solve(&ocp.with_theta(&th).unwrap(), &vsol.s, Some(&a), Some(&qsol.point), &st)
                .unwrap()
                .value();
        }
        let fd = (vals[0] - vals[1]) / (2.0 * h);
        assert!(rel(g[i], fd) <= 1e-4, "entry {i}: {} vs {fd}", g[i]);
    }
}

#[test]
fn gradients_refuse_wrong_mode_or_unconverged_solutions() {
    let ocp = ocp();
    let st = SolverSettings::default();
    let vsol = solve_v(&ocp, &state(0.5, 0.5), &st);
    assert!(grad_q_theta(&ocp, &vsol).is_err());
    let mut bad = vsol.clone();
    bad.info.status = diffmpc::SolveStatus::MaxIters;
    assert!(grad_v_theta(&ocp, &bad).is_err());
    assert!(policy_gradient(&ocp, &bad, SensitivityMethod::Dense).is_err());
}

fn fd_jacobian(ocp: &Ocp, s: &DVector<f64>, a: Option<&DVector<f64>>, p: &Point, tau: f64) -> DMatrix<f64> {
    let base = p.pack();
    let n = base.len();
    let mut jac = DMatrix::zeros(n, n);
    let mut is_dual_slack = vec![false; n];
    for k in 0..=p.dims.horizon {
        let o = base.layout.stage(k);
        for i in 0..o.m {
            is_dual_slack[o.lam + i] = true;
            is_dual_slack[o.t + i] = true;
        }
    }
    #[allow(clippy::needless_range_loop)]
    for j in 0..n {
        // Upward steps keep multipliers and slacks interior. The residual is
        // affine in each single coordinate, so one-sided differences suffice.
        let h = 1e-7;
        let signs: &[f64] = if is_dual_slack[j] { &[1.0, 0.0] } else { &[1.0, -1.0] };
        let mut cols = Vec::new();
        for &sign in signs {
            let mut v = base.clone();
            v.data[j] += sign * h;
            let q = Point::unpack(&v, &p.dims, p.mode()).unwrap();
            cols.push(kkt_residual(ocp, s, a, &q, tau).unwrap().data);
        }
        let width = (signs[0] - signs[1]) * h;
        jac.set_column(j, &((&cols[0] - &cols[1]) / width));
    }
    jac
}

#[test]
fn kkt_jacobian_matches_finite_differences() {
    let ocp = lti::ocp(&LtiConfig {
        horizon: 6,
        ..Default::default()
    })
    .unwrap();
    let st = SolverSettings::default();
    let vsol = solve_v(&ocp, &state(0.9, 0.6), &st);
    let a = state(0.2, 0.0).rows(0, 1).into_owned();
    let qsol = sqp_solve(&ocp, &vsol.s, Some(&a), Some(&vsol.point), &st).unwrap();
    for sol in [&vsol, &qsol] {
        let jac = kkt_jacobians(&ocp, &sol.s, sol.a.as_ref(), &sol.point).unwrap();
        let fd = fd_jacobian(&ocp, &sol.s, sol.a.as_ref(), &sol.point, st.tau_min);
        for (x, y) in jac.d_xi_d_y.iter().zip(fd.iter()) {
            assert!((x - y).abs() <= 1e-6 * (1.0 + x.abs()), "{x} vs {y}");
        }
    }
}

#[test]
fn kkt_theta_jacobian_matches_finite_differences_and_input_rows_are_zero() {
    let ocp = lti::ocp(&LtiConfig {
        horizon: 5,
        ..Default::default()
    })
    .unwrap();
    let sol = solve_v(&ocp, &state(0.4, -0.7), &SolverSettings::default());
    let jac = kkt_jacobians(&ocp, &sol.s, None, &sol.point).unwrap();
    let h = 1e-6;
    for i in 0..ocp.dims().n_theta {
        let mut r = Vec::new();
        for sign in [1.0, -1.0] {
            let mut th = ocp.theta().clone();
            th[i] += sign * h;
            r.push(
                kkt_residual(&ocp.with_theta(&th).unwrap(), &sol.s, None, &sol.point, 1e-8)
                    .unwrap()
                    .data,
            );
        }
        let fd = (&r[0] - &r[1]) / (2.0 * h);
        assert!((jac.d_xi_d_theta.column(i) - fd).amax() < 1e-7);
    }
    let d = ocp.dims();
    for k in 0..d.horizon {
        let o = jac.layout.stage(k);
        let g_rows = jac.d_xi_d_theta.rows(o.lam, d.ng);
        assert_eq!(g_rows.amax(), 0.0, "stage {k}");
    }
}

#[test]
fn structured_and_dense_policy_gradients_agree() {
    let ocp = ocp();
    for s in [state(0.5, 0.5), state(-0.8, 0.9), state(0.1, -0.9)] {
        let sol = solve_v(&ocp, &s, &SolverSettings::default());
        let (a, ra) = policy_gradient(&ocp, &sol, SensitivityMethod::Structured).unwrap();
        let (b, rb) = policy_gradient(&ocp, &sol, SensitivityMethod::Dense).unwrap();
        let scale = a.amax().max(b.amax()).max(1.0);
        assert!((&a - &b).amax() / scale <= 1e-8);
        assert!(ra <= 1e-6 && rb <= 1e-6);
        let full = solution_sensitivity(&ocp, &sol, SensitivityMethod::Dense).unwrap();
        assert_eq!(full.dy_dtheta.nrows(), sol.point.pack().len());
    }
}

#[test]
fn bias_slice_of_policy_gradient_matches_central_differences() {
    let ocp = ocp();
    let st = tight();
    let sol = solve_v(&ocp, &state(0.5, 0.5), &st);
    let (gp, _) = policy_gradient(&ocp, &sol, SensitivityMethod::Structured).unwrap();
    let h = 1e-5;
    for i in ocp.registry().get("b").unwrap() {
        let mut u = [0.0; 2];
        for (j, sign) in [1.0, -1.0].into_iter().enumerate() {
            let mut th = ocp.theta().clone();
            th[i] += sign * h;
            u[j] = sqp_solve(&ocp.with_theta(&th).unwrap(), &sol.s, None, Some(&sol.point), &st)
                .unwrap()
                .u0()[0];
        }
        let fd = (u[0] - u[1]) / (2.0 * h);
        assert!((gp[(0, i)] - fd).abs() <= 1e-4, "entry {i}: {} vs {fd}", gp[(0, i)]);
    }
}

#[test]
fn forward_difference_policy_gradient() {
    let ocp = ocp();
    let st = tight();
    let sol = solve_v(&ocp, &state(0.5, 0.5), &st);
    assert!(matches!(
        fd_policy_gradient(&ocp, &sol, 0.0, &st),
        Err(Error::Precondition(_))
    ));
    let step = 1e-6;
    let fd = fd_policy_gradient(&ocp, &sol, step, &st).unwrap();
    assert_eq!(fd.solves, ocp.dims().n_theta);
    let (gp, _) = policy_gradient(&ocp, &sol, SensitivityMethod::Structured).unwrap();
    assert!((&fd.grad_pi - &gp).amax() <= 10.0 * step.sqrt().max(step) * 1e-2 + 10.0 * step);
}

#[test]
fn sensitivity_bundle_is_consistent() {
    let ocp = ocp();
    let st = SolverSettings::default();
    let sol = solve_v(&ocp, &state(0.5, 0.5), &st);
    let b = sensitivities(&ocp, &sol, SensitivityMethod::Structured, &st).unwrap();
    assert_eq!(b.grad_v, b.grad_q);
    assert_eq!(b.grad_pi.shape(), (1, ocp.dims().n_theta));
    assert!(b.residual_check <= 1e-6);
    let f = sensitivities(&ocp, &sol, SensitivityMethod::FiniteDifference, &st).unwrap();
    assert!(f.residual_check.is_nan());
}

#[test]
fn lti_exact_hessian_is_the_constant_cost_hessian() {
    let ocp = ocp();
    let st = SolverSettings::default();
    let sol = solve_v(&ocp, &state(0.5, 0.5), &st);
    let h = exact_hessian(&ocp, &sol.point).unwrap();
    let mut zero = sol.point.clone();
    for v in zero.chi.iter_mut().chain(zero.lam.iter_mut()) {
        v.fill(0.0);
    }
    let h0 = exact_hessian(&ocp, &zero).unwrap();
    let other = solve_v(&ocp, &state(-0.4, 0.1), &st);
    let h1 = exact_hessian(&ocp, &other.point).unwrap();
    let gamma: f64 = 0.9;
    for k in 0..ocp.dims().horizon {
        assert_eq!(h[k], h0[k]);
        assert_eq!(h[k], h1[k]);
        let scale = gamma.powi(k as i32);
        for i in 0..3 {
            assert_relative_eq!(h[k][(i, i)], scale, max_relative = 1e-12);
        }
    }
}

const STABLE: f64 = 1e-3;

/// Central directional difference; `None` if a perturbed solution has a
/// weakly active constraint.
fn directional(ocp: &Ocp, sol: &Solution<f64>, d: &DVector<f64>, st: &SolverSettings) -> Option<f64> {
    let h = 1e-5;
    let mut vals = [0.0; 2];
    for (j, sign) in [1.0, -1.0].into_iter().enumerate() {
        let th = ocp.theta() + d * (sign * h);
        let r = sqp_solve(&ocp.with_theta(&th).unwrap(), &sol.s, None, Some(&sol.point), st).unwrap();
        if !has_stable_active_set(&r.point, STABLE) {
            return None;
        }
        vals[j] = r.value();
    }
    Some((vals[0] - vals[1]) / (2.0 * h))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn value_directional_derivatives_match(
        s0 in 0.05f64..0.95, s1 in -0.9f64..0.9,
        dir in proptest::collection::vec(-1.0f64..1.0, 12),
    ) {
        let ocp = ocp();
        let st = tight();
        let sol = solve_v(&ocp, &state(s0, s1), &st);
        prop_assume!(has_stable_active_set(&sol.point, STABLE));
        let d = DVector::from_vec(dir);
        let g = grad_v_theta(&ocp, &sol).unwrap();
        let fd = directional(&ocp, &sol, &d, &st);
        prop_assume!(fd.is_some());
        let fd = fd.unwrap();
        prop_assert!(rel(g.dot(&d), fd) <= 1e-4, "{} vs {}", g.dot(&d), fd);
    }
}

#[test]
fn packed_sensitivity_satisfies_the_linear_system() {
    let ocp = ocp();
    let sol = solve_v(&ocp, &state(0.7, -0.1), &SolverSettings::default());
    let jac = kkt_jacobians(&ocp, &sol.s, None, &sol.point).unwrap();
    let sens = solution_sensitivity(&ocp, &sol, SensitivityMethod::Structured).unwrap();
    let r = &jac.d_xi_d_y * &sens.dy_dtheta + &jac.d_xi_d_theta;
    assert!(r.amax() <= 1e-6);
    let v = PackedVector::from_data(sens.layout.clone(), sens.dy_dtheta.column(0).into_owned());
    assert_eq!(Point::unpack(&v, ocp.dims(), Mode::Value).unwrap().u[0].len(), 1);
}
