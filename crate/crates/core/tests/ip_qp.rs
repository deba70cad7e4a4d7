use diffmpc::solver::{ip_solve_qp, KktBlocks, QpModel, SolveStatus, SolverSettings, StageBlocks};
use diffmpc::testing::{random_qp, DenseQp, RandomQpSpec};
use diffmpc::{Dims, Mode};
use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tight() -> SolverSettings {
    SolverSettings {
        kkt_tol: 1e-10,
        tau_min: 1e-10,
        ..SolverSettings::default()
    }
}

fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / a.amax().max(b.amax()).max(1.0)
}

#[test]
fn random_qps_match_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < 60 {
        let spec = RandomQpSpec {
            nx: rng.random_range(1..=4),
            nu: rng.random_range(1..=2),
            horizon: rng.random_range(1..=10),
            input_box: rng.random_bool(0.7),
            soft_rows: rng.random_range(0..=2),
            terminal_soft_rows: rng.random_range(0..=1),
            mode: if rng.random_bool(0.5) {
                Mode::Value
            } else {
                Mode::ActionValue
            },
        };
        if spec.n_primal() > 200 {
            continue;
        }
        let qp = random_qp::<_, f64>(&mut rng, &spec);
        let (p, info) = ip_solve_qp(&qp, None, &tight());
        assert!(info.converged(), "{spec:?}: {info:?}");
        let dense = DenseQp::from_model(&qp);
        let z_ref = dense.solve(1e-12).expect("oracle converges");
        let e = rel_err(&dense.primal_of(&p), &z_ref);
        worst = worst.max(e);
        assert!(e <= 1e-6, "{spec:?}: rel err {e:e}");
        checked += 1;
    }
    eprintln!("worst rel err {worst:e}");
}

/// Double integrator with `N` stages, quadratic cost and optional input box.
fn double_integrator(horizon: usize, u_box: Option<f64>, s: DVector<f64>) -> QpModel<f64> {
    let ng = if u_box.is_some() { 2 } else { 0 };
    let dims = Dims::new(2, 1, 0, horizon).with_input_constraints(ng);
    let a = dmatrix![1.0, 0.1; 0.0, 1.0];
    let b = dmatrix![0.005; 0.1];
    let mut stages = Vec::new();
    let mut cval = Vec::new();
    for k in 0..=horizon {
        let nz = dims.nz(k);
        let h = DMatrix::identity(nz, nz);
        let mut f = DMatrix::zeros(if k < horizon { 2 } else { 0 }, nz);
        let m = dims.n_ineq(k);
        let mut j = DMatrix::zeros(m, nz);
        let mut c = DVector::zeros(m);
        if k < horizon {
            f.view_mut((0, 0), (2, 2)).copy_from(&a);
            f.view_mut((0, 2), (2, 1)).copy_from(&b);
            if let Some(ub) = u_box {
                j[(0, 2)] = 1.0;
                j[(1, 2)] = -1.0;
                c.fill(-ub);
            }
        }
        stages.push(StageBlocks {
            h,
            f,
            j,
            lam: DVector::zeros(m),
            t: DVector::zeros(m),
        });
        cval.push(c);
    }
    let zeros = |k: usize| DVector::zeros(dims.nz(k));
    QpModel::new(
        KktBlocks {
            dims,
            mode: Mode::Value,
            stages,
        },
        (0..=horizon).map(zeros).collect(),
        (0..=horizon).map(zeros).collect(),
        (0..horizon).map(|_| DVector::zeros(2)).collect(),
        cval,
        s,
        None,
    )
    .unwrap()
}

/// Textbook finite-horizon LQR: backward Riccati recursion, forward rollout.
fn lqr_inputs(horizon: usize, s: &DVector<f64>) -> Vec<f64> {
    let a = dmatrix![1.0, 0.1; 0.0, 1.0];
    let b = dmatrix![0.005; 0.1];
    let q = DMatrix::<f64>::identity(2, 2);
    let r = DMatrix::<f64>::identity(1, 1);
    let mut p = q.clone();
    let mut gains = vec![DMatrix::zeros(1, 2); horizon];
    for k in (0..horizon).rev() {
        let s_mat = &r + b.transpose() * &p * &b;
        let kk = s_mat.try_inverse().unwrap() * b.transpose() * &p * &a;
        p = &q + a.transpose() * &p * (&a - &b * &kk);
        gains[k] = kk;
    }
    let mut x = s.clone();
    let mut us = Vec::new();
    for kk in gains {
        let u = -(&kk * &x);
        x = &a * &x + &b * &u;
        us.push(u[0]);
    }
    us
}

#[test]
fn unconstrained_double_integrator_matches_lqr() {
    let s = dvector![1.0, -0.5];
    let qp = double_integrator(20, None, s.clone());
    let (p, info) = ip_solve_qp(&qp, None, &tight());
    assert!(info.converged());
    let us = lqr_inputs(20, &s);
    for (k, u) in us.iter().enumerate() {
        let e = (p.u[k][0] - u).abs() / u.abs().max(1.0);
        assert!(e <= 1e-8, "stage {k}: {} vs {u}", p.u[k][0]);
    }
}

#[test]
fn unconstrained_random_qps_match_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..30 {
        let spec = RandomQpSpec {
            nx: rng.random_range(1..=4),
            nu: rng.random_range(1..=2),
            horizon: rng.random_range(1..=10),
            input_box: false,
            soft_rows: 0,
            terminal_soft_rows: 0,
            mode: Mode::Value,
        };
        let qp = random_qp::<_, f64>(&mut rng, &spec);
        let (p, info) = ip_solve_qp(&qp, None, &tight());
        assert!(info.converged());
        let dense = DenseQp::from_model(&qp);
        let nz = dense.g.len();
        let ne = dense.e_rhs.len();
        let mut k = DMatrix::zeros(nz + ne, nz + ne);
        k.view_mut((0, 0), (nz, nz)).copy_from(&dense.h);
        k.view_mut((0, nz), (nz, ne)).copy_from(&dense.e_mat.transpose());
        k.view_mut((nz, 0), (ne, nz)).copy_from(&dense.e_mat);
        let mut rhs = DVector::zeros(nz + ne);
        rhs.rows_mut(0, nz).copy_from(&(-&dense.g));
        rhs.rows_mut(nz, ne).copy_from(&dense.e_rhs);
        let sol = k.lu().solve(&rhs).unwrap();
        let e = rel_err(&dense.primal_of(&p), &sol.rows(0, nz).into_owned());
        assert!(e <= 1e-8, "rel err {e:e}");
    }
}

#[test]
fn tight_input_bound_clips_first_input() {
    let s = dvector![5.0, 2.0];
    let qp = double_integrator(20, Some(0.1), s.clone());
    let (p, info) = ip_solve_qp(&qp, None, &SolverSettings::default());
    assert!(info.converged());
    assert!((p.u[0][0] + 0.1).abs() <= 1e-6, "u0 = {}", p.u[0][0]);
    let z_ref = DenseQp::from_model(&qp).solve(1e-12).unwrap();
    assert!((z_ref[2] + 0.1).abs() <= 1e-9);
}

#[test]
fn contradictory_action_pin_fails() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let spec = RandomQpSpec {
        nx: 2,
        nu: 1,
        horizon: 3,
        input_box: true,
        soft_rows: 0,
        terminal_soft_rows: 0,
        mode: Mode::ActionValue,
    };
    let mut qp = random_qp::<_, f64>(&mut rng, &spec);
    qp.a = Some(dvector![5.0]);
    let (_, info) = ip_solve_qp(&qp, None, &SolverSettings::default());
    assert_eq!(info.status, SolveStatus::QpFailure);
}

#[test]
fn complementarity_is_centered_at_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let spec = RandomQpSpec {
        nx: 3,
        nu: 2,
        horizon: 6,
        input_box: true,
        soft_rows: 2,
        terminal_soft_rows: 1,
        mode: Mode::Value,
    };
    let qp = random_qp::<_, f64>(&mut rng, &spec);
    let set = SolverSettings::default();
    let (p, info) = ip_solve_qp(&qp, None, &set);
    assert!(info.converged());
    for (l, t) in p.lam.iter().zip(&p.t) {
        for (a, b) in l.iter().zip(t.iter()) {
            assert!((a * b - set.tau_min).abs() <= 10.0 * set.tau_min);
        }
    }
}
