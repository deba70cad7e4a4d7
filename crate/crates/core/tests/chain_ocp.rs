use diffmpc::envs::{ChainMassConfig, ChainMassModel};
use diffmpc::models::chain::{self, ChainOcpConfig};
use diffmpc::solver::exact_hessian;
use diffmpc::{
    lagrangian, policy_gradient, sqp_solve, validate, HessianMode, Ocp, Point, SensitivityMethod, SolverSettings,
};
use nalgebra::DVector;

fn setup(n_mass: usize) -> (Ocp, DVector<f64>) {
    let cfg = ChainOcpConfig {
        chain: ChainMassConfig {
            n_mass,
            ..Default::default()
        },
        horizon: 10,
        ..Default::default()
    };
    let m = ChainMassModel::new(&cfg.chain).unwrap();
    let (xr, x0) = chain::rest_states(&m, &cfg).unwrap();
    (chain::ocp(&m, &xr, &cfg).unwrap(), x0)
}

#[test]
fn chain_problem_is_valid_and_sized_by_the_mass_count() {
    for n in 3..=5 {
        let (ocp, x0) = setup(n);
        assert!(validate(&ocp).is_valid());
        let nx = 6 * (n - 1) - 3;
        assert_eq!(x0.len(), nx);
        assert_eq!(ocp.theta().len(), nx * nx + 9);
    }
}

#[test]
fn both_hessian_modes_reach_the_same_optimum() {
    let (ocp, x0) = setup(3);
    let mut objectives = Vec::new();
    for mode in [HessianMode::Exact, HessianMode::GaussNewton] {
        let st = SolverSettings {
            hessian_mode: mode,
            ..Default::default()
        };
        let sol = sqp_solve(&ocp, &x0, None, None, &st).unwrap();
        assert!(sol.info.converged(), "{mode:?}: {:?}", sol.info);
        objectives.push(sol.info.objective_value);
    }
    assert!((objectives[0] - objectives[1]).abs() <= 1e-8 * objectives[0].abs());
}

#[test]
fn exact_hessian_matches_second_differences_of_the_lagrangian() {
    let (ocp, x0) = setup(3);
    let sol = sqp_solve(&ocp, &x0, None, None, &SolverSettings::default()).unwrap();
    let p = &sol.point;
    let hess = exact_hessian(&ocp, p).unwrap();
    let k = 3;
    let nx = p.x[k].len();
    let nz = nx + p.u[k].len();
    let bump = |q: &mut Point, i: usize, h: f64| {
        if i < nx {
            q.x[k][i] += h;
        } else {
            q.u[k][i - nx] += h;
        }
    };
    let lag = |di: usize, hi: f64, dj: usize, hj: f64| {
        let mut q = p.clone();
        bump(&mut q, di, hi);
        bump(&mut q, dj, hj);
        lagrangian(&ocp, &x0, None, &q).unwrap()
    };
    let h = 1e-4;
    let scale = hess[k].amax();
    for i in 0..nz {
        for j in 0..nz {
            let fd = (lag(i, h, j, h) - lag(i, h, j, -h) - lag(i, -h, j, h) + lag(i, -h, j, -h)) / (4.0 * h * h);
            let err = (fd - hess[k][(i, j)]).abs();
            assert!(err <= 1e-5 * scale, "({i}, {j}): {fd} vs {}", hess[k][(i, j)]);
        }
    }
}

#[test]
fn structured_and_dense_policy_gradients_agree_on_the_chain() {
    let (ocp, x0) = setup(3);
    let sol = sqp_solve(&ocp, &x0, None, None, &SolverSettings::default()).unwrap();
    let (gs, rs) = policy_gradient(&ocp, &sol, SensitivityMethod::Structured).unwrap();
    let (gd, rd) = policy_gradient(&ocp, &sol, SensitivityMethod::Dense).unwrap();
    assert!(rs <= 1e-6 && rd <= 1e-6);
    assert!((&gs - &gd).amax() <= 1e-8 * gs.amax().max(1.0));
}
