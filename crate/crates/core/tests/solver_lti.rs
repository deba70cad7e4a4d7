use diffmpc::models::lti::{self, LtiConfig};
use diffmpc::solver::{factorization_count, sqp_solve, SolverSettings};
use diffmpc::{kkt_residual, validate, Ocp};
use nalgebra::{dvector, DVector};

fn problem() -> Ocp {
    lti::ocp(&LtiConfig::default()).unwrap()
}

#[test]
fn lti_problem_validates() {
    assert!(validate(&problem()).is_valid());
}

#[test]
fn lti_converges_in_one_sqp_iteration() {
    let ocp = problem();
    let s = dvector![0.5, 0.5];
    let set = SolverSettings::default();
    let f0 = factorization_count();
    let sol = sqp_solve(&ocp, &s, None, None, &set).unwrap();
    let (p, info) = (sol.point, sol.info);
    eprintln!("{info:?} factorizations {}", factorization_count() - f0);
    assert!(info.converged());
    assert_eq!(info.sqp_iters, 1);
    let r = kkt_residual(&ocp, &s, None, &p, 1e-8).unwrap();
    assert!(r.norm_inf() <= 1e-8);
    assert!((info.objective_value - ocp.objective(&p)).abs() <= 1e-10);
    let u0 = p.u[0][0];
    assert!((-1.0..=1.0).contains(&u0));

    let sol2 = sqp_solve(&ocp, &s, None, Some(&p), &set).unwrap();
    let (p2, info2) = (sol2.point, sol2.info);
    eprintln!("warm {info2:?}");
    assert!(info2.ip_iters_total <= 2);
    let a = DVector::from_element(1, u0);
    let solq = sqp_solve(&ocp, &s, Some(&a), Some(&p2), &set).unwrap();
    let (q, qi) = (solq.point, solq.info);
    eprintln!("q {qi:?}");
    assert!(qi.converged());
    assert!(qi.ip_iters_total <= 2);
    assert!((qi.objective_value - info.objective_value).abs() < 1e-6);
    assert_eq!(q.u[0][0], u0);
}
