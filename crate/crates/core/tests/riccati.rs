use diffmpc::solver::{factorization_count, RiccatiFactorization};
use diffmpc::testing::{random_point, random_qp, RandomQpSpec};
use diffmpc::{Mode, PackedVector};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec(nx: usize, nu: usize, horizon: usize, mode: Mode) -> RandomQpSpec {
    RandomQpSpec {
        nx,
        nu,
        horizon,
        input_box: true,
        soft_rows: 2,
        terminal_soft_rows: 1,
        mode,
    }
}

fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / a.amax().max(b.amax()).max(1.0)
}

fn check_against_dense(seed: u64, sp: &RandomQpSpec) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut qp = random_qp::<_, f64>(&mut rng, sp);
    let p = random_point(&mut rng, &sp.dims(), sp.mode);
    for (k, b) in qp.blocks.stages.iter_mut().enumerate() {
        b.lam.copy_from(&p.lam[k]);
        b.t.copy_from(&p.t[k]);
    }
    let layout = qp.blocks.layout();
    let rhs = DVector::from_fn(layout.len(), |_, _| rng.random_range(-1.0..1.0));
    let fact = RiccatiFactorization::factorize(&qp.blocks, 0.0).unwrap();
    let x = fact.backsolve(&PackedVector::from_data(layout.clone(), rhs.clone()));
    let dense = qp.blocks.dense().lu().solve(&rhs).unwrap();
    rel_err(&x.data, &dense)
}

#[test]
fn backsolve_matches_dense_lu_small() {
    for mode in [Mode::Value, Mode::ActionValue] {
        for seed in 0..5 {
            let e = check_against_dense(seed, &spec(2, 1, 3, mode));
            assert!(e <= 1e-10, "mode {mode:?} seed {seed}: {e:e}");
        }
    }
}

#[test]
fn zero_rhs_gives_zero_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let sp = spec(2, 1, 3, Mode::Value);
    let qp = random_qp::<_, f64>(&mut rng, &sp);
    let fact = RiccatiFactorization::factorize(&qp.blocks, 0.0).unwrap();
    let x = fact.backsolve(&PackedVector::zeros(qp.blocks.layout()));
    assert_eq!(x.norm_inf(), 0.0);
}

#[test]
fn backsolves_reuse_one_factorization() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sp = spec(2, 1, 3, Mode::Value);
    let qp = random_qp::<_, f64>(&mut rng, &sp);
    let before = factorization_count();
    let fact = RiccatiFactorization::factorize(&qp.blocks, 0.0).unwrap();
    let layout = qp.blocks.layout();
    let r1 = PackedVector::from_data(layout.clone(), DVector::from_element(layout.len(), 1.0));
    let r2 = PackedVector::from_data(layout.clone(), DVector::from_element(layout.len(), -0.5));
    let x1 = fact.backsolve(&r1);
    let x2 = fact.backsolve(&r2);
    assert_eq!(factorization_count() - before, 1);
    assert!(rel_err(&(x1.data * -0.5), &x2.data) < 1e-12);
}

#[test]
fn apply_matches_dense_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for mode in [Mode::Value, Mode::ActionValue] {
        let mut qp = random_qp::<_, f64>(&mut rng, &spec(3, 2, 4, mode));
        let p = random_point(&mut rng, qp.dims(), mode);
        for (k, b) in qp.blocks.stages.iter_mut().enumerate() {
            b.lam.copy_from(&p.lam[k]);
            b.t.copy_from(&p.t[k]);
        }
        let v = p.pack();
        let y = qp.blocks.apply(&v);
        let dense = qp.blocks.dense() * &v.data;
        assert!(rel_err(&y.data, &dense) < 1e-13);
    }
}

#[test]
fn indefinite_stage_reports_stage() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut qp = random_qp::<_, f64>(&mut rng, &spec(2, 1, 3, Mode::Value));
    let nx = 2;
    qp.blocks.stages[1].h[(nx, nx)] = -100.0;
    match RiccatiFactorization::factorize(&qp.blocks, 0.0) {
        Err(diffmpc::Error::Factorization { stage }) => assert_eq!(stage, 1),
        other => panic!("expected a factorization error, got {:?}", other.err()),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]
    #[test]
    fn riccati_equals_dense_solve(
        seed in 0u64..1_000_000,
        nx in 1usize..5,
        nu in 1usize..3,
        horizon in 1usize..8,
        soft in 0usize..3,
        q_mode in any::<bool>(),
    ) {
        let mode = if q_mode { Mode::ActionValue } else { Mode::Value };
        let sp = RandomQpSpec { nx, nu, horizon, input_box: seed % 2 == 0, soft_rows: soft, terminal_soft_rows: soft.min(1), mode };
        let e = check_against_dense(seed, &sp);
        prop_assert!(e <= 1e-9, "rel err {e:e}");
    }
}
