//! Timing of the three policy-gradient methods on chains of growing size.

use crate::checks::rel_err_entry;
use crate::envs::ChainMassModel;
use crate::models::chain::{self, ChainOcpConfig};
use crate::sensitivity::{fd_policy_gradient, policy_gradient, SensitivityMethod};
use crate::solver::{sqp_solve, HessianMode, Solution, SolverSettings};
use crate::{Error, Ocp, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub mass_counts: Vec<usize>,
    pub repetitions: usize,
    /// Untimed solve-and-differentiate rounds before the timed ones.
    pub warmup: usize,
    /// Added to the third mass before every repetition.
    pub mass_increment: f64,
    pub fd_step: f64,
    /// Entrywise relative disagreement allowed between methods.
    pub agreement_tol: f64,
    /// Solver settings for the base and the perturbed solves. The
    /// sensitivities always use the exact Hessian.
    pub solver: SolverSettings,
    /// Chain and horizon; `chain.n_mass` is overridden by `mass_counts`.
    pub problem: ChainOcpConfig,
    pub output: PathBuf,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            mass_counts: vec![3, 4, 5, 6],
            repetitions: 100,
            warmup: 1,
            mass_increment: 1e-3,
            fd_step: 1e-6,
            agreement_tol: 1e-4,
            solver: SolverSettings {
                kkt_tol: 1e-12,
                hessian_mode: HessianMode::GaussNewton,
                ..Default::default()
            },
            problem: ChainOcpConfig::default(),
            output: PathBuf::from("timings.csv"),
        }
    }
}

impl BenchConfig {
    pub fn check(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::InvalidArgument("repetitions must be at least 1".into()));
        }
        if !(self.fd_step > 0.0 && self.agreement_tol > 0.0) {
            return Err(Error::InvalidArgument(
                "fd_step and agreement_tol must be positive".into(),
            ));
        }
        if let Some(&n) = self.mass_counts.iter().find(|&&n| n < 3) {
            return Err(Error::InvalidArgument(format!("mass count {n} is below 3")));
        }
        self.solver.check()
    }
}

/// Mean wall time per repetition of each method, in seconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MethodTimes {
    pub finite_differences: f64,
    pub dense: f64,
    pub structured: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub n: usize,
    pub n_theta: usize,
    /// Gradient call only.
    pub gradient: MethodTimes,
    /// Gradient call plus the solve it starts from.
    pub with_solve: MethodTimes,
    /// Largest pairwise entrywise relative disagreement seen.
    pub max_disagreement: f64,
    /// Largest IFT residual of the structured and dense solves.
    pub max_ift_residual: f64,
    /// Why the row has no timings.
    pub failure: Option<String>,
}

impl TimingRow {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

fn max_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| rel_err_entry(x, y))
        .fold(0.0, f64::max)
}

struct Measured {
    solve: Duration,
    times: [Duration; 3],
    disagreement: f64,
    residual: f64,
}

fn measure(ocp: &Ocp, sol: &Solution<f64>, solve: Duration, cfg: &BenchConfig) -> Result<Measured> {
    let t = Instant::now();
    let (gs, rs) = policy_gradient(ocp, sol, SensitivityMethod::Structured)?;
    let ts = t.elapsed();
    let t = Instant::now();
    let (gd, rd) = policy_gradient(ocp, sol, SensitivityMethod::Dense)?;
    let td = t.elapsed();
    let t = Instant::now();
    let fd = fd_policy_gradient(ocp, sol, cfg.fd_step, &cfg.solver)?.grad_pi;
    let tf = t.elapsed();
    let disagreement = max_rel(&gs, &gd).max(max_rel(&gs, &fd)).max(max_rel(&gd, &fd));
    Ok(Measured {
        solve,
        times: [tf, td, ts],
        disagreement,
        residual: rs.max(rd),
    })
}

fn solve(
    ocp: &Ocp,
    x0: &DVector<f64>,
    warm: Option<&Solution<f64>>,
    cfg: &BenchConfig,
) -> Result<(Solution<f64>, Duration)> {
    let t = Instant::now();
    let sol = sqp_solve(ocp, x0, None, warm.map(|w| &w.point), &cfg.solver)?;
    let elapsed = t.elapsed();
    sol.require_converged()?;
    Ok((sol, elapsed))
}

fn bench_size(n: usize, cfg: &BenchConfig) -> Result<TimingRow> {
    let mut problem = cfg.problem.clone();
    problem.chain.n_mass = n;
    let mut model = ChainMassModel::new(&problem.chain)?;
    let (x_ref, x0) = chain::rest_states(&model, &problem)?;
    let mut row = TimingRow {
        n,
        n_theta: chain::n_theta(&model),
        gradient: MethodTimes::default(),
        with_solve: MethodTimes::default(),
        max_disagreement: 0.0,
        max_ift_residual: 0.0,
        failure: None,
    };
    let mut last: Option<Solution<f64>> = None;
    for _ in 0..cfg.warmup {
        let ocp = chain::ocp(&model, &x_ref, &problem)?;
        let (sol, dt) = solve(&ocp, &x0, last.as_ref(), cfg)?;
        measure(&ocp, &sol, dt, cfg)?;
        last = Some(sol);
    }
    let mut sums = [Duration::ZERO; 3];
    let mut solves = Duration::ZERO;
    for rep in 0..cfg.repetitions {
        model.m[2] += cfg.mass_increment;
        let ocp = chain::ocp(&model, &x_ref, &problem)?;
        let (sol, dt) = solve(&ocp, &x0, last.as_ref(), cfg)?;
        let m = measure(&ocp, &sol, dt, cfg)?;
        row.max_disagreement = row.max_disagreement.max(m.disagreement);
        row.max_ift_residual = row.max_ift_residual.max(m.residual);
        if !(m.disagreement <= cfg.agreement_tol) {
            return Err(Error::Precondition(format!(
                "repetition {rep}: methods disagree by {:.3e} (tolerance {:.1e})",
                m.disagreement, cfg.agreement_tol
            )));
        }
        for (s, t) in sums.iter_mut().zip(m.times) {
            *s += t;
        }
        solves += m.solve;
        last = Some(sol);
    }
    let reps = cfg.repetitions as f64;
    let mean = |d: Duration| d.as_secs_f64() / reps;
    row.gradient = MethodTimes {
        finite_differences: mean(sums[0]),
        dense: mean(sums[1]),
        structured: mean(sums[2]),
    };
    let s = mean(solves);
    row.with_solve = MethodTimes {
        finite_differences: row.gradient.finite_differences + s,
        dense: row.gradient.dense + s,
        structured: row.gradient.structured + s,
    };
    Ok(row)
}

/// Times every size in `cfg.mass_counts`. A size whose solve fails or whose
/// methods disagree gives a row marked failed; the others still run.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<TimingRow>> {
    cfg.check()?;
    let mut rows = Vec::with_capacity(cfg.mass_counts.len());
    for &n in &cfg.mass_counts {
        log::info!("benchmarking {n} masses");
        let row = bench_size(n, cfg).unwrap_or_else(|e| {
            log::warn!("{n} masses: {e}");
            let model = ChainMassModel::new(&crate::envs::ChainMassConfig {
                n_mass: n,
                ..cfg.problem.chain.clone()
            });
            TimingRow {
                n,
                n_theta: model.map(|m| chain::n_theta(&m)).unwrap_or(0),
                gradient: MethodTimes::default(),
                with_solve: MethodTimes::default(),
                max_disagreement: f64::NAN,
                max_ift_residual: f64::NAN,
                failure: Some(e.to_string()),
            }
        });
        rows.push(row);
    }
    Ok(rows)
}

pub const CSV_HEADER: &str = "n,finitedifferences,dense,structured";

/// Writes one line per row, times in milliseconds; failed rows carry `nan`.
pub fn write_csv<W: Write>(mut w: W, rows: &[TimingRow], with_solve: bool) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        if r.failed() {
            writeln!(w, "{},nan,nan,nan", r.n)?;
            continue;
        }
        let t = if with_solve { r.with_solve } else { r.gradient };
        writeln!(
            w,
            "{},{:.6},{:.6},{:.6}",
            r.n,
            t.finite_differences * 1e3,
            t.dense * 1e3,
            t.structured * 1e3
        )?;
    }
    Ok(())
}
