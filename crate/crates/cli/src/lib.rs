//! Configuration and commands behind the `diffmpc` binary.

mod output;

pub use output::{write_episode_csv, write_summary_csv, EPISODE_HEADER, SUMMARY_HEADER};

use diffmpc::bench::{self, BenchConfig, TimingRow};
use diffmpc::checks::{bellman_suite, gradient_suites, BellmanCheck, GradientCheck, SuiteReport};
use diffmpc::envs::{LtiEnv, LtiEnvConfig};
use diffmpc::models::lti::{self, LtiConfig};
use diffmpc::rl::{self, TrainConfig, TrainHistory};
use diffmpc::{Agent, SolverSettings};
use serde::{Deserialize, Serialize};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Core(#[from] diffmpc::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config {path}: {source}")]
    Config { path: PathBuf, source: serde_json::Error },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Example {
    LtiQlearning,
    ChainMassBench,
}

/// Sizes of the validation suites run by `check`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    pub bellman_states: usize,
    pub actions_per_state: usize,
    pub gradient_states: usize,
    pub seed: u64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            bellman_states: 50,
            actions_per_state: 20,
            gradient_states: 10,
            seed: 0,
        }
    }
}

/// Everything a command reads. Every block is optional in the JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Guards against running a command on a file written for another one.
    pub example: Option<Example>,
    /// Overrides `train.seed`.
    pub seed: Option<u64>,
    /// Directory for training outputs.
    pub output: Option<PathBuf>,
    pub solver: SolverSettings,
    pub model: LtiConfig,
    pub plant: LtiEnvConfig,
    pub train: TrainConfig,
    pub bench: BenchConfig,
    pub check: CheckConfig,
}

/// Barrier floor of the training solves. Near a weakly active constraint
/// the action-value gradient grows like `1 / sqrt(tau)`; this keeps single
/// updates bounded.
pub const TRAIN_TAU_MIN: f64 = 1e-4;

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            example: None,
            seed: None,
            output: None,
            solver: SolverSettings {
                tau_min: TRAIN_TAU_MIN,
                ..Default::default()
            },
            model: LtiConfig::default(),
            plant: LtiEnvConfig::default(),
            train: TrainConfig::default(),
            bench: BenchConfig::default(),
            check: CheckConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|source| CliError::Config {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    fn expect(&self, example: Example) -> Result<()> {
        match self.example {
            Some(e) if e != example => Err(CliError::Invalid(format!(
                "config is for {e:?}, this command runs {example:?}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed.unwrap_or(self.train.seed),
            ..self.train.clone()
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

/// Result of a training run, as written to disk.
pub struct TrainRun {
    pub baseline: rl::EpisodeRecord,
    pub history: TrainHistory,
    pub initial_theta: Vec<f64>,
}

/// Trains on the linear example and writes `episode_<i>.csv` (0 is the
/// rollout before training), `data.csv` and `theta.json` into `out`.
pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<TrainRun> {
    cfg.expect(Example::LtiQlearning)?;
    let tc = cfg.train_config();
    fs::create_dir_all(out).map_err(io_err(out))?;
    // Fail on an unusable directory before spending time on training.
    let summary_path = out.join("data.csv");
    let mut summary = create(&summary_path)?;

    let ocp = lti::ocp(&cfg.model)?;
    let registry = ocp.registry().clone();
    let mut agent = Agent::new(ocp, cfg.solver)?;
    let initial_theta = agent.theta().as_slice().to_vec();
    let mut env = LtiEnv::new(cfg.plant.clone(), tc.seed);
    let baseline = rl::rollout(&mut env, &mut agent, &tc)?;
    let history = rl::train(&mut env, &mut agent, &tc)?;

    for (i, rec) in std::iter::once(&baseline).chain(&history.episodes).enumerate() {
        let path = out.join(format!("episode_{i}.csv"));
        let mut w = create(&path)?;
        write_episode_csv(&mut w, rec)
            .and_then(|_| w.flush())
            .map_err(io_err(&path))?;
    }
    write_summary_csv(&mut summary, &registry, &history)
        .and_then(|_| summary.flush())
        .map_err(io_err(&summary_path))?;

    let theta_path = out.join("theta.json");
    let slices: Vec<_> = registry
        .iter()
        .map(|(name, r)| serde_json::json!({ "name": name, "start": r.start, "len": r.len() }))
        .collect();
    let snapshots: Vec<_> = history.episodes.iter().map(|e| &e.theta).collect();
    let doc = serde_json::json!({
        "slices": slices,
        "initial": initial_theta,
        "episodes": snapshots,
    });
    let mut w = create(&theta_path)?;
    serde_json::to_writer_pretty(&mut w, &doc)
        .map_err(std::io::Error::from)
        .and_then(|_| writeln!(w))
        .and_then(|_| w.flush())
        .map_err(io_err(&theta_path))?;

    Ok(TrainRun {
        baseline,
        history,
        initial_theta,
    })
}

/// Path of the second timing table, which includes the solve.
pub fn with_solve_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("timings");
    path.with_file_name(format!("{stem}_with_solve.csv"))
}

/// Runs the chain benchmark and writes both timing tables.
pub fn cmd_bench(cfg: &RunConfig) -> Result<Vec<TimingRow>> {
    cfg.expect(Example::ChainMassBench)?;
    let path = cfg.bench.output.clone();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let solve_path = with_solve_path(&path);
    let mut w = create(&path)?;
    let mut ws = create(&solve_path)?;
    let rows = bench::run_bench(&cfg.bench)?;
    bench::write_csv(&mut w, &rows, false)
        .and_then(|_| w.flush())
        .map_err(io_err(&path))?;
    bench::write_csv(&mut ws, &rows, true)
        .and_then(|_| ws.flush())
        .map_err(io_err(&solve_path))?;
    Ok(rows)
}

/// Runs the Bellman, gradient and residual suites on the linear example.
/// `flip_sign` negates the analytic gradients so the gradient suite fails.
pub fn cmd_check(cfg: &RunConfig, flip_sign: bool) -> Result<Vec<SuiteReport>> {
    cfg.expect(Example::LtiQlearning)?;
    let ocp = lti::ocp(&cfg.model)?;
    let c = &cfg.check;
    let bellman = bellman_suite(
        &ocp,
        &BellmanCheck {
            states: c.bellman_states,
            actions_per_state: c.actions_per_state,
            seed: c.seed,
            ..Default::default()
        },
        &cfg.solver,
    )?;
    let grads = gradient_suites(
        &ocp,
        &GradientCheck {
            states: c.gradient_states,
            flip_sign,
            seed: c.seed.wrapping_add(1),
            ..Default::default()
        },
        &cfg.solver,
    )?;
    Ok(vec![bellman, grads.gradient, grads.ift_residual])
}

pub fn format_reports(reports: &[SuiteReport]) -> String {
    let mut s = format!(
        "{:<14}{:>7}{:>12}{:>11}{:>10}  result\n",
        "suite", "cases", "max error", "tolerance", "seconds"
    );
    for r in reports {
        s += &format!(
            "{:<14}{:>7}{:>12.3e}{:>11.1e}{:>10.2}  {}\n",
            r.name,
            r.cases,
            r.max_error,
            r.tolerance,
            r.elapsed.as_secs_f64(),
            if r.passed { "pass" } else { "FAIL" }
        );
        for n in r.notes.iter().take(5) {
            s += &format!("    {n}\n");
        }
    }
    s
}
