use clap::{Parser, Subcommand};
use diffmpc_cli::{cmd_bench, cmd_check, cmd_train, format_reports, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "diffmpc",
    version,
    about = "Differentiable MPC: Q-learning, gradient checks and benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Q-learning on the linear example.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory; overrides the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Time the policy-gradient methods on the chain of masses.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the validation suites; exit status 1 if any fails.
    Check {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Negate the analytic gradients to exercise the failure path.
        #[arg(long, hide = true)]
        inject_sign_error: bool,
    },
}

fn run(cli: Cli) -> diffmpc_cli::Result<ExitCode> {
    match cli.command {
        Command::Train { config, out, seed } => {
            let mut cfg = RunConfig::load_or_default(config.as_deref())?;
            if seed.is_some() {
                cfg.seed = seed;
            }
            let out = out.unwrap_or_else(|| cfg.output_dir());
            let run = cmd_train(&cfg, &out)?;
            let last = run.history.episodes.last().unwrap_or(&run.baseline);
            println!(
                "trained {} episodes; cost {:.4} -> {:.4}, violations {} -> {}; output in {}",
                run.history.episodes.len(),
                run.baseline.cost,
                last.cost,
                run.baseline.violations,
                last.violations,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench { config } => {
            let cfg = RunConfig::load_or_default(config.as_deref())?;
            let rows = cmd_bench(&cfg)?;
            for r in &rows {
                match &r.failure {
                    Some(why) => println!("n = {}: failed: {why}", r.n),
                    None => println!(
                        "n = {}: fd {:.3} ms, dense {:.3} ms, structured {:.3} ms",
                        r.n,
                        r.gradient.finite_differences * 1e3,
                        r.gradient.dense * 1e3,
                        r.gradient.structured * 1e3
                    ),
                }
            }
            println!("timings written to {}", cfg.bench.output.display());
            Ok(if rows.iter().any(|r| r.failed()) {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Check {
            config,
            inject_sign_error,
        } => {
            let cfg = RunConfig::load_or_default(config.as_deref())?;
            let reports = cmd_check(&cfg, inject_sign_error)?;
            print!("{}", format_reports(&reports));
            Ok(if reports.iter().all(|r| r.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DIFFMPC_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
