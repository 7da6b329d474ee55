use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use sirs_switch::commands::{self, CmdResult, CommandError};
use sirs_switch::config::{RunConfig, ENV_PREFIX};
use sirs_switch::Error;

/// Regime-switching SIRS model: thresholds, simulation and bracket checks.
///
/// Without --config the built-in two-regime example is used. Environment
/// variables `SIRS_SWITCH_<KEY>` (nested keys joined by `__`) fill keys absent
/// from the config file; keys present in the file win. Command-line flags win
/// over both.
#[derive(Debug, Parser)]
#[command(name = "sirs-switch", version)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads. Affects speed only.
    #[arg(long, global = true, env = "SIRS_SWITCH_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Stationary law, reproduction numbers and the extinction/persistence verdict.
    Analyze,
    /// Per-path trajectories as CSV plus a JSON summary.
    Simulate {
        #[arg(long)]
        paths: Option<usize>,
    },
    /// Ensemble statistics and the pooled occupation histogram.
    Ensemble {
        #[arg(long)]
        paths: Option<usize>,
    },
    /// Equilibrium of each frozen regime.
    Equilibrium,
    /// Search for a point where the fields and their brackets span R^3.
    CheckH {
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        max_depth: Option<usize>,
    },
    /// Sample points of the reachable set from the seed equilibrium.
    SampleGamma {
        #[arg(long)]
        points: Option<usize>,
    },
    /// Regenerate the built-in two-regime example bundle.
    ReproduceExample,
}

fn load_config(cli: &Cli) -> Result<RunConfig, CommandError> {
    let env = std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX) && k != "SIRS_SWITCH_THREADS");
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CommandError::Config(Error::param("config", format!("cannot read {}: {e}", path.display())))
            })?;
            RunConfig::from_json_with_env(&text, env)
        }
        None => RunConfig::from_json_with_env(&RunConfig::two_regime_example().to_json(), env),
    }
    .map_err(CommandError::Config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> CmdResult {
    let mut cfg = load_config(cli)?;
    match &cli.command {
        Command::Analyze => commands::analyze(&cfg),
        Command::Simulate { paths } => {
            if let Some(n) = paths {
                cfg.ensemble.n_paths = *n;
            }
            commands::simulate(&cfg)
        }
        Command::Ensemble { paths } => {
            if let Some(n) = paths {
                cfg.ensemble.n_paths = *n;
            }
            commands::ensemble(&cfg)
        }
        Command::Equilibrium => commands::equilibrium(&cfg),
        Command::CheckH { budget, max_depth } => commands::check_h(
            &cfg,
            budget.unwrap_or(cfg.check_h.budget),
            max_depth.unwrap_or(cfg.check_h.max_depth),
        ),
        Command::SampleGamma { points } => {
            if let Some(n) = points {
                cfg.gamma.n_points = *n;
            }
            commands::sample_gamma(&cfg)
        }
        Command::ReproduceExample => commands::reproduce_example(&cfg.out_dir, cfg.seed),
    }
}

fn print(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json value serializes"));
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.threads {
        Some(0) => Err(CommandError::Config(Error::param("threads", "must be >= 1"))),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(&cli)),
            Err(e) => Err(CommandError::Config(Error::param("threads", e.to_string()))),
        },
        None => run(&cli),
    };
    match result {
        Ok(report) => {
            print(&json!({ "status": "ok", "report": report }));
            ExitCode::from(commands::EXIT_OK)
        }
        Err(e) => {
            eprintln!("{}", serde_json::to_string_pretty(&e.report()).expect("json value serializes"));
            ExitCode::from(e.exit_code())
        }
    }
}
