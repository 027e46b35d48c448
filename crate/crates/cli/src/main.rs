mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use config::{LayerList, Overrides, RunConfig};

/// Physics-informed neural networks for the power-system swing equation
#[derive(Parser, Debug)]
#[command(name = "swing-pinn", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON run config; flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,

    /// Master seed for data sampling and network initialization
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct Sizes {
    /// Number of labeled training samples
    #[arg(long)]
    nu: Option<usize>,

    /// Number of collocation points
    #[arg(long)]
    nf: Option<usize>,

    /// Layer sizes, e.g. 2,10,10,10,10,10,1
    #[arg(long)]
    layers: Option<LayerList>,

    /// First-order optimizer iterations
    #[arg(long)]
    iters: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the trajectory grid and write it as CSV
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Train a forward surrogate on a generated grid and evaluate it
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sizes: Sizes,
        /// Dataset CSV [default: <out>/dataset.csv]
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Identify inertia and damping for one or more ground-truth pairs
    Identify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sizes: Sizes,
        /// Number of ground-truth pairs drawn from the configured ranges
        #[arg(long)]
        pairs: Option<usize>,
    },
    /// Time the reference integrator against the surrogate
    Benchmark {
        #[command(flatten)]
        common: Common,
        /// Checkpoint [default: <out>/checkpoint.json]
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Instant for the single-query comparison, in seconds
        #[arg(long)]
        t: Option<f64>,
    },
    /// Query the surrogate at one (t, p1)
    Predict {
        #[command(flatten)]
        common: Common,
        /// Checkpoint [default: <out>/checkpoint.json]
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, allow_negative_numbers = true)]
        t: f64,
        #[arg(long, allow_negative_numbers = true)]
        p1: f64,
    },
    /// Evaluate a checkpoint against a trajectory grid
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Checkpoint [default: <out>/checkpoint.json]
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Dataset CSV [default: <out>/dataset.csv]
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

fn resolve(common: &Common, sizes: Option<&Sizes>, identify: bool) -> anyhow::Result<RunConfig> {
    let mut config = RunConfig::load(common.config.as_deref())?;
    let overrides = Overrides {
        seed: common.seed,
        out: common.out.clone(),
        n_u: sizes.and_then(|s| s.nu),
        n_f: sizes.and_then(|s| s.nf),
        layers: sizes.and_then(|s| s.layers.clone()).map(|l| l.0),
        iters: sizes.and_then(|s| s.iters),
    };
    config.apply(&overrides, identify);
    config.validate()?;
    Ok(config)
}

fn run(command: Command) -> Result<(), (u8, anyhow::Error)> {
    let usage = |e| (1, e);
    let runtime = |e| (2, e);
    let checkpoint_or_default = |c: Option<PathBuf>, config: &RunConfig| {
        c.unwrap_or_else(|| config.out.join(commands::CHECKPOINT_FILE))
    };
    match command {
        Command::Generate { common } => {
            let config = resolve(&common, None, false).map_err(usage)?;
            commands::generate(&config).map_err(runtime)
        }
        Command::Train { common, sizes, data } => {
            let config = resolve(&common, Some(&sizes), false).map_err(usage)?;
            commands::train(&config, data.as_deref()).map_err(runtime)
        }
        Command::Identify { common, sizes, pairs } => {
            let mut config = resolve(&common, Some(&sizes), true).map_err(usage)?;
            if let Some(n) = pairs {
                config.identify.n_pairs = n;
                config.identify.pairs.clear();
                config.validate().map_err(usage)?;
            }
            commands::identify(&config).map_err(runtime)
        }
        Command::Benchmark { common, checkpoint, t } => {
            let config = resolve(&common, None, false).map_err(usage)?;
            let path = checkpoint_or_default(checkpoint, &config);
            commands::benchmark(&config, &path, t).map_err(runtime)
        }
        Command::Predict { common, checkpoint, t, p1 } => {
            let config = resolve(&common, None, false).map_err(usage)?;
            if !(t.is_finite() && p1.is_finite()) {
                return Err(usage(anyhow::anyhow!("t and p1 must be finite")));
            }
            let path = checkpoint_or_default(checkpoint, &config);
            commands::predict(&config, &path, t, p1).map_err(runtime)
        }
        Command::Evaluate { common, checkpoint, data } => {
            let config = resolve(&common, None, false).map_err(usage)?;
            let path = checkpoint_or_default(checkpoint, &config);
            commands::evaluate(&config, &path, data.as_deref()).map_err(runtime)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
