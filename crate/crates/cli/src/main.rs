use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vipgan::Result;
use vipgan_cli::commands;
use vipgan_cli::config::RunConfig;

#[derive(Parser)]
#[command(name = "vipgan", version, about = "View inter-prediction GAN for unsupervised 3D shape features")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Dataset directory or manifest file.
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic multi-view dataset.
    GenData,
    /// Train networks and memory rows.
    Train {
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
        /// Keep every memory row at zero (pooled-feature baselines).
        #[arg(long)]
        freeze_memory_zero: bool,
    },
    /// Export a feature vector for every dataset shape.
    Features {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Linear-classifier probe on exported features.
    Classify {
        #[arg(long)]
        features: PathBuf,
    },
    /// Retrieval metrics over the test shapes.
    Retrieve {
        #[arg(long)]
        features: PathBuf,
    },
    /// Nearest neighbours of `a - b + c`.
    Algebra {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        #[arg(long)]
        c: String,
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
    /// Compare pooled hidden states with learned memory rows.
    Aggregation {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Checkpoint trained with `--freeze-memory-zero`.
        #[arg(long)]
        zero_checkpoint: PathBuf,
    },
    /// Train one model per grid cell and probe each.
    Ablate {
        /// `balance`, `parameters`, `all` or a grid file.
        #[arg(long, default_value = "balance")]
        grid: String,
    },
    /// Prediction images and a CSV summary for a run directory.
    Report { run_dir: PathBuf },
}

fn build_config(g: &Global) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(p) = &g.config {
        cfg.apply_file(p)?;
    }
    for o in &g.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| vipgan::Error::Param(format!("--set expects KEY=VALUE, got {o:?}")))?;
        cfg.set(k, v)?;
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(o) = &g.out {
        cfg.out = o.clone();
    }
    if let Some(d) = &g.dataset {
        cfg.dataset = Some(d.clone());
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<String> {
    let mut cfg = build_config(&cli.global)?;
    match cli.command {
        Command::GenData => commands::cmd_gen_data(&cfg),
        Command::Train { resume, freeze_memory_zero } => {
            cfg.freeze_memory_zero |= freeze_memory_zero;
            commands::cmd_train(&cfg, resume)
        }
        Command::Features { checkpoint } => commands::cmd_features(&cfg, &checkpoint),
        Command::Classify { features } => commands::cmd_classify(&cfg, &features),
        Command::Retrieve { features } => commands::cmd_retrieve(&cfg, &features),
        Command::Algebra { features, a, b, c, k } => commands::cmd_algebra(&cfg, &features, &a, &b, &c, k),
        Command::Aggregation { checkpoint, zero_checkpoint } => {
            commands::cmd_aggregation(&cfg, &checkpoint, &zero_checkpoint)
        }
        Command::Ablate { grid } => {
            let cells = commands::parse_grid(&grid)?;
            commands::cmd_ablate(&cfg, &cells)
        }
        Command::Report { run_dir } => commands::cmd_report(&cfg, &run_dir),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
