use std::path::PathBuf;
use std::process::ExitCode;

use aeidc_cli::commands::{self, Overrides, DEFAULT_GRID};
use aeidc_cli::{CliError, ExperimentConfig};
use clap::{Parser, Subcommand};

/// Autoencoders with intrinsic-dimension constraints.
#[derive(Parser)]
#[command(name = "aeidc", version)]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides training.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides output.dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print GID and per-sample LID of a tensor file or the configured dataset.
    EstimateId {
        /// IDX tensor, `[N, M]`, `[N, H, W]` or `[N, C, H, W]`.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Train and write a checkpoint, loss curves and a manifest.
    Train,
    /// Score a checkpoint's embeddings.
    Evaluate {
        /// Defaults to the checkpoint in the output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Compare the loss-term variants (and stage modes with --stages).
    Ablate {
        #[arg(long)]
        stages: bool,
    },
    /// Train and evaluate over a λ_gid × λ_lid grid.
    Sweep {
        #[arg(long, value_delimiter = ',')]
        gid: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        lid: Option<Vec<f64>>,
    },
    /// Write the configured dataset as IDX files.
    GenData,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::from_file(path)?;
    Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
    }
    .apply(&mut cfg);
    Ok(cfg)
}

fn fmt_scores(r: &aeidc::eval::MetricsReport) -> String {
    let mut parts: Vec<String> = r.knn_accuracy.iter().map(|(k, a)| format!("knn@{k} {a:.4}")).collect();
    if let (Some(ari), Some(ami)) = (r.ari, r.ami) {
        parts.push(format!("ari {ari:.4} ami {ami:.4}"));
    }
    parts.join("  ")
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::EstimateId { input, json } => {
            let cfg = if input.is_none() { Some(load_config(cli)?) } else { None };
            let s = commands::cmd_estimate_id(input.as_deref(), cfg.as_ref())?;
            if *json {
                println!("{}", serde_json::to_string(&s).expect("summary serialises"));
            } else {
                print!("{}", s.text());
            }
        }
        Command::Train => {
            let cfg = load_config(cli)?;
            let out = commands::cmd_train(&cfg)?;
            for s in &out.log.stages {
                if let Some(r) = s.records.last() {
                    println!("{}: total {:.6}", s.stage.name(), r.total);
                }
            }
            println!("wrote {}", cfg.output.dir.display());
        }
        Command::Evaluate { checkpoint } => {
            let cfg = load_config(cli)?;
            let ev = commands::cmd_evaluate(&cfg, checkpoint.as_deref())?;
            println!("{}", fmt_scores(&ev.report));
        }
        Command::Ablate { stages } => {
            let cfg = load_config(cli)?;
            for r in commands::cmd_ablate(&cfg, *stages)? {
                println!("{:<16} {}", r.name, fmt_scores(&r.report));
            }
        }
        Command::Sweep { gid, lid } => {
            let cfg = load_config(cli)?;
            let g = gid.clone().unwrap_or_else(|| DEFAULT_GRID.to_vec());
            let l = lid.clone().unwrap_or_else(|| DEFAULT_GRID.to_vec());
            for r in commands::cmd_sweep(&cfg, &g, &l)? {
                println!("gid {:<6} lid {:<6} {}", r.lambda_gid, r.lambda_lid, fmt_scores(&r.report));
            }
        }
        Command::GenData => {
            let cfg = load_config(cli)?;
            for p in commands::cmd_gen_data(&cfg)? {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
