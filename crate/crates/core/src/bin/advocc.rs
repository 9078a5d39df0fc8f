use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use advocc::experiment::{
    cmd_ablation, cmd_evaluate, cmd_pseudo_preview, cmd_stability, cmd_train, parse_config,
    ExperimentConfig, DATA_ROOT_ENV,
};
use advocc::trainer::AblationPreset;
use advocc::{Error, Result};

#[derive(Parser)]
#[command(
    name = "advocc",
    version,
    about = "Two-phase adversarial one-class classifier"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Phase one, old-generator construction, phase two and evaluation.
    Train(Common),
    /// Score stored generator and discriminator checkpoints.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Generator checkpoint directory.
        #[arg(long)]
        generator: PathBuf,
        /// Discriminator checkpoint directory.
        #[arg(long)]
        discriminator: PathBuf,
    },
    /// Baseline plus every phase-two variant from one shared phase-one run.
    Ablation(Common),
    /// Phase two from each epoch in the configured range.
    Stability(Common),
    /// Image grid of the pseudo-anomaly stages for a finished training run.
    PseudoPreview {
        #[command(flatten)]
        common: Common,
        /// Directory of a completed `train` run.
        #[arg(long)]
        run: PathBuf,
        /// Number of training images (columns) to show.
        #[arg(long, default_value_t = 8)]
        count: usize,
    },
}

#[derive(Args)]
struct Common {
    /// JSON config; omitted means all defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; every file the command writes goes under it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    deterministic: bool,
    /// Phase-two variant: baseline, no_real, no_pseudo, no_low, raw_mix or full.
    #[arg(long)]
    variant: Option<AblationPreset>,
    /// Root directory holding the datasets.
    #[arg(long, env = DATA_ROOT_ENV)]
    data_root: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<(ExperimentConfig, PathBuf)> {
        let mut cfg = match &self.config {
            Some(path) => parse_config(path)?,
            None => ExperimentConfig::from_json_str("")?,
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if self.deterministic {
            cfg.deterministic = true;
        }
        if let Some(v) = self.variant {
            cfg.variant = v;
            cfg.streams = None;
        }
        if let Some(root) = &self.data_root {
            cfg.data_root = Some(root.clone());
        }
        if let Some(out) = &self.out {
            cfg.out_dir = Some(out.clone());
        }
        cfg.validate()?;
        let out = cfg.out_dir.clone().ok_or_else(|| {
            Error::Argument("--out (or out_dir in the config) is required".into())
        })?;
        Ok((cfg, out))
    }
}

fn run(cli: Cli) -> Result<PathBuf> {
    match cli.command {
        Command::Train(c) => {
            let (cfg, out) = c.resolve()?;
            cmd_train(&cfg, &out)?;
            Ok(out)
        }
        Command::Evaluate {
            common,
            generator,
            discriminator,
        } => {
            let (cfg, out) = common.resolve()?;
            cmd_evaluate(&cfg, &out, &generator, &discriminator)?;
            Ok(out)
        }
        Command::Ablation(c) => {
            let (cfg, out) = c.resolve()?;
            let table = cmd_ablation(&cfg, &out)?;
            for col in &table.columns {
                println!(
                    "{:<10} auc {:.4}  eer {:.4}  f1 {:.4}",
                    col.variant, col.report.auc, col.report.eer, col.report.f1_best
                );
            }
            Ok(out)
        }
        Command::Stability(c) => {
            let (cfg, out) = c.resolve()?;
            cmd_stability(&cfg, &out)?;
            Ok(out)
        }
        Command::PseudoPreview { common, run, count } => {
            let out = common
                .out
                .clone()
                .ok_or_else(|| Error::Argument("--out is required".into()))?;
            let png = cmd_pseudo_preview(&run, &out, count)?;
            println!("{}", png.display());
            Ok(out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(out) => {
            log::info!("results in {}", Path::new(&out).display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
