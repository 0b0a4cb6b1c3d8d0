use std::path::PathBuf;
use std::process::ExitCode;

use augseg_core::train::Preset;
use augseg_core::Error;
use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod preview;

#[derive(Parser, Debug)]
#[command(name = "augseg", version, about = "Semi-supervised segmentation on synthetic shapes")]
struct Cli {
    /// JSON run config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render the synthetic dataset and its split manifest.
    GenData {
        /// Labeled fraction of the training split.
        #[arg(long)]
        fraction: Option<f64>,
    },
    /// Train one run.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// supervised, mt, mt_ar, mt_aa or full.
        #[arg(long)]
        ablation: Option<Preset>,
        /// Continue from the run directory's last checkpoint.
        #[arg(long)]
        resume: bool,
        #[command(flatten)]
        knobs: Knobs,
    },
    /// Print validation mIoU of a checkpoint as JSON.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Dump weak and strong views, targets and provenance for a few samples.
    AugmentPreview {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 4)]
        count: usize,
        /// Teacher for pseudo-labels; a fresh init from the seed otherwise.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train a grid of presets and knob values over several seeds.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        seeds: Vec<u64>,
        #[arg(long, value_delimiter = ',')]
        presets: Vec<Preset>,
        /// Intensity op counts to try with the full preset.
        #[arg(long, value_delimiter = ',')]
        sweep_k: Vec<usize>,
        /// Unlabeled loss weights to try with the full preset.
        #[arg(long, value_delimiter = ',')]
        sweep_lambda: Vec<f64>,
        #[command(flatten)]
        knobs: Knobs,
    },
}

#[derive(Args, Debug, Default, Clone, Copy)]
struct Knobs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lambda_u: Option<f64>,
    /// Number of intensity ops per plan.
    #[arg(long)]
    k: Option<usize>,
}

fn run(cli: Cli) -> augseg_core::Result<()> {
    let mut cfg = config::resolve(cli.config.as_deref(), cli.seed)?;
    let out = cli.out.clone();
    match cli.command {
        Command::GenData { fraction } => {
            if let Some(f) = fraction {
                cfg.dataset.label_fraction = f;
            }
            commands::gen_data(&cfg, &required(out)?)
        }
        Command::Train { data, ablation, resume, knobs } => {
            if let Some(p) = ablation {
                cfg.train.apply_preset(p);
            }
            knobs.apply(&mut cfg);
            commands::train(&cfg, &data, &required(out)?, resume)
        }
        Command::Eval { checkpoint, data } => commands::eval(&checkpoint, &data),
        Command::AugmentPreview { data, count, checkpoint } => {
            preview::run(&cfg, &data, &required(out)?, count, checkpoint.as_deref())
        }
        Command::Ablate { data, seeds, presets, sweep_k, sweep_lambda, knobs } => {
            knobs.apply(&mut cfg);
            let grid = commands::Grid { seeds, presets, sweep_k, sweep_lambda };
            commands::ablate(&cfg, &data, &required(out)?, &grid)
        }
    }
}

impl Knobs {
    fn apply(self, cfg: &mut augseg_core::train::RunConfig) {
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        if let Some(l) = self.lambda_u {
            cfg.train.lambda_u = l;
        }
        if let Some(k) = self.k {
            cfg.intensity.k = k;
        }
    }
}

fn required(out: Option<PathBuf>) -> augseg_core::Result<PathBuf> {
    out.ok_or_else(|| Error::Argument("--out is required for this command".into()))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => 3,
        Error::NonFinite(_) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_kinds_map_to_exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::State("x".into())), 2);
        assert_eq!(exit_code(&Error::Format { field: "magic".into(), message: "x".into() }), 2);
        let io = Error::Io { path: "p".into(), source: std::io::Error::other("x") };
        assert_eq!(exit_code(&io), 3);
        assert_eq!(exit_code(&Error::NonFinite("x".into())), 4);
    }

    #[test]
    fn presets_parse_from_flags() {
        let cli = Cli::try_parse_from(["augseg", "train", "--data", "d", "--ablation", "mt_ar", "--out", "o"]).unwrap();
        match cli.command {
            Command::Train { ablation, .. } => assert_eq!(ablation, Some(Preset::MtAr)),
            _ => unreachable!(),
        }
        assert!(Cli::try_parse_from(["augseg", "train", "--data", "d", "--ablation", "weird"]).is_err());
    }
}
