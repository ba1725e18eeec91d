use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ecg_denoise::commands::{
    cmd_bench, cmd_denoise, cmd_denoise_dataset, cmd_evaluate, cmd_prepare, cmd_prepare_synthetic, cmd_sweep,
    cmd_train, BenchOptions, DenoiseOptions, EvalOptions, Processed,
};
use ecg_denoise::config::RunConfig;
use ecg_denoise::data::dataset::Split;
use ecg_denoise::tf::FeatureMode;
use ecg_denoise::{Error, Result};

/// ECG baseline-wander removal: data preparation, training, denoising,
/// evaluation, compression sweeps and timing.
#[derive(Debug, Parser)]
#[command(name = "ecg-denoise", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Run configuration (`key = value` lines with model./train./data. keys).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides train.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides model.mode.
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// Overrides model.c, the compression exponent.
    #[arg(long, global = true)]
    c: Option<f64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Complex,
    #[value(name = "mag_phase")]
    MagPhase,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Baseline {
    Noisy,
    Fir,
    Iir,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Segment clean records and contaminate them with noise records, or
    /// write a synthetic corpus.
    Prepare {
        /// Directory of clean records (defaults to data.clean_dir).
        #[arg(long)]
        clean: Option<PathBuf>,
        /// Directory of noise records (defaults to data.noise_dir).
        #[arg(long)]
        noise: Option<PathBuf>,
        /// Write this many synthetic pairs instead of reading records.
        #[arg(long, conflicts_with_all = ["clean", "noise"])]
        synthetic: Option<usize>,
    },
    /// Train a model on a prepared dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Continue the run stored in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Denoise record files, directories of records, or a prepared dataset.
    Denoise {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Prepared dataset whose noisy segments are denoised.
        #[arg(long, conflicts_with = "inputs")]
        data: Option<PathBuf>,
        /// Restrict `--data` to one split.
        #[arg(long, value_enum, requires = "data")]
        split: Option<SplitArg>,
        /// Force the mask to one and keep the noisy phase.
        #[arg(long)]
        identity_mask: bool,
        /// Also write the enhanced spectrogram of every tile.
        #[arg(long)]
        dumps: bool,
        /// `.hea` / `.csv` records or directories of them.
        inputs: Vec<PathBuf>,
    },
    /// Score processed signals against clean references.
    Evaluate {
        /// Prepared dataset or directory of clean records.
        #[arg(long)]
        clean: PathBuf,
        /// Directory of processed `<id>.csv` files.
        #[arg(long, conflicts_with = "baseline", required_unless_present = "baseline")]
        processed: Option<PathBuf>,
        /// Score a baseline computed from the noisy segments instead.
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
        /// Emit metric curves over this many noise-factor bins.
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long, value_enum)]
        split: Option<SplitArg>,
    },
    /// Train and score one model per compression exponent.
    SweepC {
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated exponents.
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
        c_list: Vec<f64>,
    },
    /// Time checkpoints' forward passes and score their output.
    Bench {
        #[arg(long)]
        data: PathBuf,
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value_t = 16)]
        max_segments: usize,
    },
}

fn run_config(g: &Global) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.train.seed = s;
    }
    if let Some(m) = g.mode {
        cfg.model.mode = match m {
            ModeArg::Complex => FeatureMode::Complex,
            ModeArg::MagPhase => FeatureMode::MagPhase,
        };
    }
    if let Some(c) = g.c {
        cfg.model.c = c;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = run_config(&cli.global)?;
    let out = cli
        .global
        .out
        .clone()
        .ok_or_else(|| Error::Config("--out DIR is required".into()))?;
    match cli.command {
        Command::Prepare { clean, noise, synthetic } => {
            let report = match synthetic {
                Some(n) => cmd_prepare_synthetic(n, &out, &cfg)?,
                None => {
                    let clean = clean
                        .or_else(|| cfg.data.clean_dir.clone())
                        .ok_or_else(|| Error::Config("no clean directory given".into()))?;
                    let noise = noise
                        .or_else(|| cfg.data.noise_dir.clone())
                        .ok_or_else(|| Error::Config("no noise directory given".into()))?;
                    cmd_prepare(&clean, &noise, &out, &cfg)?
                }
            };
            println!("prepared {} pairs, {} rejects -> {}", report.pairs, report.rejects, out.display());
        }
        Command::Train { data, resume } => {
            let outcome = cmd_train(&data, &out, &cfg, resume)?;
            for row in &outcome.log {
                println!(
                    "epoch {:>3}  lr {:.3e}  train {:.5}  val {:.5}  val_ssd {:.4}",
                    row.epoch, row.lr, row.train_loss, row.val_loss, row.val_ssd
                );
            }
            println!("best epoch {} -> {}", outcome.state.best_epoch, out.display());
        }
        Command::Denoise {
            checkpoint,
            data,
            split,
            identity_mask,
            dumps,
            inputs,
        } => {
            let opts = DenoiseOptions { identity_mask, dumps };
            let done = match data {
                Some(d) => cmd_denoise_dataset(&checkpoint, &d, split.map(Into::into), &out, &cfg, opts)?,
                None => cmd_denoise(&checkpoint, &inputs, &out, &cfg, opts)?,
            };
            println!("denoised {} signals -> {}", done.len(), out.display());
        }
        Command::Evaluate {
            clean,
            processed,
            baseline,
            bins,
            split,
        } => {
            let processed = match (processed, baseline) {
                (Some(p), _) => Processed::Dir(p),
                (None, Some(Baseline::Noisy)) => Processed::Noisy,
                (None, Some(Baseline::Fir)) => Processed::Fir,
                (None, Some(Baseline::Iir)) => Processed::Iir,
                (None, None) => return Err(Error::Config("give --processed or --baseline".into())),
            };
            let opts = EvalOptions {
                bins,
                split: split.map(Into::into),
            };
            let s = cmd_evaluate(&clean, &processed, &out, &cfg, opts)?.summary;
            println!(
                "{} segments  SSD {:.4} ± {:.4}  MAD {:.4} ± {:.4}  PRD {:.2} ± {:.2}  CosSim {:.4} ± {:.4}",
                s.count, s.ssd.mean, s.ssd.std, s.mad.mean, s.mad.std, s.prd.mean, s.prd.std, s.cossim.mean, s.cossim.std
            );
        }
        Command::SweepC { data, c_list } => {
            for r in cmd_sweep(&data, &out, &cfg, &c_list)? {
                let mark = if r.is_default { " (default)" } else { "" };
                println!("c {:.2}  SSD {:.4}  MAD {:.4}  PRD {:.2}  CosSim {:.4}{mark}", r.c, r.ssd, r.mad, r.prd, r.cossim);
            }
        }
        Command::Bench {
            data,
            checkpoints,
            reps,
            max_segments,
        } => {
            let opts = BenchOptions { reps, max_segments };
            for r in cmd_bench(&checkpoints, &data, &out, &cfg, opts)? {
                println!(
                    "{}  window {} hop {}  {:.4} ± {:.4} s  SSD {:.4}  {} flops",
                    r.config_id, r.window, r.hop, r.mean_s, r.std_s, r.ssd_mean, r.flops
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
