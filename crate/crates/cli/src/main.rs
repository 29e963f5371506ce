//! `ecgformer` command-line front end.
//!
//! Every command writes its artifacts as new files and prints one JSON
//! result line on stdout. Training commands also print one JSON line per
//! epoch. Logs go to stderr as JSON lines. On failure a JSON error record is
//! printed on stdout and the process exits nonzero.

mod commands;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use ecgformer::config::ExperimentConfig;
use ecgformer::dataset::{NoiseCondition, NoiseMode};
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(name = "ecgformer", version, about = "Tiny transformer for 5-class heartbeat classification")]
pub struct Cli {
    /// Seed for every random component; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 1 gives bit-exact reproducibility.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Experiment configuration (TOML). Defaults reproduce the reference setup.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Load every record of a directory and write a JSON inventory with class totals.
    Ingest {
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Remove baseline wander and high-frequency noise from every channel of a record.
    Denoise {
        #[arg(long = "in")]
        input: PathBuf,
        /// Output record stem (`dir/name`).
        #[arg(long)]
        out: PathBuf,
    },
    /// Detect R peaks on the denoised MLII lead and write them as CSV.
    Detect {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Segment the noiseless beats of a record directory into a dataset file.
    Segment {
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Segment beats with noise added at the given SNR (plus the noiseless copy).
    Augment {
        #[arg(long)]
        records: Option<PathBuf>,
        /// Noise record stem, e.g. `nstdb/em`.
        #[arg(long)]
        noise: Option<PathBuf>,
        #[arg(long, value_enum)]
        snr: SnrArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the train/valid/test indices (and optional folds) of a dataset.
    Split {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Train a float model on the training split and save the checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        /// Noise program of the training split (`noiseless`, `snr24`, `snr10`, `snr3`, `mix-train`).
        #[arg(long)]
        noise_mode: Option<NoiseMode>,
    },
    /// k-fold cross-validation; writes a report with per-fold and aggregate metrics.
    Cv {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, value_enum, default_value = "none")]
        noise: NoiseArg,
        #[arg(long)]
        report: PathBuf,
    },
    /// Calibrate, fine-tune with fake quantization and export the int8 model.
    Quantize {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        qat_epochs: Option<usize>,
    },
    /// Evaluate a checkpoint and write a report.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// The checkpoint is a quantized one; run integer-only inference.
        #[arg(long)]
        int8: bool,
        #[arg(long, value_enum, default_value = "none")]
        noise: NoiseArg,
        #[arg(long, value_enum, default_value = "test")]
        subset: Subset,
        #[arg(long)]
        report: PathBuf,
        /// Also write per-beat logits as CSV.
        #[arg(long)]
        logits: Option<PathBuf>,
    },
    /// Test accuracy under every noise condition, as one CSV row.
    Sweep {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        int8: bool,
        /// Row label; defaults to the training noise mode.
        #[arg(long)]
        label: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print parameter count, MOPS and memory footprint of the configured model.
    Count,
    /// Re-export a record in the CSV fallback format.
    ExportCsv {
        #[arg(long = "in")]
        input: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic annotated corpus and a synthetic noise record (`<out>/noise/em`).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        records: usize,
        #[arg(long, default_value_t = 650_000)]
        noise_samples: usize,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum SnrArg {
    #[value(name = "24")]
    Snr24,
    #[value(name = "10")]
    Snr10,
    #[value(name = "3")]
    Snr3,
    Mix,
}

impl SnrArg {
    pub fn conditions(self) -> Vec<NoiseCondition> {
        match self {
            SnrArg::Snr24 => vec![NoiseCondition::Noiseless, NoiseCondition::Snr24],
            SnrArg::Snr10 => vec![NoiseCondition::Noiseless, NoiseCondition::Snr10],
            SnrArg::Snr3 => vec![NoiseCondition::Noiseless, NoiseCondition::Snr3],
            SnrArg::Mix => NoiseCondition::ALL.to_vec(),
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum NoiseArg {
    None,
    #[value(name = "24")]
    Snr24,
    #[value(name = "10")]
    Snr10,
    #[value(name = "3")]
    Snr3,
    Mix,
}

impl NoiseArg {
    pub fn mode(self) -> NoiseMode {
        match self {
            NoiseArg::None => NoiseMode::Single(NoiseCondition::Noiseless),
            NoiseArg::Snr24 => NoiseMode::Single(NoiseCondition::Snr24),
            NoiseArg::Snr10 => NoiseMode::Single(NoiseCondition::Snr10),
            NoiseArg::Snr3 => NoiseMode::Single(NoiseCondition::Snr3),
            NoiseArg::Mix => NoiseMode::BalancedMixTest,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
pub enum Subset {
    Train,
    Valid,
    Test,
    All,
}

/// Resolved configuration shared by every command.
pub struct Ctx {
    pub cfg: ExperimentConfig,
    pub hash: String,
    pub command: &'static str,
}

impl Ctx {
    pub fn seed(&self) -> u64 {
        self.cfg.seed
    }

    /// Provenance embedded in every artifact.
    pub fn meta(&self) -> Value {
        json!({
            "command": self.command,
            "config_hash": self.hash,
            "seed": self.cfg.seed,
            "code_version": ecgformer::eval::CODE_VERSION,
        })
    }

    /// Writes `<artifact>.meta.json` next to artifacts whose format has no
    /// room for provenance.
    pub fn write_sidecar(&self, artifact: &Path, extra: Value) -> Result<PathBuf> {
        let mut name = artifact.as_os_str().to_owned();
        name.push(".meta.json");
        let path = PathBuf::from(name);
        let mut meta = self.meta();
        meta["artifact"] = json!(artifact);
        meta["details"] = extra;
        std::fs::write(&path, serde_json::to_vec_pretty(&meta)?)?;
        Ok(path)
    }
}

pub fn emit(v: &Value) {
    let mut out = std::io::stdout().lock();
    // A closed stdout is not worth a panic.
    let _ = writeln!(out, "{v}");
}

pub fn require(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        bail!("missing input: {what} {}", path.display());
    }
    Ok(())
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Ingest { .. } => "ingest",
        Command::Denoise { .. } => "denoise",
        Command::Detect { .. } => "detect",
        Command::Segment { .. } => "segment",
        Command::Augment { .. } => "augment",
        Command::Split { .. } => "split",
        Command::Train { .. } => "train",
        Command::Cv { .. } => "cv",
        Command::Quantize { .. } => "quantize",
        Command::Eval { .. } => "eval",
        Command::Sweep { .. } => "sweep",
        Command::Count => "count",
        Command::ExportCsv { .. } => "export-csv",
        Command::Synth { .. } => "synth",
    }
}

fn init_logging() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format(|buf, record| {
            writeln!(
                buf,
                "{}",
                json!({
                    "level": record.level().as_str(),
                    "target": record.target(),
                    "msg": record.args().to_string(),
                })
            )
        })
        .init();
}

fn setup(cli: &Cli) -> Result<Ctx> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let mut cfg = match &cli.config {
        Some(path) => {
            require(path, "config")?;
            ExperimentConfig::load(path).with_context(|| format!("loading config {}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    apply_overrides(&mut cfg, &cli.command);
    cfg.validate()?;
    let hash = cfg.hash();
    Ok(Ctx {
        cfg,
        hash,
        command: command_name(&cli.command),
    })
}

/// Folds command-line hyperparameters into the configuration so the config
/// hash covers them.
fn apply_overrides(cfg: &mut ExperimentConfig, command: &Command) {
    match command {
        Command::Train { epochs, noise_mode, .. } => {
            if let Some(e) = epochs {
                cfg.train.epochs = *e;
            }
            if let Some(m) = noise_mode {
                cfg.train.noise_mode = *m;
            }
        }
        Command::Cv { epochs, folds, .. } => {
            if let Some(e) = epochs {
                cfg.train.epochs = *e;
            }
            if let Some(k) = folds {
                cfg.split.n_folds = *k;
            }
        }
        Command::Split { folds: Some(k), .. } => cfg.split.n_folds = *k,
        Command::Quantize { qat_epochs: Some(e), .. } => cfg.qat.epochs = *e,
        _ => {}
    }
}

fn error_record(command: Option<&str>, kind: &str, message: &str) -> Value {
    json!({
        "event": "error",
        "command": command,
        "kind": kind,
        "error": message,
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let message = e.to_string();
            let first = message.lines().next().unwrap_or_default().trim_start_matches("error: ");
            emit(&error_record(None, "usage", first));
            return ExitCode::from(2);
        }
    };
    init_logging();
    let result = setup(&cli).and_then(|ctx| commands::run(&ctx, &cli.command).map(|v| (ctx, v)));
    match result {
        Ok((ctx, mut v)) => {
            let mut record = json!({ "event": "result" });
            record.as_object_mut().expect("object").extend(
                ctx.meta()
                    .as_object()
                    .expect("object")
                    .clone(),
            );
            if let Value::Object(fields) = v.take() {
                record.as_object_mut().expect("object").extend(fields);
            }
            emit(&record);
            ExitCode::SUCCESS
        }
        Err(e) => {
            let kind = if e.to_string().starts_with("missing input") {
                "missing-input"
            } else if e.chain().any(|c| matches!(c.downcast_ref(), Some(ecgformer::Error::Config(_)))) {
                "config"
            } else {
                "runtime"
            };
            emit(&error_record(Some(command_name(&cli.command)), kind, &format!("{e:#}")));
            ExitCode::FAILURE
        }
    }
}
