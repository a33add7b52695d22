mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Error carried to the process exit: 1 usage, 2 data or format, 3 numerical.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<cmvqa::Error> for Failure {
    fn from(e: cmvqa::Error) -> Self {
        let message = e.to_string();
        match e {
            e if e.is_numerical() => Self::numerical(message),
            cmvqa::Error::Config(_) => Self::usage(message),
            _ => Self::data(message),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cmvqa", version, about = "Compositional-memory visual question answering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Configuration override, `key=value`; may be repeated and wins over the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic toy dataset: manifests, features and a taxonomy.
    GenToy {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model and write its checkpoint, vocabularies and loss log.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        features: Option<PathBuf>,
        /// Manifest scored after training.
        #[arg(long)]
        validation: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        iterations: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a checkpoint on a manifest.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        /// Emit `key TAB value` lines instead of a table.
        #[arg(long)]
        tsv: bool,
    },
    /// Answer one question about one image.
    Infer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        question: String,
        /// Image id in the feature file; defaults to the first record.
        #[arg(long)]
        image: Option<String>,
    },
    /// Compare analytic gradients with finite differences on a random instance.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Dump the attention weights of every decoding step as CSV.
    InspectAttention {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        question: String,
        #[arg(long)]
        image: Option<String>,
        /// Also draw each step as a row of shaded cells.
        #[arg(long)]
        grid: bool,
    },
}

fn load_config(common: &Common, flags: &[(&str, Option<String>)]) -> Result<config::RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(p) => config::RunConfig::load(p)?,
        None => config::RunConfig::default(),
    };
    cfg.apply(&common.overrides)?;
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    Ok(cfg)
}

fn path_flag(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::GenToy { common, seed, out } => {
            let cfg = load_config(
                &common,
                &[("toy.seed", seed.map(|s| s.to_string())), ("data.out", path_flag(&out))],
            )?;
            commands::gen_toy(&cfg)
        }
        Command::Train {
            common,
            manifest,
            features,
            validation,
            out,
            variant,
            iterations,
            seed,
        } => {
            let cfg = load_config(
                &common,
                &[
                    ("data.manifest", path_flag(&manifest)),
                    ("data.features", path_flag(&features)),
                    ("data.validation", path_flag(&validation)),
                    ("data.out", path_flag(&out)),
                    ("net.variant", variant),
                    ("train.iterations", iterations.map(|i| i.to_string())),
                    ("train.seed", seed.map(|s| s.to_string())),
                ],
            )?;
            commands::train(&cfg)
        }
        Command::Eval {
            common,
            checkpoint,
            manifest,
            features,
            taxonomy,
            tsv,
        } => {
            let cfg = load_config(
                &common,
                &[
                    ("data.checkpoint", path_flag(&checkpoint)),
                    ("data.manifest", path_flag(&manifest)),
                    ("data.features", path_flag(&features)),
                    ("data.taxonomy", path_flag(&taxonomy)),
                ],
            )?;
            commands::eval(&cfg, tsv)
        }
        Command::Infer {
            common,
            checkpoint,
            features,
            question,
            image,
        } => {
            let cfg = load_config(
                &common,
                &[
                    ("data.checkpoint", path_flag(&checkpoint)),
                    ("data.features", path_flag(&features)),
                ],
            )?;
            commands::infer(&cfg, &question, image.as_deref())
        }
        Command::Gradcheck { common, seed } => {
            let cfg = load_config(&common, &[("gradcheck.seed", seed.map(|s| s.to_string()))])?;
            commands::gradcheck(&cfg)
        }
        Command::InspectAttention {
            common,
            checkpoint,
            features,
            question,
            image,
            grid,
        } => {
            let cfg = load_config(
                &common,
                &[
                    ("data.checkpoint", path_flag(&checkpoint)),
                    ("data.features", path_flag(&features)),
                ],
            )?;
            commands::inspect_attention(&cfg, &question, image.as_deref(), grid)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
