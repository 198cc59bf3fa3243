//! `csq`: one entry point with a subcommand per pipeline stage.
//!
//! Every stage reads its inputs from and writes its outputs to the run
//! directory given by `--out`, then records a manifest holding the resolved
//! configuration and SHA-256 digests of every input and output. Passing
//! that manifest back as `--config` reproduces the outputs byte for byte.

pub mod config;
mod run;
mod stages;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::Parser;
use thiserror::Error;

pub use config::{parse_kv, RunConfig};
pub use run::{sha256_hex, Lock, StageIo, LOCK_FILE};
pub use stages::{manifest_name, Stage};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("unknown subcommand {0:?} (expected one of {list})", list = Stage::NAMES.join(", "))]
    UnknownSubcommand(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Stage(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::UnknownSubcommand(_) | CliError::Config(_) => 2,
            CliError::Io { .. } | CliError::Stage(_) => 1,
        }
    }
}

macro_rules! stage_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Stage(e.to_string())
            }
        }
    )*};
}

stage_error!(
    csq_core::kg::KgError,
    csq_core::concept::EmbedError,
    csq_core::word::WordError,
    csq_core::corpus::CorpusError,
    csq_core::models::ModelError,
    csq_core::eval::EvalError,
    csq_core::synth::SynthError
);

#[derive(Debug, Parser)]
#[command(name = "csq", version, about = "Concept-enhanced Seq2Seq note generation pipeline")]
struct Args {
    /// synth | preprocess | train-embed | enrich | train-word | train-lm |
    /// generate | eval-ppl | export-questionnaire
    subcommand: String,
    /// Flat `key = value` file; a previous run's manifest works too.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// baseline, cs, csd, hcsd or hcsd-t
    #[arg(long)]
    variant: Option<String>,
    /// full or desk
    #[arg(long)]
    preset: Option<String>,
    /// Run directory for inputs and outputs.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long = "max-len")]
    max_len: Option<usize>,
    /// Example split used by generate, eval-ppl and export-questionnaire.
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    triplets: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Any other config key, as KEY=VALUE; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Args {
    fn flag_values(&self) -> Result<BTreeMap<String, String>, CliError> {
        let mut out = BTreeMap::new();
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            out.insert(k.trim().to_string(), v.trim().to_string());
        }
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let named = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("variant", self.variant.clone()),
            ("preset", self.preset.clone()),
            ("out", path(&self.out)),
            ("epochs", self.epochs.map(|v| v.to_string())),
            ("beam", self.beam.map(|v| v.to_string())),
            ("max_len", self.max_len.map(|v| v.to_string())),
            ("split", self.split.clone()),
            ("corpus", path(&self.corpus)),
            ("triplets", path(&self.triplets)),
            ("lexicon", path(&self.lexicon)),
        ];
        out.extend(named.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
        Ok(out)
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("CSQ_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Parses `argv` (program name first) and runs one stage.
pub fn run_subcommand<I, S>(argv: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let args = Args::try_parse_from(argv).map_err(|e| CliError::Config(first_line(&e.to_string())))?;
    let stage: Stage = args.subcommand.parse()?;
    let file = match &args.config {
        Some(p) => config::read_config_file(p)?,
        None => BTreeMap::new(),
    };
    let cfg = RunConfig::resolve(file, args.flag_values()?)?;
    if let Some(recorded) = &cfg.manifest_subcommand {
        if recorded != stage.name() {
            return Err(CliError::Config(format!("manifest is for {recorded}, not {}", stage.name())));
        }
    }
    stage.execute(&cfg)
}

fn first_line(s: &str) -> String {
    s.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments").trim().to_string()
}

/// Runs `argv`, printing a one-line diagnostic on failure; returns the
/// process exit status.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    init_logging();
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    if let Err(e) = Args::try_parse_from(&argv) {
        if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
            print!("{e}");
            return 0;
        }
    }
    match run_subcommand(argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("csq: error: {}", first_line(&e.to_string()));
            e.exit_code()
        }
    }
}
