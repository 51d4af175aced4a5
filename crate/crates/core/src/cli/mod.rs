//! Config-driven experiment runner behind the `skelsafe` binary.
//!
//! Each subcommand reads the artifacts of earlier ones from the output
//! directory and writes its own next to them:
//!
//! ```text
//! <out>/data/{source_train,source_val,source_test,style_target,semantic_target}/
//! <out>/train/member_{m}/{model.json,weights.bin,epochs.csv}
//! <out>/eval/{report.json,scores/,curves/,reliability/,plots/}
//! <out>/adapt/{frozen,finetuned}/
//! <out>/corrupt/
//! <out>/ablate_mc/
//! ```

mod commands;
mod config;
mod layout;
mod report;
mod svg;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use commands::{cmd_ablate_mc, cmd_adapt, cmd_corrupt, cmd_eval, cmd_gen, cmd_train, style_splits};
pub use config::{
    AdaptSettings, DataSettings, ExperimentConfig, MetricSettings, ModelSettings, OptimSettings, UqSettings,
    DEFAULT_SEED,
};
pub use layout::{Layout, DATA_BUNDLES};
pub use report::{strip_metadata, REPORT_FILE};

use crate::model::ModelError;
use crate::numerics::NumericsError;
use crate::safety::SafetyError;
use crate::skeldata::DataError;
use crate::uq::UqError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Gen,
    Train,
    Eval,
    Adapt,
    Corrupt,
    AblateMc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AdaptMode {
    /// Train only the gate.
    Frozen,
    /// Train the gate and the backbone.
    Finetuned,
}

impl AdaptMode {
    pub fn name(self) -> &'static str {
        match self {
            AdaptMode::Frozen => "frozen",
            AdaptMode::Finetuned => "finetuned",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{} exists; pass --force to overwrite", .0.display())]
    Exists(PathBuf),
    #[error("missing artifacts: {}", .0.join(", "))]
    Missing(Vec<String>),
    #[error("unreadable artifact: {0}")]
    Artifact(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Exists(_) => 2,
            CliError::Missing(_) | CliError::Artifact(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Io { .. } => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Exists(_) => "exists",
            CliError::Missing(_) => "missing_artifact",
            CliError::Artifact(_) => "artifact",
            CliError::Numerical(_) => "numerical",
            CliError::Io { .. } => "io",
        }
    }

    /// One-line JSON for stderr.
    pub fn to_json(&self) -> String {
        let mut v = serde_json::json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        if let CliError::Missing(list) = self {
            v["missing"] = serde_json::json!(list);
        }
        v.to_string()
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<NumericsError> for CliError {
    fn from(e: NumericsError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<SafetyError> for CliError {
    fn from(e: SafetyError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io { path, source } if source.kind() == std::io::ErrorKind::NotFound => {
                CliError::Missing(vec![path])
            }
            DataError::Io { path, source } => CliError::Io { path, source },
            DataError::InvalidParameter(m) => CliError::Config(m),
            DataError::NonFinite { .. } => CliError::Numerical(e.to_string()),
            other => CliError::Artifact(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(m) => CliError::Config(m),
            ModelError::Io { path, source } if source.kind() == std::io::ErrorKind::NotFound => {
                CliError::Missing(vec![path])
            }
            ModelError::Io { path, source } => CliError::Io { path, source },
            ModelError::Checkpoint(m) => CliError::Artifact(m),
            ModelError::Shape(m) => CliError::Artifact(m),
            ModelError::Numerics(n) => n.into(),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<UqError> for CliError {
    fn from(e: UqError) -> Self {
        match e {
            UqError::Model(m) => m.into(),
            UqError::Config(m) => CliError::Config(m),
            UqError::MissingArtifact(m) => CliError::Missing(vec![m.to_string()]),
            UqError::Io { path, source } => CliError::Io { path, source },
            other => CliError::Numerical(other.to_string()),
        }
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub force: bool,
    pub mode: Option<AdaptMode>,
}

/// Applies the overrides to `config` and runs one subcommand. Returns the
/// directory the command wrote.
pub fn run(command: Command, mut config: ExperimentConfig, options: &RunOptions) -> Result<PathBuf, CliError> {
    if let Some(seed) = options.seed {
        config.seed = seed;
    }
    if let Some(out) = &options.out {
        config.output_dir = out.clone();
    }
    config.validate()?;
    if options.mode.is_some() && command != Command::Adapt {
        return Err(CliError::Config("--mode only applies to adapt".into()));
    }
    let layout = Layout::new(&config.output_dir);
    match command {
        Command::Gen => cmd_gen(&config, &layout, options.force),
        Command::Train => cmd_train(&config, &layout, options.force),
        Command::Eval => cmd_eval(&config, &layout, options.force),
        Command::Adapt => {
            let modes = match options.mode {
                Some(m) => vec![m],
                None => vec![AdaptMode::Frozen, AdaptMode::Finetuned],
            };
            let mut last = layout.adapt_root();
            for m in modes {
                last = cmd_adapt(&config, &layout, m, options.force)?;
            }
            Ok(last)
        }
        Command::Corrupt => cmd_corrupt(&config, &layout, options.force),
        Command::AblateMc => cmd_ablate_mc(&config, &layout, options.force),
    }
}

/// Worker threads requested through `SKELSAFE_THREADS`, if set.
pub fn thread_limit() -> Result<Option<usize>, CliError> {
    match std::env::var("SKELSAFE_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config(format!(
                "SKELSAFE_THREADS={v:?} is not a positive integer"
            ))),
        },
        Err(_) => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::Exists("d".into()).exit_code(), 2);
        assert_eq!(CliError::Missing(vec!["a".into()]).exit_code(), 3);
        assert_eq!(CliError::Numerical("nan".into()).exit_code(), 4);
        let v: serde_json::Value =
            serde_json::from_str(&CliError::Missing(vec!["a".into(), "b".into()]).to_json()).unwrap();
        assert_eq!(v["exit_code"], 3);
        assert_eq!(v["missing"][1], "b");
    }

    #[test]
    fn error_conversions() {
        let nf = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        let e: CliError = DataError::Io {
            path: "p".into(),
            source: nf,
        }
        .into();
        assert!(matches!(e, CliError::Missing(_)));
        let e: CliError = DataError::ChecksumMismatch {
            expected: "a".into(),
            actual: "b".into(),
        }
        .into();
        assert_eq!(e.exit_code(), 3);
        let e: CliError = UqError::Factorization { pivot: 0 }.into();
        assert_eq!(e.exit_code(), 4);
        let e: CliError = ModelError::Numerics(NumericsError::NonFinite { index: 3 }).into();
        assert_eq!(e.exit_code(), 4);
    }

    #[test]
    fn mode_is_only_for_adapt() {
        let opts = RunOptions {
            mode: Some(AdaptMode::Frozen),
            out: Some(std::env::temp_dir().join("skelsafe-mode-check")),
            ..Default::default()
        };
        assert!(matches!(
            run(Command::Gen, ExperimentConfig::default(), &opts),
            Err(CliError::Config(_))
        ));
    }
}
