use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;
use crate::model::{ModelConfig, TrainHyper, Trainable};
use crate::numerics::derive_seed;
use crate::safety::{default_grid, DEFAULT_BINS};
use crate::skeldata::DomainSpec;
use crate::uq::{FeatureSpace, SHRINKAGE};

/// Sample counts and sequence geometry of the synthetic domains. The class
/// templates themselves follow from the master seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSettings {
    pub classes: usize,
    pub frames: usize,
    pub source_train: usize,
    pub source_val: usize,
    pub source_test: usize,
    /// Labeled style-shift samples used for gating adaptation.
    pub style_adapt: usize,
    /// Labeled style-shift samples held out for refitting the temperature
    /// after adaptation.
    pub style_calibration: usize,
    pub style_test: usize,
    pub semantic_test: usize,
}

impl Default for DataSettings {
    fn default() -> Self {
        Self {
            classes: 8,
            frames: 4,
            source_train: 432,
            source_val: 48,
            source_test: 160,
            style_adapt: 500,
            style_calibration: 120,
            style_test: 960,
            semantic_test: 240,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSettings {
    pub d_joint: usize,
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub dropout: f64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        let desk = ModelConfig::desk(2, 1, 0);
        Self {
            d_joint: desk.d_joint,
            d_model: desk.d_model,
            layers: desk.layers,
            heads: desk.heads,
            mlp_ratio: desk.mlp_ratio,
            dropout: desk.dropout,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
}

impl Default for OptimSettings {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 8,
            lr: 1e-3,
            weight_decay: 1e-4,
        }
    }
}

/// Optimizer settings of both gating variants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
}

impl Default for AdaptSettings {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 8,
            lr: 1e-3,
            weight_decay: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UqSettings {
    /// Stochastic passes behind the MC-dropout entropy column.
    pub mc_passes: usize,
    /// Pass counts compared by `ablate-mc`.
    pub mc_ablation: Vec<usize>,
    pub ensemble_size: usize,
    pub energy_temperature: f64,
    /// Relative covariance shrinkage of the Mahalanobis detector.
    pub shrinkage: f64,
    pub features: FeatureSpace,
}

impl Default for UqSettings {
    fn default() -> Self {
        Self {
            mc_passes: 20,
            mc_ablation: vec![5, 10, 20, 30],
            ensemble_size: 3,
            energy_temperature: 1.0,
            shrinkage: SHRINKAGE,
            features: FeatureSpace::PreGate,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricSettings {
    pub coverage_grid: Vec<f64>,
    pub bins: usize,
}

impl Default for MetricSettings {
    fn default() -> Self {
        Self {
            coverage_grid: default_grid(),
            bins: DEFAULT_BINS,
        }
    }
}

/// Master seed of the reference experiment.
pub const DEFAULT_SEED: u64 = 42;

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/default")
}

/// A full experiment. Every section may be omitted and then takes its
/// defaults; unknown keys anywhere are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub data: DataSettings,
    #[serde(default)]
    pub model: ModelSettings,
    #[serde(default)]
    pub train: OptimSettings,
    #[serde(default)]
    pub adapt: AdaptSettings,
    #[serde(default)]
    pub uq: UqSettings,
    #[serde(default)]
    pub metrics: MetricSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let config: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        let d = &self.data;
        if d.classes < 2 || d.frames == 0 {
            return bad(format!("classes={} frames={}", d.classes, d.frames));
        }
        for (name, n) in [
            ("source_train", d.source_train),
            ("source_val", d.source_val),
            ("source_test", d.source_test),
            ("style_adapt", d.style_adapt),
            ("style_calibration", d.style_calibration),
            ("style_test", d.style_test),
            ("semantic_test", d.semantic_test),
        ] {
            if n < d.classes {
                return bad(format!("data.{name}={n} must cover every one of {} classes", d.classes));
            }
        }
        if d.source_train < 2 * d.classes {
            return bad("data.source_train needs two samples per class for the Mahalanobis fit".into());
        }
        self.model_config()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.train_hyper()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.adapt_hyper(Trainable::GateOnly)
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let u = &self.uq;
        if u.mc_passes == 0 || u.mc_ablation.is_empty() || u.mc_ablation.contains(&0) {
            return bad("MC pass counts must be positive".into());
        }
        if u.ensemble_size < 2 {
            return bad(format!(
                "uq.ensemble_size={} but disagreement needs two members",
                u.ensemble_size
            ));
        }
        if !(u.energy_temperature > 0.0 && u.energy_temperature.is_finite()) {
            return bad(format!("uq.energy_temperature={}", u.energy_temperature));
        }
        if !(u.shrinkage > 0.0 && u.shrinkage.is_finite()) {
            return bad(format!("uq.shrinkage={}", u.shrinkage));
        }
        let g = &self.metrics.coverage_grid;
        if g.is_empty() || g.windows(2).any(|w| w[0] >= w[1]) || g.iter().any(|k| !(*k > 0.0 && *k <= 1.0)) {
            return bad("metrics.coverage_grid must increase strictly within (0, 1]".into());
        }
        if !g.contains(&0.5) || g.last() != Some(&1.0) {
            return bad("metrics.coverage_grid must contain 0.5 and end at 1.0".into());
        }
        if self.metrics.bins == 0 {
            return bad("metrics.bins must be positive".into());
        }
        Ok(())
    }

    /// Canonical bytes: sorted-key compact JSON of everything except
    /// `output_dir`, which names where results go rather than what they are.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("output_dir");
        }
        serde_json::to_vec(&value).expect("value serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_bytes()))
    }

    pub fn source_spec(&self) -> DomainSpec {
        DomainSpec::source3d(
            self.data.classes,
            self.data.frames,
            derive_seed(self.seed, "domain/source"),
        )
    }

    pub fn style_spec(&self) -> DomainSpec {
        DomainSpec::style_shift_2d(&self.source_spec(), derive_seed(self.seed, "domain/style"))
    }

    pub fn semantic_spec(&self) -> DomainSpec {
        DomainSpec::semantic_shift(
            self.data.classes,
            self.data.frames,
            derive_seed(self.seed, "domain/semantic"),
        )
    }

    pub fn model_config(&self) -> ModelConfig {
        let m = &self.model;
        ModelConfig {
            d_joint: m.d_joint,
            d_model: m.d_model,
            layers: m.layers,
            heads: m.heads,
            mlp_ratio: m.mlp_ratio,
            dropout: m.dropout,
            classes: self.data.classes,
            frames: self.data.frames,
            joints: crate::skeldata::joints::NTU_JOINTS,
            seed: derive_seed(self.seed, "model"),
        }
    }

    pub fn train_hyper(&self) -> TrainHyper {
        let o = &self.train;
        TrainHyper {
            epochs: o.epochs,
            batch_size: o.batch_size,
            lr: o.lr,
            weight_decay: o.weight_decay,
            seed: derive_seed(self.seed, "train"),
            trainable: Trainable::All,
        }
    }

    pub fn adapt_hyper(&self, trainable: Trainable) -> TrainHyper {
        let o = &self.adapt;
        TrainHyper {
            epochs: o.epochs,
            batch_size: o.batch_size,
            lr: o.lr,
            weight_decay: o.weight_decay,
            seed: derive_seed(self.seed, "adapt"),
            trainable,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_default_desk_experiment() {
        let c = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(c.seed, DEFAULT_SEED);
        assert_eq!(c.model.d_model, 64);
        assert_eq!(c.metrics.coverage_grid.len(), 20);
        assert_eq!(ExperimentConfig::default(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            r#"{"sed": 1}"#,
            r#"{"data": {"clases": 8}}"#,
            r#"{"adapt": {"epochs": 2, "x": 1}}"#,
        ] {
            assert!(
                matches!(ExperimentConfig::from_json(text), Err(CliError::Config(_))),
                "{text}"
            );
        }
        let c = ExperimentConfig::from_json(r#"{"adapt": {"epochs": 2}}"#).unwrap();
        assert_eq!(c.adapt.epochs, 2);
        assert_eq!(c.adapt.lr, 1e-3);
    }

    #[test]
    fn invalid_values_are_rejected() {
        for text in [
            r#"{"uq": {"ensemble_size": 1}}"#,
            r#"{"model": {"heads": 5}}"#,
            r#"{"metrics": {"coverage_grid": [0.25, 1.0]}}"#,
            r#"{"data": {"source_test": 3}}"#,
            r#"{"train": {"epochs": 0}}"#,
        ] {
            assert!(ExperimentConfig::from_json(text).is_err(), "{text}");
        }
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig {
            output_dir: "elsewhere".into(),
            ..a.clone()
        };
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentConfig { seed: 43, ..a.clone() };
        assert_ne!(a.hash(), c.hash());
        let reparsed = ExperimentConfig::from_json(&serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(reparsed.hash(), a.hash());
    }
}
