use serde::{Deserialize, Serialize};

use super::ModelError;

/// Architecture and initialization seed of the skeleton transformer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Width of the per-joint embedding before projection.
    pub d_joint: usize,
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    /// Hidden width of the MLP as a multiple of `d_model`.
    pub mlp_ratio: usize,
    pub dropout: f64,
    pub classes: usize,
    pub frames: usize,
    pub joints: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Small enough to train on one CPU core in a minute or two at short
    /// sequence lengths.
    pub fn desk(classes: usize, frames: usize, seed: u64) -> Self {
        Self {
            d_joint: 16,
            d_model: 64,
            layers: 2,
            heads: 4,
            mlp_ratio: 2,
            dropout: 0.1,
            classes,
            frames,
            joints: 25,
            seed,
        }
    }

    /// Full-size architecture; far too slow for this engine on a CPU.
    pub fn full(classes: usize, frames: usize, seed: u64) -> Self {
        Self {
            d_joint: 32,
            d_model: 256,
            layers: 4,
            heads: 4,
            mlp_ratio: 4,
            dropout: 0.1,
            classes,
            frames,
            joints: 25,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.d_joint == 0 || self.d_model == 0 || self.mlp_ratio == 0 {
            return bad("widths must be positive".into());
        }
        if self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return bad(format!(
                "d_model {} not divisible by {} heads",
                self.d_model, self.heads
            ));
        }
        if self.layers == 0 {
            return bad("at least one encoder layer is required".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.classes < 2 || self.frames == 0 || self.joints == 0 {
            return bad(format!(
                "classes={} frames={} joints={}",
                self.classes, self.frames, self.joints
            ));
        }
        Ok(())
    }

    pub fn tokens(&self) -> usize {
        self.frames * self.joints
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }
}

/// Which tensors an optimization run may change.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trainable {
    /// Every backbone and head tensor, plus the gate if one is attached.
    All,
    /// Only the gate vector.
    GateOnly,
    /// The gate and every other tensor.
    GateAndBackbone,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub trainable: Trainable,
}

impl TrainHyper {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(ModelError::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite() && self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(ModelError::Config(format!(
                "lr {} / weight decay {}",
                self.lr, self.weight_decay
            )));
        }
        Ok(())
    }
}
