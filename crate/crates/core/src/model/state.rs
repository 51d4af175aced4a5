use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError};
use crate::numerics::{SeededRng, Tensor};

pub const GATE: &str = "gate.alpha";
pub const HEAD_WEIGHT: &str = "head.w";
pub const MODEL_FILE: &str = "model.json";
pub const WEIGHTS_FILE: &str = "weights.bin";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Eval,
    Train,
    McDropout,
}

impl Mode {
    pub fn is_stochastic(self) -> bool {
        !matches!(self, Mode::Eval)
    }
}

enum Init {
    Zeros,
    Ones,
    Normal(f64),
}

/// Names, shapes and initializers of every backbone and head tensor, in
/// forward order.
fn layout(c: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let (dj, d, h) = (c.d_joint, c.d_model, c.d_model * c.mlp_ratio);
    let inv = |fan_in: usize| Init::Normal((1.0 / fan_in as f64).sqrt());
    let residual = |fan_in: usize| Init::Normal((1.0 / (fan_in * 2 * c.layers) as f64).sqrt());
    let mut out = vec![
        ("embed.w".to_string(), vec![3, dj], inv(3)),
        ("embed.b".to_string(), vec![dj], Init::Zeros),
        ("proj.w".to_string(), vec![dj, d], inv(dj)),
        ("proj.b".to_string(), vec![d], Init::Zeros),
        ("pos".to_string(), vec![c.tokens(), d], Init::Normal(0.1)),
    ];
    for l in 0..c.layers {
        let p = |s: &str| format!("layer{l}.{s}");
        out.extend([
            (p("ln1.g"), vec![d], Init::Ones),
            (p("ln1.b"), vec![d], Init::Zeros),
            (p("attn.wq"), vec![d, d], inv(d)),
            (p("attn.bq"), vec![d], Init::Zeros),
            (p("attn.wk"), vec![d, d], inv(d)),
            (p("attn.wv"), vec![d, d], inv(d)),
            (p("attn.bv"), vec![d], Init::Zeros),
            (p("attn.wo"), vec![d, d], residual(d)),
            (p("attn.bo"), vec![d], Init::Zeros),
            (p("ln2.g"), vec![d], Init::Ones),
            (p("ln2.b"), vec![d], Init::Zeros),
            (p("mlp.w1"), vec![d, h], inv(d)),
            (p("mlp.b1"), vec![h], Init::Zeros),
            (p("mlp.w2"), vec![h, d], residual(h)),
            (p("mlp.b2"), vec![d], Init::Zeros),
        ]);
    }
    out.extend([
        ("lnf.g".to_string(), vec![d], Init::Ones),
        ("lnf.b".to_string(), vec![d], Init::Zeros),
        (HEAD_WEIGHT.to_string(), vec![d, c.classes], inv(d)),
        ("head.b".to_string(), vec![c.classes], Init::Zeros),
    ]);
    out
}

/// Weights of one model. The gate, when attached, is stored last.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub config: ModelConfig,
    names: Vec<String>,
    tensors: Vec<Tensor>,
    gated: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    config: ModelConfig,
    gated: bool,
    params: Vec<ParamEntry>,
}

impl ModelState {
    pub fn init(config: &ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let root = SeededRng::new(config.seed);
        let (mut names, mut tensors) = (Vec::new(), Vec::new());
        for (name, shape, init) in layout(config) {
            let n: usize = shape.iter().product();
            let data = match init {
                Init::Zeros => vec![0.0; n],
                Init::Ones => vec![1.0; n],
                Init::Normal(std) => {
                    let mut rng = root.substream(&format!("init/{name}"));
                    (0..n).map(|_| std * rng.normal()).collect()
                }
            };
            tensors.push(Tensor::new(shape, data)?);
            names.push(name);
        }
        Ok(Self {
            config: config.clone(),
            names,
            tensors,
            gated: false,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub(crate) fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    /// Replaces every parameter value; count and shapes must match.
    pub fn set_tensors(&mut self, tensors: &[Tensor]) -> Result<(), ModelError> {
        if tensors.len() != self.tensors.len() {
            return Err(ModelError::Shape(format!(
                "expected {} tensors, got {}",
                self.tensors.len(),
                tensors.len()
            )));
        }
        if let Some(i) = (0..tensors.len()).find(|&i| tensors[i].shape() != self.tensors[i].shape()) {
            return Err(ModelError::Shape(format!(
                "{}: expected shape {:?}, got {:?}",
                self.names[i],
                self.tensors[i].shape(),
                tensors[i].shape()
            )));
        }
        self.tensors.clone_from_slice(tensors);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn is_gated(&self) -> bool {
        self.gated
    }

    pub fn gate(&self) -> Option<&Tensor> {
        self.gated.then(|| self.tensors.last().expect("gate stored last"))
    }

    /// Attaches `alpha = 0` and doubles the head weights. `sigmoid(0) = 0.5`,
    /// so the logits are unchanged (up to rounding in the head product).
    pub fn attach_gate(&mut self) {
        if self.gated {
            return;
        }
        let i = self.names.iter().position(|n| n == HEAD_WEIGHT).expect("head present");
        for v in self.tensors[i].data_mut() {
            *v *= 2.0;
        }
        self.names.push(GATE.to_string());
        self.tensors.push(Tensor::zeros(&[self.config.d_model]));
        self.gated = true;
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Parameters excluding the gate.
    pub fn backbone_parameter_count(&self) -> usize {
        self.parameter_count() - self.gate().map_or(0, Tensor::numel)
    }

    pub fn bit_eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.names == other.names
            && self.gated == other.gated
            && self.tensors.iter().zip(&other.tensors).all(|(a, b)| a.bit_eq(b))
    }

    pub fn save(&self, dir: &Path) -> Result<(), ModelError> {
        let mut params = Vec::with_capacity(self.names.len());
        let mut bytes = Vec::with_capacity(self.parameter_count() * 8);
        for (name, t) in self.names.iter().zip(&self.tensors) {
            params.push(ParamEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                offset: bytes.len(),
            });
            for v in t.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        let ckpt = Checkpoint {
            config: self.config.clone(),
            gated: self.gated,
            params,
        };
        let mut json = serde_json::to_vec_pretty(&ckpt).expect("checkpoint serializes");
        json.push(b'\n');
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| ModelError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let p = dir.join(WEIGHTS_FILE);
        fs::write(&p, bytes).map_err(io(&p))?;
        let p = dir.join(MODEL_FILE);
        fs::write(&p, json).map_err(io(&p))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, ModelError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| ModelError::Io { path, source }
        };
        let p = dir.join(MODEL_FILE);
        let json = fs::read(&p).map_err(io(&p))?;
        let ckpt: Checkpoint = serde_json::from_slice(&json).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        let p = dir.join(WEIGHTS_FILE);
        let bytes = fs::read(&p).map_err(io(&p))?;

        let mut expected = Self::init_shapes(&ckpt.config)?;
        if ckpt.gated {
            expected.push((GATE.to_string(), vec![ckpt.config.d_model]));
        }
        if expected.len() != ckpt.params.len() {
            return Err(ModelError::Checkpoint(format!(
                "{} tensors listed, {} expected",
                ckpt.params.len(),
                expected.len()
            )));
        }
        let mut offset = 0;
        let (mut names, mut tensors) = (Vec::new(), Vec::new());
        for (entry, (name, shape)) in ckpt.params.into_iter().zip(expected) {
            if entry.name != name || entry.shape != shape || entry.offset != offset {
                return Err(ModelError::Checkpoint(format!(
                    "entry {} {:?} at {} does not match {name} {shape:?} at {offset}",
                    entry.name, entry.shape, entry.offset
                )));
            }
            let n: usize = shape.iter().product();
            let end = offset + n * 8;
            let raw = bytes
                .get(offset..end)
                .ok_or_else(|| ModelError::Checkpoint(format!("weights end before {name}")))?;
            let data = raw
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect();
            tensors.push(Tensor::new(shape, data)?);
            names.push(name);
            offset = end;
        }
        if offset != bytes.len() {
            return Err(ModelError::Checkpoint(format!(
                "{} trailing bytes in weights",
                bytes.len() - offset
            )));
        }
        Ok(Self {
            config: ckpt.config,
            names,
            tensors,
            gated: ckpt.gated,
        })
    }

    fn init_shapes(config: &ModelConfig) -> Result<Vec<(String, Vec<usize>)>, ModelError> {
        config.validate()?;
        Ok(layout(config).into_iter().map(|(n, s, _)| (n, s)).collect())
    }
}
