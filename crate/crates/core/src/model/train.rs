use serde::{Deserialize, Serialize};

use super::forward::{build, predict, INFERENCE_CHUNK};
use super::{Mode, ModelConfig, ModelError, ModelState, TrainHyper, Trainable, GATE};
use crate::numerics::{adam_step, derive_seed, log_sum_exp_slice, AdamState, Graph, SeededRng, Tensor};
use crate::skeldata::{DatasetBundle, SkeletonSequence};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    /// Accuracy of the dropout-enabled training passes.
    pub train_accuracy: f64,
    /// `None` when no validation set was given.
    pub val_accuracy: Option<f64>,
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub state: ModelState,
    pub log: Vec<EpochLog>,
    /// Epoch whose weights were returned (0-based).
    pub best_epoch: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterReport {
    pub gate: usize,
    pub backbone: usize,
    pub trainable: usize,
    /// `gate / backbone`.
    pub gate_overhead: f64,
}

pub fn accuracy(state: &ModelState, samples: &[SkeletonSequence]) -> Result<f64, ModelError> {
    Ok(evaluate(state, samples)?.0)
}

/// Eval-mode accuracy and mean cross-entropy.
fn evaluate(state: &ModelState, samples: &[SkeletonSequence]) -> Result<(f64, f64), ModelError> {
    if samples.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let out = predict(state, samples, INFERENCE_CHUNK)?;
    let c = state.config.classes;
    let (mut hits, mut nll) = (0usize, 0.0);
    for (row, s) in out.logits.data().chunks_exact(c).zip(samples) {
        if argmax(row) == s.label {
            hits += 1;
        }
        nll += log_sum_exp_slice(row)? - row[s.label];
    }
    let n = samples.len() as f64;
    Ok((hits as f64 / n, nll / n))
}

/// Mean cross-entropy of a batch with the gradient of every tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGradients {
    pub loss: f64,
    pub logits: Tensor,
    /// In state order; `None` for tensors outside the trainable set.
    pub gradients: Vec<Option<Tensor>>,
}

/// Forward pass, mean cross-entropy against the samples' labels, and
/// backward pass. `mode` and `rng` behave as in [`super::forward()`].
pub fn loss_and_gradients(
    state: &ModelState,
    batch: &[&SkeletonSequence],
    trainable: Trainable,
    mode: Mode,
    rng: Option<&mut SeededRng>,
) -> Result<LossGradients, ModelError> {
    let labels: Vec<usize> = batch.iter().map(|s| s.label).collect();
    let mut g = Graph::new();
    let built = build(&mut g, state, |n| is_trainable(trainable, n), batch, mode, rng)?;
    let loss = g.cross_entropy(built.logits, &labels)?;
    let grads = g.backward(loss)?;
    let gradients = state
        .names()
        .iter()
        .zip(&built.params)
        .map(|(n, &id)| {
            if is_trainable(trainable, n) {
                grads.get(id).cloned()
            } else {
                None
            }
        })
        .collect();
    Ok(LossGradients {
        loss: g.value(loss).data()[0],
        logits: g.value(built.logits).clone(),
        gradients,
    })
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn is_trainable(mode: Trainable, name: &str) -> bool {
    match mode {
        Trainable::All | Trainable::GateAndBackbone => true,
        Trainable::GateOnly => name == GATE,
    }
}

/// Adam over seeded mini-batches. Returns the state with the best
/// validation accuracy, ties going to the lower validation loss, or the
/// final state without a validation set.
fn fit(
    mut state: ModelState,
    train: &DatasetBundle,
    val: Option<&DatasetBundle>,
    hyper: &TrainHyper,
) -> Result<TrainOutcome, ModelError> {
    hyper.validate()?;
    if train.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if train.num_classes() != state.config.classes {
        return Err(ModelError::Config(format!(
            "dataset has {} classes, model {}",
            train.num_classes(),
            state.config.classes
        )));
    }
    if hyper.trainable != Trainable::All && !state.is_gated() {
        return Err(ModelError::Config("gate training requested on an ungated model".into()));
    }
    let mode = hyper.trainable;
    let slots: Vec<usize> = (0..state.names().len())
        .filter(|&i| is_trainable(mode, &state.names()[i]))
        .collect();
    let mut adam = AdamState::new(hyper.lr, hyper.weight_decay);
    let root = SeededRng::new(hyper.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::with_capacity(hyper.epochs);
    let mut best: Option<((f64, f64), usize, ModelState)> = None;

    for epoch in 0..hyper.epochs {
        let mut rng = root.substream(&format!("epoch/{epoch}"));
        rng.shuffle(&mut order);
        let (mut loss_sum, mut hits) = (0.0, 0usize);
        for chunk in order.chunks(hyper.batch_size) {
            // One graph per sample keeps activations in cache; the batch
            // gradient is the mean of the per-sample gradients.
            let scale = 1.0 / chunk.len() as f64;
            let mut grad_list: Vec<Vec<f64>> = slots.iter().map(|&i| vec![0.0; state.tensors()[i].numel()]).collect();
            for &i in chunk {
                let sample = &train.sequences[i];
                let step = loss_and_gradients(&state, &[sample], mode, Mode::Train, Some(&mut rng))?;
                loss_sum += step.loss;
                hits += usize::from(argmax(step.logits.data()) == sample.label);
                for (acc, &slot) in grad_list.iter_mut().zip(&slots) {
                    let grad = step.gradients[slot].as_ref().expect("trainable tensor has a gradient");
                    for (a, v) in acc.iter_mut().zip(grad.data()) {
                        *a += scale * v;
                    }
                }
            }
            let grad_list: Vec<Tensor> = grad_list
                .into_iter()
                .zip(&slots)
                .map(|(data, &i)| Tensor::from_parts(state.tensors()[i].shape().to_vec(), data))
                .collect();
            let mut params: Vec<Tensor> = slots.iter().map(|&i| state.tensors()[i].clone()).collect();
            adam_step(&mut params, &grad_list, &mut adam)?;
            for (&i, p) in slots.iter().zip(params) {
                state.tensors_mut()[i] = p;
            }
        }
        let n = train.len() as f64;
        let scored = match val {
            Some(v) if !v.is_empty() => Some(evaluate(&state, &v.sequences)?),
            _ => None,
        };
        log.push(EpochLog {
            epoch,
            train_loss: loss_sum / n,
            train_accuracy: hits as f64 / n,
            val_accuracy: scored.map(|s| s.0),
            val_loss: scored.map(|s| s.1),
        });
        if let Some((acc, loss)) = scored {
            let better = best
                .as_ref()
                .is_none_or(|((ba, bl), _, _)| acc > *ba || (acc == *ba && loss < *bl));
            if better {
                best = Some(((acc, loss), epoch, state.clone()));
            }
        }
    }
    let (state, best_epoch) = match best {
        Some((_, e, s)) => (s, e),
        None => (state, hyper.epochs - 1),
    };
    Ok(TrainOutcome { state, log, best_epoch })
}

/// Trains a fresh model initialized from `config.seed`.
pub fn train(
    config: &ModelConfig,
    train_set: &DatasetBundle,
    val: &DatasetBundle,
    hyper: &TrainHyper,
) -> Result<TrainOutcome, ModelError> {
    if hyper.trainable != Trainable::All {
        return Err(ModelError::Config("source training updates every tensor".into()));
    }
    fit(ModelState::init(config)?, train_set, Some(val), hyper)
}

/// Attaches the gate if needed and trains it, alone (`GateOnly`) or with the
/// rest of the network (`GateAndBackbone`), on labeled target samples.
pub fn finetune_gating(
    state: &ModelState,
    target: &DatasetBundle,
    hyper: &TrainHyper,
) -> Result<(TrainOutcome, ParameterReport), ModelError> {
    if hyper.trainable == Trainable::All {
        return Err(ModelError::Config("gating needs gate_only or gate_and_backbone".into()));
    }
    let mut s = state.clone();
    s.attach_gate();
    let gate = s.gate().map_or(0, Tensor::numel);
    let backbone = s.backbone_parameter_count();
    let trainable = s
        .names()
        .iter()
        .zip(s.tensors())
        .filter(|(n, _)| is_trainable(hyper.trainable, n))
        .map(|(_, t)| t.numel())
        .sum();
    let report = ParameterReport {
        gate,
        backbone,
        trainable,
        gate_overhead: gate as f64 / backbone as f64,
    };
    Ok((fit(s, target, None, hyper)?, report))
}

/// `k` trainings that differ only in seed. Member 0 uses the given seeds,
/// so `k = 1` is exactly [`train`]; member `m` derives both the
/// initialization and the shuffling seed from substream `member/{m}`.
pub fn ensemble_train(
    config: &ModelConfig,
    train_set: &DatasetBundle,
    val: &DatasetBundle,
    hyper: &TrainHyper,
    k: usize,
) -> Result<Vec<TrainOutcome>, ModelError> {
    if k == 0 {
        return Err(ModelError::Config("ensemble needs at least one member".into()));
    }
    (0..k)
        .map(|m| {
            let (c, h) = member_setup(config, hyper, m);
            train(&c, train_set, val, &h)
        })
        .collect()
}

/// Config and hyperparameters of ensemble member `m`.
pub fn member_setup(config: &ModelConfig, hyper: &TrainHyper, m: usize) -> (ModelConfig, TrainHyper) {
    if m == 0 {
        return (config.clone(), hyper.clone());
    }
    let label = format!("member/{m}");
    (
        ModelConfig {
            seed: derive_seed(config.seed, &label),
            ..config.clone()
        },
        TrainHyper {
            seed: derive_seed(hyper.seed, &label),
            ..hyper.clone()
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeldata::{generate_domain, DomainSpec, SplitTag};

    fn config() -> ModelConfig {
        ModelConfig {
            d_joint: 4,
            d_model: 8,
            layers: 1,
            heads: 2,
            mlp_ratio: 2,
            dropout: 0.1,
            classes: 3,
            frames: 2,
            joints: 25,
            seed: 5,
        }
    }

    fn data() -> DatasetBundle {
        let spec = DomainSpec::source3d(3, 2, 1);
        generate_domain(&spec, 12, &SeededRng::new(2), SplitTag::Train).unwrap()
    }

    fn hyper(lr: f64, trainable: Trainable) -> TrainHyper {
        TrainHyper {
            epochs: 2,
            batch_size: 5,
            lr,
            weight_decay: 0.01,
            seed: 9,
            trainable,
        }
    }

    #[test]
    fn training_is_deterministic() {
        let d = data();
        let a = train(&config(), &d, &d, &hyper(1e-2, Trainable::All)).unwrap();
        let b = train(&config(), &d, &d, &hyper(1e-2, Trainable::All)).unwrap();
        assert_eq!(a.log, b.log);
        assert!(a.state.bit_eq(&b.state));
        assert_eq!(a.log.len(), 2);
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let d = data();
        let out = train(&config(), &d, &d, &hyper(0.0, Trainable::All)).unwrap();
        assert!(out.state.bit_eq(&ModelState::init(&config()).unwrap()));
    }

    #[test]
    fn gate_only_freezes_the_backbone() {
        let d = data();
        let base = ModelState::init(&config()).unwrap();
        let (out, report) = finetune_gating(&base, &d, &hyper(0.05, Trainable::GateOnly)).unwrap();
        let mut gated = base.clone();
        gated.attach_gate();
        let n = gated.tensors().len();
        for i in 0..n - 1 {
            assert!(
                out.state.tensors()[i].bit_eq(&gated.tensors()[i]),
                "{}",
                gated.names()[i]
            );
        }
        assert!(!out.state.tensors()[n - 1].bit_eq(&gated.tensors()[n - 1]));
        assert_eq!(report.trainable, 8);
        assert_eq!(report.gate, 8);
    }

    #[test]
    fn gate_and_backbone_moves_everything_trainable() {
        let d = data();
        let base = ModelState::init(&config()).unwrap();
        let (out, report) = finetune_gating(&base, &d, &hyper(0.05, Trainable::GateAndBackbone)).unwrap();
        assert_eq!(report.trainable, report.backbone + report.gate);
        let mut gated = base.clone();
        gated.attach_gate();
        assert!(!out.state.get("head.w").unwrap().bit_eq(gated.get("head.w").unwrap()));
    }

    #[test]
    fn ensemble_members_differ_and_first_is_train() {
        let d = data();
        let h = hyper(1e-2, Trainable::All);
        let members = ensemble_train(&config(), &d, &d, &h, 3).unwrap();
        let single = train(&config(), &d, &d, &h).unwrap();
        assert!(members[0].state.bit_eq(&single.state));
        assert!(!members[0].state.bit_eq(&members[1].state));
        assert!(!members[1].state.bit_eq(&members[2].state));
        assert!(ensemble_train(&config(), &d, &d, &h, 0).is_err());
    }

    #[test]
    fn rejects_empty_and_mismatched_data() {
        let d = data();
        let empty = d.with_sequences(Vec::new(), SplitTag::Train);
        let h = hyper(1e-2, Trainable::All);
        assert!(matches!(
            train(&config(), &empty, &d, &h),
            Err(ModelError::EmptyDataset)
        ));
        let c4 = ModelConfig { classes: 4, ..config() };
        assert!(train(&c4, &d, &d, &h).is_err());
    }
}
