//! Graph construction for the skeleton transformer.
//!
//! ```text
//! x [B, T*J, 3] -> linear(3, d_joint) -> gelu -> linear(d_joint, d_model)
//!   + pos [T*J, d_model] -> dropout
//!   -> L x { h += drop(attn(ln1(h))); h += drop(mlp(ln2(h))) }
//!   -> lnf -> mean over tokens = z -> sigmoid(alpha) * z -> linear -> logits
//! ```

use super::{Mode, ModelError, ModelState, GATE};
use crate::numerics::{sigmoid, Graph, NodeId, SeededRng, Tensor};
use crate::skeldata::SkeletonSequence;

const LN_EPS: f64 = 1e-5;

/// Samples per forward call for inference. Larger batches push the
/// attention scores out of cache and run slower on one core.
pub const INFERENCE_CHUNK: usize = 1;

/// Pooled pre-gate features `[batch, d_model]` and logits `[batch, classes]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput {
    pub features: Tensor,
    pub logits: Tensor,
}

pub(crate) struct Built {
    /// Graph node of every state tensor, in state order.
    pub params: Vec<NodeId>,
    pub features: NodeId,
    pub logits: NodeId,
}

/// Stacks a homogeneous batch into a `[B, T*J, 3]` tensor.
pub(crate) fn batch_tensor(state: &ModelState, batch: &[&SkeletonSequence]) -> Result<Tensor, ModelError> {
    let c = &state.config;
    let want = (c.frames, c.joints, 3);
    if batch.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut data = Vec::with_capacity(batch.len() * c.tokens() * 3);
    for (i, s) in batch.iter().enumerate() {
        if s.shape() != want {
            return Err(ModelError::Shape(format!(
                "sample {i} has shape {:?}, model expects {want:?}",
                s.shape()
            )));
        }
        data.extend_from_slice(s.coords());
    }
    Ok(Tensor::new(vec![batch.len(), c.tokens(), 3], data)?)
}

fn dropout(g: &mut Graph, x: NodeId, p: f64, rng: &mut Option<&mut SeededRng>) -> Result<NodeId, ModelError> {
    match rng {
        Some(r) => Ok(g.dropout(x, p, r)?),
        None => Ok(x),
    }
}

/// Records the forward pass. Tensors for which `trainable` returns true
/// become graph parameters; the rest are constants.
pub(crate) fn build(
    g: &mut Graph,
    state: &ModelState,
    trainable: impl Fn(&str) -> bool,
    batch: &[&SkeletonSequence],
    mode: Mode,
    rng: Option<&mut SeededRng>,
) -> Result<Built, ModelError> {
    let c = &state.config;
    let mut rng = match (mode, rng) {
        (Mode::Eval, _) => None,
        (_, Some(r)) => Some(r),
        (_, None) => return Err(ModelError::MissingRng),
    };
    let params: Vec<NodeId> = state
        .names()
        .iter()
        .zip(state.tensors())
        .map(|(n, t)| {
            if trainable(n) {
                g.parameter(t.clone())
            } else {
                g.constant(t.clone())
            }
        })
        .collect();
    let p = |name: &str| {
        let i = state.names().iter().position(|n| n == name);
        params[i.unwrap_or_else(|| panic!("missing tensor {name}"))]
    };
    let (b, n, d, heads, dh) = (batch.len(), c.tokens(), c.d_model, c.heads, c.head_dim());
    let pd = c.dropout;

    let x = g.constant(batch_tensor(state, batch)?);
    let e = g.linear(x, p("embed.w"), p("embed.b"))?;
    let e = g.gelu(e)?;
    let h = g.linear(e, p("proj.w"), p("proj.b"))?;
    let h = g.add(h, p("pos"))?;
    let mut h = dropout(g, h, pd, &mut rng)?;

    let norm = |g: &mut Graph, x: NodeId, gain: NodeId, bias: NodeId| -> Result<NodeId, ModelError> {
        let y = g.layer_norm(x, LN_EPS)?;
        let y = g.mul(y, gain)?;
        Ok(g.add(y, bias)?)
    };

    for l in 0..c.layers {
        let q = |s: &str| p(&format!("layer{l}.{s}"));
        let a = norm(g, h, q("ln1.g"), q("ln1.b"))?;
        let split = |g: &mut Graph, w: NodeId, bias: Option<NodeId>, perm: &[usize]| -> Result<NodeId, ModelError> {
            let t = g.matmul(a, w)?;
            let t = match bias {
                Some(bias) => g.add(t, bias)?,
                None => t,
            };
            let t = g.reshape(t, &[b, n, heads, dh])?;
            Ok(g.permute(t, perm)?)
        };
        // No key bias: it shifts every score of a query equally and cancels
        // in the softmax.
        let qh = split(g, q("attn.wq"), Some(q("attn.bq")), &[0, 2, 1, 3])?;
        let kt = split(g, q("attn.wk"), None, &[0, 2, 3, 1])?;
        let vh = split(g, q("attn.wv"), Some(q("attn.bv")), &[0, 2, 1, 3])?;
        let scores = g.matmul(qh, kt)?;
        let scores = g.scale(scores, 1.0 / (dh as f64).sqrt())?;
        let attn = g.softmax(scores, 3)?;
        let ctx = g.matmul(attn, vh)?;
        let ctx = g.permute(ctx, &[0, 2, 1, 3])?;
        let ctx = g.reshape(ctx, &[b, n, d])?;
        let o = g.linear(ctx, q("attn.wo"), q("attn.bo"))?;
        let o = dropout(g, o, pd, &mut rng)?;
        h = g.add(h, o)?;

        let m = norm(g, h, q("ln2.g"), q("ln2.b"))?;
        let m = g.linear(m, q("mlp.w1"), q("mlp.b1"))?;
        let m = g.gelu(m)?;
        let m = g.linear(m, q("mlp.w2"), q("mlp.b2"))?;
        let m = dropout(g, m, pd, &mut rng)?;
        h = g.add(h, m)?;
    }

    let h = norm(g, h, p("lnf.g"), p("lnf.b"))?;
    let features = g.mean_axis(h, 1)?;
    let gated = if state.is_gated() {
        let s = g.sigmoid(p(GATE))?;
        g.mul(features, s)?
    } else {
        features
    };
    let logits = g.linear(gated, p("head.w"), p("head.b"))?;
    Ok(Built {
        params,
        features,
        logits,
    })
}

/// Runs the model on `batch`. `Train` and `McDropout` draw dropout masks
/// from `rng`, which they require; `Eval` ignores it.
pub fn forward(
    state: &ModelState,
    batch: &[&SkeletonSequence],
    mode: Mode,
    rng: Option<&mut SeededRng>,
) -> Result<ForwardOutput, ModelError> {
    let mut g = Graph::new();
    let built = build(&mut g, state, |_| false, batch, mode, rng)?;
    Ok(ForwardOutput {
        features: g.value(built.features).clone(),
        logits: g.value(built.logits).clone(),
    })
}

/// Eval-mode forward over any number of samples, `chunk` at a time.
pub fn predict(state: &ModelState, samples: &[SkeletonSequence], chunk: usize) -> Result<ForwardOutput, ModelError> {
    let c = &state.config;
    let mut features = Vec::with_capacity(samples.len() * c.d_model);
    let mut logits = Vec::with_capacity(samples.len() * c.classes);
    for part in samples.chunks(chunk.max(1)) {
        let refs: Vec<&SkeletonSequence> = part.iter().collect();
        let out = forward(state, &refs, Mode::Eval, None)?;
        features.extend_from_slice(out.features.data());
        logits.extend_from_slice(out.logits.data());
    }
    let rows = samples.len();
    Ok(ForwardOutput {
        features: Tensor::from_parts(vec![rows, c.d_model], features),
        logits: Tensor::from_parts(vec![rows, c.classes], logits),
    })
}

/// `sigmoid(alpha) * z` along the last axis of `z`.
pub fn apply_gate(z: &Tensor, alpha: &Tensor) -> Result<Tensor, ModelError> {
    let d = alpha.numel();
    if z.shape().last() != Some(&d) {
        return Err(ModelError::Shape(format!(
            "gate of width {d} cannot scale features {:?}",
            z.shape()
        )));
    }
    let s: Vec<f64> = alpha.data().iter().map(|&a| sigmoid(a)).collect();
    let out = z.data().iter().enumerate().map(|(i, v)| v * s[i % d]).collect();
    Ok(Tensor::new(z.shape().to_vec(), out)?)
}
