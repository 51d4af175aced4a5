use super::{Graph, NodeId, NumericsError, Tensor};

/// Denominator floor for relative gradient errors.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-8;

/// Central-difference step used by default.
pub const DEFAULT_STEP: f64 = 1e-5;

/// An objective returning its value and analytic gradient at a point.
pub trait Objective {
    fn evaluate(&self, point: &[Tensor]) -> Result<(f64, Vec<Tensor>), NumericsError>;
}

impl<F> Objective for F
where
    F: Fn(&[Tensor]) -> Result<(f64, Vec<Tensor>), NumericsError>,
{
    fn evaluate(&self, point: &[Tensor]) -> Result<(f64, Vec<Tensor>), NumericsError> {
        self(point)
    }
}

/// Wraps a graph-building closure as an [`Objective`]. The closure receives
/// one trainable leaf per tensor in the point and returns the scalar loss.
pub fn graph_objective<B>(build: B) -> impl Objective
where
    B: Fn(&mut Graph, &[NodeId]) -> Result<NodeId, NumericsError>,
{
    move |point: &[Tensor]| {
        let mut g = Graph::new();
        let leaves: Vec<NodeId> = point.iter().map(|t| g.parameter(t.clone())).collect();
        let loss = build(&mut g, &leaves)?;
        let value = g
            .value(loss)
            .item()
            .ok_or_else(|| NumericsError::NonScalarLoss(g.value(loss).shape().to_vec()))?;
        let grads = g.backward(loss)?;
        let out = leaves
            .iter()
            .map(|&l| grads.get(l).cloned().expect("trainable leaf has a gradient"))
            .collect();
        Ok((value, out))
    }
}

/// Worst elementwise relative error between the analytic gradient and a
/// central difference `(f(x + h) - f(x - h)) / 2h`, using
/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check(objective: &impl Objective, point: &[Tensor], step: f64) -> Result<f64, NumericsError> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(NumericsError::InvalidStep(step));
    }
    let (_, analytic) = objective.evaluate(point)?;
    let mut probe: Vec<Tensor> = point.to_vec();
    let mut worst = 0.0f64;
    for (ti, tensor) in point.iter().enumerate() {
        for ei in 0..tensor.numel() {
            let original = tensor.data()[ei];
            probe[ti].data_mut()[ei] = original + step;
            let (plus, _) = objective.evaluate(&probe)?;
            probe[ti].data_mut()[ei] = original - step;
            let (minus, _) = objective.evaluate(&probe)?;
            probe[ti].data_mut()[ei] = original;

            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[ti].data()[ei];
            let denom = a.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
