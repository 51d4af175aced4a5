use super::{NumericsError, Tensor};

/// Adam optimizer state with decoupled weight decay.
///
/// The update for parameter `w` with gradient `g` at step `t` (1-based) is
///
/// ```text
/// m = b1 m + (1 - b1) g
/// v = b2 v + (1 - b2) g^2
/// w -= lr * ( (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps) + wd * w )
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// Applies one Adam update in place. Moment buffers are allocated on the
/// first call and must keep matching the parameter shapes afterwards.
pub fn adam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut AdamState) -> Result<(), NumericsError> {
    if params.len() != grads.len() {
        return Err(NumericsError::ParameterCount {
            expected: params.len(),
            got: grads.len(),
        });
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(NumericsError::ShapeMismatch {
                op: "adam_step",
                lhs: p.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
    }
    if state.first_moment.is_empty() {
        state.first_moment = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        state.second_moment = state.first_moment.clone();
    } else if state.first_moment.len() != params.len()
        || state
            .first_moment
            .iter()
            .zip(params.iter())
            .any(|(m, p)| m.len() != p.numel())
    {
        return Err(NumericsError::ParameterCount {
            expected: state.first_moment.len(),
            got: params.len(),
        });
    }

    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - state.beta1.powi(t);
    let bias2 = 1.0 - state.beta2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.first_moment[i];
        let v = &mut state.second_moment[i];
        for (((w, &gr), mj), vj) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *mj = state.beta1 * *mj + (1.0 - state.beta1) * gr;
            *vj = state.beta2 * *vj + (1.0 - state.beta2) * gr * gr;
            let mhat = *mj / bias1;
            let vhat = *vj / bias2;
            *w -= state.lr * (mhat / (vhat.sqrt() + state.eps) + state.weight_decay * *w);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut params = vec![Tensor::from_vec(vec![1.0, -2.0, 3.5]).unwrap()];
        let before = params.clone();
        let grads = vec![Tensor::zeros(&[3])];
        let mut state = AdamState::new(1e-3, 0.0);
        for _ in 0..10 {
            adam_step(&mut params, &grads, &mut state).unwrap();
        }
        assert!(params[0].bit_eq(&before[0]));
        assert_eq!(state.step_count(), 10);
    }

    #[test]
    fn first_step_moves_by_learning_rate_against_gradient_sign() {
        let mut params = vec![Tensor::from_vec(vec![0.0, 0.0, 0.0]).unwrap()];
        let grads = vec![Tensor::from_vec(vec![0.3, -5.0, 1e-3]).unwrap()];
        let mut state = AdamState::new(0.01, 0.0);
        adam_step(&mut params, &grads, &mut state).unwrap();
        for (w, g) in params[0].data().iter().zip(grads[0].data()) {
            // m_hat / (sqrt(v_hat) + eps) = g / (|g| + eps)
            let expected = -0.01 * g / (g.abs() + 1e-8);
            assert!((w - expected).abs() < 1e-15);
            assert!((w + 0.01 * g.signum()).abs() < 1e-6);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut params = vec![Tensor::zeros(&[2])];
        let grads = vec![Tensor::zeros(&[3])];
        let mut state = AdamState::new(1e-3, 0.0);
        assert!(matches!(
            adam_step(&mut params, &grads, &mut state),
            Err(NumericsError::ShapeMismatch { .. })
        ));
        assert_eq!(state.step_count(), 0);
    }

    #[test]
    fn minimizes_a_scalar_quadratic() {
        // Independent scalar transcription of the update rule.
        let (mut w, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=100 {
            let g = 2.0 * w;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            w -= 0.1 * mh / (vh.sqrt() + 1e-8);
        }
        assert!(w.abs() < 0.1);

        let mut params = vec![Tensor::scalar(1.0).unwrap()];
        let mut state = AdamState::new(0.1, 0.0);
        for _ in 0..100 {
            let grads = vec![Tensor::scalar(2.0 * params[0].data()[0]).unwrap()];
            adam_step(&mut params, &grads, &mut state).unwrap();
        }
        assert!((params[0].data()[0] - w).abs() < 1e-12);
        assert!(params[0].data()[0].abs() < 0.1);
    }

    #[test]
    fn weight_decay_shrinks_parameters_without_gradient() {
        let mut params = vec![Tensor::scalar(2.0).unwrap()];
        let grads = vec![Tensor::zeros(&[1])];
        let mut state = AdamState::new(0.1, 0.5);
        adam_step(&mut params, &grads, &mut state).unwrap();
        assert!((params[0].data()[0] - (2.0 - 0.1 * 0.5 * 2.0)).abs() < 1e-15);
    }
}
