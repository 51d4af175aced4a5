use rayon::prelude::*;

use super::UqError;
use crate::model::{forward, Mode, ModelState};
use crate::numerics::{log_sum_exp_slice, softmax_slice, SeededRng};
use crate::skeldata::SkeletonSequence;

/// Tolerance on `|Σp − 1|` for inputs that must be distributions.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

/// Samples per stochastic forward call. Dropout masks are drawn per chunk
/// from `pass/{p}/chunk/{i}`, so this constant is part of the result.
pub const MC_CHUNK: usize = 1;

fn check_distribution(probs: &[f64]) -> Result<(), UqError> {
    let total: f64 = probs.iter().sum();
    if probs.is_empty()
        || probs.iter().any(|p| !(0.0..=1.0).contains(p))
        || (total - 1.0).abs() > NORMALIZATION_TOLERANCE
    {
        return Err(UqError::NotADistribution { sum: total });
    }
    Ok(())
}

/// Maximum softmax probability.
pub fn msp(probs: &[f64]) -> Result<f64, UqError> {
    check_distribution(probs)?;
    Ok(probs.iter().copied().fold(0.0, f64::max))
}

/// Shannon entropy in nats with `0 log 0 = 0`.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// `E = −T log Σ exp(f / T)`. Higher means more out-of-distribution.
pub fn energy_score(logits: &[f64], temperature: f64) -> Result<f64, UqError> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(UqError::InvalidTemperature(temperature));
    }
    let scaled: Vec<f64> = logits.iter().map(|l| l / temperature).collect();
    Ok(-temperature * log_sum_exp_slice(&scaled)?)
}

/// Mutual information between the prediction and the ensemble member:
/// `H[mean_k p_k] − mean_k H[p_k]`, clamped at zero against rounding.
///
/// ```
/// use skelsafe::uq::ensemble_disagreement;
/// let d = ensemble_disagreement(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
/// assert!((d - 2f64.ln()).abs() < 1e-15);
/// ```
pub fn ensemble_disagreement(members: &[Vec<f64>]) -> Result<f64, UqError> {
    if members.len() < 2 {
        return Err(UqError::TooFewMembers(members.len()));
    }
    let classes = members[0].len();
    if members.iter().any(|p| p.len() != classes) {
        return Err(UqError::Shape("members disagree on the class count".into()));
    }
    let k = members.len() as f64;
    let mean: Vec<f64> = (0..classes)
        .map(|c| members.iter().map(|p| p[c]).sum::<f64>() / k)
        .collect();
    let aleatoric = members.iter().map(|p| entropy(p)).sum::<f64>() / k;
    Ok((entropy(&mean) - aleatoric).max(0.0))
}

/// Softmax outputs of one stochastic pass per entry, each `[rows][classes]`.
pub type PassProbs = Vec<Vec<Vec<f64>>>;

/// Runs `passes` dropout-enabled forward passes. Pass `p` draws its masks
/// from the substream `pass/{p}` of `rng`, so the first `n` passes of a
/// longer run are exactly the passes of a run with `passes = n`.
pub fn mc_dropout_passes(
    state: &ModelState,
    samples: &[SkeletonSequence],
    passes: usize,
    rng: &SeededRng,
) -> Result<PassProbs, UqError> {
    if passes == 0 {
        return Err(UqError::Config("at least one MC pass is required".into()));
    }
    (0..passes)
        .map(|p| {
            let stream = rng.substream(&format!("pass/{p}"));
            let chunks: Vec<_> = samples
                .chunks(MC_CHUNK)
                .enumerate()
                .collect::<Vec<_>>()
                .into_par_iter()
                .map(|(i, part)| {
                    let refs: Vec<&SkeletonSequence> = part.iter().collect();
                    let mut r = stream.substream(&format!("chunk/{i}"));
                    let out = forward(state, &refs, Mode::McDropout, Some(&mut r))?;
                    Ok(out
                        .logits
                        .data()
                        .chunks(state.config.classes)
                        .map(softmax_slice)
                        .collect::<Vec<_>>())
                })
                .collect::<Result<Vec<_>, UqError>>()?;
            Ok(chunks.into_iter().flatten().collect())
        })
        .collect()
}

/// Mean distribution over passes and its entropy, per sample.
pub fn mc_entropy_from_passes(passes: &[Vec<Vec<f64>>]) -> Result<(Vec<Vec<f64>>, Vec<f64>), UqError> {
    let first = passes.first().ok_or_else(|| UqError::Config("no MC passes".into()))?;
    let n = passes.len() as f64;
    let mut mean: Vec<Vec<f64>> = first.iter().map(|row| vec![0.0; row.len()]).collect();
    for pass in passes {
        if pass.len() != mean.len() {
            return Err(UqError::Shape("MC passes cover different sample counts".into()));
        }
        for (acc, row) in mean.iter_mut().zip(pass) {
            for (a, p) in acc.iter_mut().zip(row) {
                *a += p;
            }
        }
    }
    for row in &mut mean {
        row.iter_mut().for_each(|a| *a /= n);
    }
    let h = mean.iter().map(|row| entropy(row)).collect();
    Ok((mean, h))
}

/// MC-dropout predictive mean `p̄` and entropy `H[p̄]` for every sample.
pub fn mc_dropout_entropy(
    state: &ModelState,
    samples: &[SkeletonSequence],
    passes: usize,
    rng: &SeededRng,
) -> Result<(Vec<Vec<f64>>, Vec<f64>), UqError> {
    if samples.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    mc_entropy_from_passes(&mc_dropout_passes(state, samples, passes, rng)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn msp_examples() {
        assert_eq!(msp(&[0.25; 4]).unwrap(), 0.25);
        assert_eq!(msp(&[0.0, 1.0, 0.0]).unwrap(), 1.0);
        let p = softmax_slice(&[2.0, 0.0, 0.0]);
        let oracle = 2f64.exp() / (2f64.exp() + 2.0);
        assert!((msp(&p).unwrap() - oracle).abs() < 1e-15);
        assert!(matches!(msp(&[0.5, 0.6]), Err(UqError::NotADistribution { .. })));
        assert!(msp(&[]).is_err());
    }

    #[test]
    fn entropy_bounds() {
        assert_eq!(entropy(&[0.0, 1.0, 0.0]), 0.0);
        assert!((entropy(&[0.2; 5]) - 5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn energy_examples() {
        assert!((energy_score(&[0.0; 4], 1.0).unwrap() + 4f64.ln()).abs() < 1e-15);
        let oracle = -(2f64.exp() + 2.0).ln();
        assert!((energy_score(&[2.0, 0.0, 0.0], 1.0).unwrap() - oracle).abs() < 1e-14);
        assert!(energy_score(&[1.0], 0.0).is_err());
        assert!(energy_score(&[1.0], f64::NAN).is_err());
    }

    #[test]
    fn disagreement_examples() {
        let p = vec![0.2, 0.3, 0.5];
        assert_eq!(ensemble_disagreement(&[p.clone(), p.clone(), p.clone()]).unwrap(), 0.0);
        assert!(matches!(ensemble_disagreement(&[p]), Err(UqError::TooFewMembers(1))));
        assert!(ensemble_disagreement(&[vec![0.5, 0.5], vec![1.0]]).is_err());
    }

    #[test]
    fn mc_pass_prefix_is_shared() {
        use crate::model::ModelConfig;
        use crate::skeldata::{generate_domain, DomainSpec, SplitTag};
        let spec = DomainSpec::source3d(3, 2, 1);
        let data = generate_domain(&spec, 5, &SeededRng::new(2), SplitTag::Test).unwrap();
        let mut cfg = ModelConfig::desk(3, 2, 4);
        cfg.d_model = 8;
        cfg.heads = 2;
        cfg.layers = 1;
        let state = ModelState::init(&cfg).unwrap();
        let rng = SeededRng::new(9);
        let long = mc_dropout_passes(&state, &data.sequences, 4, &rng).unwrap();
        let short = mc_dropout_passes(&state, &data.sequences, 2, &rng).unwrap();
        assert_eq!(&long[..2], &short[..]);
        assert_ne!(long[0], long[1]);
        let (_, one) = mc_dropout_entropy(&state, &data.sequences, 1, &rng).unwrap();
        let single: Vec<f64> = long[0].iter().map(|p| entropy(p)).collect();
        assert_eq!(one, single);
        assert!(mc_dropout_passes(&state, &data.sequences, 0, &rng).is_err());
    }
}
