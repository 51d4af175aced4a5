use super::SafetyError;

/// Rank-based (Mann-Whitney) AUROC: the probability that a random OOD score
/// exceeds a random ID score, ties counting one half. Scores follow the
/// "higher = more OOD" convention.
///
/// ```
/// use skelsafe::safety::auroc;
/// assert_eq!(auroc(&[0.1, 0.2], &[0.3, 0.4]).unwrap(), 1.0);
/// assert_eq!(auroc(&[0.5; 3], &[0.5; 2]).unwrap(), 0.5);
/// ```
pub fn auroc(scores_id: &[f64], scores_ood: &[f64]) -> Result<f64, SafetyError> {
    if scores_id.is_empty() || scores_ood.is_empty() {
        return Err(SafetyError::Empty);
    }
    if scores_id.iter().chain(scores_ood).any(|s| s.is_nan()) {
        return Err(SafetyError::NonFinite);
    }
    let mut all: Vec<(f64, bool)> = scores_id
        .iter()
        .map(|&s| (s, false))
        .chain(scores_ood.iter().map(|&s| (s, true)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Twice the midrank keeps every rank an integer.
    let mut ood_rank_sum2: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let twice_midrank = (i + 1 + j) as u128;
        let ood_in_group = all[i..j].iter().filter(|e| e.1).count() as u128;
        ood_rank_sum2 += twice_midrank * ood_in_group;
        i = j;
    }
    let (n_id, n_ood) = (scores_id.len() as u128, scores_ood.len() as u128);
    let u2 = ood_rank_sum2 - n_ood * (n_ood + 1);
    Ok(u2 as f64 / (2 * n_id * n_ood) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    fn brute_force(id: &[f64], ood: &[f64]) -> f64 {
        let mut wins = 0.0;
        for a in id {
            for b in ood {
                wins += if b > a {
                    1.0
                } else if b == a {
                    0.5
                } else {
                    0.0
                };
            }
        }
        wins / (id.len() * ood.len()) as f64
    }

    #[test]
    fn four_pair_example() {
        let (id, ood) = ([0.9, 0.8], [0.85, 0.1]);
        assert_eq!(auroc(&id, &ood).unwrap(), brute_force(&id, &ood));
        assert_eq!(auroc(&id, &ood).unwrap(), 0.25);
    }

    #[test]
    fn matches_pair_counting_with_and_without_ties() {
        let mut rng = SeededRng::new(12);
        for case in 0..200 {
            let (n, m) = (1 + rng.below(40), 1 + rng.below(40));
            let draw = |r: &mut SeededRng| {
                if case % 2 == 0 {
                    r.normal()
                } else {
                    r.below(5) as f64
                }
            };
            let id: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
            let ood: Vec<f64> = (0..m).map(|_| draw(&mut rng) + 0.5).collect();
            assert!((auroc(&id, &ood).unwrap() - brute_force(&id, &ood)).abs() < 1e-12);
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(auroc(&[], &[1.0]), Err(SafetyError::Empty)));
        assert!(matches!(auroc(&[f64::NAN], &[1.0]), Err(SafetyError::NonFinite)));
    }
}
