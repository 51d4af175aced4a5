use serde::{Deserialize, Serialize};

use super::UqError;
use crate::numerics::log_sum_exp_slice;

pub const TEMPERATURE_RANGE: [f64; 2] = [0.05, 10.0];
const GRID_POINTS: usize = 64;
const TOLERANCE: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperatureParam {
    pub t_star: f64,
    pub nll_before: f64,
    pub nll_after: f64,
    /// Golden-section iterations after the grid search.
    pub iterations: usize,
}

/// Divides every logit by `t`.
pub fn scale_logits(logits: &[f64], t: f64) -> Result<Vec<f64>, UqError> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(UqError::InvalidTemperature(t));
    }
    Ok(logits.iter().map(|l| l / t).collect())
}

/// Mean negative log-likelihood of `softmax(logits / t)`; `logits` is
/// row-major `[n, classes]`.
pub fn mean_nll(logits: &[f64], labels: &[usize], classes: usize, t: f64) -> Result<f64, UqError> {
    let mut total = 0.0;
    for (row, &y) in logits.chunks(classes).zip(labels) {
        let scaled = scale_logits(row, t)?;
        total += log_sum_exp_slice(&scaled)? - scaled[y];
    }
    Ok(total / labels.len() as f64)
}

/// The 64-point log-spaced grid over the allowed range, with `T = 1` put in
/// place of its nearest neighbour.
fn grid() -> Vec<f64> {
    let [lo, hi] = TEMPERATURE_RANGE;
    let step = (hi / lo).ln() / (GRID_POINTS - 1) as f64;
    let mut g: Vec<f64> = (0..GRID_POINTS).map(|i| lo * (step * i as f64).exp()).collect();
    let nearest = (0..GRID_POINTS)
        .min_by(|&a, &b| g[a].ln().abs().total_cmp(&g[b].ln().abs()))
        .expect("grid is non-empty");
    g[nearest] = 1.0;
    g
}

/// Fits `T*` on held-out logits by grid search followed by golden-section
/// refinement between the grid neighbours of the best point.
pub fn fit_temperature(logits: &[f64], labels: &[usize], classes: usize) -> Result<TemperatureParam, UqError> {
    if classes == 0 || logits.len() != labels.len() * classes {
        return Err(UqError::Shape(format!(
            "{} logits for {} labels and {classes} classes",
            logits.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(UqError::Shape(format!("label {bad} out of range")));
    }
    let first = labels.first().ok_or(UqError::Degenerate)?;
    if labels.iter().all(|y| y == first) {
        return Err(UqError::Degenerate);
    }
    let nll = |t: f64| mean_nll(logits, labels, classes, t);
    let g = grid();
    let values = g.iter().map(|&t| nll(t)).collect::<Result<Vec<_>, _>>()?;
    let best = (0..g.len())
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("grid is non-empty");
    let (mut a, mut b) = (g[best.saturating_sub(1)], g[(best + 1).min(g.len() - 1)]);

    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (nll(c)?, nll(d)?);
    let mut iterations = 0;
    while (b - a).abs() >= TOLERANCE {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = nll(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = nll(d)?;
        }
        iterations += 1;
    }
    let refined = 0.5 * (a + b);
    let refined_nll = nll(refined)?;
    let (t_star, nll_after) = if refined_nll <= values[best] {
        (refined, refined_nll)
    } else {
        (g[best], values[best])
    };
    Ok(TemperatureParam {
        t_star,
        nll_before: nll(1.0)?,
        nll_after,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{softmax_slice, SeededRng};

    fn calibrated(n: usize, classes: usize, seed: u64) -> (Vec<f64>, Vec<usize>) {
        let mut rng = SeededRng::new(seed);
        let mut logits = Vec::with_capacity(n * classes);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<f64> = (0..classes).map(|_| 2.0 * rng.normal()).collect();
            let p = softmax_slice(&row);
            let u = rng.uniform();
            let mut acc = 0.0;
            let y = p.iter().position(|q| {
                acc += q;
                u < acc
            });
            labels.push(y.unwrap_or(classes - 1));
            logits.extend(row);
        }
        (logits, labels)
    }

    #[test]
    fn grid_contains_one_and_endpoints() {
        let g = grid();
        assert_eq!(g.len(), 64);
        assert!(g.contains(&1.0));
        assert!((g[0] - 0.05).abs() < 1e-15 && (g[63] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn recovers_unit_temperature_on_calibrated_logits() {
        let (logits, labels) = calibrated(20_000, 5, 3);
        let fit = fit_temperature(&logits, &labels, 5).unwrap();
        assert!((fit.t_star - 1.0).abs() < 0.05, "{}", fit.t_star);
        assert!(fit.nll_after <= fit.nll_before);
    }

    #[test]
    fn recovers_scale_factor() {
        let (logits, labels) = calibrated(20_000, 5, 4);
        let doubled: Vec<f64> = logits.iter().map(|l| 2.0 * l).collect();
        let fit = fit_temperature(&doubled, &labels, 5).unwrap();
        assert!((fit.t_star / 2.0 - 1.0).abs() < 0.05, "{}", fit.t_star);
    }

    #[test]
    fn scaling_examples() {
        assert_eq!(scale_logits(&[2.0, -1.0], 1.0).unwrap(), vec![2.0, -1.0]);
        assert_eq!(scale_logits(&[2.0, 0.0], 1.324).unwrap(), vec![2.0 / 1.324, 0.0]);
        assert!(scale_logits(&[1.0], 0.0).is_err());
        assert!(scale_logits(&[1.0], -2.0).is_err());
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(matches!(
            fit_temperature(&[1.0, 0.0, 2.0, 0.0], &[0, 0], 2),
            Err(UqError::Degenerate)
        ));
        assert!(matches!(fit_temperature(&[], &[], 2), Err(UqError::Degenerate)));
        assert!(fit_temperature(&[1.0, 0.0], &[0, 1], 2).is_err());
        assert!(fit_temperature(&[1.0, 0.0, 0.0, 1.0], &[0, 2], 2).is_err());
    }
}
