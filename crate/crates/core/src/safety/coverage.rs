use serde::{Deserialize, Serialize};

use super::SafetyError;

/// `0.05, 0.10, …, 1.00`, each computed as `k / 20`.
pub fn default_grid() -> Vec<f64> {
    (1..=20).map(|k| k as f64 / 20.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoveragePoint {
    pub kappa: f64,
    pub risk: f64,
    /// Wrong-spoke rate `risk · kappa`.
    pub wsr: f64,
    pub accepted: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskCoverageCurve {
    pub points: Vec<CoveragePoint>,
    /// `max |wsr − risk · kappa|`, checked when the curve is built.
    pub wsr_identity_error: f64,
}

impl RiskCoverageCurve {
    /// The point whose `kappa` is within `1e-9` of the requested value.
    pub fn at(&self, kappa: f64) -> Option<&CoveragePoint> {
        self.points.iter().find(|p| (p.kappa - kappa).abs() < 1e-9)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("kappa,risk,wsr,accepted\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{},{}\n", p.kappa, p.risk, p.wsr, p.accepted));
        }
        out
    }
}

/// `⌈κ n⌉`, treating products within `1e-9` of an integer as that integer
/// so that `0.15 · 100` accepts 15 samples, not 16.
pub fn accepted_count(kappa: f64, n: usize) -> usize {
    let x = kappa * n as f64;
    let r = x.round();
    let count = if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r
    } else {
        x.ceil()
    };
    (count as usize).min(n)
}

/// Sorts by descending confidence (ties by ascending index) and reports the
/// error rate among the first `⌈κ n⌉` samples for every `κ` of `grid`.
///
/// ```
/// use skelsafe::safety::risk_coverage;
/// let c = risk_coverage(&[0.9, 0.8, 0.7, 0.6], &[true, false, true, false], &[0.5, 1.0]).unwrap();
/// assert_eq!((c.points[0].risk, c.points[0].wsr, c.points[0].accepted), (0.5, 0.25, 2));
/// ```
pub fn risk_coverage(confidences: &[f64], correct: &[bool], grid: &[f64]) -> Result<RiskCoverageCurve, SafetyError> {
    if confidences.is_empty() {
        return Err(SafetyError::Empty);
    }
    if confidences.len() != correct.len() {
        return Err(SafetyError::LengthMismatch(confidences.len(), correct.len()));
    }
    if confidences.iter().any(|c| c.is_nan()) {
        return Err(SafetyError::NonFinite);
    }
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) || grid.iter().any(|k| !(*k > 0.0 && *k <= 1.0)) {
        return Err(SafetyError::InvalidGrid);
    }
    let n = confidences.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| confidences[b].total_cmp(&confidences[a]).then(a.cmp(&b)));
    let mut wrong_prefix = Vec::with_capacity(n + 1);
    wrong_prefix.push(0usize);
    for &i in &order {
        wrong_prefix.push(wrong_prefix.last().unwrap() + usize::from(!correct[i]));
    }
    let points: Vec<CoveragePoint> = grid
        .iter()
        .map(|&kappa| {
            let accepted = accepted_count(kappa, n).max(1);
            let risk = wrong_prefix[accepted] as f64 / accepted as f64;
            CoveragePoint {
                kappa,
                risk,
                wsr: risk * kappa,
                accepted,
            }
        })
        .collect();
    let wsr_identity_error = points
        .iter()
        .map(|p| (p.wsr - p.risk * p.kappa).abs())
        .fold(0.0, f64::max);
    Ok(RiskCoverageCurve {
        points,
        wsr_identity_error,
    })
}
