use serde::{Deserialize, Serialize};

use super::SafetyError;

pub const DEFAULT_BINS: usize = 15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    /// Mean confidence; 0 for an empty bin.
    pub confidence: f64,
    pub accuracy: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBins {
    pub bins: Vec<Bin>,
    pub ece: f64,
}

impl ReliabilityBins {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,conf,acc,count\n");
        for b in &self.bins {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                b.lo, b.hi, b.confidence, b.accuracy, b.count
            ));
        }
        out
    }
}

/// Index of the equal-width bin holding `c`; edges belong to the upper bin
/// and 1.0 to the last.
fn bin_of(c: f64, bins: usize) -> usize {
    ((c * bins as f64).floor() as usize).min(bins - 1)
}

/// Expected calibration error over `bins` equal-width confidence bins.
///
/// ```
/// use skelsafe::safety::ece;
/// let correct: Vec<bool> = (0..10).map(|i| i % 2 == 0).collect();
/// assert_eq!(ece(&[0.9; 10], &correct, 15).unwrap().ece, 0.4);
/// ```
pub fn ece(confidences: &[f64], correct: &[bool], bins: usize) -> Result<ReliabilityBins, SafetyError> {
    if bins == 0 {
        return Err(SafetyError::InvalidBins);
    }
    if confidences.len() != correct.len() {
        return Err(SafetyError::LengthMismatch(confidences.len(), correct.len()));
    }
    if let Some(&c) = confidences.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(SafetyError::ConfidenceRange(c));
    }
    let mut out: Vec<Bin> = (0..bins)
        .map(|b| Bin {
            lo: b as f64 / bins as f64,
            hi: (b + 1) as f64 / bins as f64,
            confidence: 0.0,
            accuracy: 0.0,
            count: 0,
        })
        .collect();
    let mut hits = vec![0usize; bins];
    for (&c, &ok) in confidences.iter().zip(correct) {
        let bin = &mut out[bin_of(c, bins)];
        bin.count += 1;
        // A running mean reproduces a constant input exactly.
        bin.confidence += (c - bin.confidence) / bin.count as f64;
        hits[bin_of(c, bins)] += usize::from(ok);
    }
    let n = confidences.len() as f64;
    let mut total = 0.0;
    for (bin, h) in out.iter_mut().zip(hits) {
        if bin.count > 0 {
            bin.accuracy = h as f64 / bin.count as f64;
            total += bin.count as f64 / n * (bin.accuracy - bin.confidence).abs();
        }
    }
    Ok(ReliabilityBins { bins: out, ece: total })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class: String,
    /// `None` when the class never occurs among the labels.
    pub accuracy: Option<f64>,
    pub count: usize,
}

pub fn per_class_accuracy(
    preds: &[usize],
    labels: &[usize],
    class_names: &[String],
) -> Result<Vec<ClassAccuracy>, SafetyError> {
    if preds.len() != labels.len() {
        return Err(SafetyError::LengthMismatch(preds.len(), labels.len()));
    }
    let mut tally = vec![(0usize, 0usize); class_names.len()];
    for (&p, &y) in preds.iter().zip(labels) {
        let t = tally.get_mut(y).ok_or(SafetyError::LabelOutOfRange(y))?;
        t.0 += usize::from(p == y);
        t.1 += 1;
    }
    Ok(class_names
        .iter()
        .zip(tally)
        .map(|(name, (hit, count))| ClassAccuracy {
            class: name.clone(),
            accuracy: (count > 0).then(|| hit as f64 / count as f64),
            count,
        })
        .collect())
}
