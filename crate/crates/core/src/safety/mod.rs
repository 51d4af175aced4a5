//! Selective classification and calibration metrics: AUROC, risk-coverage
//! curves with the wrong-spoke rate, reliability bins with ECE, and
//! per-class accuracy.

mod auroc;
mod calibration;
mod coverage;

pub use auroc::auroc;
pub use calibration::{ece, per_class_accuracy, Bin, ClassAccuracy, ReliabilityBins, DEFAULT_BINS};
pub use coverage::{accepted_count, default_grid, risk_coverage, CoveragePoint, RiskCoverageCurve};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SafetyError {
    #[error("empty input")]
    Empty,
    #[error("NaN score")]
    NonFinite,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("coverage grid must be strictly increasing within (0, 1]")]
    InvalidGrid,
    #[error("at least one bin is required")]
    InvalidBins,
    #[error("confidence {0} outside [0, 1]")]
    ConfidenceRange(f64),
    #[error("label {0} has no class name")]
    LabelOutOfRange(usize),
}
