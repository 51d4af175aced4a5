//! Skeleton action recognition with uncertainty scores, selective
//! prediction and channel-gated adaptation to shifted domains.
//!
//! - [`skeldata`]: synthetic skeleton domains, corruptions and dataset files
//! - [`numerics`]: tensors, reverse-mode autodiff, Adam and seeded streams
//! - [`model`]: the skeleton transformer, its gate and training loops
//! - [`uq`]: confidence, temperature, energy, Mahalanobis, MC dropout and
//!   ensemble scores
//! - [`safety`]: risk-coverage curves, AUROC and calibration
//! - [`cli`]: the experiment runner behind the `skelsafe` binary

pub mod cli;
mod csvfmt;
pub mod model;
pub mod numerics;
pub mod safety;
pub mod skeldata;
pub mod uq;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/uncertainty.md")]
    mod uncertainty {}
    #[doc = include_str!("../../../book/src/selective.md")]
    mod selective {}
    #[doc = include_str!("../../../book/src/calibration.md")]
    mod calibration {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/reproducibility.md")]
    mod reproducibility {}
}
