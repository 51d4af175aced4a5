//! Dense `f64` tensors, a reverse-mode autodiff tape over a fixed op set,
//! Adam, finite-difference gradient checking and seeded random streams.

mod adam;
mod gradcheck;
mod graph;
pub(crate) mod kernels;
mod rng;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use gradcheck::{grad_check, graph_objective, Objective, DEFAULT_STEP, RELATIVE_ERROR_FLOOR};
pub use graph::{Gradients, Graph, NodeId};
pub use rng::{derive_seed, fnv1a64, splitmix64, SeededRng, RNG_ALGORITHM};
pub use tensor::{log_sum_exp, log_sum_exp_slice, softmax, softmax_slice, Tensor};

pub(crate) use kernels::sigmoid;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumericsError {
    #[error("invalid shape {0:?}: dimensions must be positive")]
    InvalidShape(Vec<usize>),
    #[error("shape {shape:?} needs a different element count than {len}")]
    LengthMismatch { shape: Vec<usize>, len: usize },
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
    #[error("axis {axis} out of range for rank {rank}")]
    InvalidAxis { axis: usize, rank: usize },
    #[error("reduction over an empty axis")]
    EmptyAxis,
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("loss must be a single element, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("unknown node {0}")]
    UnknownNode(usize),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid permutation {0:?}")]
    InvalidPermutation(Vec<usize>),
    #[error("probability {0} outside [0, 1)")]
    InvalidProbability(f64),
    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("expected {expected} parameter tensors, got {got}")]
    ParameterCount { expected: usize, got: usize },
}
