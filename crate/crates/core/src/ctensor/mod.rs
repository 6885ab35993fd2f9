//! Complex tensors, reverse-mode differentiation under Wirtinger calculus, and Adam.

mod adam;
mod graph;
pub mod kernels;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use graph::{BatchStats, ElementwiseKind, Graph, Var};
pub use tensor::ComplexTensor;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("planes do not match shape {shape:?}: re {re}, im {im}")]
    PlaneLength { shape: Vec<usize>, re: usize, im: usize },
    #[error("non-finite values produced by {0}")]
    NonFinite(&'static str),
    #[error("{0:?} needs a second operand")]
    MissingOperand(ElementwiseKind),
    #[error("loss must be a real scalar, got shape {0:?} or non-zero imaginary part")]
    LossNotRealScalar(Vec<usize>),
    #[error("graph cycle detected at node {0}")]
    Cycle(usize),
    #[error("batch statistics need at least two values per channel")]
    DegenerateBatch,
    #[error("parameter {0} has no gradient")]
    MissingGrad(usize),
    #[error("optimizer state does not match parameter {0}")]
    StateMismatch(usize),
}
