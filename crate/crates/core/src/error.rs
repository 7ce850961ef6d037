use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::model::StableDsModel;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("state dimension {0} is unsupported (must be 1..=3)")]
    UnsupportedDimension(usize),

    #[error("layer {layer} of network `{network}` produced a non-finite value")]
    NumericalOverflow { network: &'static str, layer: usize },

    #[error("near-singular Jacobian (det = {det:e}) at x = {x:?}")]
    NearSingularJacobian { x: Vec<f64>, det: f64 },

    #[error("every sample in the batch was skipped ({skipped} near-singular Jacobians)")]
    DegenerateBatch { skipped: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),

    #[error("invalid demonstration: {0}")]
    InvalidDemonstration(&'static str),

    #[error("contract violation: {0}")]
    Contract(&'static str),

    #[error("training diverged: loss was non-finite for {consecutive} consecutive iterations (last at {iteration})")]
    Divergence {
        iteration: usize,
        consecutive: usize,
        snapshot: Box<StableDsModel>,
    },
}
