//! Everything around the solver: synthetic stereo instances, PGM image
//! I/O, and the multi-method comparison runner used by the CLI.

pub mod compare;
pub mod pgm;
pub mod stereo;

pub use compare::{
    compare_run, BudgetMode, ComparisonTable, MethodOutcome, MethodRow, MethodSpec,
    PropagationChoice,
};
pub use pgm::{GrayImage, PgmError};
pub use stereo::{disparity_image, stereo_problem, stereo_synthetic, StereoParams};

use thiserror::Error;

use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(
        "left and right images must share dimensions, got {left_width}x{left_height} \
         vs {right_width}x{right_height}"
    )]
    DimensionMismatch {
        left_width: usize,
        left_height: usize,
        right_width: usize,
        right_height: usize,
    },
    #[error("stereo synthesis needs at least an 8x8 canvas, got {width}x{height}")]
    TooSmall { width: usize, height: usize },
    #[error("max_disparity must be at least 1")]
    NoDisparities,
    #[error("{what} must be finite and nonnegative, got {value}")]
    BadWeight { what: &'static str, value: f64 },
    #[error("disparity field has {got} entries, expected {expected}")]
    FieldShape { got: usize, expected: usize },
    #[error("comparison needs at least one method")]
    NoMethods,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Pgm(#[from] PgmError),
}
