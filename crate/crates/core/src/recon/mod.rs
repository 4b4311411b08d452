//! Toy-scale triplane reconstruction: feature planes, the three decoder heads
//! (SDF, color, Flexicubes parameters) and baking onto the extraction lattice.

mod bake;
mod heads;
mod triplane;
mod weights;

pub use bake::bake_field;
pub use heads::{decode_point, DecodedPoint, DecoderHeads, FlexParams, Mlp, softplus_positive, logistic};
pub use triplane::{Plane, Triplane};
pub use weights::{read_weights, write_weights, WEIGHTS_MAGIC, WEIGHTS_VERSION};

use thiserror::Error;

use crate::field::FieldError;

/// Toy defaults for plane resolution, channels and hidden width.
pub const DEFAULT_PLANE_RESOLUTION: usize = 64;
pub const DEFAULT_CHANNELS: usize = 16;
pub const DEFAULT_HIDDEN: usize = 32;

#[derive(Debug, Error)]
pub enum ReconError {
    #[error("point ({}, {}, {}) outside [-1,1]^3", .0[0], .0[1], .0[2])]
    OutOfDomain([f64; 3]),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid weights file: {0}")]
    WeightsFormat(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_domain(p: [f64; 3]) -> Result<(), ReconError> {
    if p.iter().all(|c| c.is_finite() && (-1.0..=1.0).contains(c)) {
        Ok(())
    } else {
        Err(ReconError::OutOfDomain(p))
    }
}
