//! Control-image preparation: scribble and Canny conditioning images, the
//! per-model conditioning weights, and background removal for candidates.

mod canny;
mod matting;

pub use canny::{canny_edges, gradients, quantized_direction, CannyParams, Gradients};
pub use matting::{
    alpha_bbox, binarize_alpha, remove_background, CandidateImage, MattingConfig, PixelRect,
    DEFAULT_FLOOD_TOLERANCE,
};

use image::GrayImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sketch::{rasterize_scribble, SketchCanvas, SketchError};

#[derive(Debug, Error, PartialEq)]
pub enum ControlError {
    #[error("invalid thresholds: need 0 < low < high, got low={low} high={high}")]
    InvalidThresholds { low: f64, high: f64 },
    #[error("invalid sigma {0}: must be > 0")]
    InvalidSigma(f64),
    #[error("conditioning weight {name}={value} outside [0,1]")]
    InvalidWeight { name: &'static str, value: f64 },
    #[error("candidate_count must be at least 1")]
    InvalidCandidateCount,
    #[error("image has no foreground")]
    NoForeground,
    #[error("image is empty")]
    EmptyImage,
    #[error(transparent)]
    Sketch(#[from] SketchError),
}

/// Conditioning weights for the three ControlNet models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlWeights {
    pub scribble: f64,
    pub canny: f64,
    pub ip2p: f64,
}

impl Default for ControlWeights {
    fn default() -> Self {
        Self {
            scribble: 0.55,
            canny: 0.05,
            ip2p: 0.5,
        }
    }
}

impl ControlWeights {
    pub fn validate(&self) -> Result<(), ControlError> {
        for (name, value) in [
            ("scribble", self.scribble),
            ("canny", self.canny),
            ("ip2p", self.ip2p),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ControlError::InvalidWeight { name, value });
            }
        }
        Ok(())
    }
}

/// Image-inference settings that shape a [`ControlRequest`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub raster_width: u32,
    pub raster_height: u32,
    pub canny: CannyParams,
    pub weights: ControlWeights,
    pub negative_prompt: Option<String>,
    pub seed: u64,
    pub candidate_count: u32,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            raster_width: 512,
            raster_height: 512,
            canny: CannyParams::default(),
            weights: ControlWeights::default(),
            negative_prompt: None,
            seed: 0,
            candidate_count: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestMetadata {
    pub empty_prompt: bool,
    /// Stroke colors in canvas order; forwarded to backends, never rasterized.
    pub stroke_colors: Vec<[f64; 3]>,
}

/// Everything an image backend needs for one inference call.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlRequest {
    pub prompt: String,
    pub negative_prompt: Option<String>,
    pub scribble: GrayImage,
    pub canny: GrayImage,
    pub weights: ControlWeights,
    pub seed: u64,
    pub candidate_count: u32,
    pub metadata: RequestMetadata,
}

pub fn build_control_request(
    canvas: &SketchCanvas,
    prompt: &str,
    cfg: &GenerationConfig,
) -> Result<ControlRequest, ControlError> {
    cfg.weights.validate()?;
    if cfg.candidate_count == 0 {
        return Err(ControlError::InvalidCandidateCount);
    }
    let scribble = rasterize_scribble(canvas, cfg.raster_width, cfg.raster_height)?;
    let canny = canny_edges(&scribble, cfg.canny.sigma, cfg.canny.low, cfg.canny.high)?;
    Ok(ControlRequest {
        prompt: prompt.to_owned(),
        negative_prompt: cfg.negative_prompt.clone(),
        scribble,
        canny,
        weights: cfg.weights,
        seed: cfg.seed,
        candidate_count: cfg.candidate_count,
        metadata: RequestMetadata {
            empty_prompt: prompt.trim().is_empty(),
            stroke_colors: canvas.strokes().iter().map(|s| s.color).collect(),
        },
    })
}
