//! JSON envelopes exchanged with remote backends. Images travel as base64
//! PNG; field grids as base64 little-endian f32 arrays, x-fastest.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use image::{DynamicImage, GrayImage, ImageFormat, RgbImage, RgbaImage};
use serde::{Deserialize, Serialize};

use meshforge_core::field::{decode_f32_le, edge_count, encode_f32_le, Axis, ReconstructionField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WireWeights {
    pub scribble: f64,
    pub canny: f64,
    pub ip2p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagesRequest {
    pub prompt: String,
    pub negative_prompt: String,
    pub weights: WireWeights,
    pub seed: u64,
    pub count: u32,
    pub scribble_png: String,
    pub canny_png: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagesResponse {
    pub images: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructRequest {
    pub image_png: String,
    pub resolution: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ReconstructResponse {
    Fields {
        n: usize,
        sdf: String,
        color: String,
        alpha: String,
        beta_x: String,
        beta_y: String,
        beta_z: String,
        gamma: String,
    },
    Mesh {
        obj: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatteRequest {
    pub image_png: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatteResponse {
    pub image_png: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

pub fn encode_png(image: impl Into<DynamicImage>) -> Vec<u8> {
    let mut out = std::io::Cursor::new(Vec::new());
    image
        .into()
        .write_to(&mut out, ImageFormat::Png)
        .expect("PNG encoding into memory cannot fail");
    out.into_inner()
}

pub fn png_b64(image: impl Into<DynamicImage>) -> String {
    B64.encode(encode_png(image))
}

fn decode_image(b64: &str) -> Result<DynamicImage, String> {
    let bytes = B64.decode(b64).map_err(|e| format!("bad base64: {e}"))?;
    image::load_from_memory_with_format(&bytes, ImageFormat::Png).map_err(|e| format!("bad PNG: {e}"))
}

pub fn decode_rgb(b64: &str) -> Result<RgbImage, String> {
    decode_image(b64).map(|i| i.to_rgb8())
}

pub fn decode_gray(b64: &str) -> Result<GrayImage, String> {
    decode_image(b64).map(|i| i.to_luma8())
}

pub fn decode_rgba(b64: &str) -> Result<RgbaImage, String> {
    decode_image(b64).map(|i| i.to_rgba8())
}

fn grid(name: &str, b64: &str, expected: usize) -> Result<Vec<f32>, String> {
    let bytes = B64.decode(b64).map_err(|e| format!("{name}: bad base64: {e}"))?;
    let values = decode_f32_le(&bytes).ok_or_else(|| format!("{name}: length not a multiple of 4"))?;
    if values.len() != expected {
        return Err(format!("{name}: {} values, expected {expected}", values.len()));
    }
    Ok(values)
}

pub fn encode_field(field: &ReconstructionField) -> ReconstructResponse {
    let b = |v: &[f32]| B64.encode(encode_f32_le(v));
    let color: Vec<f32> = field.color().iter().flatten().copied().collect();
    ReconstructResponse::Fields {
        n: field.resolution(),
        sdf: b(field.sdf()),
        color: b(&color),
        alpha: b(field.alpha()),
        beta_x: b(field.beta(Axis::X)),
        beta_y: b(field.beta(Axis::Y)),
        beta_z: b(field.beta(Axis::Z)),
        gamma: b(field.gamma()),
    }
}

/// Decodes a `fields` response for a requested resolution `n`.
#[allow(clippy::too_many_arguments)]
pub fn decode_field(
    requested: usize,
    n: usize,
    sdf: &str,
    color: &str,
    alpha: &str,
    beta: [&str; 3],
    gamma: &str,
) -> Result<ReconstructionField, String> {
    if n != requested {
        return Err(format!("backend returned n = {n}, requested {requested}"));
    }
    let corners = (n + 1).pow(3);
    let color = grid("color", color, corners * 3)?;
    let field = ReconstructionField::new(
        n,
        grid("sdf", sdf, corners)?,
        color.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        grid("alpha", alpha, corners)?,
        [
            grid("beta_x", beta[0], edge_count(n))?,
            grid("beta_y", beta[1], edge_count(n))?,
            grid("beta_z", beta[2], edge_count(n))?,
        ],
        grid("gamma", gamma, n * n * n)?,
    )
    .map_err(|e| e.to_string())?;
    Ok(field)
}
