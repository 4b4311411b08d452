//! Freehand sketch model, its JSON interchange format and scribble rasterization.

use image::{GrayImage, Luma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Only interchange version understood by [`parse_sketch`].
pub const SKETCH_FORMAT_VERSION: u64 = 1;

/// Smallest accepted canvas or raster side, in pixels.
pub const MIN_DIMENSION: u32 = 64;

/// Default reference canvas side used by the studio.
pub const DEFAULT_CANVAS_PX: u32 = 1024;

/// Stroke half-widths are never rasterized thinner than this, so any stroke
/// leaves an 8-connected trail.
const MIN_RASTER_RADIUS: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Error, PartialEq)]
pub enum SketchError {
    #[error("malformed sketch document: {0}")]
    MalformedDocument(String),
    #[error("invalid stroke {index}: {reason}")]
    InvalidStroke { index: usize, reason: String },
    #[error("unsupported sketch format version {0}")]
    UnsupportedVersion(u64),
    #[error("invalid dimensions {width}x{height} (minimum {MIN_DIMENSION})")]
    InvalidDimensions { width: u32, height: u32 },
}

/// A single freehand stroke in normalized canvas coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stroke {
    pub points: Vec<[f64; 2]>,
    /// Brush width in pixels at the canvas reference resolution.
    pub width: f64,
    pub color: [f64; 3],
}

impl Stroke {
    pub fn new(points: Vec<[f64; 2]>, width: f64, color: [f64; 3]) -> Result<Self, SketchError> {
        let stroke = Self {
            points,
            width,
            color,
        };
        stroke.validate(0)?;
        Ok(stroke)
    }

    /// Closed polyline approximating a circle, in normalized coordinates.
    pub fn circle(
        center: [f64; 2],
        radius: f64,
        segments: usize,
        width: f64,
        color: [f64; 3],
    ) -> Result<Self, SketchError> {
        let segments = segments.max(3);
        let points = (0..=segments)
            .map(|k| {
                let a = std::f64::consts::TAU * (k % segments) as f64 / segments as f64;
                [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
            })
            .collect();
        Self::new(points, width, color)
    }

    fn validate(&self, index: usize) -> Result<(), SketchError> {
        let invalid = |reason: String| SketchError::InvalidStroke { index, reason };
        if self.points.len() < 2 {
            return Err(invalid(format!(
                "needs at least 2 points, got {}",
                self.points.len()
            )));
        }
        for (k, p) in self.points.iter().enumerate() {
            if !p.iter().all(|c| (0.0..=1.0).contains(c)) {
                return Err(invalid(format!(
                    "point {k} ({}, {}) outside [0,1]^2",
                    p[0], p[1]
                )));
            }
        }
        if !(self.width.is_finite() && self.width > 0.0) {
            return Err(invalid(format!("width must be > 0, got {}", self.width)));
        }
        if !self.color.iter().all(|c| (0.0..=1.0).contains(c)) {
            return Err(invalid("color components must lie in [0,1]".into()));
        }
        Ok(())
    }
}

/// An ordered list of strokes over a white reference canvas.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchCanvas {
    width_px: u32,
    height_px: u32,
    strokes: Vec<Stroke>,
}

impl SketchCanvas {
    pub fn new(width_px: u32, height_px: u32) -> Result<Self, SketchError> {
        check_dimensions(width_px, height_px)?;
        Ok(Self {
            width_px,
            height_px,
            strokes: Vec::new(),
        })
    }

    pub fn with_strokes(
        width_px: u32,
        height_px: u32,
        strokes: Vec<Stroke>,
    ) -> Result<Self, SketchError> {
        check_dimensions(width_px, height_px)?;
        for (i, s) in strokes.iter().enumerate() {
            s.validate(i)?;
        }
        Ok(Self {
            width_px,
            height_px,
            strokes,
        })
    }

    pub fn push(&mut self, stroke: Stroke) -> Result<(), SketchError> {
        stroke.validate(self.strokes.len())?;
        self.strokes.push(stroke);
        Ok(())
    }

    pub fn width_px(&self) -> u32 {
        self.width_px
    }

    pub fn height_px(&self) -> u32 {
        self.height_px
    }

    pub fn strokes(&self) -> &[Stroke] {
        &self.strokes
    }

    pub fn is_blank(&self) -> bool {
        self.strokes.is_empty()
    }
}

fn check_dimensions(width: u32, height: u32) -> Result<(), SketchError> {
    if width < MIN_DIMENSION || height < MIN_DIMENSION {
        return Err(SketchError::InvalidDimensions { width, height });
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct SketchDocument {
    version: u64,
    width_px: u32,
    height_px: u32,
    strokes: Vec<Stroke>,
}

#[derive(Deserialize)]
struct VersionProbe {
    version: u64,
}

/// Parses a sketch interchange document, validating every stroke.
///
/// Unknown top-level fields are ignored; any version other than 1 is refused.
pub fn parse_sketch(document: &[u8]) -> Result<SketchCanvas, SketchError> {
    let probe: VersionProbe = serde_json::from_slice(document)
        .map_err(|e| SketchError::MalformedDocument(e.to_string()))?;
    if probe.version != SKETCH_FORMAT_VERSION {
        return Err(SketchError::UnsupportedVersion(probe.version));
    }
    let doc: SketchDocument = serde_json::from_slice(document)
        .map_err(|e| SketchError::MalformedDocument(e.to_string()))?;
    SketchCanvas::with_strokes(doc.width_px, doc.height_px, doc.strokes)
}

pub fn serialize_sketch(canvas: &SketchCanvas) -> Vec<u8> {
    let doc = SketchDocument {
        version: SKETCH_FORMAT_VERSION,
        width_px: canvas.width_px,
        height_px: canvas.height_px,
        strokes: canvas.strokes.clone(),
    };
    serde_json::to_vec(&doc).expect("sketch documents always serialize")
}

/// Renders the strokes as black swept disks (round caps and joins) on white.
///
/// A pixel is black when its center lies within the scaled brush radius of
/// some stroke segment. Stroke colors are ignored.
pub fn rasterize_scribble(
    canvas: &SketchCanvas,
    out_w: u32,
    out_h: u32,
) -> Result<GrayImage, SketchError> {
    check_dimensions(out_w, out_h)?;
    let mut img = GrayImage::from_pixel(out_w, out_h, Luma([255]));
    let scale = out_w as f64 / canvas.width_px as f64;
    for stroke in &canvas.strokes {
        let radius = (0.5 * stroke.width * scale).max(MIN_RASTER_RADIUS);
        let pts: Vec<(f64, f64)> = stroke
            .points
            .iter()
            .map(|p| (p[0] * out_w as f64, p[1] * out_h as f64))
            .collect();
        for seg in pts.windows(2) {
            stamp_segment(&mut img, seg[0], seg[1], radius);
        }
    }
    Ok(img)
}

fn stamp_segment(img: &mut GrayImage, a: (f64, f64), b: (f64, f64), radius: f64) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let x0 = ((a.0.min(b.0) - radius).floor() as i64 - 1).max(0);
    let x1 = ((a.0.max(b.0) + radius).ceil() as i64 + 1).min(w - 1);
    let y0 = ((a.1.min(b.1) - radius).floor() as i64 - 1).max(0);
    let y1 = ((a.1.max(b.1) + radius).ceil() as i64 + 1).min(h - 1);
    let r2 = radius * radius;
    for py in y0..=y1 {
        for px in x0..=x1 {
            let c = (px as f64 + 0.5, py as f64 + 0.5);
            if point_segment_dist2(c, a, b) <= r2 {
                img.put_pixel(px as u32, py as u32, Luma([0]));
            }
        }
    }
}

fn point_segment_dist2(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    qx * qx + qy * qy
}
