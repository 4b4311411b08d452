//! Built-in foreground extraction by border flood fill.

use image::{Rgb, RgbImage, Rgba, RgbaImage};
use serde::{Deserialize, Serialize};

use super::ControlError;

/// Per-channel tolerance (Chebyshev distance, 8-bit units) around the border
/// median color.
pub const DEFAULT_FLOOD_TOLERANCE: u8 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MattingConfig {
    pub tolerance: u8,
}

impl Default for MattingConfig {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_FLOOD_TOLERANCE,
        }
    }
}

/// Inclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

/// A matted inference result offered for selection.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateImage {
    pixels: RgbaImage,
    seed: u64,
    backend_id: String,
    foreground_bbox: PixelRect,
}

impl CandidateImage {
    /// Fails with `NoForeground` unless some pixel has nonzero alpha.
    pub fn new(pixels: RgbaImage, seed: u64, backend_id: impl Into<String>) -> Result<Self, ControlError> {
        let foreground_bbox = alpha_bbox(&pixels).ok_or(ControlError::NoForeground)?;
        Ok(Self {
            pixels,
            seed,
            backend_id: backend_id.into(),
            foreground_bbox,
        })
    }

    pub fn pixels(&self) -> &RgbaImage {
        &self.pixels
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn backend_id(&self) -> &str {
        &self.backend_id
    }

    pub fn foreground_bbox(&self) -> PixelRect {
        self.foreground_bbox
    }

    /// Binary foreground mask (alpha > 0), row-major.
    pub fn alpha_mask(&self) -> Vec<bool> {
        self.pixels.pixels().map(|p| p[3] > 0).collect()
    }
}

/// Tight bounding box of pixels with alpha > 0.
pub fn alpha_bbox(img: &RgbaImage) -> Option<PixelRect> {
    let mut bb: Option<PixelRect> = None;
    for (x, y, p) in img.enumerate_pixels() {
        if p[3] == 0 {
            continue;
        }
        bb = Some(match bb {
            None => PixelRect { x0: x, y0: y, x1: x, y1: y },
            Some(r) => PixelRect {
                x0: r.x0.min(x),
                y0: r.y0.min(y),
                x1: r.x1.max(x),
                y1: r.y1.max(y),
            },
        });
    }
    bb
}

fn border_median(img: &RgbImage) -> [u8; 3] {
    let (w, h) = img.dimensions();
    let mut channels: [Vec<u8>; 3] = Default::default();
    let mut take = |p: &Rgb<u8>| {
        for c in 0..3 {
            channels[c].push(p[c]);
        }
    };
    for x in 0..w {
        take(img.get_pixel(x, 0));
        if h > 1 {
            take(img.get_pixel(x, h - 1));
        }
    }
    for y in 1..h.saturating_sub(1) {
        take(img.get_pixel(0, y));
        if w > 1 {
            take(img.get_pixel(w - 1, y));
        }
    }
    let mut out = [0u8; 3];
    for c in 0..3 {
        channels[c].sort_unstable();
        out[c] = channels[c][channels[c].len() / 2];
    }
    out
}

fn within(p: &Rgb<u8>, reference: [u8; 3], tol: u8) -> bool {
    (0..3).all(|c| p[c].abs_diff(reference[c]) <= tol)
}

/// Floods the background from every border pixel within tolerance of the
/// border-median color (4-connected). Flooded pixels get alpha 0, the rest 255.
pub fn remove_background(image: &RgbImage, cfg: &MattingConfig) -> Result<RgbaImage, ControlError> {
    let (w, h) = image.dimensions();
    if w == 0 || h == 0 {
        return Err(ControlError::EmptyImage);
    }
    let reference = border_median(image);
    let (wu, hu) = (w as usize, h as usize);
    let mut flooded = vec![false; wu * hu];
    let mut stack = Vec::new();
    let seed = |x: u32, y: u32, flooded: &mut Vec<bool>, stack: &mut Vec<(u32, u32)>| {
        let i = y as usize * wu + x as usize;
        if !flooded[i] && within(image.get_pixel(x, y), reference, cfg.tolerance) {
            flooded[i] = true;
            stack.push((x, y));
        }
    };
    for x in 0..w {
        seed(x, 0, &mut flooded, &mut stack);
        seed(x, h - 1, &mut flooded, &mut stack);
    }
    for y in 0..h {
        seed(0, y, &mut flooded, &mut stack);
        seed(w - 1, y, &mut flooded, &mut stack);
    }
    while let Some((x, y)) = stack.pop() {
        if x > 0 {
            seed(x - 1, y, &mut flooded, &mut stack);
        }
        if x + 1 < w {
            seed(x + 1, y, &mut flooded, &mut stack);
        }
        if y > 0 {
            seed(x, y - 1, &mut flooded, &mut stack);
        }
        if y + 1 < h {
            seed(x, y + 1, &mut flooded, &mut stack);
        }
    }
    if flooded.iter().all(|&f| f) {
        return Err(ControlError::NoForeground);
    }
    Ok(RgbaImage::from_fn(w, h, |x, y| {
        let p = image.get_pixel(x, y);
        let a = if flooded[y as usize * wu + x as usize] { 0 } else { 255 };
        Rgba([p[0], p[1], p[2], a])
    }))
}

/// Applies the external-matting convention: alpha binarized at 128.
pub fn binarize_alpha(img: &mut RgbaImage) {
    for p in img.pixels_mut() {
        p[3] = if p[3] >= 128 { 255 } else { 0 };
    }
}
