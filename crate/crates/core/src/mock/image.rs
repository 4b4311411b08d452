//! Deterministic candidate images for the mock image backend.
//!
//! The region enclosed by the scribble (strokes plus any area they fence off
//! from the border) is filled with a radial shading field in a hue derived
//! from `(prompt, seed)`; strokes are drawn darker on top; the background is
//! pure white so the built-in matting isolates the object.

use image::{GrayImage, Rgb, RgbImage};
use sha2::{Digest, Sha256};

use crate::control::ControlRequest;

pub const MOCK_IMAGE_BACKEND_ID: &str = "mock-image";

/// Stable 64-bit hash of a prompt and seed (SHA-256 prefix, little endian).
pub fn stable_hash64(prompt: &str, seed: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(prompt.as_bytes());
    h.update([0u8]);
    h.update(seed.to_le_bytes());
    let digest = h.finalize();
    let mut first = [0u8; 8];
    first.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(first)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let sector = h6.floor() as u32 % 6;
    let f = h6 - h6.floor();
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match sector {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Pixels not 4-connected to the border through white scribble pixels.
fn enclosed_region(scribble: &GrayImage) -> Vec<bool> {
    let (w, h) = (scribble.width() as usize, scribble.height() as usize);
    let white = |i: usize| scribble.as_raw()[i] == 255;
    let mut outside = vec![false; w * h];
    let mut stack = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if (x == 0 || y == 0 || x + 1 == w || y + 1 == h) && white(y * w + x) {
                outside[y * w + x] = true;
                stack.push(y * w + x);
            }
        }
    }
    while let Some(i) = stack.pop() {
        let (x, y) = (i % w, i / w);
        let mut visit = |j: usize| {
            if !outside[j] && white(j) {
                outside[j] = true;
                stack.push(j);
            }
        };
        if x > 0 {
            visit(i - 1);
        }
        if x + 1 < w {
            visit(i + 1);
        }
        if y > 0 {
            visit(i - w);
        }
        if y + 1 < h {
            visit(i + w);
        }
    }
    outside.into_iter().map(|o| !o).collect()
}

/// Renders one candidate for `seed`.
pub fn render_candidate(scribble: &GrayImage, prompt: &str, seed: u64) -> RgbImage {
    let (w, h) = (scribble.width() as usize, scribble.height() as usize);
    let region = enclosed_region(scribble);
    let hash = stable_hash64(prompt, seed);
    let hue = (hash & 0xffff) as f64 / 65536.0;
    let sat = 0.55 + 0.3 * ((hash >> 16) & 0xff) as f64 / 255.0;
    // Highlight offset, in units of the region radius.
    let hx = ((hash >> 24) & 0xff) as f64 / 255.0 * 0.6 - 0.3;
    let hy = ((hash >> 32) & 0xff) as f64 / 255.0 * 0.6 - 0.3;

    let (mut cx, mut cy, mut count) = (0.0, 0.0, 0usize);
    for (i, _) in region.iter().enumerate().filter(|(_, &r)| r) {
        cx += (i % w) as f64;
        cy += (i / w) as f64;
        count += 1;
    }
    let mut img = RgbImage::from_pixel(w as u32, h as u32, Rgb([255, 255, 255]));
    if count == 0 {
        return img;
    }
    cx /= count as f64;
    cy /= count as f64;
    let radius = region
        .iter()
        .enumerate()
        .filter(|(_, &r)| r)
        .map(|(i, _)| ((i % w) as f64 - cx).hypot((i / w) as f64 - cy))
        .fold(1.0f64, f64::max);
    let (lx, ly) = (cx + hx * radius, cy + hy * radius);

    let to_u8 = |c: [f64; 3]| Rgb(c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    for (i, _) in region.iter().enumerate().filter(|(_, &r)| r) {
        let (x, y) = ((i % w) as f64, (i / w) as f64);
        let stroke = scribble.as_raw()[i] == 0;
        let rgb = if stroke {
            hsv_to_rgb(hue + 0.04, sat, 0.22)
        } else {
            let r = ((x - lx).hypot(y - ly) / (1.6 * radius)).min(1.0);
            hsv_to_rgb(hue, sat, 0.8 - 0.45 * r * r)
        };
        img.put_pixel(x as u32, y as u32, to_u8(rgb));
    }
    img
}

/// One image per candidate, seeded `req.seed + i`.
pub fn mock_candidates(req: &ControlRequest) -> Vec<(u64, RgbImage)> {
    (0..req.candidate_count as u64)
        .map(|i| {
            let seed = req.seed.wrapping_add(i);
            (seed, render_candidate(&req.scribble, &req.prompt, seed))
        })
        .collect()
}
