//! Canny edge detection on 8-bit grayscale rasters.

use image::{GrayImage, Luma};
use serde::{Deserialize, Serialize};

use super::ControlError;

/// Canny parameters. Thresholds are on the normalized Sobel magnitude, where a
/// hard 0→255 step yields a magnitude of 255.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CannyParams {
    pub sigma: f64,
    pub low: f64,
    pub high: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        Self {
            sigma: 1.4,
            low: 25.0,
            high: 75.0,
        }
    }
}

/// Gradient planes produced before thinning; exposed for diagnostics.
pub struct Gradients {
    pub width: usize,
    pub height: usize,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
    pub magnitude: Vec<f64>,
}

/// Runs Gaussian blur, Sobel, non-maximum suppression and hysteresis.
///
/// Output pixels are 255 on edges and 0 elsewhere.
pub fn canny_edges(
    image: &GrayImage,
    sigma: f64,
    low: f64,
    high: f64,
) -> Result<GrayImage, ControlError> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(ControlError::InvalidSigma(sigma));
    }
    if !(low > 0.0 && low < high) {
        return Err(ControlError::InvalidThresholds { low, high });
    }
    let grads = gradients(image, sigma);
    let thinned = non_maximum_suppression(&grads);
    Ok(hysteresis(&thinned, grads.width, grads.height, low, high))
}

pub fn gradients(image: &GrayImage, sigma: f64) -> Gradients {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let src: Vec<f64> = image.as_raw().iter().map(|&v| v as f64).collect();
    let blurred = gaussian_blur(&src, w, h, sigma);

    let at = |x: isize, y: isize| {
        let x = x.clamp(0, w as isize - 1) as usize;
        let y = y.clamp(0, h as isize - 1) as usize;
        blurred[y * w + x]
    };
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    let mut magnitude = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let dx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let dy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            let i = y as usize * w + x as usize;
            gx[i] = dx / 4.0;
            gy[i] = dy / 4.0;
            magnitude[i] = gx[i].hypot(gy[i]);
        }
    }
    Gradients {
        width: w,
        height: h,
        gx,
        gy,
        magnitude,
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur with clamp-to-edge borders.
fn gaussian_blur(src: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(j, kv)| {
                    let sx = (x as isize + j as isize - r).clamp(0, w as isize - 1) as usize;
                    kv * src[y * w + sx]
                })
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(j, kv)| {
                    let sy = (y as isize + j as isize - r).clamp(0, h as isize - 1) as usize;
                    kv * tmp[sy * w + x]
                })
                .sum();
        }
    }
    out
}

/// Neighbor offsets along the gradient direction quantized to 0/45/90/135 degrees.
pub fn quantized_direction(gx: f64, gy: f64) -> (isize, isize) {
    let mut angle = gy.atan2(gx).to_degrees();
    if angle < 0.0 {
        angle += 180.0;
    }
    if !(22.5..157.5).contains(&angle) {
        (1, 0)
    } else if angle < 67.5 {
        (1, 1)
    } else if angle < 112.5 {
        (0, 1)
    } else {
        (-1, 1)
    }
}

fn non_maximum_suppression(g: &Gradients) -> Vec<f64> {
    let (w, h) = (g.width as isize, g.height as isize);
    let mag = |x: isize, y: isize| {
        let x = x.clamp(0, w - 1);
        let y = y.clamp(0, h - 1);
        g.magnitude[(y * w + x) as usize]
    };
    let mut out = vec![0.0; g.magnitude.len()];
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            let m = g.magnitude[i];
            if m == 0.0 {
                continue;
            }
            let (dx, dy) = quantized_direction(g.gx[i], g.gy[i]);
            if m >= mag(x + dx, y + dy) && m >= mag(x - dx, y - dy) {
                out[i] = m;
            }
        }
    }
    out
}

/// Keeps pixels at or above `high`, plus pixels at or above `low` that are
/// 8-connected to one of them.
fn hysteresis(thinned: &[f64], w: usize, h: usize, low: f64, high: f64) -> GrayImage {
    let mut out = GrayImage::from_pixel(w as u32, h as u32, Luma([0]));
    let mut stack = Vec::new();
    for (i, &m) in thinned.iter().enumerate() {
        if m >= high {
            stack.push(i);
            out.as_mut()[i] = 255;
        }
    }
    while let Some(i) = stack.pop() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for ny in y - 1..=y + 1 {
            for nx in x - 1..=x + 1 {
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if out.as_raw()[j] == 0 && thinned[j] >= low {
                    out.as_mut()[j] = 255;
                    stack.push(j);
                }
            }
        }
    }
    out
}
