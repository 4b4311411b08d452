//! Silhouette extrusion: the deterministic stand-in for learned reconstruction.
//!
//! The image plane maps onto `[-1,1]^2` with image rows running top to bottom
//! along -y, so extruded meshes come out upright in a Y-up frame.

use image::RgbaImage;
use thiserror::Error;

use super::edt::{edt_2d, BinaryMask};
use crate::field::{check_resolution, unflatten, coord, FieldError, ReconstructionField};

pub const DEFAULT_THICKNESS: f64 = 0.35;
const MID_GRAY: [f32; 3] = [0.5, 0.5, 0.5];

#[derive(Debug, Error, PartialEq)]
pub enum ExtrudeError {
    #[error("mask has no foreground")]
    EmptyForeground,
    #[error("thickness {0} outside (0, 1]")]
    InvalidThickness(f64),
    #[error("albedo image is {actual:?}, mask is {expected:?}")]
    AlbedoSizeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Signed 2D distance in pixels: positive outside the silhouette, negative inside.
pub fn signed_silhouette_distance(mask: &BinaryMask) -> Vec<f64> {
    let cap = (mask.width() + mask.height()) as f64;
    let outside = edt_2d(mask);
    let inside = edt_2d(&mask.inverted());
    outside
        .into_iter()
        .zip(inside)
        .map(|(o, i)| o.min(cap) - i.min(cap))
        .collect()
}

struct ImagePlane<'a> {
    w: usize,
    h: usize,
    values: &'a [f64],
}

impl ImagePlane<'_> {
    fn pixel_coords(&self, x: f64, y: f64) -> (f64, f64) {
        let u = (x + 1.0) * 0.5 * self.w as f64 - 0.5;
        let v = (1.0 - y) * 0.5 * self.h as f64 - 0.5;
        (u, v)
    }

    fn bilinear(&self, x: f64, y: f64) -> f64 {
        let (u, v) = self.pixel_coords(x, y);
        let u = u.clamp(0.0, (self.w - 1) as f64);
        let v = v.clamp(0.0, (self.h - 1) as f64);
        let (i0, j0) = (u.floor() as usize, v.floor() as usize);
        let (i1, j1) = ((i0 + 1).min(self.w - 1), (j0 + 1).min(self.h - 1));
        let (fu, fv) = (u - i0 as f64, v - j0 as f64);
        let at = |i: usize, j: usize| self.values[j * self.w + i];
        (1.0 - fv) * ((1.0 - fu) * at(i0, j0) + fu * at(i1, j0))
            + fv * ((1.0 - fu) * at(i0, j1) + fu * at(i1, j1))
    }

    fn nearest(&self, x: f64, y: f64) -> (usize, usize) {
        let (u, v) = self.pixel_coords(x, y);
        (
            u.round().clamp(0.0, (self.w - 1) as f64) as usize,
            v.round().clamp(0.0, (self.h - 1) as f64) as usize,
        )
    }
}

/// Extrudes a silhouette into a slab: `sdf = max(d(x, y), |z| - thickness)`,
/// where `d` is the signed silhouette distance rescaled to world units.
///
/// Corners inside the silhouette take their color from `albedo` (if given);
/// all other corners are mid-gray. Flexicubes weights are neutral.
pub fn silhouette_extrude(
    mask: &BinaryMask,
    albedo: Option<&RgbaImage>,
    n: usize,
    thickness: f64,
) -> Result<ReconstructionField, ExtrudeError> {
    check_resolution(n)?;
    if !(thickness > 0.0 && thickness <= 1.0) {
        return Err(ExtrudeError::InvalidThickness(thickness));
    }
    if mask.count() == 0 {
        return Err(ExtrudeError::EmptyForeground);
    }
    if let Some(img) = albedo {
        let actual = (img.width() as usize, img.height() as usize);
        if actual != (mask.width(), mask.height()) {
            return Err(ExtrudeError::AlbedoSizeMismatch {
                expected: (mask.width(), mask.height()),
                actual,
            });
        }
    }

    let signed = signed_silhouette_distance(mask);
    let plane = ImagePlane {
        w: mask.width(),
        h: mask.height(),
        values: &signed,
    };
    let px_to_world = 2.0 / mask.width().max(mask.height()) as f64;
    let side = n + 1;

    // Planar quantities are shared by every z slice.
    let mut planar = Vec::with_capacity(side * side);
    for yi in 0..side {
        for xi in 0..side {
            let (x, y) = (coord(xi, n), coord(yi, n));
            let d = plane.bilinear(x, y) * px_to_world;
            let color = match albedo {
                Some(img) if d < 0.0 => {
                    let (u, v) = plane.nearest(x, y);
                    let p = img.get_pixel(u as u32, v as u32);
                    [p[0], p[1], p[2]].map(|c| c as f32 / 255.0)
                }
                _ => MID_GRAY,
            };
            planar.push((d, color));
        }
    }

    let corners = side.pow(3);
    let mut sdf = Vec::with_capacity(corners);
    let mut color = Vec::with_capacity(corners);
    for i in 0..corners {
        let (xi, yi, zi) = unflatten(i, side);
        let (d, c) = planar[yi * side + xi];
        let slab = coord(zi, n).abs() - thickness;
        sdf.push(d.max(slab) as f32);
        color.push(c);
    }
    Ok(ReconstructionField::with_neutral_weights(n, sdf, color)?)
}
