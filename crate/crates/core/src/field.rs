//! The voxel field handed from reconstruction to mesh extraction.
//!
//! All grids are laid out x-fastest, then y, then z. The corner lattice has
//! `n + 1` samples per axis spanning `[-1, 1]^3`; edge weights are stored per
//! axis (`beta_x` has `n * (n+1) * (n+1)` entries, x-fastest with the x extent
//! being `n`), and cell weights have `n^3` entries.

use thiserror::Error;

/// Extraction lattice resolution used when none is requested.
pub const DEFAULT_RESOLUTION: usize = 80;
pub const MIN_RESOLUTION: usize = 2;
pub const MAX_RESOLUTION: usize = 256;

#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    #[error("resolution {0} outside [{MIN_RESOLUTION}, {MAX_RESOLUTION}]")]
    InvalidResolution(usize),
    #[error("grid `{name}` has {actual} entries, expected {expected}")]
    LengthMismatch {
        name: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("grid `{name}` contains a non-finite value at {index}")]
    NonFinite { name: &'static str, index: usize },
    #[error("grid `{name}` must be strictly positive (index {index})")]
    NonPositive { name: &'static str, index: usize },
    #[error("color component out of [0,1] at corner {0}")]
    ColorOutOfRange(usize),
    #[error("gamma outside [0,1] at cell {0}")]
    GammaOutOfRange(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionField {
    n: usize,
    sdf: Vec<f32>,
    color: Vec<[f32; 3]>,
    alpha: Vec<f32>,
    beta: [Vec<f32>; 3],
    gamma: Vec<f32>,
}

pub fn check_resolution(n: usize) -> Result<(), FieldError> {
    if (MIN_RESOLUTION..=MAX_RESOLUTION).contains(&n) {
        Ok(())
    } else {
        Err(FieldError::InvalidResolution(n))
    }
}

/// Number of lattice edges along `axis` for resolution `n`.
pub fn edge_count(n: usize) -> usize {
    n * (n + 1) * (n + 1)
}

fn check_len(name: &'static str, actual: usize, expected: usize) -> Result<(), FieldError> {
    if actual != expected {
        return Err(FieldError::LengthMismatch {
            name,
            expected,
            actual,
        });
    }
    Ok(())
}

fn check_finite(name: &'static str, values: &[f32]) -> Result<(), FieldError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(FieldError::NonFinite { name, index }),
        None => Ok(()),
    }
}

fn check_positive(name: &'static str, values: &[f32]) -> Result<(), FieldError> {
    check_finite(name, values)?;
    match values.iter().position(|&v| v <= 0.0) {
        Some(index) => Err(FieldError::NonPositive { name, index }),
        None => Ok(()),
    }
}

impl ReconstructionField {
    pub fn new(
        n: usize,
        sdf: Vec<f32>,
        color: Vec<[f32; 3]>,
        alpha: Vec<f32>,
        beta: [Vec<f32>; 3],
        gamma: Vec<f32>,
    ) -> Result<Self, FieldError> {
        check_resolution(n)?;
        let corners = (n + 1).pow(3);
        check_len("sdf", sdf.len(), corners)?;
        check_len("color", color.len(), corners)?;
        check_len("alpha", alpha.len(), corners)?;
        check_len("beta_x", beta[0].len(), edge_count(n))?;
        check_len("beta_y", beta[1].len(), edge_count(n))?;
        check_len("beta_z", beta[2].len(), edge_count(n))?;
        check_len("gamma", gamma.len(), n * n * n)?;
        check_finite("sdf", &sdf)?;
        for (i, c) in color.iter().enumerate() {
            if !c.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)) {
                return Err(FieldError::ColorOutOfRange(i));
            }
        }
        check_positive("alpha", &alpha)?;
        check_positive("beta_x", &beta[0])?;
        check_positive("beta_y", &beta[1])?;
        check_positive("beta_z", &beta[2])?;
        check_finite("gamma", &gamma)?;
        if let Some(i) = gamma.iter().position(|g| !(0.0..=1.0).contains(g)) {
            return Err(FieldError::GammaOutOfRange(i));
        }
        Ok(Self {
            n,
            sdf,
            color,
            alpha,
            beta,
            gamma,
        })
    }

    /// Field with neutral Flexicubes weights (alpha = beta = 1, gamma = 0.5).
    pub fn with_neutral_weights(
        n: usize,
        sdf: Vec<f32>,
        color: Vec<[f32; 3]>,
    ) -> Result<Self, FieldError> {
        check_resolution(n)?;
        let corners = (n + 1).pow(3);
        Self::new(
            n,
            sdf,
            color,
            vec![1.0; corners],
            [
                vec![1.0; edge_count(n)],
                vec![1.0; edge_count(n)],
                vec![1.0; edge_count(n)],
            ],
            vec![0.5; n * n * n],
        )
    }

    /// Samples `f` at every lattice corner with neutral weights and mid-gray color.
    pub fn from_fn(n: usize, f: impl Fn([f64; 3]) -> f64) -> Result<Self, FieldError> {
        check_resolution(n)?;
        let sdf = (0..(n + 1).pow(3))
            .map(|i| {
                let (x, y, z) = unflatten(i, n + 1);
                f([coord(x, n), coord(y, n), coord(z, n)]) as f32
            })
            .collect();
        Self::with_neutral_weights(n, sdf, vec![[0.5; 3]; (n + 1).pow(3)])
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn cell_size(&self) -> f64 {
        2.0 / self.n as f64
    }

    pub fn sdf(&self) -> &[f32] {
        &self.sdf
    }

    pub fn color(&self) -> &[[f32; 3]] {
        &self.color
    }

    pub fn alpha(&self) -> &[f32] {
        &self.alpha
    }

    pub fn beta(&self, axis: Axis) -> &[f32] {
        &self.beta[axis.index()]
    }

    pub fn gamma(&self) -> &[f32] {
        &self.gamma
    }

    pub fn corner_index(&self, x: usize, y: usize, z: usize) -> usize {
        x + (self.n + 1) * (y + (self.n + 1) * z)
    }

    /// Index into `beta(axis)` of the edge starting at corner `(x, y, z)`.
    pub fn edge_index(&self, axis: Axis, x: usize, y: usize, z: usize) -> usize {
        let (n, m) = (self.n, self.n + 1);
        match axis {
            Axis::X => x + n * (y + m * z),
            Axis::Y => x + m * (y + n * z),
            Axis::Z => x + m * (y + m * z),
        }
    }

    pub fn cell_index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.n * (y + self.n * z)
    }

    pub fn corner_position(&self, x: usize, y: usize, z: usize) -> [f64; 3] {
        [coord(x, self.n), coord(y, self.n), coord(z, self.n)]
    }

    /// Multiplies every alpha by `factor` (> 0).
    pub fn scale_alpha(&mut self, factor: f32) {
        assert!(factor > 0.0 && factor.is_finite());
        self.alpha.iter_mut().for_each(|a| *a *= factor);
    }

    pub fn alpha_mut(&mut self) -> &mut [f32] {
        &mut self.alpha
    }

    pub fn beta_mut(&mut self, axis: Axis) -> &mut [f32] {
        &mut self.beta[axis.index()]
    }

    fn trilinear_setup(&self, p: [f64; 3]) -> ([usize; 3], [f64; 3]) {
        let mut base = [0usize; 3];
        let mut frac = [0f64; 3];
        for a in 0..3 {
            let u = ((p[a].clamp(-1.0, 1.0) + 1.0) * 0.5 * self.n as f64).clamp(0.0, self.n as f64);
            let i = (u.floor() as usize).min(self.n - 1);
            base[a] = i;
            frac[a] = u - i as f64;
        }
        (base, frac)
    }

    fn trilinear<const K: usize>(&self, p: [f64; 3], get: impl Fn(usize) -> [f64; K]) -> [f64; K] {
        let ([i, j, k], [fx, fy, fz]) = self.trilinear_setup(p);
        let mut out = [0.0; K];
        for dz in 0..2 {
            for dy in 0..2 {
                for dx in 0..2 {
                    let w = (if dx == 1 { fx } else { 1.0 - fx })
                        * (if dy == 1 { fy } else { 1.0 - fy })
                        * (if dz == 1 { fz } else { 1.0 - fz });
                    let v = get(self.corner_index(i + dx, j + dy, k + dz));
                    for c in 0..K {
                        out[c] += w * v[c];
                    }
                }
            }
        }
        out
    }

    /// Trilinear color at a world position (clamped to the domain).
    pub fn sample_color(&self, p: [f64; 3]) -> [f64; 3] {
        self.trilinear(p, |i| self.color[i].map(f64::from))
    }

    /// Trilinear signed distance at a world position (clamped to the domain).
    pub fn sample_sdf(&self, p: [f64; 3]) -> f64 {
        self.trilinear(p, |i| [self.sdf[i] as f64])[0]
    }
}

/// World coordinate of lattice index `i` at resolution `n`.
pub fn coord(i: usize, n: usize) -> f64 {
    -1.0 + 2.0 * i as f64 / n as f64
}

/// Splits an x-fastest flat index over a cube of side `side`.
pub fn unflatten(i: usize, side: usize) -> (usize, usize, usize) {
    (i % side, (i / side) % side, i / (side * side))
}

/// Little-endian float32 payload, as used on the reconstruction wire.
pub fn encode_f32_le(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn decode_f32_le(bytes: &[u8]) -> Option<Vec<f32>> {
    if !bytes.len().is_multiple_of(4) {
        return None;
    }
    Some(
        bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
    )
}
