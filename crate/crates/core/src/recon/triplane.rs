use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_domain, ReconError};

/// The three axis-aligned feature planes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Plane {
    Xy,
    Xz,
    Yz,
}

impl Plane {
    pub const ALL: [Plane; 3] = [Plane::Xy, Plane::Xz, Plane::Yz];

    /// Axes of `p` that index this plane, as (u, v).
    pub fn axes(self) -> (usize, usize) {
        match self {
            Plane::Xy => (0, 1),
            Plane::Xz => (0, 2),
            Plane::Yz => (1, 2),
        }
    }
}

/// Three `R x R x C` feature grids whose nodes sit on a regular lattice
/// spanning `[-1, 1]` along each plane axis. Storage is `(v * R + u) * C + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Triplane {
    resolution: usize,
    channels: usize,
    planes: [Vec<f32>; 3],
}

struct BilinearCell {
    corners: [usize; 4],
    fu: f64,
    fv: f64,
}

impl Triplane {
    pub fn new(resolution: usize, channels: usize, planes: [Vec<f32>; 3]) -> Result<Self, ReconError> {
        if resolution < 2 || channels < 1 {
            return Err(ReconError::ShapeMismatch(format!(
                "triplane needs R >= 2 and C >= 1, got R={resolution} C={channels}"
            )));
        }
        let expected = resolution * resolution * channels;
        for (plane, data) in Plane::ALL.iter().zip(&planes) {
            if data.len() != expected {
                return Err(ReconError::ShapeMismatch(format!(
                    "{plane:?} plane has {} values, expected {expected}",
                    data.len()
                )));
            }
            if data.iter().any(|v| !v.is_finite()) {
                return Err(ReconError::ShapeMismatch(format!(
                    "{plane:?} plane has non-finite values"
                )));
            }
        }
        Ok(Self {
            resolution,
            channels,
            planes,
        })
    }

    pub fn constant(resolution: usize, channels: usize, value: f32) -> Result<Self, ReconError> {
        let len = resolution * resolution * channels;
        Self::new(
            resolution,
            channels,
            [vec![value; len], vec![value; len], vec![value; len]],
        )
    }

    /// Uniform features in `[-1, 1]` from a seeded ChaCha stream.
    pub fn random(resolution: usize, channels: usize, seed: u64) -> Result<Self, ReconError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = resolution * resolution * channels;
        let mut plane = || (0..len).map(|_| rng.random_range(-1.0f32..=1.0)).collect::<Vec<_>>();
        let planes = [plane(), plane(), plane()];
        Self::new(resolution, channels, planes)
    }

    /// Builds planes from a per-node function `f(plane, u_coord, v_coord) -> features`.
    pub fn from_fn(
        resolution: usize,
        channels: usize,
        f: impl Fn(Plane, f64, f64) -> Vec<f32>,
    ) -> Result<Self, ReconError> {
        let mut planes: [Vec<f32>; 3] = Default::default();
        for (k, plane) in Plane::ALL.iter().enumerate() {
            let mut data = Vec::with_capacity(resolution * resolution * channels);
            for v in 0..resolution {
                for u in 0..resolution {
                    let feat = f(*plane, node_coord(u, resolution), node_coord(v, resolution));
                    if feat.len() != channels {
                        return Err(ReconError::ShapeMismatch(format!(
                            "node function returned {} channels, expected {channels}",
                            feat.len()
                        )));
                    }
                    data.extend(feat);
                }
            }
            planes[k] = data;
        }
        Self::new(resolution, channels, planes)
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn plane(&self, plane: Plane) -> &[f32] {
        &self.planes[plane as usize]
    }

    pub fn node(&self, plane: Plane, u: usize, v: usize) -> &[f32] {
        let start = (v * self.resolution + u) * self.channels;
        &self.planes[plane as usize][start..start + self.channels]
    }

    fn cell(&self, a: f64, b: f64) -> BilinearCell {
        let r = self.resolution;
        let scale = (r - 1) as f64 / 2.0;
        let (ua, vb) = ((a + 1.0) * scale, (b + 1.0) * scale);
        let (iu, iv) = ((ua.floor() as usize).min(r - 2), (vb.floor() as usize).min(r - 2));
        let idx = |u: usize, v: usize| (v * r + u) * self.channels;
        BilinearCell {
            corners: [idx(iu, iv), idx(iu + 1, iv), idx(iu, iv + 1), idx(iu + 1, iv + 1)],
            fu: ua - iu as f64,
            fv: vb - iv as f64,
        }
    }

    /// Sum over the three planes of the bilinearly interpolated features.
    pub fn sample(&self, p: [f64; 3]) -> Result<Vec<f64>, ReconError> {
        check_domain(p)?;
        let mut out = vec![0.0; self.channels];
        for plane in Plane::ALL {
            let (a, b) = plane.axes();
            let cell = self.cell(p[a], p[b]);
            let data = &self.planes[plane as usize];
            let w = [
                (1.0 - cell.fu) * (1.0 - cell.fv),
                cell.fu * (1.0 - cell.fv),
                (1.0 - cell.fu) * cell.fv,
                cell.fu * cell.fv,
            ];
            for (ch, o) in out.iter_mut().enumerate() {
                *o += (0..4)
                    .map(|k| w[k] * data[cell.corners[k] + ch] as f64)
                    .sum::<f64>();
            }
        }
        Ok(out)
    }

    /// Analytic gradient of every channel with respect to `p`.
    pub fn gradient(&self, p: [f64; 3]) -> Result<Vec<[f64; 3]>, ReconError> {
        check_domain(p)?;
        let scale = (self.resolution - 1) as f64 / 2.0;
        let mut out = vec![[0.0; 3]; self.channels];
        for plane in Plane::ALL {
            let (a, b) = plane.axes();
            let cell = self.cell(p[a], p[b]);
            let data = &self.planes[plane as usize];
            for (ch, g) in out.iter_mut().enumerate() {
                let v = |k: usize| data[cell.corners[k] + ch] as f64;
                let du = (1.0 - cell.fv) * (v(1) - v(0)) + cell.fv * (v(3) - v(2));
                let dv = (1.0 - cell.fu) * (v(2) - v(0)) + cell.fu * (v(3) - v(1));
                g[a] += du * scale;
                g[b] += dv * scale;
            }
        }
        Ok(out)
    }
}

/// Coordinate in `[-1, 1]` of plane node `i`.
pub fn node_coord(i: usize, resolution: usize) -> f64 {
    -1.0 + 2.0 * i as f64 / (resolution - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_planes_sum_to_three_v() {
        let tp = Triplane::constant(5, 4, 0.75).unwrap();
        for p in [[0.0, 0.0, 0.0], [-1.0, 1.0, 0.3], [0.91, -0.2, -0.77]] {
            let f = tp.sample(p).unwrap();
            assert!(f.iter().all(|&v| (v - 2.25).abs() < 1e-12));
        }
    }

    #[test]
    fn lattice_nodes_return_stored_features() {
        let tp = Triplane::random(5, 3, 11).unwrap();
        // R = 5 puts nodes at -1, -0.5, 0, 0.5, 1.
        let (i, j, k) = (1usize, 4usize, 2usize);
        let p = [node_coord(i, 5), node_coord(j, 5), node_coord(k, 5)];
        let f = tp.sample(p).unwrap();
        for (ch, got) in f.iter().enumerate() {
            let expected = tp.node(Plane::Xy, i, j)[ch] as f64
                + tp.node(Plane::Xz, i, k)[ch] as f64
                + tp.node(Plane::Yz, j, k)[ch] as f64;
            assert!((got - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_domain_rejected() {
        let tp = Triplane::constant(3, 1, 0.0).unwrap();
        assert!(matches!(tp.sample([1.01, 0.0, 0.0]), Err(ReconError::OutOfDomain(_))));
        assert!(matches!(tp.gradient([0.0, f64::NAN, 0.0]), Err(ReconError::OutOfDomain(_))));
    }

    #[test]
    fn shape_validation() {
        assert!(Triplane::new(1, 1, [vec![0.0], vec![0.0], vec![0.0]]).is_err());
        assert!(Triplane::new(2, 1, [vec![0.0; 4], vec![0.0; 4], vec![0.0; 3]]).is_err());
    }
}
