use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ReconError, Triplane};

/// Floor added to softplus so the positive map never underflows to zero.
const POSITIVE_FLOOR: f64 = 1e-6;

/// Smooth strictly-positive map: `ln(1 + e^x) + 1e-6`.
pub fn softplus_positive(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p() + POSITIVE_FLOOR
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Two affine layers with a ReLU between them.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    inputs: usize,
    hidden: usize,
    outputs: usize,
    /// Row-major `hidden x inputs`.
    w1: Vec<f32>,
    b1: Vec<f32>,
    /// Row-major `outputs x hidden`.
    w2: Vec<f32>,
    b2: Vec<f32>,
}

impl Mlp {
    pub fn new(
        inputs: usize,
        hidden: usize,
        outputs: usize,
        w1: Vec<f32>,
        b1: Vec<f32>,
        w2: Vec<f32>,
        b2: Vec<f32>,
    ) -> Result<Self, ReconError> {
        let shapes = [
            ("w1", w1.len(), hidden * inputs),
            ("b1", b1.len(), hidden),
            ("w2", w2.len(), outputs * hidden),
            ("b2", b2.len(), outputs),
        ];
        for (name, got, want) in shapes {
            if got != want {
                return Err(ReconError::ShapeMismatch(format!(
                    "{name} has {got} values, expected {want}"
                )));
            }
        }
        if [&w1, &b1, &w2, &b2].iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(ReconError::ShapeMismatch("non-finite weight".into()));
        }
        Ok(Self {
            inputs,
            hidden,
            outputs,
            w1,
            b1,
            w2,
            b2,
        })
    }

    pub fn zeros(inputs: usize, hidden: usize, outputs: usize) -> Self {
        Self::new(
            inputs,
            hidden,
            outputs,
            vec![0.0; hidden * inputs],
            vec![0.0; hidden],
            vec![0.0; outputs * hidden],
            vec![0.0; outputs],
        )
        .expect("zero network shapes are consistent")
    }

    /// He-style uniform initialisation from a seeded stream.
    pub fn random(inputs: usize, hidden: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut fill = |n: usize, fan_in: usize| {
            let bound = (6.0 / fan_in as f32).sqrt();
            (0..n).map(|_| rng.random_range(-bound..=bound)).collect::<Vec<f32>>()
        };
        let w1 = fill(hidden * inputs, inputs);
        let b1 = fill(hidden, inputs);
        let w2 = fill(outputs * hidden, hidden);
        let b2 = fill(outputs, hidden);
        Self::new(inputs, hidden, outputs, w1, b1, w2, b2).expect("random shapes are consistent")
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn layers(&self) -> [(&[f32], &[f32]); 2] {
        [(&self.w1, &self.b1), (&self.w2, &self.b2)]
    }

    pub fn bias_mut(&mut self) -> &mut [f32] {
        &mut self.b2
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.inputs);
        let hidden: Vec<f64> = (0..self.hidden)
            .map(|h| {
                let row = &self.w1[h * self.inputs..(h + 1) * self.inputs];
                let z = self.b1[h] as f64
                    + row.iter().zip(x).map(|(w, v)| *w as f64 * v).sum::<f64>();
                z.max(0.0)
            })
            .collect();
        (0..self.outputs)
            .map(|o| {
                let row = &self.w2[o * self.hidden..(o + 1) * self.hidden];
                self.b2[o] as f64 + row.iter().zip(&hidden).map(|(w, v)| *w as f64 * v).sum::<f64>()
            })
            .collect()
    }
}

/// SDF, color and Flexicubes decoders sharing the triplane feature input.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderHeads {
    pub sdf: Mlp,
    pub color: Mlp,
    pub flex: Mlp,
}

impl DecoderHeads {
    pub fn new(sdf: Mlp, color: Mlp, flex: Mlp) -> Result<Self, ReconError> {
        for (name, head, outputs) in [("sdf", &sdf, 1), ("color", &color, 3), ("flex", &flex, 8)] {
            if head.outputs != outputs {
                return Err(ReconError::ShapeMismatch(format!(
                    "{name} head has {} outputs, expected {outputs}",
                    head.outputs
                )));
            }
        }
        if sdf.inputs != color.inputs || sdf.inputs != flex.inputs {
            return Err(ReconError::ShapeMismatch("heads disagree on input width".into()));
        }
        Ok(Self { sdf, color, flex })
    }

    pub fn random(channels: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            sdf: Mlp::random(channels, hidden, 1, &mut rng),
            color: Mlp::random(channels, hidden, 3, &mut rng),
            flex: Mlp::random(channels, hidden, 8, &mut rng),
        }
    }

    pub fn input_width(&self) -> usize {
        self.sdf.inputs
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlexParams {
    pub alpha: [f64; 4],
    pub beta: [f64; 3],
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodedPoint {
    pub sdf: f64,
    pub rgb: [f64; 3],
    pub flex: FlexParams,
}

pub fn decode_point(
    tp: &Triplane,
    heads: &DecoderHeads,
    p: [f64; 3],
) -> Result<DecodedPoint, ReconError> {
    if heads.input_width() != tp.channels() {
        return Err(ReconError::ShapeMismatch(format!(
            "heads expect {} channels, triplane has {}",
            heads.input_width(),
            tp.channels()
        )));
    }
    let feature = tp.sample(p)?;
    let sdf = heads.sdf.forward(&feature)[0];
    let c = heads.color.forward(&feature);
    let f = heads.flex.forward(&feature);
    Ok(DecodedPoint {
        sdf,
        rgb: [logistic(c[0]), logistic(c[1]), logistic(c[2])],
        flex: FlexParams {
            alpha: [
                softplus_positive(f[0]),
                softplus_positive(f[1]),
                softplus_positive(f[2]),
                softplus_positive(f[3]),
            ],
            beta: [
                softplus_positive(f[4]),
                softplus_positive(f[5]),
                softplus_positive(f[6]),
            ],
            gamma: logistic(f[7]),
        },
    })
}
