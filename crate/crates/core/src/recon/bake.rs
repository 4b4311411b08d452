use rayon::prelude::*;

use super::{decode_point, DecodedPoint, DecoderHeads, ReconError, Triplane};
use crate::field::{check_resolution, coord, edge_count, Axis, ReconstructionField};

/// Decodes every lattice corner of `[-1,1]^3` at resolution `n`.
///
/// Per-corner alpha is the mean of the four alpha outputs, per-edge beta the
/// mean of the axis-matching beta output at both endpoints, and per-cell gamma
/// the mean over the cell's eight corners. Slabs are decoded in parallel and
/// assembled in lattice order, so the result does not depend on scheduling.
pub fn bake_field(
    tp: &Triplane,
    heads: &DecoderHeads,
    n: usize,
) -> Result<ReconstructionField, ReconError> {
    check_resolution(n)?;
    let side = n + 1;
    let slabs: Vec<Vec<DecodedPoint>> = (0..side)
        .into_par_iter()
        .map(|z| {
            let mut slab = Vec::with_capacity(side * side);
            for y in 0..side {
                for x in 0..side {
                    slab.push(decode_point(tp, heads, [coord(x, n), coord(y, n), coord(z, n)])?);
                }
            }
            Ok(slab)
        })
        .collect::<Result<_, ReconError>>()?;
    let corners: Vec<DecodedPoint> = slabs.into_iter().flatten().collect();
    let at = |x: usize, y: usize, z: usize| &corners[x + side * (y + side * z)];

    let sdf = corners.iter().map(|c| c.sdf as f32).collect();
    let color = corners.iter().map(|c| c.rgb.map(|v| v as f32)).collect();
    let alpha = corners
        .iter()
        .map(|c| (c.flex.alpha.iter().sum::<f64>() / 4.0) as f32)
        .collect();

    let mut beta: [Vec<f32>; 3] = [
        Vec::with_capacity(edge_count(n)),
        Vec::with_capacity(edge_count(n)),
        Vec::with_capacity(edge_count(n)),
    ];
    for axis in Axis::ALL {
        let a = axis.index();
        let ext = |b: usize| if b == a { n } else { side };
        for z in 0..ext(2) {
            for y in 0..ext(1) {
                for x in 0..ext(0) {
                    let mut q = [x, y, z];
                    let b0 = at(q[0], q[1], q[2]).flex.beta[a];
                    q[a] += 1;
                    let b1 = at(q[0], q[1], q[2]).flex.beta[a];
                    beta[a].push(((b0 + b1) / 2.0) as f32);
                }
            }
        }
    }

    let mut gamma = Vec::with_capacity(n * n * n);
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                let mut sum = 0.0;
                for k in 0..8 {
                    sum += at(x + (k & 1), y + ((k >> 1) & 1), z + (k >> 2)).flex.gamma;
                }
                gamma.push((sum / 8.0) as f32);
            }
        }
    }

    Ok(ReconstructionField::new(n, sdf, color, alpha, beta, gamma)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recon::Mlp;

    #[test]
    fn constant_positive_decoder_bakes_positive_field() {
        let tp = Triplane::random(4, 3, 9).unwrap();
        let mut sdf = Mlp::zeros(3, 4, 1);
        sdf.bias_mut()[0] = 0.5;
        let heads = DecoderHeads::new(sdf, Mlp::zeros(3, 4, 3), Mlp::zeros(3, 4, 8)).unwrap();
        let f = bake_field(&tp, &heads, 6).unwrap();
        assert!(f.sdf().iter().all(|&s| s == 0.5));
        // Zero flex outputs: alpha = beta = softplus(0) + floor, gamma = 0.5.
        let sp = crate::recon::softplus_positive(0.0) as f32;
        assert!(f.alpha().iter().all(|&a| a == sp));
        assert!(f.beta(Axis::Z).iter().all(|&b| b == sp));
        assert!(f.gamma().iter().all(|&g| g == 0.5));
    }

    #[test]
    fn invalid_resolution() {
        let tp = Triplane::constant(2, 1, 0.0).unwrap();
        let heads = DecoderHeads::random(1, 2, 0);
        assert!(matches!(
            bake_field(&tp, &heads, 1),
            Err(ReconError::Field(_))
        ));
        assert!(bake_field(&tp, &heads, 257).is_err());
    }

    #[test]
    fn baked_grid_matches_pointwise_decoding() {
        let tp = Triplane::random(6, 4, 21).unwrap();
        let heads = DecoderHeads::random(4, 8, 22);
        let n = 7;
        let f = bake_field(&tp, &heads, n).unwrap();
        for z in 0..=n {
            for y in 0..=n {
                for x in 0..=n {
                    let d = decode_point(&tp, &heads, f.corner_position(x, y, z)).unwrap();
                    let i = f.corner_index(x, y, z);
                    assert_eq!(f.sdf()[i], d.sdf as f32);
                    assert_eq!(f.color()[i], d.rgb.map(|v| v as f32));
                }
            }
        }
    }

    #[test]
    fn baking_is_deterministic() {
        let tp = Triplane::random(8, 4, 5).unwrap();
        let heads = DecoderHeads::random(4, 8, 6);
        assert_eq!(bake_field(&tp, &heads, 12).unwrap(), bake_field(&tp, &heads, 12).unwrap());
    }
}
