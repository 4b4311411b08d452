use meshforge_core::control::{build_control_request, remove_background, GenerationConfig, MattingConfig};
use meshforge_core::mesh::{analyze_topology, extract_mesh};
use meshforge_core::mock::{mock_candidates, silhouette_extrude, BinaryMask};
use meshforge_core::recon::{bake_field, decode_point, DecoderHeads, Mlp, Plane, Triplane};
use meshforge_core::{SketchCanvas, Stroke};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn disk_mask(size: usize, radius_world: f64) -> BinaryMask {
    BinaryMask::from_fn(size, size, |x, y| {
        let wx = (x as f64 + 0.5) / size as f64 * 2.0 - 1.0;
        let wy = 1.0 - (y as f64 + 0.5) / size as f64 * 2.0;
        wx.hypot(wy) <= radius_world
    })
}

#[test]
fn extruded_disk_matches_cylinder_slab_intersection() {
    let size = 128;
    let (r, thickness, n) = (0.5, 0.3, 64);
    let f = silhouette_extrude(&disk_mask(size, r), None, n, thickness).unwrap();
    let tol = 1.5 * 2.0 / size as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    // Stay where the image plane has real pixels on both sides.
    let lo = (0.05 * n as f64) as usize;
    let hi = n - lo;
    for _ in 0..1000 {
        let (x, y, z) = (rng.random_range(lo..=hi), rng.random_range(lo..=hi), rng.random_range(0..=n));
        let p = f.corner_position(x, y, z);
        let expected = (p[0].hypot(p[1]) - r).max(p[2].abs() - thickness);
        let got = f.sdf()[f.corner_index(x, y, z)] as f64;
        assert!((got - expected).abs() <= tol, "{p:?}: {got} vs {expected}");
    }
}

#[test]
fn extruded_field_is_lipschitz() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mask = BinaryMask::new(48, 40, (0..48 * 40).map(|_| rng.random_bool(0.3)).collect());
    let n = 24;
    let f = silhouette_extrude(&mask, None, n, 0.5).unwrap();
    let h = f.cell_size();
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                let s = f.sdf()[f.corner_index(x, y, z)] as f64;
                let dx = (f.sdf()[f.corner_index(x + 1, y, z)] as f64 - s).abs();
                let dy = (f.sdf()[f.corner_index(x, y + 1, z)] as f64 - s).abs();
                let dz = (f.sdf()[f.corner_index(x, y, z + 1)] as f64 - s).abs();
                // Pixel distances change by at most 2 per pixel across the
                // silhouette boundary; the slab term is 1-Lipschitz.
                assert!(dx <= 2.0 * h + 1e-5 && dy <= 2.0 * h + 1e-5 && dz <= 2.0 * h + 1e-5);
            }
        }
    }
}

fn interior_point(rng: &mut ChaCha8Rng, r: usize) -> [f64; 3] {
    let spacing = 2.0 / (r - 1) as f64;
    [0; 3].map(|_| {
        let node = rng.random_range(0..r - 1) as f64;
        -1.0 + (node + rng.random_range(0.1..0.9)) * spacing
    })
}

#[test]
fn triplane_gradient_matches_finite_differences() {
    let tp = Triplane::random(9, 6, 33).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let step = 1e-4;
    for _ in 0..100 {
        let p = interior_point(&mut rng, 9);
        let analytic = tp.gradient(p).unwrap();
        for axis in 0..3 {
            let (mut a, mut b) = (p, p);
            a[axis] += step;
            b[axis] -= step;
            let (fa, fb) = (tp.sample(a).unwrap(), tp.sample(b).unwrap());
            for ch in 0..6 {
                let fd = (fa[ch] - fb[ch]) / (2.0 * step);
                let an = analytic[ch][axis];
                assert!((fd - an).abs() <= 1e-4 * an.abs().max(1e-6), "{p:?} ch{ch} axis{axis}: {fd} vs {an}");
            }
        }
    }
}

#[test]
fn triplane_is_lipschitz() {
    let r = 7;
    let tp = Triplane::random(r, 3, 2).unwrap();
    // Each axis feeds two planes whose node values span at most 2.
    let bound = 3f64.sqrt() * 2.0 * 2.0 * (r - 1) as f64 / 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..500 {
        let p: [f64; 3] = [0; 3].map(|_| rng.random_range(-0.99..0.99));
        let q = p.map(|c| c + rng.random_range(-0.01..0.01));
        let delta = ((0..3).map(|i| (p[i] - q[i]).powi(2)).sum::<f64>()).sqrt();
        let (fp, fq) = (tp.sample(p).unwrap(), tp.sample(q).unwrap());
        for ch in 0..3 {
            assert!((fp[ch] - fq[ch]).abs() <= bound * delta + 1e-12);
        }
    }
}

/// Planes carry `x` in the XY plane only; the sdf head computes
/// `relu(f) - relu(-f) - 0.25`.
fn crafted_decoder() -> (Triplane, DecoderHeads) {
    let tp = Triplane::from_fn(5, 1, |plane, u, _| vec![if plane == Plane::Xy { u as f32 } else { 0.0 }]).unwrap();
    let sdf = Mlp::new(1, 2, 1, vec![1.0, -1.0], vec![0.0, 0.0], vec![1.0, -1.0], vec![-0.25]).unwrap();
    let heads = DecoderHeads::new(sdf, Mlp::zeros(1, 2, 3), Mlp::zeros(1, 2, 8)).unwrap();
    (tp, heads)
}

#[test]
fn crafted_decoder_bakes_a_plane() {
    let (tp, heads) = crafted_decoder();
    let n = 32;
    let f = bake_field(&tp, &heads, n).unwrap();
    for z in 0..=n {
        for y in 0..=n {
            for x in 0..=n {
                let p = f.corner_position(x, y, z);
                let s = f.sdf()[f.corner_index(x, y, z)] as f64;
                assert!((s - (p[0] - 0.25)).abs() <= 1e-6);
            }
        }
    }
    let mesh = extract_mesh(&f, 0.0);
    assert!(!mesh.triangles.is_empty());
    assert!(mesh.vertices.iter().all(|v| (v.position[0] - 0.25).abs() < 1e-6));
}

#[test]
fn decoder_outputs_respect_ranges() {
    let tp = Triplane::random(8, 5, 101).unwrap();
    let mut heads = DecoderHeads::random(5, 16, 102);
    // Push the flex head toward extreme pre-activations.
    heads.flex.bias_mut().iter_mut().for_each(|b| *b *= 200.0);
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for _ in 0..1000 {
        let p: [f64; 3] = [0; 3].map(|_| rng.random_range(-1.0..=1.0));
        let d = decode_point(&tp, &heads, p).unwrap();
        assert!(d.rgb.iter().all(|c| (0.0..=1.0).contains(c)));
        assert!(d.flex.alpha.iter().chain(&d.flex.beta).all(|&v| v > 0.0));
        assert!((0.0..=1.0).contains(&d.flex.gamma));
    }
}

#[test]
fn mock_pipeline_produces_a_closed_mesh() {
    let mut canvas = SketchCanvas::new(512, 512).unwrap();
    canvas.push(Stroke::circle([0.5, 0.5], 0.3, 64, 6.0, [0.0; 3]).unwrap()).unwrap();
    let cfg = GenerationConfig { candidate_count: 2, seed: 11, ..Default::default() };
    let req = build_control_request(&canvas, "a red vase", &cfg).unwrap();
    let candidates = mock_candidates(&req);
    assert_eq!(candidates.len(), 2);
    assert_ne!(candidates[0].1, candidates[1].1);
    let rgba = remove_background(&candidates[0].1, &MattingConfig::default()).unwrap();
    let mask = BinaryMask::from_fn(rgba.width() as usize, rgba.height() as usize, |x, y| {
        rgba.get_pixel(x as u32, y as u32)[3] > 0
    });
    let field = silhouette_extrude(&mask, Some(&rgba), 48, 0.35).unwrap();
    let mesh = extract_mesh(&field, 0.0);
    let topo = analyze_topology(&mesh);
    assert!(topo.watertight && topo.manifold, "{topo:?}");
    assert_eq!(topo.genus(), Some(0));
}
