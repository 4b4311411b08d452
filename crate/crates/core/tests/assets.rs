use std::io::Write;
use std::process::{Command, Stdio};

use meshforge_core::asset::{
    export_obj, import_obj, AssetBundle, AssetManifest, BackendIds, SessionSummary, StageTimings,
};
use meshforge_core::field::ReconstructionField;
use meshforge_core::mesh::{compute_vertex_normals, extract_mesh, Vertex};
use meshforge_core::mock::{silhouette_extrude, BinaryMask};
use meshforge_core::IndexedMesh;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn len(p: [f64; 3]) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

fn from_parts(points: &[[f64; 3]], tris: &[[u32; 3]]) -> IndexedMesh {
    let vertices = points
        .iter()
        .enumerate()
        .map(|(i, &p)| Vertex::new(p, [(i % 3) as f64 / 2.0, 0.25, 1.0]))
        .collect();
    IndexedMesh::new(vertices, tris.to_vec()).unwrap()
}

fn fixtures() -> Vec<(&'static str, IndexedMesh)> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let soup_pts: Vec<[f64; 3]> = (0..60).map(|_| [0; 3].map(|_| rng.random_range(-3.0..3.0))).collect();
    let soup_tris: Vec<[u32; 3]> = (0..80)
        .map(|_| {
            let a = rng.random_range(0..20u32);
            [a, a + 20, a + 40]
        })
        .collect();
    let mut soup = from_parts(&soup_pts, &soup_tris);
    for v in &mut soup.vertices {
        v.color = [0; 3].map(|_| rng.random_range(0.0..=1.0));
    }
    let cube_pts: Vec<[f64; 3]> = (0..8).map(|k| [(k & 1) as f64, ((k >> 1) & 1) as f64, (k >> 2) as f64]).collect();
    let cube_tris = [
        [0, 2, 1], [1, 2, 3], [4, 5, 6], [5, 7, 6], [0, 1, 4], [1, 5, 4],
        [2, 6, 3], [3, 6, 7], [0, 4, 2], [2, 4, 6], [1, 3, 5], [3, 7, 5],
    ];
    let disk = BinaryMask::from_fn(64, 64, |x, y| (x as f64 - 31.5).hypot(y as f64 - 31.5) < 20.0);
    vec![
        ("triangle", from_parts(&[[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], &[[0, 1, 2]])),
        ("quad", from_parts(&[[0.0; 3], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]], &[[0, 1, 2], [0, 2, 3]])),
        ("tetrahedron", from_parts(&[[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], &[[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]])),
        ("cube", from_parts(&cube_pts, &cube_tris)),
        ("sphere", extract_mesh(&ReconstructionField::from_fn(48, |p| len(p) - 0.35).unwrap(), 0.0)),
        ("torus", extract_mesh(&ReconstructionField::from_fn(32, |p| {
            let q = p[0].hypot(p[1]) - 0.5;
            q.hypot(p[2]) - 0.2
        }).unwrap(), 0.0)),
        ("two_spheres", extract_mesh(&ReconstructionField::from_fn(40, |p| {
            (len([p[0] + 0.5, p[1], p[2]]) - 0.2).min(len([p[0] - 0.5, p[1], p[2]]) - 0.2)
        }).unwrap(), 0.0)),
        ("extruded_disk", extract_mesh(&silhouette_extrude(&disk, None, 32, 0.3).unwrap(), 0.0)),
        ("soup", soup),
        ("far_away", from_parts(&[[1234.5, -987.25, 3.0], [1240.125, -990.0, 3.5], [1236.0, -980.0, 2.0]], &[[0, 1, 2]])),
    ]
}

#[test]
fn round_trip_preserves_fixtures() {
    let all = fixtures();
    assert_eq!(all.len(), 10);
    for (name, mut m) in all {
        compute_vertex_normals(&mut m);
        let (obj, mtl) = export_obj(&m, name).unwrap();
        assert_eq!(export_obj(&m, name).unwrap(), (obj.clone(), mtl), "{name} not deterministic");
        let back = import_obj(&obj).unwrap();
        assert_eq!(back.triangles, m.triangles, "{name}");
        assert_eq!(back.vertices.len(), m.vertices.len(), "{name}");
        for (a, b) in back.vertices.iter().zip(&m.vertices) {
            let (na, nb) = (a.normal.unwrap(), b.normal.unwrap());
            for i in 0..3 {
                assert!((a.position[i] - b.position[i]).abs() <= 1e-6, "{name}");
                assert!((a.color[i] - b.color[i]).abs() <= 1e-6, "{name}");
                assert!((na[i] - nb[i]).abs() <= 1e-6, "{name}");
            }
        }
    }
}

fn sha256sum(bytes: &[u8]) -> String {
    let mut child = Command::new("sha256sum")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .expect("sha256sum available");
    child.stdin.take().unwrap().write_all(bytes).unwrap();
    let out = child.wait_with_output().unwrap();
    String::from_utf8(out.stdout).unwrap().split_whitespace().next().unwrap().to_owned()
}

#[test]
fn manifest_digests_match_external_tool() {
    let mut m = fixtures().swap_remove(4).1;
    compute_vertex_normals(&mut m);
    let (obj, mtl) = export_obj(&m, "sphere").unwrap();
    let summary = SessionSummary {
        session_id: "fixture".into(),
        prompt: "a sphere".into(),
        seed: 3,
        backend_ids: BackendIds { image: "mock-image".into(), reconstruct: "mock-reconstruct".into() },
        timings_ms: StageTimings { image_infer: 1.0, background_removal: 2.0, reconstruct: 3.0, extract: 4.0, package: 5.0, total: 15.0 },
        budget_exceeded: false,
    };
    let bundle = AssetBundle::package(obj, mtl, &summary).unwrap();
    let man = &bundle.manifest;
    assert_eq!(man.sha256.obj, sha256sum(bundle.obj_text.as_bytes()));
    assert_eq!(man.sha256.mtl, sha256sum(bundle.mtl_text.as_bytes()));
    assert_eq!(man.counts.vertices, m.vertices.len());
    assert_eq!(man.counts.triangles, m.triangles.len());
    assert_eq!(&AssetManifest::from_json(&man.to_json()).unwrap(), man);
    let value: serde_json::Value = serde_json::from_str(&man.to_json()).unwrap();
    for key in ["image_infer", "background_removal", "reconstruct", "extract", "package", "total"] {
        assert!(value["timings_ms"][key].as_f64().unwrap() >= 0.0);
    }
    assert_eq!(value["version"], 1);
}
