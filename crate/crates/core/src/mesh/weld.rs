use std::collections::HashMap;

use super::IndexedMesh;

/// Merges vertices closer than `eps` (per-axis, max metric) and drops
/// triangles that collapse as a result.
///
/// Vertices are visited in order; each either joins the lowest-indexed earlier
/// representative within `eps` or becomes a representative itself. Surviving
/// vertices keep their attributes and relative order. Because representatives
/// end up more than `eps` apart, welding twice changes nothing.
pub fn weld_vertices(mesh: &IndexedMesh, eps: f64) -> IndexedMesh {
    let eps = eps.max(0.0);
    let mut remap = Vec::with_capacity(mesh.vertices.len());
    let mut out = IndexedMesh::default();

    if eps == 0.0 {
        let mut seen: HashMap<[u64; 3], u32> = HashMap::new();
        for v in &mesh.vertices {
            // +0.0 and -0.0 are the same point.
            let key = v.position.map(|c| (c + 0.0).to_bits());
            let id = *seen.entry(key).or_insert_with(|| {
                out.vertices.push(*v);
                (out.vertices.len() - 1) as u32
            });
            remap.push(id);
        }
    } else {
        let mut buckets: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        let key = |p: [f64; 3]| p.map(|c| (c / eps).floor() as i64);
        for v in &mesh.vertices {
            let k = key(v.position);
            let mut best: Option<u32> = None;
            for dz in -1..=1 {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let Some(list) = buckets.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) else {
                            continue;
                        };
                        for &r in list {
                            let p = out.vertices[r as usize].position;
                            let close = (0..3).all(|i| (p[i] - v.position[i]).abs() <= eps);
                            if close && best.is_none_or(|b| r < b) {
                                best = Some(r);
                            }
                        }
                    }
                }
            }
            let id = best.unwrap_or_else(|| {
                out.vertices.push(*v);
                let id = (out.vertices.len() - 1) as u32;
                buckets.entry(k).or_default().push(id);
                id
            });
            remap.push(id);
        }
    }

    out.triangles = mesh
        .triangles
        .iter()
        .map(|t| t.map(|i| remap[i as usize]))
        .filter(|t| t[0] != t[1] && t[1] != t[2] && t[0] != t[2])
        .collect();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Vertex;

    fn mesh(points: &[[f64; 3]], tris: &[[u32; 3]]) -> IndexedMesh {
        IndexedMesh::new(
            points.iter().map(|&p| Vertex::new(p, [0.5; 3])).collect(),
            tris.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn duplicated_quad_corners_merge() {
        let m = mesh(
            &[
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [1.0, 1.0, 0.0],
                [0.0, 0.0, 0.0],
                [1.0, 1.0, 0.0],
                [0.0, 1.0, 0.0],
            ],
            &[[0, 1, 2], [3, 4, 5]],
        );
        let w = weld_vertices(&m, 0.0);
        assert_eq!(w.vertices.len(), 4);
        assert_eq!(w.triangles, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn collapsed_triangles_are_dropped() {
        let m = mesh(
            &[[0.0, 0.0, 0.0], [1e-9, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]],
            &[[0, 1, 2], [0, 3, 2]],
        );
        let w = weld_vertices(&m, 1e-6);
        assert_eq!(w.vertices.len(), 3);
        assert_eq!(w.triangles, vec![[0, 2, 1]]);
    }

    #[test]
    fn signed_zero_is_one_point() {
        let m = mesh(&[[0.0, 0.0, 0.0], [-0.0, 0.0, 0.0]], &[]);
        assert_eq!(weld_vertices(&m, 0.0).vertices.len(), 1);
    }

    #[test]
    fn chains_do_not_transitively_merge() {
        // 0 and 2 are 2*eps apart; 1 joins 0, 2 stays separate.
        let m = mesh(&[[0.0; 3], [0.6, 0.0, 0.0], [1.2, 0.0, 0.0]], &[]);
        let w = weld_vertices(&m, 1.0);
        assert_eq!(w.vertices.len(), 2);
        assert_eq!(weld_vertices(&w, 1.0), w);
    }
}
