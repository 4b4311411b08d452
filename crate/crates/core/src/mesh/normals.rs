use super::{cross, norm, sub, IndexedMesh};

/// Fallback for vertices whose incident faces cancel out or that have none.
const FALLBACK_NORMAL: [f64; 3] = [0.0, 0.0, 1.0];

/// Unnormalized face normal; its length is twice the triangle area.
pub fn face_normal(mesh: &IndexedMesh, t: [u32; 3]) -> [f64; 3] {
    let [a, b, c] = t.map(|i| mesh.position(i));
    cross(sub(b, a), sub(c, a))
}

/// Sets every vertex normal to the normalized area-weighted sum of its
/// incident face normals. Returns how many vertices fell back to +Z.
pub fn compute_vertex_normals(mesh: &mut IndexedMesh) -> usize {
    let mut acc = vec![[0.0f64; 3]; mesh.vertices.len()];
    for &t in &mesh.triangles {
        let n = face_normal(mesh, t);
        for i in t {
            let a = &mut acc[i as usize];
            for k in 0..3 {
                a[k] += n[k];
            }
        }
    }
    let mut fallbacks = 0;
    for (v, a) in mesh.vertices.iter_mut().zip(acc) {
        let len = norm(a);
        v.normal = Some(if len > 0.0 && len.is_finite() {
            a.map(|c| c / len)
        } else {
            fallbacks += 1;
            FALLBACK_NORMAL
        });
    }
    fallbacks
}
