use super::{IndexedMesh, MeshError};

/// Axis-aligned bounds `(min, max)` of all vertices.
pub fn bounding_box(mesh: &IndexedMesh) -> Option<([f64; 3], [f64; 3])> {
    let mut it = mesh.vertices.iter().map(|v| v.position);
    let first = it.next()?;
    Some(it.fold((first, first), |(lo, hi), p| {
        (
            [lo[0].min(p[0]), lo[1].min(p[1]), lo[2].min(p[2])],
            [hi[0].max(p[0]), hi[1].max(p[1]), hi[2].max(p[2])],
        )
    }))
}

/// Uniformly scales and translates the mesh so its bounding box is centered
/// at the origin with largest extent `target`. Normals are unaffected.
pub fn normalize_bounds(mesh: &mut IndexedMesh, target: f64) -> Result<(), MeshError> {
    let (lo, hi) = bounding_box(mesh).ok_or(MeshError::EmptyMesh)?;
    let extent = (0..3).map(|i| hi[i] - lo[i]).fold(0.0, f64::max);
    if !extent.is_finite() || extent <= 0.0 {
        return Err(MeshError::DegenerateBounds);
    }
    let center = [0, 1, 2].map(|i| (lo[i] + hi[i]) / 2.0);
    let scale = target / extent;
    for v in &mut mesh.vertices {
        for (c, m) in v.position.iter_mut().zip(center) {
            *c = (*c - m) * scale;
        }
    }
    Ok(())
}
