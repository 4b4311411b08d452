//! Dual marching cubes with Flexicubes weights.
//!
//! One vertex is placed in every cell whose edges cross the isosurface, at the
//! beta-weighted mean of the alpha-weighted edge crossings; every
//! sign-changing lattice edge then contributes a quad joining the vertices of
//! the cells around it. Gamma does not influence positioning.

use super::{sub, dot, IndexedMesh, Vertex};
use crate::field::{Axis, ReconstructionField};

pub const DEFAULT_ISO: f64 = 0.0;

/// Values landing exactly on the isovalue are nudged to the positive side.
const ZERO_NUDGE: f64 = 1e-12;

const NO_VERTEX: u32 = u32::MAX;

/// Parameter `t` in `[0, 1]` of the crossing between two corners with
/// iso-shifted values `s0`, `s1` of opposite sign and weights `alpha0`,
/// `alpha1`: `t = s0*alpha0 / (s0*alpha0 - s1*alpha1)`.
///
/// Evaluated through the ratio `alpha1 / alpha0`, which makes the result
/// invariant when both weights are scaled by the same factor.
pub fn edge_crossing(s0: f64, s1: f64, alpha0: f64, alpha1: f64) -> f64 {
    let ratio = alpha1 / alpha0;
    s0 / (s0 - s1 * ratio)
}

/// The two in-plane axes `(b, c)` with `b x c = a`.
fn plane_axes(a: usize) -> (usize, usize) {
    ((a + 1) % 3, (a + 2) % 3)
}

struct Lattice<'a> {
    field: &'a ReconstructionField,
    values: Vec<f64>,
}

impl Lattice<'_> {
    fn value(&self, q: [usize; 3]) -> f64 {
        self.values[self.field.corner_index(q[0], q[1], q[2])]
    }

    fn alpha(&self, q: [usize; 3]) -> f64 {
        self.field.alpha()[self.field.corner_index(q[0], q[1], q[2])] as f64
    }

    /// Crossing point and beta weight of the edge starting at `q` along `axis`,
    /// if its endpoints differ in sign.
    fn crossing(&self, axis: Axis, q: [usize; 3]) -> Option<([f64; 3], f64)> {
        let a = axis.index();
        let mut q1 = q;
        q1[a] += 1;
        let (s0, s1) = (self.value(q), self.value(q1));
        if (s0 < 0.0) == (s1 < 0.0) {
            return None;
        }
        let t = edge_crossing(s0, s1, self.alpha(q), self.alpha(q1));
        let mut p = self.field.corner_position(q[0], q[1], q[2]);
        let p1 = self.field.corner_position(q1[0], q1[1], q1[2]);
        p[a] += t * (p1[a] - p[a]);
        let beta = self.field.beta(axis)[self.field.edge_index(axis, q[0], q[1], q[2])] as f64;
        Some((p, beta))
    }

    /// Beta-weighted mean of the crossings on the 12 edges of cell `c`.
    fn dual_vertex(&self, c: [usize; 3]) -> Option<[f64; 3]> {
        let mut sum = [0.0; 3];
        let mut weight = 0.0;
        for axis in Axis::ALL {
            let a = axis.index();
            let (b, d) = plane_axes(a);
            for k in 0..4 {
                let mut q = c;
                q[b] += k & 1;
                q[d] += k >> 1;
                if let Some((p, beta)) = self.crossing(axis, q) {
                    for i in 0..3 {
                        sum[i] += beta * p[i];
                    }
                    weight += beta;
                }
            }
        }
        (weight > 0.0).then(|| sum.map(|s| s / weight))
    }

    fn cell_has_sign_change(&self, c: [usize; 3]) -> bool {
        let first = self.value(c) < 0.0;
        (1..8).any(|k| {
            let q = [c[0] + (k & 1), c[1] + ((k >> 1) & 1), c[2] + (k >> 2)];
            (self.value(q) < 0.0) != first
        })
    }
}

/// Extracts the `iso` level set of `field` as a triangle mesh.
///
/// Vertices are numbered by cell in x-fastest scan order; output is
/// deterministic. Normals are left unset and colors are trilinear samples of
/// the color grid at each vertex.
pub fn extract_mesh(field: &ReconstructionField, iso: f64) -> IndexedMesh {
    let n = field.resolution();
    let values = field
        .sdf()
        .iter()
        .map(|&s| {
            let v = s as f64 - iso;
            if v == 0.0 {
                ZERO_NUDGE
            } else {
                v
            }
        })
        .collect();
    let lattice = Lattice { field, values };

    let mut cell_vertex = vec![NO_VERTEX; n * n * n];
    let mut vertices = Vec::new();
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                let c = [x, y, z];
                if !lattice.cell_has_sign_change(c) {
                    continue;
                }
                if let Some(p) = lattice.dual_vertex(c) {
                    cell_vertex[field.cell_index(x, y, z)] = vertices.len() as u32;
                    vertices.push(Vertex::new(p, field.sample_color(p)));
                }
            }
        }
    }

    let mut triangles = Vec::new();
    for axis in Axis::ALL {
        let a = axis.index();
        let (b, c) = plane_axes(a);
        let ext = |i: usize| if i == a { n } else { n + 1 };
        for z in 0..ext(2) {
            for y in 0..ext(1) {
                for x in 0..ext(0) {
                    let q = [x, y, z];
                    let mut q1 = q;
                    q1[a] += 1;
                    let (s0, s1) = (lattice.value(q), lattice.value(q1));
                    if (s0 < 0.0) == (s1 < 0.0) {
                        continue;
                    }
                    // Incident cells counter-clockwise about +a.
                    let mut ring = Vec::with_capacity(4);
                    for (db, dc) in [(0, 0), (1, 0), (1, 1), (0, 1)] {
                        let (Some(cb), Some(cc)) =
                            ((q[b] + db).checked_sub(1), (q[c] + dc).checked_sub(1))
                        else {
                            continue;
                        };
                        if cb >= n || cc >= n {
                            continue;
                        }
                        let mut cell = q;
                        cell[b] = cb;
                        cell[c] = cc;
                        let ci = field.cell_index(cell[0], cell[1], cell[2]);
                        let v = cell_vertex[ci];
                        if v != NO_VERTEX {
                            ring.push((ci, v));
                        }
                    }
                    if s0 >= 0.0 {
                        // Surface normal points toward -a.
                        ring.reverse();
                    }
                    emit_polygon(&vertices, &ring, &mut triangles);
                }
            }
        }
    }

    IndexedMesh {
        vertices,
        triangles,
    }
}

/// Triangulates a quad along its shorter diagonal (ties go to the diagonal
/// touching the smallest cell index), or fans a partial ring.
fn emit_polygon(vertices: &[Vertex], ring: &[(usize, u32)], out: &mut Vec<[u32; 3]>) {
    match ring.len() {
        4 => {
            let p = |k: usize| vertices[ring[k].1 as usize].position;
            let d02 = sub(p(0), p(2));
            let d13 = sub(p(1), p(3));
            let (l02, l13) = (dot(d02, d02), dot(d13, d13));
            let use_02 = if l02 != l13 {
                l02 < l13
            } else {
                let smallest = (0..4).min_by_key(|&k| ring[k].0).unwrap();
                smallest % 2 == 0
            };
            let v = |k: usize| ring[k].1;
            if use_02 {
                out.push([v(0), v(1), v(2)]);
                out.push([v(0), v(2), v(3)]);
            } else {
                out.push([v(0), v(1), v(3)]);
                out.push([v(1), v(2), v(3)]);
            }
        }
        3 => out.push([ring[0].1, ring[1].1, ring[2].1]),
        _ => {}
    }
}
