//! Triangle meshes: dual marching cubes extraction, welding, normals, bounds
//! normalization and topology analysis.

mod bounds;
mod extract;
mod normals;
mod topology;
mod weld;

pub use bounds::{bounding_box, normalize_bounds};
pub use extract::{edge_crossing, extract_mesh, DEFAULT_ISO};
pub use normals::{compute_vertex_normals, face_normal};
pub use topology::{analyze_topology, TopologyReport};
pub use weld::weld_vertices;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("mesh has no geometry")]
    EmptyMesh,
    #[error("mesh bounding box has zero extent")]
    DegenerateBounds,
    #[error("triangle {triangle} references vertex {index} (have {count})")]
    IndexOutOfRange {
        triangle: usize,
        index: u32,
        count: usize,
    },
    #[error("non-finite value in vertex {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vertex {
    pub position: [f64; 3],
    pub normal: Option<[f64; 3]>,
    pub color: [f64; 3],
}

impl Vertex {
    pub fn new(position: [f64; 3], color: [f64; 3]) -> Self {
        Self {
            position,
            normal: None,
            color,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IndexedMesh {
    pub vertices: Vec<Vertex>,
    pub triangles: Vec<[u32; 3]>,
}

impl IndexedMesh {
    pub fn new(vertices: Vec<Vertex>, triangles: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        let mesh = Self {
            vertices,
            triangles,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        let count = self.vertices.len();
        for (triangle, t) in self.triangles.iter().enumerate() {
            if let Some(&index) = t.iter().find(|&&i| i as usize >= count) {
                return Err(MeshError::IndexOutOfRange {
                    triangle,
                    index,
                    count,
                });
            }
        }
        for (i, v) in self.vertices.iter().enumerate() {
            let finite = v.position.iter().chain(&v.color).all(|c| c.is_finite())
                && v.normal.is_none_or(|n| n.iter().all(|c| c.is_finite()));
            if !finite {
                return Err(MeshError::NonFinite(i));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn position(&self, i: u32) -> [f64; 3] {
        self.vertices[i as usize].position
    }

    /// Reverses the winding of every triangle.
    pub fn flip_windings(&mut self) {
        for t in &mut self.triangles {
            t.swap(1, 2);
        }
    }
}

pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}
