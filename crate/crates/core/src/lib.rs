//! Core geometry and image processing for the meshforge sketch-to-mesh pipeline.
//!
//! The crate is organised the way data flows through a generation run:
//!
//! - [`sketch`]: stroke model, interchange format and scribble rasterization.
//! - [`control`]: Canny edges, control requests and border flood-fill matting.
//! - [`mock`]: deterministic stand-ins for the image and reconstruction backends,
//!   including the exact Euclidean distance transform and silhouette extrusion.
//! - [`field`]: the voxel field exchanged between reconstruction and extraction.
//! - [`recon`]: triplane features, decoder heads and field baking.
//! - [`mesh`]: Flexicubes-weighted dual marching cubes plus cleanup and analysis.
//! - [`asset`]: OBJ/MTL serialization and the asset manifest.

pub mod asset;
pub mod control;
pub mod field;
pub mod mesh;
pub mod mock;
pub mod recon;
pub mod sketch;

pub use field::ReconstructionField;
pub use mesh::IndexedMesh;
pub use sketch::{SketchCanvas, Stroke};
