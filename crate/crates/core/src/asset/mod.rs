//! OBJ/MTL serialization with per-vertex colors and the asset manifest.

mod manifest;
mod obj;

pub use manifest::{
    sha256_hex, write_manifest, AssetManifest, BackendIds, MeshCounts, PayloadDigests,
    SessionSummary, StageTimings, MANIFEST_VERSION,
};
pub use obj::{default_mtl, export_obj, import_obj, MTL_FILE_NAME};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AssetError {
    #[error("mesh has no triangles")]
    EmptyMesh,
    #[error("vertex {0} has no normal")]
    MissingNormals(usize),
    #[error("line {line}: {reason}")]
    ParseError { line: usize, reason: String },
    #[error("line {line}: index {index} out of range")]
    IndexOutOfRange { line: usize, index: i64 },
    #[error("manifest: {0}")]
    Manifest(String),
}

/// Serialized mesh plus material and manifest, as delivered to clients.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetBundle {
    pub obj_text: String,
    pub mtl_text: String,
    pub manifest: AssetManifest,
    pub preview_png: Option<Vec<u8>>,
}

impl AssetBundle {
    /// Builds the manifest from the finished payloads so its counts and
    /// digests always describe exactly these bytes.
    pub fn package(
        obj_text: String,
        mtl_text: String,
        summary: &SessionSummary,
    ) -> Result<Self, AssetError> {
        let manifest = write_manifest(summary, &obj_text, &mtl_text)?;
        Ok(Self {
            obj_text,
            mtl_text,
            manifest,
            preview_png: None,
        })
    }
}
