use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{import_obj, AssetError};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendIds {
    pub image: String,
    pub reconstruct: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshCounts {
    pub vertices: usize,
    pub triangles: usize,
}

/// Wall time per pipeline stage in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub image_infer: f64,
    pub background_removal: f64,
    pub reconstruct: f64,
    pub extract: f64,
    pub package: f64,
    pub total: f64,
}

impl StageTimings {
    pub fn stages(&self) -> [f64; 5] {
        [
            self.image_infer,
            self.background_removal,
            self.reconstruct,
            self.extract,
            self.package,
        ]
    }

    pub fn max_stage(&self) -> f64 {
        self.stages().into_iter().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayloadDigests {
    pub obj: String,
    pub mtl: String,
}

/// Everything about a finished session that is not derivable from the payloads.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionSummary {
    pub session_id: String,
    pub prompt: String,
    pub seed: u64,
    pub backend_ids: BackendIds,
    pub timings_ms: StageTimings,
    pub budget_exceeded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetManifest {
    pub version: u32,
    pub session_id: String,
    pub prompt: String,
    pub seed: u64,
    pub backend_ids: BackendIds,
    pub counts: MeshCounts,
    pub timings_ms: StageTimings,
    pub sha256: PayloadDigests,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub budget_exceeded: bool,
}

impl AssetManifest {
    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest is always serializable");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, AssetError> {
        serde_json::from_str(text).map_err(|e| AssetError::Manifest(e.to_string()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Derives counts and digests from the final payload bytes.
pub fn write_manifest(
    summary: &SessionSummary,
    obj_text: &str,
    mtl_text: &str,
) -> Result<AssetManifest, AssetError> {
    let parsed = import_obj(obj_text)?;
    Ok(AssetManifest {
        version: MANIFEST_VERSION,
        session_id: summary.session_id.clone(),
        prompt: summary.prompt.clone(),
        seed: summary.seed,
        backend_ids: summary.backend_ids.clone(),
        counts: MeshCounts {
            vertices: parsed.vertices.len(),
            triangles: parsed.triangles.len(),
        },
        timings_ms: summary.timings_ms,
        sha256: PayloadDigests {
            obj: sha256_hex(obj_text.as_bytes()),
            mtl: sha256_hex(mtl_text.as_bytes()),
        },
        budget_exceeded: summary.budget_exceeded,
    })
}
