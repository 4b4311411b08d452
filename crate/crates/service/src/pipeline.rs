//! The two pipeline phases (candidate generation, then asset building) and
//! a headless driver that runs both against a single session record.

use std::sync::Arc;
use std::time::Instant;

use meshforge_core::asset::{default_mtl, export_obj, AssetBundle, BackendIds, SessionSummary, StageTimings};
use meshforge_core::control::{build_control_request, GenerationConfig};
use meshforge_core::mesh::{compute_vertex_normals, extract_mesh, normalize_bounds, weld_vertices, DEFAULT_ISO};
use meshforge_core::{IndexedMesh, ReconstructionField, SketchCanvas};

use crate::config::ServiceConfig;
use crate::gateway::wire::encode_png;
use crate::gateway::{Gateway, GatewayError, Reconstruction};
use crate::session::{Candidate, GenerationParams, SessionRecord, StageError};

pub const STAGE_IMAGE_INFER: &str = "image_infer";
pub const STAGE_BACKGROUND_REMOVAL: &str = "background_removal";
pub const STAGE_RECONSTRUCT: &str = "reconstruct";
pub const STAGE_EXTRACT: &str = "extract";
pub const STAGE_PACKAGE: &str = "package";

/// Vertices closer than this after extraction are merged.
pub const WELD_EPS: f64 = 1e-9;
/// Largest bounding-box extent after normalization.
pub const NORMALIZED_EXTENT: f64 = 1.0;
pub const OBJECT_NAME: &str = "mesh";

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSettings {
    pub resolution: usize,
    pub raster_size: u32,
    pub budget_ms: f64,
}

impl From<&ServiceConfig> for PipelineSettings {
    fn from(cfg: &ServiceConfig) -> Self {
        Self {
            resolution: cfg.resolution,
            raster_size: cfg.raster_size,
            budget_ms: cfg.budget_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationOutcome {
    pub candidates: Vec<Candidate>,
    pub image_infer_ms: f64,
    pub background_removal_ms: f64,
    pub phase_ms: f64,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn stage_error(stage: &str, err: impl std::fmt::Display, backend_unavailable: bool) -> StageError {
    StageError {
        stage: stage.to_owned(),
        message: err.to_string(),
        backend_unavailable,
    }
}

fn gateway_error(stage: &str, err: GatewayError) -> StageError {
    let backend = err.is_backend_failure();
    stage_error(stage, err, backend)
}

async fn blocking<T: Send + 'static>(stage: &str, f: impl FnOnce() -> T + Send + 'static) -> Result<T, StageError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| stage_error(stage, format!("worker failed: {e}"), false))
}

/// Cleans an extracted mesh for delivery: weld, normals, unit bounds.
pub fn finish_mesh(field: &ReconstructionField) -> Result<IndexedMesh, String> {
    let raw = extract_mesh(field, DEFAULT_ISO);
    if raw.is_empty() {
        return Err("reconstructed field has no surface".into());
    }
    let mut mesh = weld_vertices(&raw, WELD_EPS);
    let fallbacks = compute_vertex_normals(&mut mesh);
    if fallbacks > 0 {
        tracing::warn!("{fallbacks} vertices had no well-defined normal");
    }
    normalize_bounds(&mut mesh, NORMALIZED_EXTENT).map_err(|e| e.to_string())?;
    Ok(mesh)
}

pub struct Pipeline {
    gateway: Arc<Gateway>,
    settings: PipelineSettings,
}

impl Pipeline {
    pub fn new(gateway: Arc<Gateway>, settings: PipelineSettings) -> Self {
        Self { gateway, settings }
    }

    pub fn settings(&self) -> &PipelineSettings {
        &self.settings
    }

    /// Sketch and prompt to matted candidate images.
    pub async fn generate(&self, canvas: &SketchCanvas, params: &GenerationParams) -> Result<GenerationOutcome, StageError> {
        let phase = Instant::now();
        let cfg = GenerationConfig {
            raster_width: self.settings.raster_size,
            raster_height: self.settings.raster_size,
            seed: params.seed,
            candidate_count: params.candidates,
            ..GenerationConfig::default()
        };
        let canvas = canvas.clone();
        let prompt = params.prompt.clone();
        let request = blocking(STAGE_IMAGE_INFER, move || build_control_request(&canvas, &prompt, &cfg))
            .await?
            .map_err(|e| stage_error(STAGE_IMAGE_INFER, e, false))?;
        let raw = self
            .gateway
            .infer_candidates(&request)
            .await
            .map_err(|e| gateway_error(STAGE_IMAGE_INFER, e))?;
        let image_infer_ms = ms_since(phase);

        let t = Instant::now();
        let mut candidates = Vec::with_capacity(raw.len());
        for (i, r) in raw.iter().enumerate() {
            let image = self.gateway.remove_background(r).await.map_err(|e| {
                let backend = e.is_backend_failure();
                stage_error(STAGE_BACKGROUND_REMOVAL, format!("candidate {i}: {e}"), backend)
            })?;
            let png = encode_png(image.pixels().clone());
            candidates.push(Candidate { image, png });
        }
        Ok(GenerationOutcome {
            candidates,
            image_infer_ms,
            background_removal_ms: ms_since(t),
            phase_ms: ms_since(phase),
        })
    }

    /// Selected candidate to a packaged asset. `prior` carries the
    /// generation-phase timings; the result's `total` adds this phase.
    pub async fn build_asset(
        &self,
        session_id: &str,
        params: &GenerationParams,
        candidate: &Candidate,
        prior: StageTimings,
    ) -> Result<AssetBundle, StageError> {
        let phase = Instant::now();
        let mut timings = prior;

        let t = Instant::now();
        let recon = self
            .gateway
            .reconstruct(&candidate.image, self.settings.resolution)
            .await
            .map_err(|e| gateway_error(STAGE_RECONSTRUCT, e))?;
        timings.reconstruct = ms_since(t);

        let t = Instant::now();
        let (obj_text, mtl_text) = match recon {
            Reconstruction::Field(field) => {
                let mesh = blocking(STAGE_EXTRACT, move || finish_mesh(&field))
                    .await?
                    .map_err(|e| stage_error(STAGE_EXTRACT, e, false))?;
                timings.extract = ms_since(t);
                let t = Instant::now();
                let out = blocking(STAGE_PACKAGE, move || export_obj(&mesh, OBJECT_NAME))
                    .await?
                    .map_err(|e| stage_error(STAGE_PACKAGE, e, false))?;
                timings.package = ms_since(t);
                out
            }
            Reconstruction::Mesh(obj) => {
                // Backend-meshed output is delivered as-is.
                timings.extract = 0.0;
                timings.package = ms_since(t);
                (obj, default_mtl())
            }
        };

        timings.total = prior.total + ms_since(phase);
        let summary = SessionSummary {
            session_id: session_id.to_owned(),
            prompt: params.prompt.clone(),
            seed: params.seed,
            backend_ids: BackendIds {
                image: candidate.image.backend_id().to_owned(),
                reconstruct: self.gateway.reconstruct_backend_id(),
            },
            timings_ms: timings,
            budget_exceeded: timings.total > self.settings.budget_ms,
        };
        if summary.budget_exceeded {
            tracing::warn!(session = session_id, "total {:.0} ms exceeds budget {:.0} ms", timings.total, self.settings.budget_ms);
        }
        let mut bundle = blocking(STAGE_PACKAGE, move || AssetBundle::package(obj_text, mtl_text, &summary))
            .await?
            // Only a backend-supplied OBJ can fail to parse here.
            .map_err(|e| stage_error(STAGE_PACKAGE, format!("unusable mesh: {e}"), true))?;
        bundle.preview_png = Some(candidate.png.clone());
        Ok(bundle)
    }
}

/// How the headless driver picks a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    Auto,
    Index(usize),
}

impl Selection {
    pub fn index(self) -> usize {
        match self {
            Self::Auto => 0,
            Self::Index(i) => i,
        }
    }
}

/// Runs both phases on a fresh record, ending in Done or Failed.
pub async fn run_headless(
    pipeline: &Pipeline,
    session_id: &str,
    canvas: SketchCanvas,
    params: GenerationParams,
    selection: Selection,
) -> SessionRecord {
    let mut record = SessionRecord::new(session_id);
    record.set_sketch(canvas.clone()).expect("fresh sessions accept a sketch");
    record.begin_generation(params.clone()).expect("sketched sessions can generate");
    let outcome = match pipeline.generate(&canvas, &params).await {
        Ok(o) => o,
        Err(e) => {
            record.fail(e).expect("in-flight sessions can fail");
            return record;
        }
    };
    record
        .finish_generation(outcome.candidates, outcome.image_infer_ms, outcome.background_removal_ms, outcome.phase_ms)
        .expect("in-flight generation can finish");
    if let Err(e) = record.select(selection.index()) {
        record.error = Some(stage_error("select", e, false));
        return record;
    }
    let candidate = record.candidates[selection.index()].clone();
    match pipeline.build_asset(session_id, &params, &candidate, record.timings_ms).await {
        Ok(bundle) => record.finish(bundle).expect("reconstructing sessions can finish"),
        Err(e) => record.fail(e).expect("in-flight sessions can fail"),
    }
    record
}
