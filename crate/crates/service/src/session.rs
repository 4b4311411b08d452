//! Session records and the generation state machine.

use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use meshforge_core::asset::{AssetBundle, StageTimings};
use meshforge_core::control::CandidateImage;
use meshforge_core::SketchCanvas;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SessionState {
    Created,
    Sketched,
    InferringImages,
    AwaitingSelection,
    Reconstructing,
    Done,
    Failed,
}

impl SessionState {
    pub const ALL: [SessionState; 7] = [
        Self::Created,
        Self::Sketched,
        Self::InferringImages,
        Self::AwaitingSelection,
        Self::Reconstructing,
        Self::Done,
        Self::Failed,
    ];

    /// Background work is running for the session.
    pub fn is_in_flight(self) -> bool {
        matches!(self, Self::InferringImages | Self::Reconstructing)
    }

    /// The full transition graph. Failed sessions may be re-sketched to retry.
    pub fn can_transition(self, to: SessionState) -> bool {
        use SessionState::*;
        matches!(
            (self, to),
            (Created | Sketched | AwaitingSelection | Failed, Sketched)
                | (Sketched, InferringImages)
                | (InferringImages, AwaitingSelection)
                | (AwaitingSelection, Reconstructing)
                | (Reconstructing, Done)
                | (InferringImages | Reconstructing, Failed)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: String,
    pub message: String,
    /// Caused by an unreachable or misbehaving backend rather than the input.
    #[serde(default)]
    pub backend_unavailable: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SessionError {
    #[error("illegal transition {from:?} -> {to:?}")]
    IllegalTransition { from: SessionState, to: SessionState },
    #[error("candidate {index} does not exist ({count} available)")]
    NoSuchCandidate { index: usize, count: usize },
}

/// Parameters of a generation request after defaults are applied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub prompt: String,
    pub seed: u64,
    pub candidates: u32,
}

/// A matted candidate with its PNG encoding cached for delivery.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub image: CandidateImage,
    pub png: Vec<u8>,
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionRecord {
    id: String,
    state: SessionState,
    pub sketch: Option<SketchCanvas>,
    pub params: Option<GenerationParams>,
    pub candidates: Vec<Candidate>,
    pub selected: Option<usize>,
    pub asset: Option<AssetBundle>,
    pub timings_ms: StageTimings,
    pub error: Option<StageError>,
    pub created_at: u64,
    pub updated_at: u64,
    /// Bumped on every state change so stale background work can detect it
    /// has been superseded.
    pub generation: u64,
}

impl SessionRecord {
    pub fn new(id: impl Into<String>) -> Self {
        let now = now_ms();
        Self {
            id: id.into(),
            state: SessionState::Created,
            sketch: None,
            params: None,
            candidates: Vec::new(),
            selected: None,
            asset: None,
            timings_ms: StageTimings::default(),
            error: None,
            created_at: now,
            updated_at: now,
            generation: 0,
        }
    }

    /// Rebuilds a record from persisted parts without checking the graph.
    pub(crate) fn restore(id: String, state: SessionState) -> Self {
        let mut r = Self::new(id);
        r.state = state;
        r
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn touch(&mut self) {
        self.updated_at = now_ms();
    }

    fn transition(&mut self, to: SessionState) -> Result<(), SessionError> {
        if !self.state.can_transition(to) {
            return Err(SessionError::IllegalTransition { from: self.state, to });
        }
        tracing::debug!(session = %self.id, "{:?} -> {:?}", self.state, to);
        self.state = to;
        self.generation += 1;
        self.touch();
        Ok(())
    }

    /// Replaces the sketch, discarding candidates and any earlier error.
    pub fn set_sketch(&mut self, canvas: SketchCanvas) -> Result<(), SessionError> {
        self.transition(SessionState::Sketched)?;
        self.sketch = Some(canvas);
        self.candidates.clear();
        self.selected = None;
        self.asset = None;
        self.error = None;
        self.timings_ms = StageTimings::default();
        Ok(())
    }

    pub fn begin_generation(&mut self, params: GenerationParams) -> Result<(), SessionError> {
        self.transition(SessionState::InferringImages)?;
        self.params = Some(params);
        self.timings_ms = StageTimings::default();
        Ok(())
    }

    /// Stores the candidates and the image-phase timings.
    pub fn finish_generation(
        &mut self,
        candidates: Vec<Candidate>,
        image_infer_ms: f64,
        background_removal_ms: f64,
        phase_ms: f64,
    ) -> Result<(), SessionError> {
        assert!(!candidates.is_empty(), "a finished generation has candidates");
        self.transition(SessionState::AwaitingSelection)?;
        self.candidates = candidates;
        self.timings_ms.image_infer = image_infer_ms;
        self.timings_ms.background_removal = background_removal_ms;
        self.timings_ms.total = phase_ms;
        Ok(())
    }

    pub fn select(&mut self, index: usize) -> Result<(), SessionError> {
        if self.state == SessionState::AwaitingSelection && index >= self.candidates.len() {
            return Err(SessionError::NoSuchCandidate {
                index,
                count: self.candidates.len(),
            });
        }
        self.transition(SessionState::Reconstructing)?;
        self.selected = Some(index);
        Ok(())
    }

    pub fn finish(&mut self, asset: AssetBundle) -> Result<(), SessionError> {
        self.transition(SessionState::Done)?;
        self.timings_ms = asset.manifest.timings_ms;
        self.asset = Some(asset);
        Ok(())
    }

    /// Records a stage failure. Candidates from an earlier phase are kept so
    /// they remain retrievable.
    pub fn fail(&mut self, error: StageError) -> Result<(), SessionError> {
        self.transition(SessionState::Failed)?;
        tracing::warn!(session = %self.id, stage = %error.stage, "{}", error.message);
        self.error = Some(error);
        Ok(())
    }

    pub fn status(&self) -> SessionStatus {
        SessionStatus {
            session_id: self.id.clone(),
            state: self.state,
            has_sketch: self.sketch.is_some(),
            prompt: self.params.as_ref().map(|p| p.prompt.clone()),
            seed: self.params.as_ref().map(|p| p.seed),
            candidate_count: self.candidates.len(),
            selected: self.selected,
            timings_ms: self.timings_ms,
            error: self.error.clone(),
            manifest_sha256: self.asset.as_ref().map(|a| a.manifest.sha256.obj.clone()),
            created_at: self.created_at,
            updated_at: self.updated_at,
        }
    }
}

/// Body of `GET /v1/sessions/{id}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub session_id: String,
    pub state: SessionState,
    pub has_sketch: bool,
    pub prompt: Option<String>,
    pub seed: Option<u64>,
    pub candidate_count: usize,
    pub selected: Option<usize>,
    pub timings_ms: StageTimings,
    pub error: Option<StageError>,
    /// Digest of the delivered OBJ once the session is done.
    pub manifest_sha256: Option<String>,
    pub created_at: u64,
    pub updated_at: u64,
}
