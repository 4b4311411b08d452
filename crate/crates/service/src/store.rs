//! In-memory session table with optional write-through persistence and
//! idle-TTL eviction.
//!
//! Persisted layout, one directory per session:
//!
//! ```text
//! <dir>/<id>/session.json
//! <dir>/<id>/candidates/<k>.png
//! <dir>/<id>/mesh.obj, material.mtl, manifest.json
//! ```

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex as StdMutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

use meshforge_core::asset::{AssetBundle, AssetManifest, StageTimings};
use meshforge_core::control::CandidateImage;
use meshforge_core::sketch::{parse_sketch, serialize_sketch};

use crate::gateway::wire::encode_png;
use crate::session::{now_ms, Candidate, GenerationParams, SessionRecord, SessionState, StageError};

pub type SessionHandle = Arc<Mutex<SessionRecord>>;

#[derive(Serialize, Deserialize)]
struct PersistedCandidate {
    seed: u64,
    backend_id: String,
}

#[derive(Serialize, Deserialize)]
struct PersistedSession {
    id: String,
    state: SessionState,
    sketch: Option<String>,
    params: Option<GenerationParams>,
    candidates: Vec<PersistedCandidate>,
    selected: Option<usize>,
    timings_ms: StageTimings,
    error: Option<StageError>,
    created_at: u64,
    updated_at: u64,
}

pub struct SessionStore {
    sessions: StdMutex<HashMap<String, SessionHandle>>,
    dir: Option<PathBuf>,
    ttl: Duration,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}

impl SessionStore {
    pub fn new(dir: Option<PathBuf>, ttl: Duration) -> Self {
        Self {
            sessions: StdMutex::new(HashMap::new()),
            dir,
            ttl,
        }
    }

    /// Opens the store, reloading persisted sessions. Work that was in
    /// flight when the previous process stopped is marked failed.
    pub fn open(dir: Option<PathBuf>, ttl: Duration) -> io::Result<Self> {
        let store = Self::new(dir, ttl);
        if let Some(dir) = &store.dir {
            fs::create_dir_all(dir)?;
            let mut table = store.sessions.lock().unwrap();
            for entry in fs::read_dir(dir)? {
                let path = entry?.path();
                if !path.join("session.json").is_file() {
                    continue;
                }
                match load_session(&path) {
                    Ok(mut record) => {
                        if record.state().is_in_flight() {
                            record
                                .fail(StageError {
                                    stage: "restart".into(),
                                    message: "service restarted while work was in flight".into(),
                                    backend_unavailable: false,
                                })
                                .expect("in-flight sessions can fail");
                            persist(&path, &record)?;
                        }
                        table.insert(record.id().to_owned(), Arc::new(Mutex::new(record)));
                    }
                    Err(e) => tracing::warn!("skipping {}: {e}", path.display()),
                }
            }
        }
        Ok(store)
    }

    pub fn create(&self) -> io::Result<(String, SessionHandle)> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let record = SessionRecord::new(id.clone());
        self.persist(&record)?;
        let handle = Arc::new(Mutex::new(record));
        self.sessions.lock().unwrap().insert(id.clone(), handle.clone());
        Ok((id, handle))
    }

    pub fn get(&self, id: &str) -> Option<SessionHandle> {
        self.sessions.lock().unwrap().get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes the record through to disk when persistence is enabled.
    pub fn persist(&self, record: &SessionRecord) -> io::Result<()> {
        match &self.dir {
            Some(dir) => persist(&dir.join(record.id()), record),
            None => Ok(()),
        }
    }

    /// Drops sessions idle for longer than the TTL. Sessions with work in
    /// flight, or currently locked, are kept.
    pub fn evict_idle(&self) -> Vec<String> {
        let cutoff = now_ms().saturating_sub(self.ttl.as_millis() as u64);
        let mut table = self.sessions.lock().unwrap();
        let expired: Vec<String> = table
            .iter()
            .filter(|(_, h)| {
                h.try_lock()
                    .map(|r| !r.state().is_in_flight() && r.updated_at < cutoff)
                    .unwrap_or(false)
            })
            .map(|(id, _)| id.clone())
            .collect();
        for id in &expired {
            table.remove(id);
            if let Some(dir) = &self.dir {
                if let Err(e) = fs::remove_dir_all(dir.join(id)) {
                    tracing::warn!("could not remove persisted session {id}: {e}");
                }
            }
        }
        expired
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }
}

fn persist(dir: &Path, record: &SessionRecord) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let cand_dir = dir.join("candidates");
    if record.candidates.is_empty() {
        if cand_dir.exists() {
            fs::remove_dir_all(&cand_dir)?;
        }
    } else {
        fs::create_dir_all(&cand_dir)?;
        for (i, c) in record.candidates.iter().enumerate() {
            let path = cand_dir.join(format!("{i}.png"));
            if fs::metadata(&path).map(|m| m.len() != c.png.len() as u64).unwrap_or(true) {
                write_atomic(&path, &c.png)?;
            }
        }
    }
    let asset_files = ["mesh.obj", "material.mtl", "manifest.json"];
    match &record.asset {
        Some(a) if !dir.join("manifest.json").exists() => {
            write_atomic(&dir.join("mesh.obj"), a.obj_text.as_bytes())?;
            write_atomic(&dir.join("material.mtl"), a.mtl_text.as_bytes())?;
            write_atomic(&dir.join("manifest.json"), a.manifest.to_json().as_bytes())?;
        }
        Some(_) => {}
        None => {
            for f in asset_files {
                let p = dir.join(f);
                if p.exists() {
                    fs::remove_file(p)?;
                }
            }
        }
    }
    let doc = PersistedSession {
        id: record.id().to_owned(),
        state: record.state(),
        sketch: record
            .sketch
            .as_ref()
            .map(|s| String::from_utf8(serialize_sketch(s)).expect("sketch documents are UTF-8")),
        params: record.params.clone(),
        candidates: record
            .candidates
            .iter()
            .map(|c| PersistedCandidate {
                seed: c.image.seed(),
                backend_id: c.image.backend_id().to_owned(),
            })
            .collect(),
        selected: record.selected,
        timings_ms: record.timings_ms,
        error: record.error.clone(),
        created_at: record.created_at,
        updated_at: record.updated_at,
    };
    write_atomic(
        &dir.join("session.json"),
        &serde_json::to_vec_pretty(&doc).expect("session documents serialize"),
    )
}

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

fn load_session(dir: &Path) -> io::Result<SessionRecord> {
    let doc: PersistedSession =
        serde_json::from_slice(&fs::read(dir.join("session.json"))?).map_err(|e| invalid(e.to_string()))?;
    let mut record = SessionRecord::restore(doc.id, doc.state);
    record.sketch = doc
        .sketch
        .map(|s| parse_sketch(s.as_bytes()))
        .transpose()
        .map_err(|e| invalid(e.to_string()))?;
    record.params = doc.params;
    for (i, c) in doc.candidates.into_iter().enumerate() {
        let png = fs::read(dir.join("candidates").join(format!("{i}.png")))?;
        let rgba = image::load_from_memory(&png).map_err(|e| invalid(e.to_string()))?.to_rgba8();
        let image = CandidateImage::new(rgba, c.seed, c.backend_id).map_err(|e| invalid(e.to_string()))?;
        debug_assert_eq!(encode_png(image.pixels().clone()), png);
        record.candidates.push(Candidate { image, png });
    }
    record.selected = doc.selected;
    record.timings_ms = doc.timings_ms;
    record.error = doc.error;
    record.created_at = doc.created_at;
    record.updated_at = doc.updated_at;
    if record.state() == SessionState::Done {
        let manifest = AssetManifest::from_json(&fs::read_to_string(dir.join("manifest.json"))?)
            .map_err(|e| invalid(e.to_string()))?;
        record.asset = Some(AssetBundle {
            obj_text: fs::read_to_string(dir.join("mesh.obj"))?,
            mtl_text: fs::read_to_string(dir.join("material.mtl"))?,
            manifest,
            preview_png: record.selected.and_then(|i| record.candidates.get(i)).map(|c| c.png.clone()),
        });
    }
    Ok(record)
}
