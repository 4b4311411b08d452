#![allow(dead_code)]

use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::Router;
use meshforge_core::sketch::serialize_sketch;
use meshforge_core::{SketchCanvas, Stroke};
use meshforge_service::api::{router, AppState};
use meshforge_service::session::{SessionState, SessionStatus};
use meshforge_service::ServiceConfig;
use sha2::{Digest, Sha256};

/// Serves `app` on an ephemeral local port and returns its base URL.
pub async fn serve(app: Router) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    format!("http://{addr}")
}

pub struct Service {
    pub base: String,
    pub state: Arc<AppState>,
    pub client: reqwest::Client,
}

impl Service {
    pub async fn start(cfg: ServiceConfig) -> Self {
        let state = AppState::from_config(&cfg).unwrap();
        let base = serve(router(state.clone())).await;
        Self {
            base,
            state,
            client: reqwest::Client::new(),
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub async fn create(&self) -> String {
        let resp = self.client.post(self.url("/v1/sessions")).send().await.unwrap();
        assert_eq!(resp.status(), 201);
        let v: serde_json::Value = resp.json().await.unwrap();
        v["session_id"].as_str().unwrap().to_owned()
    }

    pub async fn put_sketch(&self, id: &str, doc: Vec<u8>) -> u16 {
        self.client
            .put(self.url(&format!("/v1/sessions/{id}/sketch")))
            .body(doc)
            .send()
            .await
            .unwrap()
            .status()
            .as_u16()
    }

    pub async fn post_json(&self, path: &str, body: serde_json::Value) -> u16 {
        self.client
            .post(self.url(path))
            .json(&body)
            .send()
            .await
            .unwrap()
            .status()
            .as_u16()
    }

    pub async fn generate(&self, id: &str, body: serde_json::Value) -> u16 {
        self.post_json(&format!("/v1/sessions/{id}/generate"), body).await
    }

    pub async fn select(&self, id: &str, index: usize) -> u16 {
        self.post_json(&format!("/v1/sessions/{id}/select"), serde_json::json!({ "index": index }))
            .await
    }

    pub async fn get(&self, path: &str) -> (u16, Vec<u8>) {
        let resp = self.client.get(self.url(path)).send().await.unwrap();
        let status = resp.status().as_u16();
        (status, resp.bytes().await.unwrap().to_vec())
    }

    pub async fn status(&self, id: &str) -> SessionStatus {
        let (code, body) = self.get(&format!("/v1/sessions/{id}")).await;
        assert_eq!(code, 200);
        serde_json::from_slice(&body).unwrap()
    }

    /// Polls until no work is in flight.
    pub async fn settle(&self, id: &str) -> SessionStatus {
        let deadline = Instant::now() + Duration::from_secs(60);
        loop {
            let s = self.status(id).await;
            if !s.state.is_in_flight() {
                return s;
            }
            assert!(Instant::now() < deadline, "session {id} stuck in {:?}", s.state);
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
    }

    /// Sketch, generate, select candidate 0 and wait for the result.
    pub async fn happy_path(&self, doc: Vec<u8>, prompt: &str, seed: u64) -> (String, SessionStatus) {
        let id = self.create().await;
        assert_eq!(self.put_sketch(&id, doc).await, 204);
        assert_eq!(self.generate(&id, serde_json::json!({ "prompt": prompt, "seed": seed })).await, 202);
        assert_eq!(self.settle(&id).await.state, SessionState::AwaitingSelection);
        assert_eq!(self.select(&id, 0).await, 202);
        let done = self.settle(&id).await;
        (id, done)
    }
}

/// Small and fast settings; the geometry is still a closed extrusion.
pub fn small_config() -> ServiceConfig {
    ServiceConfig {
        resolution: 20,
        raster_size: 96,
        candidates: 2,
        ..ServiceConfig::default()
    }
}

pub fn circle_canvas(radius: f64) -> SketchCanvas {
    let mut c = SketchCanvas::new(512, 512).unwrap();
    c.push(Stroke::circle([0.5, 0.5], radius, 48, 6.0, [0.1, 0.2, 0.8]).unwrap()).unwrap();
    c
}

pub fn circle_doc(radius: f64) -> Vec<u8> {
    serialize_sketch(&circle_canvas(radius))
}

pub fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
