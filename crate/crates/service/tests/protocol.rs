mod common;

use std::sync::Arc;
use std::time::Duration;

use axum::extract::Request;
use axum::middleware::{self, Next};
use axum::routing::post;
use axum::Router;
use common::*;
use meshforge_core::asset::AssetManifest;
use meshforge_service::gateway::Gateway;
use meshforge_service::mock_backend::{mock_backend_router, MockBackendOptions};
use meshforge_service::pipeline::{run_headless, Pipeline, PipelineSettings, Selection};
use meshforge_service::session::{GenerationParams, SessionState};
use meshforge_service::ServiceConfig;
use serde_json::json;

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

#[tokio::test]
async fn happy_path_delivers_assets_matching_the_manifest() {
    let svc = Service::start(small_config()).await;
    let id = svc.create().await;
    assert_eq!(svc.status(&id).await.state, SessionState::Created);
    assert_eq!(svc.put_sketch(&id, circle_doc(0.3)).await, 204);
    assert_eq!(svc.generate(&id, json!({ "prompt": "a red vase", "seed": 5 })).await, 202);
    let s = svc.settle(&id).await;
    assert_eq!(s.state, SessionState::AwaitingSelection);
    assert_eq!(s.candidate_count, 2);

    for k in 0..2 {
        let (code, png) = svc.get(&format!("/v1/sessions/{id}/candidates/{k}")).await;
        assert_eq!(code, 200);
        assert!(png.starts_with(PNG_MAGIC));
    }
    assert_eq!(svc.get(&format!("/v1/sessions/{id}/candidates/2")).await.0, 404);
    assert_eq!(svc.get(&format!("/v1/sessions/{id}/candidates/x")).await.0, 404);
    // Index equal to the candidate count does not exist.
    assert_eq!(svc.select(&id, 2).await, 404);
    assert_eq!(svc.status(&id).await.state, SessionState::AwaitingSelection);

    assert_eq!(svc.select(&id, 1).await, 202);
    let done = svc.settle(&id).await;
    assert_eq!(done.state, SessionState::Done, "{:?}", done.error);
    assert_eq!(done.selected, Some(1));

    let (code, obj) = svc.get(&format!("/v1/sessions/{id}/asset/mesh.obj")).await;
    assert_eq!(code, 200);
    let (_, mtl) = svc.get(&format!("/v1/sessions/{id}/asset/material.mtl")).await;
    let (_, manifest) = svc.get(&format!("/v1/sessions/{id}/asset/manifest")).await;
    let manifest = AssetManifest::from_json(std::str::from_utf8(&manifest).unwrap()).unwrap();
    assert_eq!(manifest.sha256.obj, sha256(&obj));
    assert_eq!(manifest.sha256.mtl, sha256(&mtl));
    assert_eq!(done.manifest_sha256.as_deref(), Some(manifest.sha256.obj.as_str()));
    assert_eq!((manifest.session_id.as_str(), manifest.prompt.as_str(), manifest.seed), (id.as_str(), "a red vase", 5));
    let text = String::from_utf8(obj.clone()).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), manifest.counts.vertices);
    assert_eq!(text.lines().filter(|l| l.starts_with("f ")).count(), manifest.counts.triangles);

    let t = manifest.timings_ms;
    assert!(t.stages().iter().all(|&v| v >= 0.0));
    assert!(t.total >= t.stages().iter().sum::<f64>() - 5.0, "{t:?}");
    assert!(t.extract > 0.0);

    // Done is terminal and its bytes never change.
    assert_eq!(svc.put_sketch(&id, circle_doc(0.2)).await, 409);
    assert_eq!(svc.generate(&id, json!({ "prompt": "x" })).await, 409);
    assert_eq!(svc.select(&id, 0).await, 409);
    assert_eq!(svc.get(&format!("/v1/sessions/{id}/asset/mesh.obj")).await.1, obj);
    assert_eq!(svc.get(&format!("/v1/sessions/{id}/asset/material.mtl")).await.1, mtl);
}

#[tokio::test]
async fn illegal_requests_are_refused() {
    let svc = Service::start(small_config()).await;
    let id = svc.create().await;

    assert_eq!(svc.generate(&id, json!({ "prompt": "p" })).await, 409);
    assert_eq!(svc.select(&id, 0).await, 409);
    assert_eq!(svc.get(&format!("/v1/sessions/{id}/asset/manifest")).await.0, 409);
    assert_eq!(svc.get(&format!("/v1/sessions/{id}/candidates/0")).await.0, 404);

    for path in ["", "/candidates/0", "/asset/mesh.obj", "/asset/material.mtl", "/asset/manifest"] {
        assert_eq!(svc.get(&format!("/v1/sessions/nope{path}")).await.0, 404, "{path}");
    }
    assert_eq!(svc.put_sketch("nope", circle_doc(0.3)).await, 404);
    assert_eq!(svc.generate("nope", json!({ "prompt": "p" })).await, 404);
    assert_eq!(svc.select("nope", 0).await, 404);

    assert_eq!(svc.put_sketch(&id, b"{not json".to_vec()).await, 422);
    assert_eq!(svc.put_sketch(&id, br#"{"version":2,"width_px":64,"height_px":64,"strokes":[]}"#.to_vec()).await, 422);
    let blank = br#"{"version":1,"width_px":64,"height_px":64,"strokes":[]}"#.to_vec();
    assert_eq!(svc.put_sketch(&id, blank).await, 204);
    assert_eq!(svc.generate(&id, json!({ "prompt": "p" })).await, 422, "blank sketch");

    assert_eq!(svc.put_sketch(&id, circle_doc(0.3)).await, 204);
    for body in [
        json!({}),
        json!({ "prompt": 3 }),
        json!({ "prompt": "p", "candidates": 0 }),
        json!({ "prompt": "p", "candidates": 17 }),
        json!({ "prompt": "p", "seed": -1 }),
        json!({ "prompt": "p", "colour": "red" }),
    ] {
        assert_eq!(svc.generate(&id, body.clone()).await, 422, "{body}");
    }
    assert_eq!(svc.status(&id).await.state, SessionState::Sketched);

    assert_eq!(svc.generate(&id, json!({ "prompt": "", "candidates": 1 })).await, 202);
    assert_eq!(svc.settle(&id).await.state, SessionState::AwaitingSelection);
    assert_eq!(svc.post_json(&format!("/v1/sessions/{id}/select"), json!({ "index": "0" })).await, 422);
    assert_eq!(svc.post_json(&format!("/v1/sessions/{id}/select"), json!({ "index": -1 })).await, 422);
    assert_eq!(svc.generate(&id, json!({ "prompt": "again" })).await, 409);

    // Re-sketching from AwaitingSelection discards the candidates.
    assert_eq!(svc.put_sketch(&id, circle_doc(0.25)).await, 204);
    let s = svc.status(&id).await;
    assert_eq!((s.state, s.candidate_count), (SessionState::Sketched, 0));
    assert_eq!(svc.get(&format!("/v1/sessions/{id}/candidates/0")).await.0, 404);
}

async fn delay(req: Request, next: Next) -> axum::response::Response {
    tokio::time::sleep(Duration::from_millis(400)).await;
    next.run(req).await
}

#[tokio::test]
async fn requests_during_work_in_flight_conflict() {
    let slow = serve(mock_backend_router(MockBackendOptions::default()).layer(middleware::from_fn(delay))).await;
    let svc = Service::start(ServiceConfig {
        image_backend: slow.clone(),
        recon_backend: slow,
        ..small_config()
    })
    .await;
    let id = svc.create().await;
    assert_eq!(svc.put_sketch(&id, circle_doc(0.3)).await, 204);
    assert_eq!(svc.generate(&id, json!({ "prompt": "p" })).await, 202);
    assert_eq!(svc.status(&id).await.state, SessionState::InferringImages);
    assert_eq!(svc.generate(&id, json!({ "prompt": "p" })).await, 409);
    assert_eq!(svc.put_sketch(&id, circle_doc(0.2)).await, 409);
    assert_eq!(svc.select(&id, 0).await, 409);
    assert_eq!(svc.settle(&id).await.state, SessionState::AwaitingSelection);

    assert_eq!(svc.select(&id, 0).await, 202);
    assert_eq!(svc.status(&id).await.state, SessionState::Reconstructing);
    assert_eq!(svc.select(&id, 1).await, 409);
    assert_eq!(svc.put_sketch(&id, circle_doc(0.2)).await, 409);
    assert_eq!(svc.get(&format!("/v1/sessions/{id}/asset/mesh.obj")).await.0, 409);
    // Candidates stay readable while reconstructing.
    assert_eq!(svc.get(&format!("/v1/sessions/{id}/candidates/1")).await.0, 200);
    let done = svc.settle(&id).await;
    assert_eq!(done.state, SessionState::Done, "{:?}", done.error);
    assert_eq!(svc.get(&format!("/v1/sessions/{id}/asset/mesh.obj")).await.0, 200);
}

#[tokio::test]
async fn reconstruction_timeout_fails_but_keeps_candidates() {
    let stalled = serve(Router::new().route(
        "/v1/reconstruct",
        post(|| async {
            tokio::time::sleep(Duration::from_secs(30)).await;
            "{}"
        }),
    ))
    .await;
    let svc = Service::start(ServiceConfig {
        recon_backend: stalled,
        backend_timeout_ms: 300,
        retry_limit: 0,
        ..small_config()
    })
    .await;
    let id = svc.create().await;
    svc.put_sketch(&id, circle_doc(0.3)).await;
    svc.generate(&id, json!({ "prompt": "p" })).await;
    svc.settle(&id).await;
    assert_eq!(svc.select(&id, 0).await, 202);
    let failed = svc.settle(&id).await;
    assert_eq!(failed.state, SessionState::Failed);
    let err = failed.error.unwrap();
    assert_eq!(err.stage, "reconstruct");
    assert!(err.backend_unavailable);
    assert_eq!(failed.candidate_count, 2);
    assert_eq!(svc.get(&format!("/v1/sessions/{id}/candidates/0")).await.0, 200);
    assert_eq!(svc.get(&format!("/v1/sessions/{id}/asset/mesh.obj")).await.0, 503);
    assert_eq!(svc.get(&format!("/v1/sessions/{id}/asset/manifest")).await.0, 503);

    // A failed session can be re-sketched and retried.
    assert_eq!(svc.put_sketch(&id, circle_doc(0.3)).await, 204);
    assert_eq!(svc.status(&id).await.error, None);
}

#[tokio::test]
async fn unreachable_image_backend_fails_generation() {
    let dead = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        format!("http://{}", l.local_addr().unwrap())
    };
    let svc = Service::start(ServiceConfig {
        image_backend: dead,
        backend_timeout_ms: 500,
        retry_limit: 1,
        ..small_config()
    })
    .await;
    let id = svc.create().await;
    svc.put_sketch(&id, circle_doc(0.3)).await;
    assert_eq!(svc.generate(&id, json!({ "prompt": "p" })).await, 202);
    let s = svc.settle(&id).await;
    assert_eq!(s.state, SessionState::Failed);
    assert_eq!(s.error.as_ref().unwrap().stage, "image_infer");
    assert_eq!(s.candidate_count, 0);
    assert_eq!(svc.get(&format!("/v1/sessions/{id}/asset/manifest")).await.0, 503);
}

#[tokio::test]
async fn concurrent_sessions_are_isolated() {
    let cfg = small_config();
    let svc = Arc::new(Service::start(cfg.clone()).await);
    let inputs: Vec<(f64, String, u64)> = (0..8)
        .map(|i| (0.18 + 0.03 * i as f64, format!("object {i}"), 100 + i as u64))
        .collect();

    let tasks: Vec<_> = inputs
        .iter()
        .cloned()
        .map(|(radius, prompt, seed)| {
            let svc = svc.clone();
            tokio::spawn(async move {
                let (id, done) = svc.happy_path(circle_doc(radius), &prompt, seed).await;
                assert_eq!(done.state, SessionState::Done, "{:?}", done.error);
                let obj = svc.get(&format!("/v1/sessions/{id}/asset/mesh.obj")).await.1;
                let manifest = svc.get(&format!("/v1/sessions/{id}/asset/manifest")).await.1;
                (id, obj, AssetManifest::from_json(std::str::from_utf8(&manifest).unwrap()).unwrap())
            })
        })
        .collect();
    let mut results = Vec::new();
    for t in tasks {
        results.push(t.await.unwrap());
    }

    // Each session's asset equals a solo run over the same inputs.
    let pipeline = Pipeline::new(Arc::new(Gateway::from_config(&cfg).unwrap()), PipelineSettings::from(&cfg));
    let mut digests = Vec::new();
    for ((radius, prompt, seed), (id, obj, manifest)) in inputs.into_iter().zip(results) {
        let params = GenerationParams {
            prompt: prompt.clone(),
            seed,
            candidates: cfg.candidates,
        };
        let solo = run_headless(&pipeline, "solo", circle_canvas(radius), params, Selection::Auto).await;
        let expected = solo.asset.unwrap();
        assert_eq!(sha256(&obj), sha256(expected.obj_text.as_bytes()), "{prompt}");
        assert_eq!(manifest.sha256, expected.manifest.sha256);
        assert_eq!((manifest.session_id, manifest.prompt, manifest.seed), (id, prompt, seed));
        digests.push(manifest.sha256.obj);
    }
    digests.sort();
    digests.dedup();
    assert_eq!(digests.len(), 8);
}

#[tokio::test]
async fn shared_token_is_enforced() {
    let svc = Service::start(ServiceConfig {
        shared_token: Some("s3cret".into()),
        ..small_config()
    })
    .await;
    let resp = svc.client.post(svc.url("/v1/sessions")).send().await.unwrap();
    assert_eq!(resp.status(), 401);
    let resp = svc
        .client
        .post(svc.url("/v1/sessions"))
        .header("x-meshforge-token", "s3cret")
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 201);
}

#[tokio::test]
async fn persisted_sessions_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ServiceConfig {
        persistence_dir: Some(dir.path().to_owned()),
        ..small_config()
    };
    let (id, obj, candidate) = {
        let svc = Service::start(cfg.clone()).await;
        let (id, done) = svc.happy_path(circle_doc(0.3), "kept", 9).await;
        assert_eq!(done.state, SessionState::Done);
        let obj = svc.get(&format!("/v1/sessions/{id}/asset/mesh.obj")).await.1;
        let candidate = svc.get(&format!("/v1/sessions/{id}/candidates/1")).await.1;
        (id, obj, candidate)
    };
    assert_eq!(std::fs::read(dir.path().join(&id).join("mesh.obj")).unwrap(), obj);

    let svc = Service::start(cfg).await;
    let s = svc.status(&id).await;
    assert_eq!((s.state, s.candidate_count, s.seed), (SessionState::Done, 2, Some(9)));
    assert_eq!(svc.get(&format!("/v1/sessions/{id}/asset/mesh.obj")).await.1, obj);
    assert_eq!(svc.get(&format!("/v1/sessions/{id}/candidates/1")).await.1, candidate);
    let (code, manifest) = svc.get(&format!("/v1/sessions/{id}/asset/manifest")).await;
    assert_eq!(code, 200);
    let manifest = AssetManifest::from_json(std::str::from_utf8(&manifest).unwrap()).unwrap();
    assert_eq!(manifest.sha256.obj, sha256(&obj));
}
