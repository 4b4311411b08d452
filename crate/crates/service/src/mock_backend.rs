//! HTTP server speaking the backend wire protocol with the deterministic
//! mocks behind it. Lets the remote gateway path run without real models.

use axum::extract::{DefaultBodyLimit, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};

use meshforge_core::control::{remove_background, ControlRequest, ControlWeights, MattingConfig, RequestMetadata};
use meshforge_core::mock::{mock_candidates, silhouette_extrude, BinaryMask};

use crate::gateway::wire::*;
use crate::gateway::TOKEN_HEADER;

#[derive(Debug, Clone)]
pub struct MockBackendOptions {
    pub thickness: f64,
    /// Reject requests that do not carry this token.
    pub token: Option<String>,
}

impl Default for MockBackendOptions {
    fn default() -> Self {
        Self {
            thickness: meshforge_core::mock::DEFAULT_THICKNESS,
            token: None,
        }
    }
}

type Reply = Result<Response, (StatusCode, Json<ErrorBody>)>;

fn fail(status: StatusCode, error: impl Into<String>) -> (StatusCode, Json<ErrorBody>) {
    (status, Json(ErrorBody { error: error.into() }))
}

fn authorize(opts: &MockBackendOptions, headers: &HeaderMap) -> Result<(), (StatusCode, Json<ErrorBody>)> {
    match &opts.token {
        Some(t) if headers.get(TOKEN_HEADER).and_then(|v| v.to_str().ok()) != Some(t.as_str()) => {
            Err(fail(StatusCode::UNAUTHORIZED, "missing or wrong token"))
        }
        _ => Ok(()),
    }
}

pub fn mock_backend_router(opts: MockBackendOptions) -> Router {
    Router::new()
        .route("/v1/images", post(images))
        .route("/v1/reconstruct", post(reconstruct))
        .route("/v1/matte", post(matte))
        .layer(DefaultBodyLimit::max(64 << 20))
        .with_state(opts)
}

async fn images(State(opts): State<MockBackendOptions>, headers: HeaderMap, Json(req): Json<ImagesRequest>) -> Reply {
    authorize(&opts, &headers)?;
    let bad = |e: String| fail(StatusCode::UNPROCESSABLE_ENTITY, e);
    let control = ControlRequest {
        prompt: req.prompt.clone(),
        negative_prompt: Some(req.negative_prompt).filter(|s| !s.is_empty()),
        scribble: decode_gray(&req.scribble_png).map_err(bad)?,
        canny: decode_gray(&req.canny_png).map_err(bad)?,
        weights: ControlWeights {
            scribble: req.weights.scribble,
            canny: req.weights.canny,
            ip2p: req.weights.ip2p,
        },
        seed: req.seed,
        candidate_count: req.count,
        metadata: RequestMetadata {
            empty_prompt: req.prompt.trim().is_empty(),
            stroke_colors: Vec::new(),
        },
    };
    let images = tokio::task::spawn_blocking(move || {
        mock_candidates(&control)
            .into_iter()
            .map(|(_, img)| png_b64(img))
            .collect::<Vec<_>>()
    })
    .await
    .map_err(|e| fail(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(Json(ImagesResponse { images }).into_response())
}

async fn reconstruct(
    State(opts): State<MockBackendOptions>,
    headers: HeaderMap,
    Json(req): Json<ReconstructRequest>,
) -> Reply {
    authorize(&opts, &headers)?;
    let rgba = decode_rgba(&req.image_png).map_err(|e| fail(StatusCode::UNPROCESSABLE_ENTITY, e))?;
    let n = req.resolution;
    let thickness = opts.thickness;
    let field = tokio::task::spawn_blocking(move || {
        let mask = BinaryMask::from_fn(rgba.width() as usize, rgba.height() as usize, |x, y| {
            rgba.get_pixel(x as u32, y as u32)[3] > 0
        });
        silhouette_extrude(&mask, Some(&rgba), n, thickness).map(|f| encode_field(&f))
    })
    .await
    .map_err(|e| fail(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
    .map_err(|e| fail(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    Ok(Json(field).into_response())
}

async fn matte(State(opts): State<MockBackendOptions>, headers: HeaderMap, Json(req): Json<MatteRequest>) -> Reply {
    authorize(&opts, &headers)?;
    let rgb = decode_rgb(&req.image_png).map_err(|e| fail(StatusCode::UNPROCESSABLE_ENTITY, e))?;
    let rgba = remove_background(&rgb, &MattingConfig::default())
        .map_err(|e| fail(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    Ok(Json(MatteResponse {
        image_png: png_b64(rgba),
    })
    .into_response())
}
