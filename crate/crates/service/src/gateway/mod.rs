//! Uniform client over image, reconstruction and matting backends, either
//! remote HTTP services or the built-in deterministic mocks.

pub mod wire;

use std::sync::Arc;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use image::{RgbImage, RgbaImage};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;
use tokio::sync::Semaphore;

use meshforge_core::control::{binarize_alpha, remove_background, CandidateImage, ControlError, ControlRequest, MattingConfig};
use meshforge_core::mock::{
    mock_candidates, silhouette_extrude, BinaryMask, ExtrudeError, MOCK_IMAGE_BACKEND_ID, MOCK_RECONSTRUCT_BACKEND_ID,
};
use meshforge_core::ReconstructionField;

use crate::config::{ServiceConfig, MAX_RETRY_LIMIT};
use wire::*;

/// Fixed pause between attempts.
pub const RETRY_BACKOFF: Duration = Duration::from_millis(250);
pub const TOKEN_HEADER: &str = "x-meshforge-token";
pub const MOCK_DESIGNATOR: &str = "mock";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Image,
    Reconstruct,
    Matting,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendTarget {
    Mock,
    Remote(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum GatewayError {
    #[error("{kind:?} backend did not answer after {attempts} attempt(s)")]
    BackendTimeout { kind: BackendKind, attempts: u32 },
    #[error("{kind:?} backend protocol error: {message}")]
    BackendProtocolError { kind: BackendKind, message: String },
    #[error("{kind:?} backend rejected request ({status}): {message}")]
    BackendRejected { kind: BackendKind, status: u16, message: String },
    #[error("image has no foreground")]
    EmptyForeground,
    #[error("matting backend unavailable: {0}")]
    MattingBackendUnavailable(String),
    #[error("invalid endpoint: {0}")]
    InvalidEndpoint(String),
    #[error("{0}")]
    Internal(String),
}

impl GatewayError {
    /// Whether the failure lies with an unreachable or misbehaving backend
    /// rather than with the request content.
    pub fn is_backend_failure(&self) -> bool {
        matches!(
            self,
            Self::BackendTimeout { .. }
                | Self::BackendProtocolError { .. }
                | Self::BackendRejected { .. }
                | Self::MattingBackendUnavailable(_)
        )
    }

    fn retryable(&self) -> bool {
        match self {
            Self::BackendTimeout { .. } => true,
            Self::BackendRejected { status, .. } => *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendEndpoint {
    pub kind: BackendKind,
    pub target: BackendTarget,
    pub timeout: Duration,
    pub retry_limit: u32,
}

impl BackendEndpoint {
    /// `spec` is either `mock` or an `http://` / `https://` base URL.
    pub fn new(kind: BackendKind, spec: &str, timeout: Duration, retry_limit: u32) -> Result<Self, GatewayError> {
        if timeout.is_zero() {
            return Err(GatewayError::InvalidEndpoint("timeout must be > 0".into()));
        }
        if retry_limit > MAX_RETRY_LIMIT {
            return Err(GatewayError::InvalidEndpoint(format!("retry_limit {retry_limit} > {MAX_RETRY_LIMIT}")));
        }
        let target = if spec == MOCK_DESIGNATOR {
            if kind == BackendKind::Matting {
                return Err(GatewayError::InvalidEndpoint("matting has no mock; omit it to use built-in matting".into()));
            }
            BackendTarget::Mock
        } else if spec.starts_with("http://") || spec.starts_with("https://") {
            BackendTarget::Remote(spec.trim_end_matches('/').to_owned())
        } else {
            return Err(GatewayError::InvalidEndpoint(format!("`{spec}` is neither `mock` nor an HTTP URL")));
        };
        Ok(Self {
            kind,
            target,
            timeout,
            retry_limit,
        })
    }

    pub fn backend_id(&self) -> String {
        match (&self.target, self.kind) {
            (BackendTarget::Mock, BackendKind::Image) => MOCK_IMAGE_BACKEND_ID.into(),
            (BackendTarget::Mock, _) => MOCK_RECONSTRUCT_BACKEND_ID.into(),
            (BackendTarget::Remote(url), _) => url.clone(),
        }
    }
}

/// A raw inference result before background removal.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCandidate {
    pub seed: u64,
    pub image: RgbImage,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reconstruction {
    Field(ReconstructionField),
    /// Finished OBJ text from a backend that meshes internally.
    Mesh(String),
}

struct Remote {
    endpoint: BackendEndpoint,
    inflight: Arc<Semaphore>,
}

pub struct Gateway {
    image: Remote,
    reconstruct: Remote,
    matting: Option<Remote>,
    matting_fallback: bool,
    matting_cfg: MattingConfig,
    thickness: f64,
    token: Option<String>,
    client: reqwest::Client,
}

#[derive(Debug, Clone)]
pub struct GatewayOptions {
    pub max_inflight: usize,
    pub matting_fallback: bool,
    pub matting: MattingConfig,
    pub thickness: f64,
    pub token: Option<String>,
}

impl Default for GatewayOptions {
    fn default() -> Self {
        Self {
            max_inflight: 4,
            matting_fallback: true,
            matting: MattingConfig::default(),
            thickness: meshforge_core::mock::DEFAULT_THICKNESS,
            token: None,
        }
    }
}

impl Gateway {
    pub fn new(
        image: BackendEndpoint,
        reconstruct: BackendEndpoint,
        matting: Option<BackendEndpoint>,
        opts: GatewayOptions,
    ) -> Result<Self, GatewayError> {
        let expect = |ep: &BackendEndpoint, kind: BackendKind| {
            if ep.kind == kind {
                Ok(())
            } else {
                Err(GatewayError::InvalidEndpoint(format!("expected a {kind:?} endpoint, got {:?}", ep.kind)))
            }
        };
        expect(&image, BackendKind::Image)?;
        expect(&reconstruct, BackendKind::Reconstruct)?;
        if let Some(m) = &matting {
            expect(m, BackendKind::Matting)?;
        }
        let wrap = |endpoint| Remote {
            endpoint,
            inflight: Arc::new(Semaphore::new(opts.max_inflight.max(1))),
        };
        let client = reqwest::Client::builder()
            .build()
            .map_err(|e| GatewayError::Internal(e.to_string()))?;
        Ok(Self {
            image: wrap(image),
            reconstruct: wrap(reconstruct),
            matting: matting.map(wrap),
            matting_fallback: opts.matting_fallback,
            matting_cfg: opts.matting,
            thickness: opts.thickness,
            token: opts.token,
            client,
        })
    }

    pub fn from_config(cfg: &ServiceConfig) -> Result<Self, GatewayError> {
        let ep = |kind, spec: &str| BackendEndpoint::new(kind, spec, cfg.backend_timeout(), cfg.retry_limit);
        Self::new(
            ep(BackendKind::Image, &cfg.image_backend)?,
            ep(BackendKind::Reconstruct, &cfg.recon_backend)?,
            cfg.matting_backend.as_deref().map(|s| ep(BackendKind::Matting, s)).transpose()?,
            GatewayOptions {
                max_inflight: cfg.max_inflight,
                matting_fallback: cfg.matting_fallback,
                matting: MattingConfig::default(),
                thickness: cfg.thickness,
                token: cfg.shared_token.clone(),
            },
        )
    }

    pub fn image_backend_id(&self) -> String {
        self.image.endpoint.backend_id()
    }

    pub fn reconstruct_backend_id(&self) -> String {
        self.reconstruct.endpoint.backend_id()
    }

    /// Runs image inference, returning exactly `req.candidate_count` images
    /// seeded `req.seed + i`.
    pub async fn infer_candidates(&self, req: &ControlRequest) -> Result<Vec<RawCandidate>, GatewayError> {
        match &self.image.endpoint.target {
            BackendTarget::Mock => {
                let req = req.clone();
                let out = blocking(move || mock_candidates(&req)).await?;
                Ok(out.into_iter().map(|(seed, image)| RawCandidate { seed, image }).collect())
            }
            BackendTarget::Remote(url) => {
                let body = ImagesRequest {
                    prompt: req.prompt.clone(),
                    negative_prompt: req.negative_prompt.clone().unwrap_or_default(),
                    weights: WireWeights {
                        scribble: req.weights.scribble,
                        canny: req.weights.canny,
                        ip2p: req.weights.ip2p,
                    },
                    seed: req.seed,
                    count: req.candidate_count,
                    scribble_png: png_b64(req.scribble.clone()),
                    canny_png: png_b64(req.canny.clone()),
                };
                let resp: ImagesResponse = self.post(&self.image, url, "v1/images", &body).await?;
                let protocol = |message: String| GatewayError::BackendProtocolError {
                    kind: BackendKind::Image,
                    message,
                };
                if resp.images.len() != req.candidate_count as usize {
                    return Err(protocol(format!(
                        "expected {} images, got {}",
                        req.candidate_count,
                        resp.images.len()
                    )));
                }
                resp.images
                    .iter()
                    .enumerate()
                    .map(|(i, b64)| {
                        Ok(RawCandidate {
                            seed: req.seed.wrapping_add(i as u64),
                            image: decode_rgb(b64).map_err(|e| protocol(format!("image {i}: {e}")))?,
                        })
                    })
                    .collect()
            }
        }
    }

    /// Cuts the object out of `raw`: external matting service when configured,
    /// built-in border flood fill otherwise (or as fallback).
    pub async fn remove_background(&self, raw: &RawCandidate) -> Result<CandidateImage, GatewayError> {
        let rgba = match &self.matting {
            Some(remote) => {
                let BackendTarget::Remote(url) = &remote.endpoint.target else {
                    unreachable!("matting endpoints are always remote")
                };
                match self.matte_remote(remote, url, &raw.image).await {
                    Ok(img) => img,
                    Err(e) if self.matting_fallback => {
                        tracing::warn!("matting backend failed ({e}); using built-in matting");
                        self.matte_builtin(&raw.image).await?
                    }
                    Err(e) => return Err(GatewayError::MattingBackendUnavailable(e.to_string())),
                }
            }
            None => self.matte_builtin(&raw.image).await?,
        };
        CandidateImage::new(rgba, raw.seed, self.image_backend_id()).map_err(|_| GatewayError::EmptyForeground)
    }

    async fn matte_builtin(&self, image: &RgbImage) -> Result<RgbaImage, GatewayError> {
        let image = image.clone();
        let cfg = self.matting_cfg;
        blocking(move || remove_background(&image, &cfg)).await?.map_err(|e| match e {
            ControlError::NoForeground | ControlError::EmptyImage => GatewayError::EmptyForeground,
            other => GatewayError::Internal(other.to_string()),
        })
    }

    async fn matte_remote(&self, remote: &Remote, url: &str, image: &RgbImage) -> Result<RgbaImage, GatewayError> {
        let body = MatteRequest {
            image_png: png_b64(image.clone()),
        };
        let resp: MatteResponse = self.post(remote, url, "v1/matte", &body).await?;
        let protocol = |message: String| GatewayError::BackendProtocolError {
            kind: BackendKind::Matting,
            message,
        };
        let mut rgba = decode_rgba(&resp.image_png).map_err(protocol)?;
        if rgba.dimensions() != image.dimensions() {
            return Err(protocol(format!(
                "matte is {:?}, input was {:?}",
                rgba.dimensions(),
                image.dimensions()
            )));
        }
        binarize_alpha(&mut rgba);
        Ok(rgba)
    }

    /// Reconstructs a field (or a finished mesh) from a matted candidate.
    pub async fn reconstruct(&self, candidate: &CandidateImage, n: usize) -> Result<Reconstruction, GatewayError> {
        meshforge_core::field::check_resolution(n).map_err(|e| GatewayError::Internal(e.to_string()))?;
        match &self.reconstruct.endpoint.target {
            BackendTarget::Mock => {
                let pixels = candidate.pixels().clone();
                let thickness = self.thickness;
                let field = blocking(move || {
                    let mask = BinaryMask::from_fn(pixels.width() as usize, pixels.height() as usize, |x, y| {
                        pixels.get_pixel(x as u32, y as u32)[3] > 0
                    });
                    silhouette_extrude(&mask, Some(&pixels), n, thickness)
                })
                .await?
                .map_err(|e| match e {
                    ExtrudeError::EmptyForeground => GatewayError::EmptyForeground,
                    other => GatewayError::Internal(other.to_string()),
                })?;
                Ok(Reconstruction::Field(field))
            }
            BackendTarget::Remote(url) => {
                let body = ReconstructRequest {
                    image_png: png_b64(candidate.pixels().clone()),
                    resolution: n,
                };
                let resp: ReconstructResponse = self.post(&self.reconstruct, url, "v1/reconstruct", &body).await?;
                let protocol = |message: String| GatewayError::BackendProtocolError {
                    kind: BackendKind::Reconstruct,
                    message,
                };
                match resp {
                    ReconstructResponse::Fields {
                        n: got,
                        sdf,
                        color,
                        alpha,
                        beta_x,
                        beta_y,
                        beta_z,
                        gamma,
                    } => {
                        let field = blocking(move || {
                            decode_field(n, got, &sdf, &color, &alpha, [&beta_x, &beta_y, &beta_z], &gamma)
                        })
                        .await?
                        .map_err(protocol)?;
                        Ok(Reconstruction::Field(field))
                    }
                    ReconstructResponse::Mesh { obj } => {
                        let bytes = B64.decode(obj).map_err(|e| protocol(format!("obj: bad base64: {e}")))?;
                        let text = String::from_utf8(bytes).map_err(|_| protocol("obj is not UTF-8".into()))?;
                        Ok(Reconstruction::Mesh(text))
                    }
                }
            }
        }
    }

    async fn post<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        remote: &Remote,
        base: &str,
        path: &str,
        body: &Req,
    ) -> Result<Resp, GatewayError> {
        let ep = &remote.endpoint;
        let _permit = remote
            .inflight
            .acquire()
            .await
            .map_err(|e| GatewayError::Internal(e.to_string()))?;
        let url = format!("{base}/{path}");
        let attempts = ep.retry_limit + 1;
        let mut last = None;
        for attempt in 0..attempts {
            if attempt > 0 {
                tokio::time::sleep(RETRY_BACKOFF).await;
            }
            match self.attempt(ep, &url, body).await {
                Ok(v) => return Ok(v),
                Err(e) if e.retryable() => {
                    tracing::debug!("{url} attempt {} failed: {e}", attempt + 1);
                    last = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(match last {
            Some(GatewayError::BackendTimeout { kind, .. }) => GatewayError::BackendTimeout { kind, attempts },
            Some(other) => other,
            None => unreachable!("at least one attempt is made"),
        })
    }

    async fn attempt<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        ep: &BackendEndpoint,
        url: &str,
        body: &Req,
    ) -> Result<Resp, GatewayError> {
        let kind = ep.kind;
        let mut request = self.client.post(url).json(body);
        if let Some(token) = &self.token {
            request = request.header(TOKEN_HEADER, token);
        }
        let exchange = async {
            let resp = request.send().await?;
            let status = resp.status();
            let bytes = resp.bytes().await?;
            Ok::<_, reqwest::Error>((status, bytes))
        };
        let (status, bytes) = match tokio::time::timeout(ep.timeout, exchange).await {
            // Unreachable hosts, resets and stalls all look the same to callers.
            Err(_) | Ok(Err(_)) => return Err(GatewayError::BackendTimeout { kind, attempts: 1 }),
            Ok(Ok(v)) => v,
        };
        if !status.is_success() {
            let message = serde_json::from_slice::<ErrorBody>(&bytes)
                .map(|b| b.error)
                .unwrap_or_else(|_| String::from_utf8_lossy(&bytes).chars().take(200).collect());
            return Err(GatewayError::BackendRejected {
                kind,
                status: status.as_u16(),
                message,
            });
        }
        serde_json::from_slice(&bytes).map_err(|e| GatewayError::BackendProtocolError {
            kind,
            message: format!("malformed response: {e}"),
        })
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, GatewayError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| GatewayError::Internal(format!("worker failed: {e}")))
}
