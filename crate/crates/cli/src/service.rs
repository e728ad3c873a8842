//! Stateless HTTP API for the interactive loop.

use std::path::{Component, Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sqseg_core::nn::{tensor_to_bytes, Tensor};
use sqseg_core::pipeline::io::decode_rgb_png;
use sqseg_core::pipeline::Palette;
use sqseg_core::signal::Squiggle;
use sqseg_core::Error;
use tokio::sync::Semaphore;
use tracing::{error, info};
use uuid::Uuid;

use crate::export::export_geojson;
use crate::rle::{rle_decode, rle_encode, RleMask};
use crate::segment::{unknown_class, Segmenter};

pub const DEFAULT_MAX_IMAGE_BYTES: usize = 16 << 20;

pub struct AppState {
    pub segmenter: Segmenter,
    /// Root for `{"path": ...}` image references; paths are refused
    /// when unset.
    pub data_dir: Option<PathBuf>,
    pub max_image_bytes: usize,
    pub workers: Semaphore,
}

impl AppState {
    pub fn new(segmenter: Segmenter, workers: usize) -> Self {
        AppState {
            segmenter,
            data_dir: None,
            max_image_bytes: DEFAULT_MAX_IMAGE_BYTES,
            workers: Semaphore::new(workers.max(1)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ImageRef {
    Base64(String),
    Path(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentRequest {
    pub image: ImageRef,
    pub squiggles: Vec<Squiggle>,
    #[serde(default)]
    pub classes: Vec<u8>,
    #[serde(default)]
    pub model_id: Option<String>,
    /// Include per-class min/mean/max probabilities.
    #[serde(default)]
    pub return_probs: bool,
    /// Also include each class's full map as a base64 raw tensor.
    #[serde(default)]
    pub return_tensors: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub class_id: u8,
    pub min: f32,
    pub mean: f32,
    pub max: f32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tensor: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub decode: f64,
    pub signal: f64,
    pub inference: f64,
    pub assembly: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentResponse {
    pub model_id: String,
    pub label_mask: RleMask,
    pub palette: Palette,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_class: Option<Vec<ClassSummary>>,
    pub timing_ms: Timing,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportRequest {
    pub label_mask: RleMask,
    #[serde(default)]
    pub squiggles: Vec<Squiggle>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
    pub field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
            field: None,
        }
    }

    fn bad(field: &str, message: impl Into<String>) -> Self {
        ApiError {
            field: Some(field.into()),
            ..ApiError::new(StatusCode::BAD_REQUEST, message)
        }
    }

    /// Hides the detail from the client and logs it under a fresh id.
    fn internal(err: impl std::fmt::Display) -> Self {
        let id = Uuid::new_v4();
        error!(%id, error = %err, "internal error");
        ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            format!("internal error {id}"),
        )
    }

    fn from_core(err: Error) -> Self {
        match err {
            Error::ClassNotPresent(c) => ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                format!("invalid class id {c}"),
            ),
            Error::InvalidArgument(_) | Error::ShapeMismatch(_) | Error::Codec(_) => {
                ApiError::new(StatusCode::BAD_REQUEST, err.to_string())
            }
            other => ApiError::internal(other),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.message });
        if let Some(f) = self.field {
            body["field"] = json!(f);
        }
        (self.status, Json(body)).into_response()
    }
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    let mut de = serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        ApiError {
            field: (field != ".").then_some(field),
            ..ApiError::new(StatusCode::BAD_REQUEST, inner.to_string())
        }
    })
}

fn too_large(size: usize, cap: usize) -> ApiError {
    ApiError::new(
        StatusCode::PAYLOAD_TOO_LARGE,
        format!("image is {size} bytes, limit is {cap}"),
    )
}

fn resolve(data_dir: Option<&Path>, rel: &Path) -> Result<PathBuf, ApiError> {
    let root =
        data_dir.ok_or_else(|| ApiError::bad("image.path", "server-side paths are disabled"))?;
    if rel
        .components()
        .any(|c| !matches!(c, Component::Normal(_) | Component::CurDir))
    {
        return Err(ApiError::bad(
            "image.path",
            "path must stay inside the data directory",
        ));
    }
    Ok(root.join(rel))
}

async fn image_bytes(state: &AppState, image: &ImageRef) -> Result<Vec<u8>, ApiError> {
    let cap = state.max_image_bytes;
    match image {
        ImageRef::Base64(data) => {
            let data = data.trim();
            if data.len() / 4 * 3 > cap + 3 {
                return Err(too_large(data.len() / 4 * 3, cap));
            }
            let bytes = B64
                .decode(data)
                .map_err(|e| ApiError::bad("image.base64", format!("invalid base64: {e}")))?;
            if bytes.len() > cap {
                return Err(too_large(bytes.len(), cap));
            }
            Ok(bytes)
        }
        ImageRef::Path(rel) => {
            let path = resolve(state.data_dir.as_deref(), rel)?;
            let meta = tokio::fs::metadata(&path).await.map_err(|_| {
                ApiError::bad("image.path", format!("no such image {}", rel.display()))
            })?;
            if meta.len() as usize > cap {
                return Err(too_large(meta.len() as usize, cap));
            }
            tokio::fs::read(&path).await.map_err(ApiError::internal)
        }
    }
}

fn summarize(
    maps: &[sqseg_core::pipeline::ClassProbMap],
    tensors: bool,
) -> Result<Vec<ClassSummary>, Error> {
    maps.iter()
        .map(|m| {
            let (min, mean, max) = m.summary();
            let tensor = if tensors {
                let t = Tensor::from_vec(&[m.height, m.width], m.probs.clone())?;
                Some(B64.encode(tensor_to_bytes(&t)))
            } else {
                None
            };
            Ok(ClassSummary {
                class_id: m.class_id,
                min,
                mean,
                max,
                tensor,
            })
        })
        .collect()
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({ "status": "ok", "model_id": state.segmenter.model.id() }))
}

async fn palette(State(state): State<Arc<AppState>>) -> Json<Palette> {
    Json(state.segmenter.palette.clone())
}

async fn segment(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> Result<Json<SegmentResponse>, ApiError> {
    let started = Instant::now();
    let req: SegmentRequest = parse(&body)?;
    if req.squiggles.is_empty() {
        return Err(ApiError::bad(
            "squiggles",
            "at least one squiggle is required",
        ));
    }
    let model_id = state.segmenter.model.id().to_owned();
    if let Some(wanted) = req.model_id.as_deref().filter(|&m| m != model_id) {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("unknown model_id {wanted:?}; this server runs {model_id:?}"),
        ));
    }
    if let Some(c) = unknown_class(&state.segmenter.palette, &req.squiggles, &req.classes) {
        return Err(ApiError::from_core(Error::ClassNotPresent(c)));
    }
    let bytes = image_bytes(&state, &req.image).await?;
    let image = decode_rgb_png(&bytes).map_err(|e| ApiError::bad("image", e.to_string()))?;
    let decode_ms = started.elapsed().as_secs_f64() * 1e3;

    let _permit = state.workers.acquire().await.map_err(ApiError::internal)?;
    let worker = Arc::clone(&state);
    let out = tokio::task::spawn_blocking(move || {
        worker
            .segmenter
            .segment(&image, &req.squiggles, &req.classes)
            .map(|out| {
                (
                    out,
                    req.return_probs || req.return_tensors,
                    req.return_tensors,
                )
            })
    })
    .await
    .map_err(ApiError::internal)?;
    let (out, probs, tensors) = out.map_err(ApiError::from_core)?;

    let per_class = if probs {
        Some(summarize(&out.probs, tensors).map_err(ApiError::internal)?)
    } else {
        None
    };
    let t = out.timings;
    let timing = Timing {
        decode: decode_ms,
        signal: t.signal_ms,
        inference: t.inference_ms,
        assembly: t.assembly_ms,
        total: started.elapsed().as_secs_f64() * 1e3,
    };
    info!(
        width = out.labels.width(),
        height = out.labels.height(),
        decode_ms = timing.decode,
        signal_ms = timing.signal,
        inference_ms = timing.inference,
        assembly_ms = timing.assembly,
        total_ms = timing.total,
        "segment"
    );
    Ok(Json(SegmentResponse {
        model_id,
        label_mask: rle_encode(&out.labels),
        palette: state.segmenter.palette.clone(),
        per_class,
        timing_ms: timing,
    }))
}

async fn export(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: ExportRequest = parse(&body)?;
    let labels =
        rle_decode(&req.label_mask).map_err(|e| ApiError::bad("label_mask", e.to_string()))?;
    if let Some(c) = labels
        .classes()
        .into_iter()
        .chain(req.squiggles.iter().map(|s| s.class_id))
        .find(|&c| !state.segmenter.palette.contains(c))
    {
        return Err(ApiError::from_core(Error::ClassNotPresent(c)));
    }
    Ok(Json(export_geojson(
        &labels,
        &state.segmenter.palette,
        &req.squiggles,
    )))
}

pub fn router(state: Arc<AppState>) -> Router {
    // Base64 inflates by 4/3; leave room for the rest of the JSON.
    let body_limit = state.max_image_bytes / 3 * 4 + (1 << 20);
    Router::new()
        .route("/api/health", get(health))
        .route("/api/palette", get(palette))
        .route("/api/segment", post(segment))
        .route("/api/export", post(export))
        .layer(DefaultBodyLimit::max(body_limit))
        .with_state(state)
}

pub async fn serve(args: &crate::args::ServeArgs) -> Result<(), crate::error::Failure> {
    use crate::error::Context;

    let segmenter = crate::commands::segmenter(&args.model)?;
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, usize::from));
    let state = AppState {
        data_dir: args.data_dir.clone(),
        max_image_bytes: args.max_image_bytes,
        ..AppState::new(segmenter, workers)
    };
    let addr = format!("{}:{}", args.host, args.port);
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .context(format!("binding {addr}"))?;
    info!(%addr, model = state.segmenter.model.id(), workers, "listening");
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .context("serving")
}
