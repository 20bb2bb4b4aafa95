//! HTTP interface.
//!
//! Bodies are parsed by hand so that malformed JSON (400) and well-formed
//! JSON with the wrong shape (422) are told apart, and every error comes
//! back as a JSON document.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use blobforge_core::curation::{BlobRecord, CurationRules, RejectReason};
use blobforge_core::edit::EditOp;
use blobforge_core::sample::{build_training_sample, SampleConfig, SampleError};
use blobforge_core::{BlobScene, ConfidenceLevel};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::archive::{sample_files, tar_bytes};
use crate::curate::{curate_pair, CurateSummary, IoFailure, Rejection, Verdict};
use crate::formats::{encode_raw_field, png_dimensions, png_to_mask, png_to_raster, preview_png, FormatError};
use crate::render::{render_field, RenderError, RenderFormat, RenderKind, RenderParams};
use crate::schema::{all_schemas, schema};
use crate::store::{SceneStore, StoreError};

pub const REVISION_HEADER: &str = "x-blobforge-revision";
pub const VMAX_HEADER: &str = "x-blobforge-vmax";
pub const KIND_HEADER: &str = "x-blobforge-kind";

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<SceneStore>,
}

impl AppState {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        Ok(Self {
            store: Arc::new(SceneStore::open(dir)?),
        })
    }
}

/// JSON error response.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl ToString) -> Self {
        Self {
            status,
            body: json!({"error": code, "message": message.to_string()}),
        }
    }

    fn bad_request(message: impl ToString) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn unprocessable(message: impl ToString) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid", message)
    }

    fn internal(message: impl ToString) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    fn rejected(reason: RejectReason) -> Self {
        let mut e = Self::new(StatusCode::UNPROCESSABLE_ENTITY, "rejected", reason.as_str());
        e.body["reason"] = json!(reason.as_str());
        e
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(_) => Self::new(StatusCode::NOT_FOUND, "not_found", e),
            StoreError::Exists(_) => Self::new(StatusCode::CONFLICT, "exists", e),
            StoreError::Conflict { current, .. } => {
                let mut err = Self::new(StatusCode::CONFLICT, "revision_conflict", e);
                err.body["current_revision"] = json!(current);
                err
            }
            StoreError::BadId(_) => Self::bad_request(e),
            StoreError::Invalid(_) => Self::unprocessable(e),
            StoreError::Corrupt { .. } | StoreError::Io(_) => Self::internal(e),
        }
    }
}

impl From<RenderError> for ApiError {
    fn from(e: RenderError) -> Self {
        match e {
            RenderError::BadSize(..) => Self::bad_request(e),
            RenderError::UnknownBlob(_) | RenderError::Core(_) => Self::unprocessable(e),
        }
    }
}

impl From<FormatError> for ApiError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Io(_) => Self::internal(e),
            _ => Self::unprocessable(e),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_body<T: DeserializeOwned>(bytes: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(bytes).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => ApiError::unprocessable(e),
        _ => ApiError::bad_request(e),
    })
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/schema", get(get_all_schemas))
        .route("/schema/{name}", get(get_schema))
        .route("/scenes", get(list_scenes))
        .route(
            "/scenes/{id}",
            post(create_scene).get(get_scene).put(put_scene).delete(delete_scene),
        )
        .route("/scenes/{id}/edit", post(edit_scene))
        .route("/scenes/{id}/render", get(render_scene))
        .route("/samples", post(make_sample))
        .route("/curate", post(curate))
        .with_state(state)
}

async fn healthz() -> Json<Value> {
    Json(json!({"status": "ok", "version": env!("CARGO_PKG_VERSION")}))
}

async fn get_all_schemas() -> Json<Value> {
    Json(all_schemas())
}

async fn get_schema(Path(name): Path<String>) -> ApiResult<Json<Value>> {
    schema(&name)
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no schema `{name}`")))
}

async fn list_scenes(State(st): State<AppState>) -> ApiResult<Json<Value>> {
    let ids = blocking(move || Ok(st.store.list()?)).await?;
    Ok(Json(json!({ "ids": ids })))
}

async fn create_scene(State(st): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let scene: BlobScene = parse_body(&body)?;
    let stored = blocking(move || Ok(st.store.create(&id, scene)?)).await?;
    Ok((StatusCode::CREATED, Json(stored)).into_response())
}

async fn get_scene(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let stored = blocking(move || Ok(st.store.get(&id)?)).await?;
    Ok(Json(stored).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PutBody {
    pub scene: BlobScene,
    #[serde(default)]
    pub expected_revision: Option<u64>,
}

async fn put_scene(State(st): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let body: PutBody = parse_body(&body)?;
    let stored = blocking(move || Ok(st.store.put(&id, body.scene, body.expected_revision)?)).await?;
    Ok(Json(stored).into_response())
}

#[derive(Debug, Deserialize)]
pub struct RevisionQuery {
    pub expected_revision: Option<u64>,
}

async fn delete_scene(
    State(st): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<RevisionQuery>, QueryRejection>,
) -> ApiResult<StatusCode> {
    let Query(q) = q.map_err(ApiError::bad_request)?;
    blocking(move || Ok(st.store.delete(&id, q.expected_revision)?)).await?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditBody {
    pub op: EditOp,
    #[serde(default)]
    pub expected_revision: Option<u64>,
}

async fn edit_scene(State(st): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let body: EditBody = parse_body(&body)?;
    body.op.validate().map_err(ApiError::unprocessable)?;
    let stored = blocking(move || Ok(st.store.edit(&id, &body.op, body.expected_revision)?)).await?;
    Ok(Json(stored).into_response())
}

#[derive(Debug, Deserialize)]
pub struct RenderQuery {
    pub kind: String,
    pub w: Option<usize>,
    pub h: Option<usize>,
    pub p: Option<f64>,
    pub blob: Option<String>,
    pub format: Option<String>,
}

async fn render_scene(
    State(st): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<RenderQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let Query(q) = q.map_err(ApiError::bad_request)?;
    let kind: RenderKind = q.kind.parse().map_err(ApiError::bad_request)?;
    let format = match q.format.as_deref() {
        None | Some("png") => RenderFormat::Png,
        Some("raw") => RenderFormat::Raw,
        Some(other) => return Err(ApiError::bad_request(format!("unknown format {other:?}"))),
    };
    let params = RenderParams {
        kind,
        w: q.w,
        h: q.h,
        p: q.p,
        blob: q.blob,
        format,
    };
    blocking(move || {
        let stored = st.store.get(&id)?;
        let field = render_field(&stored.scene, &params)?;
        let revision = HeaderValue::from(stored.revision);
        let kind = HeaderValue::from_static(field.kind.as_str());
        Ok(match params.format {
            RenderFormat::Raw => (
                [
                    (header::CONTENT_TYPE, HeaderValue::from_static("application/octet-stream")),
                    (header::HeaderName::from_static(REVISION_HEADER), revision),
                    (header::HeaderName::from_static(KIND_HEADER), kind),
                ],
                encode_raw_field(&field),
            )
                .into_response(),
            RenderFormat::Png => {
                let (png, meta) = preview_png(&field)?;
                let vmax = HeaderValue::from_str(&meta.v_max.to_string()).map_err(ApiError::internal)?;
                (
                    [
                        (header::CONTENT_TYPE, HeaderValue::from_static("image/png")),
                        (header::HeaderName::from_static(REVISION_HEADER), revision),
                        (header::HeaderName::from_static(KIND_HEADER), kind),
                        (header::HeaderName::from_static(VMAX_HEADER), vmax),
                    ],
                    png,
                )
                    .into_response()
            }
        })
    })
    .await
}

fn b64(field: &str, s: &str) -> ApiResult<Vec<u8>> {
    base64::engine::general_purpose::STANDARD
        .decode(s)
        .map_err(|e| ApiError::unprocessable(format!("{field}: {e}")))
}

/// `POST /samples` body. Seeds are required so that responses are
/// reproducible.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRequest {
    /// Base64 PNG of the image.
    pub image_png: String,
    /// Base64 PNG of the foreground mask.
    pub mask_png: String,
    pub perturb_seed: u64,
    pub augment_seed: u64,
    #[serde(default)]
    pub caption: Option<String>,
    #[serde(default)]
    pub config: Option<SampleConfig>,
}

async fn make_sample(body: Bytes) -> ApiResult<Response> {
    let req: SampleRequest = parse_body(&body)?;
    let tar = blocking(move || {
        let image = png_to_raster(&b64("image_png", &req.image_png)?)?;
        let mask = png_to_mask(&b64("mask_png", &req.mask_png)?)?;
        let mut cfg = req.config.unwrap_or_default();
        cfg.perturb.seed = req.perturb_seed;
        cfg.augment_seed = req.augment_seed;
        if let Some(c) = req.caption {
            cfg.caption = c;
        }
        let sample = build_training_sample(&image, &mask, &cfg).map_err(|e| match e {
            SampleError::Rejected(r) => ApiError::rejected(r),
            SampleError::Invalid(e) => ApiError::unprocessable(e),
        })?;
        Ok(tar_bytes("sample", &sample_files(&sample, &cfg)?)?)
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, HeaderValue::from_static("application/x-tar"))], tar).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurateItem {
    pub name: String,
    /// Base64 PNG; only its header is read.
    pub image_png: String,
    pub mask_png: String,
    #[serde(default)]
    pub caption: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurateRequest {
    pub items: Vec<CurateItem>,
    #[serde(default)]
    pub rules: CurationRules,
    #[serde(default)]
    pub confidence: ConfidenceLevel,
}

#[derive(Debug, Serialize)]
pub struct CurateResponse {
    pub records: Vec<BlobRecord>,
    pub summary: CurateSummary,
}

async fn curate(body: Bytes) -> ApiResult<Json<CurateResponse>> {
    let req: CurateRequest = parse_body(&body)?;
    req.rules.validate().map_err(ApiError::unprocessable)?;
    let resp = blocking(move || {
        let mut summary = CurateSummary {
            total: req.items.len(),
            accepted: 0,
            rejected: RejectReason::ALL.iter().map(|r| (r.as_str().to_string(), 0)).collect(),
            rejections: Vec::new(),
            io_errors: Vec::new(),
        };
        let mut records = Vec::new();
        for item in req.items {
            let loaded = (|| -> ApiResult<_> {
                let dims = png_dimensions(&b64("image_png", &item.image_png)?)?;
                let mask = png_to_mask(&b64("mask_png", &item.mask_png)?)?;
                Ok((dims, mask))
            })();
            match loaded {
                Ok((dims, mask)) => match curate_pair(&item.name, dims, &mask, item.caption, &req.rules, req.confidence) {
                    Verdict::Accepted(r) => {
                        summary.accepted += 1;
                        records.push(*r);
                    }
                    Verdict::Rejected(reason) => {
                        *summary.rejected.entry(reason.as_str().to_string()).or_default() += 1;
                        summary.rejections.push(Rejection { name: item.name, reason });
                    }
                },
                Err(e) => summary.io_errors.push(IoFailure {
                    name: item.name,
                    message: e.body["message"].as_str().unwrap_or_default().to_string(),
                }),
            }
        }
        Ok(CurateResponse { records, summary })
    })
    .await?;
    Ok(Json(resp))
}

/// Serves until ctrl-c.
pub async fn serve(addr: SocketAddr, data_dir: PathBuf) -> anyhow::Result<()> {
    let state = AppState::open(&data_dir)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, data_dir = %data_dir.display(), "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        })
        .await?;
    Ok(())
}
