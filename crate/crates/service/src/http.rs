//! HTTP routes.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::multipart::MultipartError;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use relief_core::{
    load_cloud, CloudFormat, MeshFormat, PointCloud, ReliefError, SessionConfig, Vector3,
};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::worker::{SessionHandle, Status};
use crate::{ws, AppState};

pub fn routes(state: AppState) -> Router {
    let limit = state.config.max_upload;
    Router::new()
        .route("/session", post(create))
        .route("/session/{id}", get(describe).delete(remove))
        .route("/session/{id}/span", get(span))
        .route("/session/{id}/xy", get(xy))
        .route("/session/{id}/mesh-topology", get(topology))
        .route("/session/{id}/mesh", get(mesh))
        .route("/session/{id}/export/{n}", get(download))
        .route("/session/{id}/stream", get(ws::upgrade))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

pub struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.into(),
            message: message.into(),
        }
    }

    fn not_found(id: &str) -> Self {
        Self::new(
            StatusCode::NOT_FOUND,
            "NotFound",
            format!("no session `{id}`"),
        )
    }
}

impl From<ReliefError> for ApiError {
    fn from(e: ReliefError) -> Self {
        let status = if e.is_input_error() {
            StatusCode::BAD_REQUEST
        } else {
            StatusCode::INTERNAL_SERVER_ERROR
        };
        Self::new(status, e.code(), e.to_string())
    }
}

impl From<MultipartError> for ApiError {
    fn from(e: MultipartError) -> Self {
        let status = e.status();
        let code = if status == StatusCode::PAYLOAD_TOO_LARGE {
            "PayloadTooLarge"
        } else {
            "MalformedFile"
        };
        Self::new(status, code, e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"code": self.code, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn lookup(state: &AppState, id: &str) -> ApiResult<Arc<SessionHandle>> {
    state.get(id).ok_or_else(|| ApiError::not_found(id))
}

fn ready(h: &SessionHandle) -> ApiResult<&crate::worker::ReadyInfo> {
    match (h.status(), h.info()) {
        (Status::Error { code, message }, _) => {
            Err(ApiError::new(StatusCode::CONFLICT, &code, message))
        }
        (_, Some(info)) => Ok(info),
        (s, None) => Err(ApiError::new(
            StatusCode::CONFLICT,
            "NotReady",
            format!("session is {s:?}"),
        )),
    }
}

fn parse_view(text: &str) -> ApiResult<Vector3<f64>> {
    let bad = || {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "InvalidParams",
            format!("bad view `{text}`"),
        )
    };
    let t = text.trim().trim_start_matches('[').trim_end_matches(']');
    let v: Vec<f64> = t
        .split(',')
        .map(|c| c.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    match v[..] {
        [x, y, z] if x.is_finite() && y.is_finite() && z.is_finite() => Ok(Vector3::new(x, y, z)),
        _ => Err(bad()),
    }
}

/// Multipart fields: `cloud` (PLY or XYZ file), optional `view` (`x,y,z`)
/// and optional `config` (session config JSON).
async fn create(
    State(state): State<AppState>,
    headers: HeaderMap,
    mut form: Multipart,
) -> ApiResult<Response> {
    let declared = headers
        .get(header::CONTENT_LENGTH)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse::<usize>().ok());
    if declared.is_some_and(|n| n > state.config.max_upload) {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "PayloadTooLarge",
            format!("upload exceeds {} bytes", state.config.max_upload),
        ));
    }
    let (mut cloud, mut view, mut config) = (None, Vector3::z(), SessionConfig::default());
    while let Some(field) = form.next_field().await? {
        match field.name().unwrap_or_default() {
            "cloud" => {
                let by_name = field
                    .file_name()
                    .and_then(|n| CloudFormat::from_path(std::path::Path::new(n)));
                let data = field.bytes().await?;
                cloud = Some((by_name, data));
            }
            "view" => view = parse_view(&field.text().await?)?,
            "config" => {
                config = serde_json::from_str(&field.text().await?).map_err(|e| {
                    ApiError::new(StatusCode::BAD_REQUEST, "InvalidParams", e.to_string())
                })?
            }
            other => {
                return Err(ApiError::new(
                    StatusCode::BAD_REQUEST,
                    "MalformedFile",
                    format!("unexpected field `{other}`"),
                ))
            }
        }
    }
    let (format, data) = cloud.ok_or_else(|| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "MalformedFile",
            "missing `cloud` field",
        )
    })?;
    config.params.validate()?;
    let cloud = tokio::task::spawn_blocking(move || parse_cloud(format, &data))
        .await
        .map_err(|e| {
            ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string())
        })??;
    let id = state.insert(|id| SessionHandle::spawn(id, cloud, view, config));
    Ok((StatusCode::ACCEPTED, Json(json!({ "id": id }))).into_response())
}

fn parse_cloud(format: Option<CloudFormat>, data: &[u8]) -> Result<PointCloud, ReliefError> {
    load_cloud(data, format.unwrap_or_else(|| CloudFormat::sniff(data)))
}

async fn describe(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let h = lookup(&state, &id)?;
    let mut body = serde_json::to_value(h.status()).unwrap();
    let obj = body.as_object_mut().unwrap();
    obj.insert("id".into(), json!(h.id));
    obj.insert("input_count".into(), json!(h.input_count));
    if let Some(info) = h.info() {
        obj.insert("visible_count".into(), json!(info.visible_count));
        obj.insert("control_count".into(), json!(info.control_count));
        obj.insert("triangle_count".into(), json!(info.triangle_count));
        obj.insert("rho".into(), json!(info.rho));
        obj.insert("diagonal".into(), json!(info.diagonal));
        obj.insert("timings".into(), json!(info.timings));
    }
    if let Some(f) = h.latest() {
        obj.insert("seq".into(), json!(f.seq));
        obj.insert("span".into(), json!(f.span));
        obj.insert("params".into(), json!(f.params));
    }
    Ok(Json(body))
}

async fn remove(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    let h = state.remove(&id).ok_or_else(|| ApiError::not_found(&id))?;
    h.close();
    Ok(StatusCode::NO_CONTENT)
}

async fn span(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let h = lookup(&state, &id)?;
    ready(&h)?;
    let f = h.latest().expect("ready session has a frame");
    Ok(Json(
        json!({"seq": f.seq, "span": f.span, "params": f.params}),
    ))
}

fn binary(bytes: Bytes) -> Response {
    ([(header::CONTENT_TYPE, "application/octet-stream")], bytes).into_response()
}

/// Visible XY positions, `f32` little-endian pairs in frame order.
async fn xy(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let h = lookup(&state, &id)?;
    Ok(binary(ready(&h)?.xy.clone()))
}

/// Triangles as `u32` little-endian index triples.
async fn topology(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let h = lookup(&state, &id)?;
    Ok(binary(ready(&h)?.topology.clone()))
}

#[derive(Deserialize)]
struct MeshQuery {
    format: Option<String>,
}

pub fn mesh_format(name: Option<&str>) -> Result<MeshFormat, ReliefError> {
    let name = name.unwrap_or("ply");
    MeshFormat::parse(name)
        .ok_or_else(|| ReliefError::InvalidParams(format!("unknown mesh format `{name}`")))
}

fn mesh_response(format: MeshFormat, bytes: Bytes) -> Response {
    let kind = match format {
        MeshFormat::Ply => "application/x-ply",
        MeshFormat::Obj => "model/obj",
    };
    ([(header::CONTENT_TYPE, kind)], bytes).into_response()
}

async fn mesh(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<MeshQuery>,
) -> ApiResult<Response> {
    let h = lookup(&state, &id)?;
    ready(&h)?;
    let format = mesh_format(q.format.as_deref())
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.code(), e.to_string()))?;
    let bytes = h.export_now(format).await?;
    Ok(mesh_response(format, bytes))
}

async fn download(
    State(state): State<AppState>,
    Path((id, n)): Path<(String, u64)>,
) -> ApiResult<Response> {
    let h = lookup(&state, &id)?;
    let (format, bytes) = h.export(n).ok_or_else(|| {
        ApiError::new(StatusCode::NOT_FOUND, "NotFound", format!("no export {n}"))
    })?;
    Ok(mesh_response(format, bytes))
}
