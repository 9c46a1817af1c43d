//! REST handlers.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use haptic_core::{encode, render_pattern, Body, PatternSpec, RenderError, SpecError, WireError, WireMessage};
use haptic_transport::{DeliveryResult, DeliveryStatus, Outbound, Submission, Transport, TransportError};
use serde::{Deserialize, Serialize};

use crate::library::{Library, LibraryError, Saved};

#[derive(Clone)]
pub struct AppState {
    pub transport: Arc<Transport>,
    pub library: Arc<Library>,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/devices", get(devices))
        .route("/api/render", post(render))
        .route("/api/devices/{id}/play", post(play))
        .route("/api/devices/{id}/stop", post(stop))
        .route("/api/presets", get(list_presets))
        .route("/api/presets/{name}", get(get_preset).put(save_preset).delete(delete_preset))
        .with_state(state)
}

/// JSON error body: `{"error": CODE, "message": ..., "field": ...}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    field: Option<String>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    message: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<&'a str>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            field: None,
        }
    }

    fn unknown_device(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "E_UNKNOWN_DEVICE", format!("no device registered as {id:?}"))
    }
}

impl From<SpecError> for ApiError {
    fn from(e: SpecError) -> Self {
        Self {
            field: Some(e.field.clone()),
            ..Self::new(StatusCode::BAD_REQUEST, "E_SCHEMA", e.to_string())
        }
    }
}

impl From<RenderError> for ApiError {
    fn from(e: RenderError) -> Self {
        match e {
            RenderError::Invalid(e) => e.into(),
            e @ RenderError::TooLong { .. } => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "REJECT_TOO_LONG", e.to_string()),
        }
    }
}

impl From<WireError> for ApiError {
    fn from(e: WireError) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, e.code(), e.to_string())
    }
}

impl From<LibraryError> for ApiError {
    fn from(e: LibraryError) -> Self {
        match e {
            LibraryError::NotFound(_) => Self::new(StatusCode::NOT_FOUND, "E_NOT_FOUND", e.to_string()),
            LibraryError::Builtin(_) => Self::new(StatusCode::CONFLICT, "E_BUILTIN", e.to_string()),
            LibraryError::Invalid(e) => e.into(),
            LibraryError::Io { .. } | LibraryError::Corrupt { .. } => {
                tracing::error!(error = %e, "library write failed");
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "E_STORAGE", e.to_string())
            }
        }
    }
}

impl From<TransportError> for ApiError {
    fn from(e: TransportError) -> Self {
        match e {
            TransportError::UnknownDevice(id) => Self::unknown_device(&id),
            TransportError::Encode(e) => e.into(),
            e => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "E_TRANSPORT", e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.code,
            message: &self.message,
            field: self.field.as_deref(),
        };
        (self.status, Json(body)).into_response()
    }
}

/// Parses a request body by hand so that schema errors are 400, not the
/// extractor's 422.
fn parse_json<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| {
        let field = serde_field(&e.to_string());
        ApiError {
            field,
            ..ApiError::new(StatusCode::BAD_REQUEST, "E_SCHEMA", e.to_string())
        }
    })
}

/// Pulls the offending field name out of a serde message such as
/// "missing field `min_pct` at line 1 column 9".
fn serde_field(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(msg[start..start + len].to_owned())
}

fn parse_spec(body: &[u8]) -> Result<PatternSpec, ApiError> {
    let spec: PatternSpec = parse_json(body)?;
    spec.validate()?;
    Ok(spec)
}

async fn devices(State(s): State<AppState>) -> Json<Vec<haptic_transport::DeviceStatus>> {
    Json(s.transport.devices())
}

async fn render(body: Bytes) -> Result<Json<haptic_core::RenderedPattern>, ApiError> {
    let spec = parse_spec(&body)?;
    Ok(Json(render_pattern(&spec)?))
}

#[derive(Debug, Deserialize)]
struct PlayQuery {
    #[serde(default)]
    realtime: bool,
}

/// Response of play and stop.
#[derive(Debug, Serialize)]
pub struct DeliveryReport {
    pub device_id: String,
    pub status: &'static str,
    pub seq: Option<u32>,
    pub attempts: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rtt_ms: Option<f64>,
}

impl DeliveryReport {
    fn from_result(device_id: String, r: &DeliveryResult) -> Self {
        Self {
            device_id,
            status: match r.status {
                DeliveryStatus::Delivered => "DELIVERED",
                DeliveryStatus::Failed => "FAILED",
            },
            seq: Some(r.seq),
            attempts: r.attempts,
            rtt_ms: r.rtt_ms,
        }
    }
}

fn report(device_id: String, submission: Submission) -> Response {
    match submission {
        Submission::Superseded => {
            let body = DeliveryReport {
                device_id,
                status: "SUPERSEDED",
                seq: None,
                attempts: 0,
                rtt_ms: None,
            };
            (StatusCode::OK, Json(body)).into_response()
        }
        Submission::Completed(r) => {
            let code = if r.delivered() { StatusCode::OK } else { StatusCode::BAD_GATEWAY };
            if !r.delivered() {
                tracing::warn!(device = %device_id, seq = r.seq, attempts = r.attempts, "delivery failed");
            }
            (code, Json(DeliveryReport::from_result(device_id, &r))).into_response()
        }
    }
}

async fn play(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<PlayQuery>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let device = s.transport.registry().get(&id).ok_or_else(|| ApiError::unknown_device(&id))?;
    let spec = parse_spec(&body)?;
    if let Some((i, a)) = spec
        .assignments
        .iter()
        .enumerate()
        .find(|(_, a)| u32::from(a.mask) >> device.channel_count != 0)
    {
        return Err(SpecError::new(
            format!("assignments[{i}].mask"),
            format!("mask {:#b} addresses channels beyond the device's {}", a.mask, device.channel_count),
        )
        .into());
    }
    let payload = render_pattern(&spec)?.to_payload();
    // Catch oversized datagrams before a sequence number is spent.
    encode(&WireMessage::new(1, Body::Pattern(payload.clone())))?;
    let submission = s.transport.submit(&id, Outbound::Pattern(payload), q.realtime).await?;
    Ok(report(id, submission))
}

async fn stop(State(s): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let submission = s.transport.submit(&id, Outbound::Stop, false).await?;
    Ok(report(id, submission))
}

async fn list_presets(State(s): State<AppState>) -> Json<Vec<haptic_core::PresetEntry>> {
    Json(s.library.list())
}

async fn get_preset(State(s): State<AppState>, Path(name): Path<String>) -> Result<Json<haptic_core::PresetEntry>, ApiError> {
    s.library
        .get(&name)
        .map(Json)
        .ok_or_else(|| LibraryError::NotFound(name).into())
}

async fn save_preset(State(s): State<AppState>, Path(name): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let spec: PatternSpec = parse_json(&body)?;
    let library = s.library.clone();
    let (entry, saved) = tokio::task::spawn_blocking(move || library.save(&name, spec))
        .await
        .expect("library task panicked")?;
    let code = match saved {
        Saved::Created => StatusCode::CREATED,
        Saved::Replaced => StatusCode::OK,
    };
    Ok((code, Json(entry)).into_response())
}

async fn delete_preset(State(s): State<AppState>, Path(name): Path<String>) -> Result<StatusCode, ApiError> {
    let library = s.library.clone();
    tokio::task::spawn_blocking(move || library.delete(&name))
        .await
        .expect("library task panicked")?;
    Ok(StatusCode::NO_CONTENT)
}
