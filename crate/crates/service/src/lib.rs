//! HTTP service running agent sessions, with on-disk persistence and a
//! server-sent event feed of steps.

mod error;
mod store;

use std::collections::HashMap;
use std::convert::Infallible;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::rejection::BytesRejection;
use axum::extract::{DefaultBodyLimit, Path as UrlPath, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use cadkit_agent::planner::{LlmConfig, LlmPlanner, Planner, PlannerError, ScriptedPlanner};
use cadkit_agent::state::{AttachmentKind, SessionStatus};
use cadkit_agent::{run_with, standard_registry, Attachment, Query, Registry, SessionState, DEFAULT_BUDGET};
use cadkit_core::render::render_sketch_svg;
use futures::Stream;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::watch;

pub use error::ApiError;
pub use store::{Event, Meta, Store, StoredAttachment};
use store::Upload;

/// Largest accepted attachment after decoding.
pub const MAX_ATTACHMENT_BYTES: usize = 16 * 1024 * 1024;
/// Request body cap; leaves room for base64 overhead on a full-size upload.
pub const MAX_BODY_BYTES: usize = 24 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub step_budget: usize,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self { data_dir: data_dir.into(), step_budget: DEFAULT_BUDGET }
    }
}

struct Shared {
    state: SessionState,
    events: Vec<Event>,
}

struct Session {
    meta: Meta,
    attachments: Vec<Attachment>,
    shared: Mutex<Shared>,
    /// Carries the latest event sequence number.
    notify: watch::Sender<u64>,
}

impl Session {
    fn new(meta: Meta, attachments: Vec<Attachment>, state: SessionState, events: Vec<Event>) -> Self {
        let last = events.last().map_or(0, |e| e.seq);
        Self { meta, attachments, shared: Mutex::new(Shared { state, events }), notify: watch::channel(last).0 }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Shared> {
        self.shared.lock().unwrap_or_else(|p| p.into_inner())
    }
}

/// Appends an event under the caller's lock and wakes stream readers.
fn push_event(store: &Store, session: &Session, shared: &mut Shared, kind: &str, data: Value) {
    let event = Event { seq: shared.events.len() as u64 + 1, event: kind.into(), data };
    if let Err(e) = store.append_event(&session.meta.session_id, &event) {
        log::error!("session {}: cannot persist event: {e}", session.meta.session_id);
    }
    let seq = event.seq;
    shared.events.push(event);
    session.notify.send_replace(seq);
}

fn status_data(state: &SessionState) -> Value {
    json!({"status": state.status, "steps": state.transcript.len(), "flags": state.flags})
}

/// Shared handle to all sessions.
#[derive(Clone)]
pub struct AppState {
    store: Store,
    registry: Arc<Registry>,
    budget: usize,
    sessions: Arc<RwLock<HashMap<String, Arc<Session>>>>,
}

impl AppState {
    /// Opens the data directory and reloads persisted sessions. Runs cut
    /// short by a restart are marked failed.
    pub fn open(config: &ServiceConfig) -> std::io::Result<Self> {
        let store = Store::open(&config.data_dir)?;
        let mut sessions = HashMap::new();
        for loaded in store.load_all()? {
            let id = loaded.meta.session_id.clone();
            let session = Session::new(loaded.meta, loaded.attachments, loaded.state, loaded.events);
            {
                let mut shared = session.lock();
                if shared.state.status == SessionStatus::Running {
                    shared.state.status = SessionStatus::Failed;
                    shared.state.flags.push("run interrupted by a service restart".into());
                    store.save_state(&id, &shared.state)?;
                    let data = status_data(&shared.state);
                    push_event(&store, &session, &mut shared, "status", data);
                }
            }
            sessions.insert(id, Arc::new(session));
        }
        Ok(Self {
            store,
            registry: Arc::new(standard_registry()),
            budget: config.step_budget,
            sessions: Arc::new(RwLock::new(sessions)),
        })
    }

    fn session(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        self.sessions.read().unwrap_or_else(|p| p.into_inner()).get(id).cloned().ok_or_else(|| ApiError::unknown_session(id))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/events", get(stream_events))
        .route("/sessions/{id}/state", get(get_state))
        .route("/sessions/{id}/render.svg", get(get_render))
        .route("/sessions/{id}/artifacts/{name}", get(get_artifact))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    let state = AppState::open(&config)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

async fn healthz() -> Json<Value> {
    Json(json!({"status": "ok"}))
}

fn body_json<T: for<'de> Deserialize<'de> + Default>(body: Result<Bytes, BytesRejection>) -> Result<T, ApiError> {
    let bytes = body.map_err(|r| {
        let status = r.status();
        let code = if status == StatusCode::PAYLOAD_TOO_LARGE { "PayloadTooLarge" } else { "BadRequest" };
        ApiError::new(status, code, r.body_text())
    })?;
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(&bytes).map_err(|e| ApiError::bad_request("BadRequest", format!("invalid JSON body: {e}")))
}

#[derive(Debug, Default, Deserialize)]
struct AttachmentIn {
    name: String,
    #[serde(default)]
    kind: Option<AttachmentKind>,
    #[serde(default)]
    content: Option<String>,
    #[serde(default)]
    content_base64: Option<String>,
    /// Sketch document describing an image attachment.
    #[serde(default)]
    parameterization: Option<Value>,
}

#[derive(Debug, Default, Deserialize)]
struct CreateBody {
    #[serde(default)]
    attachments: Vec<AttachmentIn>,
}

fn invalid_attachment(message: impl Into<String>) -> ApiError {
    ApiError::bad_request("InvalidAttachment", message)
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name.len() <= 255
        && !name.starts_with('.')
        && !name.contains(['/', '\\', '\0'])
        && !name.ends_with(".param.json")
}

fn decode_upload(a: AttachmentIn) -> Result<(Upload, Attachment), ApiError> {
    if !valid_name(&a.name) {
        return Err(invalid_attachment(format!("invalid attachment name `{}`", a.name)));
    }
    let bytes = match (a.content, a.content_base64) {
        (Some(text), None) => text.into_bytes(),
        (None, Some(b64)) => base64::engine::general_purpose::STANDARD
            .decode(b64.trim())
            .map_err(|e| invalid_attachment(format!("{}: bad base64: {e}", a.name)))?,
        _ => return Err(invalid_attachment(format!("{}: give exactly one of content, content_base64", a.name))),
    };
    if bytes.len() > MAX_ATTACHMENT_BYTES {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "AttachmentTooLarge",
            format!("{} is {} bytes; the limit is {MAX_ATTACHMENT_BYTES}", a.name, bytes.len()),
        ));
    }
    let parameterization = a.parameterization.map(|v| match v {
        Value::String(s) => s.into_bytes(),
        other => other.to_string().into_bytes(),
    });
    let att = Attachment::decode(&a.name, a.kind, &bytes, parameterization.as_deref()).map_err(|e| invalid_attachment(e.to_string()))?;
    let upload = Upload { name: a.name, kind: att.kind(), bytes, parameterization };
    Ok((upload, att))
}

async fn create_session(State(app): State<AppState>, body: Result<Bytes, BytesRejection>) -> Result<Response, ApiError> {
    let body: CreateBody = body_json(body)?;
    let mut uploads = Vec::new();
    let mut attachments = Vec::new();
    for a in body.attachments {
        if attachments.iter().any(|x: &Attachment| x.name == a.name) {
            return Err(invalid_attachment(format!("duplicate attachment name `{}`", a.name)));
        }
        let (u, att) = decode_upload(a)?;
        uploads.push(u);
        attachments.push(att);
    }
    let id = uuid::Uuid::new_v4().simple().to_string();
    let created_at = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let meta = Meta {
        session_id: id.clone(),
        created_at,
        attachments: uploads
            .iter()
            .map(|u| StoredAttachment { name: u.name.clone(), kind: u.kind, has_parameterization: u.parameterization.is_some() })
            .collect(),
    };
    let mut query = Query::new("");
    for a in &attachments {
        query = query.with(a.clone());
    }
    let state = SessionState::new(&query, app.budget);
    let store = app.store.clone();
    let (m, s) = (meta.clone(), state.clone());
    tokio::task::spawn_blocking(move || store.create(&m, &uploads, &s))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    let summary = json!({"session_id": id, "created_at": created_at, "status": state.status, "attachments": state.attachments});
    app.sessions.write().unwrap_or_else(|p| p.into_inner()).insert(id, Arc::new(Session::new(meta, attachments, state, Vec::new())));
    Ok((StatusCode::CREATED, Json(summary)).into_response())
}

async fn list_sessions(State(app): State<AppState>) -> Json<Value> {
    let sessions = app.sessions.read().unwrap_or_else(|p| p.into_inner());
    let mut rows: Vec<Value> = sessions
        .values()
        .map(|s| json!({"session_id": s.meta.session_id, "created_at": s.meta.created_at, "status": s.lock().state.status}))
        .collect();
    rows.sort_by(|a, b| (a["created_at"].as_u64(), a["session_id"].as_str()).cmp(&(b["created_at"].as_u64(), b["session_id"].as_str())));
    Json(Value::Array(rows))
}

#[derive(Debug, Default, Deserialize)]
struct MessageBody {
    #[serde(default)]
    text: String,
    /// `scripted:PATH` or `llm`.
    #[serde(default)]
    planner: Option<String>,
}

/// Builds a planner from `scripted:PATH` or `llm`.
pub fn make_planner(spec: &str) -> Result<Box<dyn Planner>, PlannerError> {
    match spec.split_once(':') {
        Some(("scripted", path)) => Ok(Box::new(ScriptedPlanner::from_path(Path::new(path))?)),
        None if spec == "llm" => Ok(Box::new(LlmPlanner::new(LlmConfig::from_env()?))),
        _ => Err(PlannerError::Config(format!("unknown planner `{spec}`; use scripted:PATH or llm"))),
    }
}

async fn post_message(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Result<Bytes, BytesRejection>,
) -> Result<Response, ApiError> {
    let session = app.session(&id)?;
    let body: MessageBody = body_json(body)?;
    if body.text.trim().is_empty() {
        return Err(ApiError::bad_request("BadRequest", "message text is empty"));
    }
    let spec = body.planner.unwrap_or_else(|| "llm".into());
    let planner = make_planner(&spec).map_err(|e| ApiError::bad_request("PlannerConfig", e.to_string()))?;
    {
        let mut shared = session.lock();
        if shared.state.status == SessionStatus::Running {
            return Err(ApiError::new(StatusCode::CONFLICT, "SessionBusy", format!("session `{id}` is already running")));
        }
        shared.state.status = SessionStatus::Running;
    }
    let (store, registry) = (app.store.clone(), Arc::clone(&app.registry));
    let text = body.text;
    tokio::task::spawn_blocking(move || run_message(&store, &registry, &session, planner, &text));
    Ok((StatusCode::ACCEPTED, Json(json!({"session_id": id, "status": SessionStatus::Running}))).into_response())
}

fn run_message(store: &Store, registry: &Registry, session: &Session, mut planner: Box<dyn Planner>, text: &str) {
    let id = &session.meta.session_id;
    let mut query = Query::new(text);
    for a in &session.attachments {
        query = query.with(a.clone());
    }
    let mut state = session.lock().state.clone();
    run_with(planner.as_mut(), registry, &mut state, &query, &mut |s, record| {
        let mut shared = session.lock();
        shared.state = s.clone();
        // The final status is published together with its event below.
        shared.state.status = SessionStatus::Running;
        if let Err(e) = store.append_step(id, record).and_then(|_| store.save_state(id, &shared.state)) {
            log::error!("session {id}: cannot persist step {}: {e}", record.index);
        }
        let data = serde_json::to_value(record).unwrap_or(Value::Null);
        push_event(store, session, &mut shared, "step", data);
    });
    let mut shared = session.lock();
    if let Err(e) = store.save_state(id, &state) {
        log::error!("session {id}: cannot persist final state: {e}");
    }
    let data = status_data(&state);
    shared.state = state;
    push_event(store, session, &mut shared, "status", data);
}

fn last_event_id(headers: &HeaderMap) -> u64 {
    headers.get("last-event-id").and_then(|v| v.to_str().ok()).and_then(|v| v.trim().parse().ok()).unwrap_or(0)
}

/// Sends events after `Last-Event-ID`, then follows live events. Ends once
/// the backlog is drained and the session has reached a final status.
async fn stream_events(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
) -> Result<Sse<impl Stream<Item = Result<SseEvent, Infallible>>>, ApiError> {
    let session = app.session(&id)?;
    let rx = session.notify.subscribe();
    let start = last_event_id(&headers);
    let stream = futures::stream::unfold((session, start, rx), |(session, last, mut rx)| async move {
        loop {
            rx.borrow_and_update();
            let (next, status) = {
                let shared = session.lock();
                (shared.events.get(last as usize).cloned(), shared.state.status)
            };
            if let Some(ev) = next {
                let sse = SseEvent::default().id(ev.seq.to_string()).event(ev.event.as_str()).data(ev.data.to_string());
                return Some((Ok(sse), (session, ev.seq, rx)));
            }
            if status.is_final() || rx.changed().await.is_err() {
                return None;
            }
        }
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

async fn get_state(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<Value>, ApiError> {
    let session = app.session(&id)?;
    let shared = session.lock();
    let s = &shared.state;
    let document: Value = serde_json::from_str(&s.document.sketch_json()).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(Json(json!({
        "session_id": id,
        "created_at": session.meta.created_at,
        "status": s.status,
        "query": s.query_text,
        "attachments": s.attachments,
        "document": document,
        "solid": s.document.solid,
        "transcript": s.transcript,
        "step_budget": s.step_budget,
        "flags": s.flags,
        "artifacts": s.artifacts.keys().collect::<Vec<_>>(),
    })))
}

async fn get_render(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let session = app.session(&id)?;
    let svg = render_sketch_svg(&session.lock().state.document.sketch, true);
    Ok(([(header::CONTENT_TYPE, "image/svg+xml")], svg).into_response())
}

async fn get_artifact(State(app): State<AppState>, UrlPath((id, name)): UrlPath<(String, String)>) -> Result<Response, ApiError> {
    let session = app.session(&id)?;
    let bytes = session
        .lock()
        .state
        .artifacts
        .get(&name)
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "UnknownArtifact", format!("no artifact `{name}`")))?;
    let media = if name.ends_with(".png") { "image/png" } else { "application/octet-stream" };
    Ok(([(header::CONTENT_TYPE, media)], bytes).into_response())
}
