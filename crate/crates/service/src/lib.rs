//! HTTP+JSON front end for interpreter sessions.
//!
//! Sessions live in memory. Each one sits behind its own lock, so requests
//! to one session are applied in some total order while different sessions
//! proceed independently.

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use revint_core::error::ExecError;
use revint_core::frontend::FrontendError;
use revint_core::scheduler::Policy;
use revint_core::session::{Choice, Until, View};
use revint_core::trace::parse_initial;
use revint_core::{BigBundle, BigSession, BigTrace, Int};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use tower_http::services::ServeDir;

type Shared = Arc<tokio::sync::Mutex<BigSession>>;

#[derive(Default)]
pub struct AppState {
    sessions: Mutex<HashMap<String, Shared>>,
    next: AtomicU64,
}

impl AppState {
    fn get(&self, id: &str) -> Result<Shared, ApiError> {
        self.sessions
            .lock()
            .expect("session table")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no session `{id}`")))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, msg: impl Into<String>) -> Self {
        ApiError { status, body: json!({ "error": msg.into() }) }
    }

    fn bad(msg: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, msg)
    }
}

impl From<FrontendError> for ApiError {
    fn from(e: FrontendError) -> Self {
        let mut body = json!({ "error": e.to_string() });
        if let Some(p) = e.pos {
            body["line"] = json!(p.line);
            body["col"] = json!(p.col);
        }
        ApiError { status: StatusCode::BAD_REQUEST, body }
    }
}

impl From<ExecError> for ApiError {
    fn from(e: ExecError) -> Self {
        match e {
            ExecError::Frontend(f) => f.into(),
            ExecError::NotEnabled(_) | ExecError::StepBudget(_) => ApiError::new(StatusCode::CONFLICT, e.to_string()),
            _ => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    #[serde(default)]
    pub source: Option<String>,
    #[serde(default)]
    pub bundle: Option<BigBundle>,
    #[serde(default)]
    pub policy: Option<Policy>,
    /// Shorthand for a seeded random policy.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Starting values of globals, as decimal strings.
    #[serde(default)]
    pub initial: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
}

/// `1`, `{"index": 1}`, `"auto"` or nothing.
fn parse_choice(v: Option<&Value>) -> ApiResult<Choice> {
    match v {
        None | Some(Value::Null) => Ok(Choice::Auto),
        Some(Value::String(s)) if s == "auto" => Ok(Choice::Auto),
        Some(Value::Number(n)) => n.as_u64().map(|i| Choice::Index(i as usize)).ok_or_else(|| ApiError::bad("bad choice")),
        Some(Value::Object(o)) if o.len() == 1 && o.contains_key("index") => parse_choice(o.get("index")),
        Some(other) => Err(ApiError::bad(format!("bad choice {other}"))),
    }
}

fn number(v: &Value) -> Option<u64> {
    match v {
        Value::Number(n) => n.as_u64(),
        Value::String(s) => s.parse().ok(),
        _ => None,
    }
}

/// `"terminal"`, `{"steps": n}` or `{"identifier": m}`; numbers may be strings.
fn parse_until(v: Option<&Value>) -> ApiResult<Until> {
    let bad = || ApiError::bad("`until` must be \"terminal\", {\"steps\": n} or {\"identifier\": m}");
    match v {
        None | Some(Value::Null) => Ok(Until::Terminal),
        Some(Value::String(s)) if s == "terminal" => Ok(Until::Terminal),
        Some(Value::Object(o)) if o.len() == 1 => {
            if let Some(n) = o.get("steps") {
                number(n).map(Until::Steps).ok_or_else(bad)
            } else if let Some(m) = o.get("identifier") {
                number(m).map(Until::Identifier).ok_or_else(bad)
            } else {
                Err(bad())
            }
        }
        _ => Err(bad()),
    }
}

fn body(v: Option<Json<Value>>) -> Value {
    v.map(|Json(v)| v).unwrap_or(Value::Null)
}

async fn create(State(app): State<Arc<AppState>>, Json(req): Json<CreateRequest>) -> ApiResult<(StatusCode, Json<Created>)> {
    let policy = match (req.policy, req.seed) {
        (Some(p), _) => p,
        (None, Some(seed)) => Policy::SeededRandom { seed },
        (None, None) => Policy::default(),
    };
    let session = match (req.source, req.bundle) {
        (Some(src), None) => {
            let init = parse_initial::<Int>(&req.initial)?;
            BigSession::new(&src, init, policy)?
        }
        (None, Some(b)) => BigSession::from_bundle(b, policy)?,
        _ => return Err(ApiError::bad("give exactly one of `source` and `bundle`")),
    };
    let id = format!("s{}", app.next.fetch_add(1, Ordering::Relaxed) + 1);
    app.sessions.lock().expect("session table").insert(id.clone(), Arc::new(tokio::sync::Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(Created { id })))
}

async fn view(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<View<Int>>> {
    let s = app.get(&id)?;
    let s = s.lock().await;
    Ok(Json(s.view()))
}

async fn step(State(app): State<Arc<AppState>>, Path(id): Path<String>, req: Option<Json<Value>>) -> ApiResult<Json<View<Int>>> {
    let req = body(req);
    let choice = parse_choice(req.get("choice"))?;
    let s = app.get(&id)?;
    let mut s = s.lock().await;
    s.step(choice)?;
    Ok(Json(s.view()))
}

async fn flip(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<View<Int>>> {
    let s = app.get(&id)?;
    let mut s = s.lock().await;
    s.flip()?;
    Ok(Json(s.view()))
}

async fn run(State(app): State<Arc<AppState>>, Path(id): Path<String>, req: Option<Json<Value>>) -> ApiResult<Json<View<Int>>> {
    let req = body(req);
    let until = parse_until(req.get("until"))?;
    let s = app.get(&id)?;
    let mut s = s.lock().await;
    s.run_until(until)?;
    Ok(Json(s.view()))
}

async fn trace(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<BigTrace>> {
    let s = app.get(&id)?;
    let s = s.lock().await;
    Ok(Json(s.trace_file()))
}

async fn bundle(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<BigBundle>> {
    let s = app.get(&id)?;
    let s = s.lock().await;
    Ok(Json(s.bundle()))
}

async fn delete(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    match app.sessions.lock().expect("session table").remove(&id) {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(ApiError::new(StatusCode::NOT_FOUND, format!("no session `{id}`"))),
    }
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not found")
}

/// The service, with static files from `root` for paths outside the API.
pub fn app(root: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(view).delete(delete))
        .route("/sessions/{id}/step", post(step))
        .route("/sessions/{id}/flip", post(flip))
        .route("/sessions/{id}/run", post(run))
        .route("/sessions/{id}/trace", get(trace))
        .route("/sessions/{id}/bundle", get(bundle))
        .with_state(Arc::new(AppState::default()));
    match root {
        Some(dir) => api.fallback_service(ServeDir::new(dir).fallback(get(not_found))),
        None => api.fallback(not_found),
    }
}

/// Bind and serve until the process ends. Fails if the port is taken.
pub async fn serve(addr: SocketAddr, root: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app(root)).await
}
