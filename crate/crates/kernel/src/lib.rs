//! HTTP/JSON and WebSocket service over cellguard sessions.
//!
//! Each session lives on its own thread and executes commands from a queue in arrival order.
//! Every successful run is pushed to the session's WebSocket subscribers.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Mutex};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use cellguard::highlights::{HighlightReport, RefresherAlgo};
use cellguard::interp::NotebookError;
use cellguard::session::{RunResponse, Session, SessionError};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::{broadcast, oneshot};

type Job = Box<dyn FnOnce(&mut Session) + Send>;

#[derive(Clone)]
struct SessionHandle {
    jobs: mpsc::Sender<Job>,
    pushes: broadcast::Sender<String>,
}

impl SessionHandle {
    fn spawn(algo: RefresherAlgo) -> SessionHandle {
        let (jobs, rx) = mpsc::channel::<Job>();
        std::thread::spawn(move || {
            let mut session = Session::with_algo(algo);
            while let Ok(job) = rx.recv() {
                job(&mut session);
            }
        });
        let (pushes, _) = broadcast::channel(256);
        SessionHandle { jobs, pushes }
    }

    async fn call<T, F>(&self, f: F) -> Result<T, ApiError>
    where
        T: Send + 'static,
        F: FnOnce(&mut Session) -> T + Send + 'static,
    {
        let (tx, rx) = oneshot::channel();
        self.jobs
            .send(Box::new(move |s| {
                let _ = tx.send(f(s));
            }))
            .map_err(|_| ApiError::internal("session worker stopped"))?;
        rx.await.map_err(|_| ApiError::internal("session worker dropped the request"))
    }
}

/// All live sessions.
pub struct Kernel {
    sessions: Mutex<HashMap<String, SessionHandle>>,
    next_id: AtomicU64,
    algo: RefresherAlgo,
}

impl Default for Kernel {
    fn default() -> Self {
        Kernel::new(RefresherAlgo::Fast)
    }
}

impl Kernel {
    pub fn new(algo: RefresherAlgo) -> Kernel {
        Kernel { sessions: Mutex::new(HashMap::new()), next_id: AtomicU64::new(1), algo }
    }

    fn create(&self) -> String {
        let id = format!("s{}", self.next_id.fetch_add(1, Ordering::Relaxed));
        let handle = SessionHandle::spawn(self.algo);
        self.sessions.lock().expect("session map poisoned").insert(id.clone(), handle);
        id
    }

    fn get(&self, id: &str) -> Result<SessionHandle, ApiError> {
        self.sessions
            .lock()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session '{id}'")))
    }

    fn remove(&self, id: &str) -> Result<(), ApiError> {
        self.sessions
            .lock()
            .expect("session map poisoned")
            .remove(id)
            .map(|_| ())
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session '{id}'")))
    }
}

/// Error envelope: `{"error": code, "detail": text}` plus optional extra fields.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    detail: String,
    extra: Option<Value>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, detail: impl Into<String>) -> ApiError {
        ApiError { status, code, detail: detail.into(), extra: None }
    }

    fn internal(detail: &str) -> ApiError {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", detail)
    }

    fn bad_request(detail: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", detail)
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> ApiError {
        let detail = e.to_string();
        match e {
            SessionError::Notebook(NotebookError::UnknownCell(_)) => {
                ApiError::new(StatusCode::NOT_FOUND, "unknown_cell", detail)
            }
            SessionError::Notebook(NotebookError::DuplicateCell(_)) => {
                ApiError::new(StatusCode::CONFLICT, "duplicate_cell", detail)
            }
            SessionError::StaleWarning { cell_id, stale_symbols } => ApiError {
                status: StatusCode::CONFLICT,
                code: "stale_warning",
                detail,
                extra: Some(json!({ "cell_id": cell_id, "stale_symbols": stale_symbols })),
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.code, "detail": self.detail });
        if let (Some(Value::Object(extra)), Value::Object(map)) = (self.extra, &mut body) {
            map.extend(extra);
        }
        (self.status, Json(body)).into_response()
    }
}

#[derive(Debug, Deserialize)]
pub struct CellBody {
    pub source: String,
    #[serde(default)]
    pub position: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
pub struct RunQuery {
    #[serde(default)]
    pub confirm: bool,
}

#[derive(Debug, Serialize)]
struct CellInfo {
    id: String,
    source: String,
    /// Counter of the latest execution, 0 if never run.
    ts: u64,
}

/// WebSocket push: a snapshot on connect, then one message per run.
#[derive(Debug, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Push<'a> {
    Snapshot { report: &'a HighlightReport },
    Run { result: &'a cellguard::ExecResult, report: &'a HighlightReport },
}

type Shared = Arc<Kernel>;

pub fn router(kernel: Shared) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session).delete(delete_session))
        .route("/sessions/{id}/cells", post(insert_cell))
        .route("/sessions/{id}/cells/{cid}", put(upsert_cell).delete(delete_cell))
        .route("/sessions/{id}/cells/{cid}/run", post(run_cell))
        .route("/sessions/{id}/highlights", get(highlights))
        .route("/sessions/{id}/lineage", get(lineage))
        .route("/sessions/{id}/audit", get(audit))
        .route("/sessions/{id}/ws", get(websocket))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route") })
        .with_state(kernel)
}

/// Binds and serves until the process exits.
pub async fn serve(addr: &str, algo: RefresherAlgo) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(Arc::new(Kernel::new(algo)))).await
}

async fn create_session(State(k): State<Shared>) -> impl IntoResponse {
    (StatusCode::CREATED, Json(json!({ "session_id": k.create() })))
}

async fn get_session(State(k): State<Shared>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let h = k.get(&id)?;
    let body = h
        .call(move |s| {
            let st = s.state();
            let cells: Vec<CellInfo> = st
                .cells()
                .map(|(cid, c)| CellInfo { id: cid.to_string(), source: c.source.clone(), ts: st.cell_timestamp(cid) })
                .collect();
            json!({ "session_id": id, "counter": st.exec_counter(), "cells": cells })
        })
        .await?;
    Ok(Json(body))
}

async fn delete_session(State(k): State<Shared>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    k.remove(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

fn body(b: Result<Json<CellBody>, JsonRejection>) -> Result<CellBody, ApiError> {
    b.map(|Json(b)| b).map_err(|e| ApiError::bad_request(e.body_text()))
}

async fn insert_cell(
    State(k): State<Shared>,
    Path(id): Path<String>,
    b: Result<Json<CellBody>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let b = body(b)?;
    let cell_id = k.get(&id)?.call(move |s| s.upsert_cell(None, &b.source, b.position)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "cell_id": cell_id }))))
}

async fn upsert_cell(
    State(k): State<Shared>,
    Path((id, cid)): Path<(String, String)>,
    b: Result<Json<CellBody>, JsonRejection>,
) -> Result<Json<Value>, ApiError> {
    let b = body(b)?;
    let cell_id = k.get(&id)?.call(move |s| s.upsert_cell(Some(&cid), &b.source, b.position)).await?;
    Ok(Json(json!({ "cell_id": cell_id })))
}

async fn delete_cell(State(k): State<Shared>, Path((id, cid)): Path<(String, String)>) -> Result<StatusCode, ApiError> {
    k.get(&id)?.call(move |s| s.delete_cell(&cid)).await??;
    Ok(StatusCode::NO_CONTENT)
}

async fn run_cell(
    State(k): State<Shared>,
    Path((id, cid)): Path<(String, String)>,
    q: Result<Query<RunQuery>, QueryRejection>,
) -> Result<Json<RunResponse>, ApiError> {
    let Query(q) = q.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let h = k.get(&id)?;
    let pushes = h.pushes.clone();
    let resp = h
        .call(move |s| {
            let r = s.run_cell(&cid, q.confirm)?;
            // Sent from the session thread, so pushes keep execution order.
            let msg = Push::Run { result: &r.result, report: &r.report };
            let _ = pushes.send(serde_json::to_string(&msg).expect("push serializes"));
            Ok::<_, SessionError>(r)
        })
        .await??;
    Ok(Json(resp))
}

async fn highlights(State(k): State<Shared>, Path(id): Path<String>) -> Result<Json<HighlightReport>, ApiError> {
    Ok(Json(k.get(&id)?.call(|s| s.report().clone()).await?))
}

async fn lineage(State(k): State<Shared>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    Ok(Json(k.get(&id)?.call(|s| s.lineage_dump()).await?))
}

async fn audit(State(k): State<Shared>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    Ok(Json(k.get(&id)?.call(|s| json!(s.audit_log())).await?))
}

async fn websocket(
    State(k): State<Shared>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    let h = k.get(&id)?;
    let pushes = h.pushes.clone();
    // Subscribe inside the session thread so no run falls between snapshot and stream.
    let (rx, snapshot) = h
        .call(move |s| {
            let rx = pushes.subscribe();
            let snap = serde_json::to_string(&Push::Snapshot { report: s.report() }).expect("push serializes");
            (rx, snap)
        })
        .await?;
    Ok(ws.on_upgrade(move |socket| forward(socket, rx, snapshot)))
}

async fn forward(mut socket: WebSocket, mut rx: broadcast::Receiver<String>, snapshot: String) {
    if socket.send(Message::Text(snapshot.into())).await.is_err() {
        return;
    }
    loop {
        tokio::select! {
            msg = rx.recv() => match msg {
                Ok(text) => {
                    if socket.send(Message::Text(text.into())).await.is_err() {
                        return;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => return,
            },
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}
