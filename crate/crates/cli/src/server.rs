//! HTTP conversation service.
//!
//! | route | |
//! |---|---|
//! | `GET /health` | liveness and session count |
//! | `GET /program` | compiled program and source flow |
//! | `POST /conversations` | new session, `{"session_id": ...}` |
//! | `POST /conversations/{id}/messages` | one turn, `{"text": ...}` |
//! | `GET /conversations/{id}/state` | slots, helpers and history |
//! | `GET /conversations/{id}/events` | completed turns as server-sent events |
//!
//! A second message to a session whose turn is still running gets 409.
//! Backend failures surface as 502 with the partial trace.

use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use anyhow::Context;
use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use futures::Stream;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::broadcast::error::RecvError;
use tower_http::cors::{AllowOrigin, CorsLayer};
use uuid::Uuid;

use codial_core::backend::Backend;
use codial_core::chief::{graph_to_value, ChiefGraph};
use codial_core::runtime::{Runtime, TurnErrorKind};

use crate::args::ServeArgs;
use crate::config::Config;
use crate::input;
use crate::session::{SessionHandle, SessionStore, TranscriptRecord};
use crate::{CliError, EXIT_OK};

pub struct AppState {
    pub runtime: Arc<Runtime>,
    pub backend: Arc<dyn Backend>,
    pub store: Arc<SessionStore>,
    pub preamble: Option<String>,
    program_json: Value,
}

impl AppState {
    pub fn new(
        runtime: Runtime,
        backend: Arc<dyn Backend>,
        graph: Option<&ChiefGraph>,
        store: SessionStore,
        preamble: Option<String>,
    ) -> Self {
        let program: Value = serde_json::from_str(&runtime.program().to_canonical_json()).expect("program serializes");
        let program_json = json!({
            "program": program,
            "graph": graph.map(graph_to_value),
        });
        AppState {
            runtime: Arc::new(runtime),
            backend,
            store: Arc::new(store),
            preamble,
            program_json,
        }
    }
}

pub fn router(state: Arc<AppState>, cors_origin: Option<&str>) -> anyhow::Result<Router> {
    let mut app = Router::new()
        .route("/health", get(health))
        .route("/program", get(program))
        .route("/conversations", post(create))
        .route("/conversations/{id}/messages", post(message))
        .route("/conversations/{id}/state", get(session_state))
        .route("/conversations/{id}/events", get(events))
        .with_state(state);
    if let Some(origin) = cors_origin {
        let allow = if origin == "*" {
            AllowOrigin::any()
        } else {
            let values = origin
                .split(',')
                .map(|o| HeaderValue::from_str(o.trim()).with_context(|| format!("bad CORS origin `{o}`")))
                .collect::<anyhow::Result<Vec<_>>>()?;
            AllowOrigin::list(values)
        };
        app = app.layer(
            CorsLayer::new()
                .allow_origin(allow)
                .allow_methods([Method::GET, Method::POST])
                .allow_headers([header::CONTENT_TYPE]),
        );
    }
    Ok(app)
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn lookup(state: &AppState, id: &str) -> Result<(Uuid, Arc<SessionHandle>), Response> {
    let not_found = || error(StatusCode::NOT_FOUND, format!("no session `{id}`"));
    let uuid = Uuid::parse_str(id).map_err(|_| not_found())?;
    let handle = state.store.get(&uuid).ok_or_else(not_found)?;
    Ok((uuid, handle))
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({ "status": "ok", "sessions": state.store.len() }))
}

async fn program(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(state.program_json.clone())
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CreateBody {
    preamble: Option<String>,
}

async fn create(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let body: CreateBody = if body.iter().all(u8::is_ascii_whitespace) {
        CreateBody::default()
    } else {
        match serde_json::from_slice(&body) {
            Ok(b) => b,
            Err(e) => return error(StatusCode::BAD_REQUEST, format!("bad request body: {e}")),
        }
    };
    let preamble = body.preamble.or_else(|| state.preamble.clone());
    let store = state.store.clone();
    let runtime = state.runtime.clone();
    match tokio::task::spawn_blocking(move || store.create(&runtime, preamble)).await {
        Ok(Ok(id)) => (StatusCode::CREATED, Json(json!({ "session_id": id }))).into_response(),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, format!("{e:#}")),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

enum Failure {
    Turn(codial_core::runtime::TurnError),
    Log(anyhow::Error),
}

#[derive(Debug, Deserialize)]
struct MessageBody {
    text: String,
}

async fn message(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> Response {
    let (_, handle) = match lookup(&state, &id) {
        Ok(found) => found,
        Err(r) => return r,
    };
    let body: MessageBody = match serde_json::from_slice(&body) {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("expected {{\"text\": ...}}: {e}")),
    };
    let Ok(mut session) = handle.session.clone().try_lock_owned() else {
        return error(StatusCode::CONFLICT, "turn in progress");
    };
    let runtime = state.runtime.clone();
    let backend = state.backend.clone();
    let events = handle.events.clone();
    let outcome = tokio::task::spawn_blocking(move || {
        let started = Utc::now();
        let (result, next) = runtime.run_turn(&session.state, &body.text, &*backend).map_err(Failure::Turn)?;
        let finished = Utc::now();
        let record = TranscriptRecord::Turn {
            started,
            finished,
            user: body.text,
            result,
        };
        session.log(&record).map_err(Failure::Log)?;
        let TranscriptRecord::Turn { result, .. } = record else {
            unreachable!()
        };
        session.state = next;
        session.updated = finished;
        // Nobody listening is fine.
        let _ = events.send(result.clone());
        Ok(result)
    })
    .await;
    match outcome {
        Ok(Ok(result)) => Json(result).into_response(),
        Ok(Err(Failure::Turn(turn))) => {
            let status = match &turn.kind {
                TurnErrorKind::EmptyUtterance => StatusCode::UNPROCESSABLE_ENTITY,
                TurnErrorKind::Backend(_) => StatusCode::BAD_GATEWAY,
                TurnErrorKind::ExternalAction(_) => StatusCode::INTERNAL_SERVER_ERROR,
            };
            let detail = match &turn.kind {
                TurnErrorKind::Backend(e) => serde_json::to_value(e).unwrap_or(Value::Null),
                TurnErrorKind::ExternalAction(e) => serde_json::to_value(e).unwrap_or(Value::Null),
                TurnErrorKind::EmptyUtterance => Value::Null,
            };
            let body = json!({ "error": turn.to_string(), "detail": detail, "trace": turn.trace });
            (status, Json(body)).into_response()
        }
        Ok(Err(Failure::Log(io))) => error(StatusCode::INTERNAL_SERVER_ERROR, format!("{io:#}")),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn session_state(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    let (uuid, handle) = match lookup(&state, &id) {
        Ok(found) => found,
        Err(r) => return r,
    };
    // Waits for a running turn, so the reply never shows half a turn.
    let session = handle.session.lock().await;
    Json(json!({
        "session_id": uuid,
        "created": session.created,
        "updated": session.updated,
        "slots": session.state.slots,
        "helpers": session.state.helpers,
        "history": session.state.history,
        "context_preamble": session.state.context_preamble,
    }))
    .into_response()
}

async fn events(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    let (_, handle) = match lookup(&state, &id) {
        Ok(found) => found,
        Err(r) => return r,
    };
    Sse::new(turn_stream(handle.events.subscribe()))
        .keep_alive(KeepAlive::new().interval(Duration::from_secs(15)))
        .into_response()
}

fn turn_stream(
    rx: tokio::sync::broadcast::Receiver<codial_core::runtime::TurnResult>,
) -> impl Stream<Item = Result<Event, Infallible>> {
    futures::stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(result) => {
                    let event = Event::default().event("turn").json_data(&result).expect("turn result serializes");
                    return Some((Ok(event), rx));
                }
                Err(RecvError::Lagged(missed)) => {
                    let event = Event::default().event("lagged").data(missed.to_string());
                    return Some((Ok(event), rx));
                }
                Err(RecvError::Closed) => return None,
            }
        }
    })
}

pub fn serve_command(args: ServeArgs, config: &Config) -> Result<i32, CliError> {
    let (program, graph) = input::load_program(&args.input)?;
    // The HTTP client must be built outside the async runtime.
    let backend = input::backend(&args.backend, config)?;
    let server = &config.server;
    let host = args.host.unwrap_or_else(|| server.host.clone());
    let port = args.port.unwrap_or(server.port);
    let cors = args.cors_origin.or_else(|| server.cors_origin.clone());
    let transcript_dir = args.transcript_dir.or_else(|| server.transcript_dir.clone());
    let replay = args.replay || server.replay;
    if replay && transcript_dir.is_none() {
        return Err(CliError::Usage("--replay needs --transcript-dir".into()));
    }
    if let Some(dir) = &transcript_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }

    let runtime = Runtime::new(program).with_options(config.runtime);
    let store = SessionStore::new(transcript_dir);
    if replay {
        let n = store.restore(&runtime)?;
        eprintln!("restored {n} session(s)");
    }
    let state = Arc::new(AppState::new(runtime, backend.clone(), graph.as_ref(), store, config.preamble.clone()));
    let app = router(state, cors.as_deref())?;

    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting async runtime")?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind((host.as_str(), port))
            .await
            .with_context(|| format!("binding {host}:{port}"))?;
        let addr: SocketAddr = listener.local_addr()?;
        eprintln!("listening on http://{addr}");
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .context("serving")
    })?;
    drop(rt);
    drop(backend);
    Ok(EXIT_OK)
}
