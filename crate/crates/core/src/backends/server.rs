//! Fixture-backed HTTP server speaking both backend wire formats.

use std::fs;
use std::io;
use std::net::{SocketAddr, TcpListener};
use std::path::Path;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tokio::sync::oneshot;

use super::mock::{LmScript, NliTable, ScriptedLm};
use super::{BackendError, CompletionRequest, LmBackend, NliBackend, NliRequest};

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error("cannot read fixture {path}: {message}")]
    Fixture { path: String, message: String },
    #[error("server i/o error: {0}")]
    Io(#[from] io::Error),
}

/// `{"lm": <LM script>, "nli": <NLI table>}`; either half may be omitted.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ServerFixture {
    #[serde(default)]
    pub lm: Option<LmScript>,
    #[serde(default)]
    pub nli: Option<NliTable>,
}

impl ServerFixture {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ServeError> {
        let path = path.as_ref();
        let fixture_err = |message: String| ServeError::Fixture {
            path: path.display().to_string(),
            message,
        };
        let raw = fs::read_to_string(path).map_err(|e| fixture_err(e.to_string()))?;
        let mut fixture: ServerFixture =
            serde_json::from_str(&raw).map_err(|e| fixture_err(e.to_string()))?;
        if let Some(table) = fixture.nli.as_mut() {
            table.reindex();
        }
        Ok(fixture)
    }
}

struct AppState {
    lm: Option<ScriptedLm>,
    nli: Option<NliTable>,
}

type Reply = (StatusCode, Json<Value>);

fn error_reply(status: StatusCode, message: impl Into<String>) -> Reply {
    (status, Json(json!({"error": message.into()})))
}

fn backend_reply(err: BackendError) -> Reply {
    match err {
        BackendError::NotFound(m) => error_reply(StatusCode::NOT_FOUND, m),
        BackendError::InvalidRequest(m) => error_reply(StatusCode::BAD_REQUEST, m),
        other => error_reply(StatusCode::INTERNAL_SERVER_ERROR, other.to_string()),
    }
}

async fn healthz() -> &'static str {
    "ok"
}

async fn nli_handler(State(state): State<Arc<AppState>>, body: Bytes) -> Reply {
    #[derive(Deserialize)]
    struct Wire {
        premise: String,
        hypothesis: String,
    }
    let wire: Wire = match serde_json::from_slice(&body) {
        Ok(w) => w,
        Err(e) => return error_reply(StatusCode::BAD_REQUEST, format!("malformed body: {e}")),
    };
    log::info!("POST /nli premise={:?} hypothesis={:?}", wire.premise, wire.hypothesis);
    let Some(table) = &state.nli else {
        return error_reply(StatusCode::NOT_FOUND, "fixture has no NLI table");
    };
    let result = NliRequest::new(&wire.premise, &wire.hypothesis).and_then(|r| table.classify(&r));
    match result {
        Ok(d) => (
            StatusCode::OK,
            Json(json!({
                "contradiction": d.contradiction(),
                "neutral": d.neutral(),
                "entailment": d.entailment(),
            })),
        ),
        Err(e) => backend_reply(e),
    }
}

async fn completions_handler(State(state): State<Arc<AppState>>, body: Bytes) -> Reply {
    let req: CompletionRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error_reply(StatusCode::BAD_REQUEST, format!("malformed body: {e}")),
    };
    log::info!(
        "POST /v1/completions prompt_chars={} max_tokens={} top_p={} seed={:?}",
        req.prompt.chars().count(),
        req.max_tokens,
        req.top_p,
        req.seed
    );
    let Some(lm) = &state.lm else {
        return error_reply(StatusCode::NOT_FOUND, "fixture has no LM script");
    };
    match lm.complete(&req) {
        Ok(r) => (
            StatusCode::OK,
            Json(json!({
                "object": "text_completion",
                "choices": [{"index": 0, "text": r.text, "finish_reason": "stop"}],
                "usage": {
                    "prompt_tokens": r.prompt_tokens.unwrap_or(0),
                    "completion_tokens": r.completion_tokens.unwrap_or(0),
                },
            })),
        ),
        Err(e) => backend_reply(e),
    }
}

fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/nli", post(nli_handler))
        .route("/v1/completions", post(completions_handler))
        .with_state(state)
}

/// Running mock server; dropping the handle shuts it down.
pub struct MockServer {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<io::Result<()>>>,
}

impl MockServer {
    /// Binds `addr` (port 0 picks a free port) and serves on a background thread.
    pub fn start(fixture: ServerFixture, addr: SocketAddr) -> Result<Self, ServeError> {
        let listener = TcpListener::bind(addr).map_err(|e| match e.kind() {
            io::ErrorKind::AddrInUse => ServeError::PortInUse(addr.port()),
            _ => ServeError::Io(e),
        })?;
        listener.set_nonblocking(true)?;
        let local = listener.local_addr()?;

        let mut nli = fixture.nli;
        if let Some(t) = nli.as_mut() {
            t.reindex();
        }
        let state = Arc::new(AppState {
            lm: fixture.lm.map(ScriptedLm::from_script),
            nli,
        });
        let (tx, rx) = oneshot::channel::<()>();
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let thread = std::thread::spawn(move || {
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener)?;
                axum::serve(listener, router(state))
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await
            })
        });
        log::info!("mock server listening on {local}");
        Ok(Self {
            addr: local,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn start_from_file(path: impl AsRef<Path>, port: u16) -> Result<Self, ServeError> {
        let fixture = ServerFixture::from_path(path)?;
        Self::start(fixture, SocketAddr::from(([127, 0, 0, 1], port)))
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn shutdown(mut self) -> io::Result<()> {
        self.stop()
    }

    fn stop(&mut self) -> io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t
                .join()
                .unwrap_or_else(|_| Err(io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        let _ = self.stop();
    }
}
