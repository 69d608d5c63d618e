//! A local stand-in for the enhancement endpoint, for tests and dry runs.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use crate::prompt::inputs_from_request;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockMode {
    /// Well-formed replies that pass validation.
    Valid,
    /// Replies that talk about the guide box.
    Forbidden,
    /// Three visual variations instead of two.
    TooManyVisual,
    /// The first `n` requests get a 503, then `Valid`.
    FailThenSucceed(usize),
    /// Every request gets this status.
    AlwaysFail(u16),
}

#[derive(Debug)]
struct Shared {
    mode: MockMode,
    requests: AtomicUsize,
}

pub struct MockServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
}

impl MockServer {
    /// Binds an ephemeral local port and serves until dropped.
    pub async fn start(mode: MockMode) -> std::io::Result<MockServer> {
        let shared = Arc::new(Shared {
            mode,
            requests: AtomicUsize::new(0),
        });
        let app = Router::new().route("/v1/chat/completions", post(handle)).with_state(shared.clone());
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
        let addr = listener.local_addr()?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        tokio::spawn(async move {
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
        Ok(MockServer {
            addr,
            shared,
            shutdown: Some(tx),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}/v1/chat/completions", self.addr)
    }

    pub fn requests(&self) -> usize {
        self.shared.requests.load(Ordering::SeqCst)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

fn valid_reply(inputs: &[String]) -> Value {
    let first = inputs.first().map(String::as_str).unwrap_or("target");
    json!({
        "language_variations": inputs.iter().map(|s| format!("{s}, seen from above")).collect::<Vec<_>>(),
        "visual_variations": [
            format!("{first}, next to a darker patch of ground"),
            format!("{first}, casting a short shadow"),
        ],
    })
}

async fn handle(State(shared): State<Arc<Shared>>, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    let n = shared.requests.fetch_add(1, Ordering::SeqCst);
    let inputs = inputs_from_request(&body).unwrap_or_default();
    let reply = match shared.mode {
        MockMode::Valid => valid_reply(&inputs),
        MockMode::FailThenSucceed(k) if n < k => {
            return (StatusCode::SERVICE_UNAVAILABLE, Json(json!({ "error": "busy" })));
        }
        MockMode::FailThenSucceed(_) => valid_reply(&inputs),
        MockMode::AlwaysFail(code) => {
            let status = StatusCode::from_u16(code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
            return (status, Json(json!({ "error": "failing on purpose" })));
        }
        MockMode::Forbidden => json!({
            "language_variations": inputs.iter().map(|_| "the object inside the red box").collect::<Vec<_>>(),
            "visual_variations": ["the highlighted object", "the object within the bounding box"],
        }),
        MockMode::TooManyVisual => json!({
            "language_variations": inputs.iter().map(|s| format!("{s}, again")).collect::<Vec<_>>(),
            "visual_variations": ["one", "two", "three"],
        }),
    };
    let completion = json!({
        "id": format!("mock-{n}"),
        "object": "chat.completion",
        "model": body["model"],
        "choices": [{
            "index": 0,
            "message": { "role": "assistant", "content": reply.to_string() },
            "finish_reason": "stop",
        }],
    });
    (StatusCode::OK, Json(completion))
}
