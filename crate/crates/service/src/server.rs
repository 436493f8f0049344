//! HTTP and WebSocket front end of the hub.

use std::future::Future;
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use alpha_lab::csvlog;
use tokio::net::TcpListener;

use crate::hub::{Connection, Hub};
use crate::wire::WireMessage;

pub fn router(hub: Arc<Hub>) -> Router {
    Router::new()
        .route("/ws", get(ws))
        .route("/admin", post(admin))
        .route("/sessions/{id}/session.csv", get(session_csv))
        .route("/sessions/{id}/events.jsonl", get(events_jsonl))
        .with_state(hub)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    hub: Arc<Hub>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(hub)).with_graceful_shutdown(shutdown).await
}

async fn ws(State(hub): State<Arc<Hub>>, upgrade: WebSocketUpgrade) -> Response {
    upgrade.on_upgrade(move |socket| participant(socket, hub))
}

async fn participant(mut socket: WebSocket, hub: Arc<Hub>) {
    let (mut conn, mut outbox) = Connection::open(hub);
    loop {
        tokio::select! {
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Text(text))) => {
                    // Decisions may block briefly on the seat lock only.
                    conn.handle_text(text.as_str());
                }
                Some(Ok(Message::Binary(_))) => conn.handle_text(""),
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
            msg = outbox.recv() => match msg {
                Some(m) => {
                    if socket.send(Message::Text(m.to_json().into())).await.is_err() {
                        break;
                    }
                }
                None => break,
            },
        }
    }
}

async fn admin(State(hub): State<Arc<Hub>>, body: String) -> Response {
    let reply = match WireMessage::parse(&body) {
        Ok(msg) => {
            let hub = hub.clone();
            tokio::task::spawn_blocking(move || hub.admin(&msg))
                .await
                .unwrap_or_else(|e| WireMessage::error(e.to_string()))
        }
        Err(e) => WireMessage::error(e),
    };
    Json(reply).into_response()
}

async fn session_csv(State(hub): State<Arc<Hub>>, Path(id): Path<String>) -> Response {
    match hub.session(&id).and_then(|s| s.log()) {
        Some(log) => (
            [(header::CONTENT_TYPE, "text/csv")],
            csvlog::to_csv_string(&csvlog::rows(&log)),
        )
            .into_response(),
        None => (StatusCode::NOT_FOUND, "no finished session with that id").into_response(),
    }
}

async fn events_jsonl(State(hub): State<Arc<Hub>>, Path(id): Path<String>) -> Response {
    match hub.session(&id) {
        Some(s) => {
            let mut body = String::new();
            for e in s.events() {
                body.push_str(&serde_json::to_string(&e).expect("events serialize"));
                body.push('\n');
            }
            ([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response()
        }
        None => (StatusCode::NOT_FOUND, "unknown session").into_response(),
    }
}
