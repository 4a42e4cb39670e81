//! Serves a live session to the operator UI.
//!
//! `GET /ws` upgrades to a WebSocket. Every text frame from the server is one
//! JSON line (`mesh`, `contact`, `state`); client frames carry one or more
//! JSON lines (`pose`, `jog`, `stop`). `GET /mesh.obj` returns the latest
//! published surface mesh.
//!
//! The session runs on its own thread and never waits on sockets: commands
//! arrive through a channel drained once per tick, messages leave through a
//! broadcast channel, and the OBJ text is swapped in atomically.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::thread::JoinHandle;

use arc_swap::ArcSwapOption;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use meshtwin_core::harness::wire::{parse_client_line, to_line, ServerMsg};
use meshtwin_core::harness::{OperatorCommand, Session, SessionError, SessionMetrics};
use tokio::sync::broadcast;

const BROADCAST_CAPACITY: usize = 4096;

#[derive(Clone)]
pub struct AppState {
    commands: mpsc::Sender<OperatorCommand>,
    updates: broadcast::Sender<String>,
    obj: Arc<ArcSwapOption<String>>,
}

impl AppState {
    pub fn subscribe(&self) -> broadcast::Receiver<String> {
        self.updates.subscribe()
    }
}

/// Session thread plus the shared endpoints handed to the router.
pub struct LiveSession {
    state: AppState,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<Result<SessionMetrics, SessionError>>>,
}

impl LiveSession {
    /// Starts stepping `session` on a new thread. With `keep_alive` the
    /// session runs past its configured duration until [`LiveSession::stop`].
    pub fn spawn(mut session: Session, keep_alive: bool) -> Self {
        let (tx, rx) = mpsc::channel();
        let (updates, _) = broadcast::channel(BROADCAST_CAPACITY);
        let obj: Arc<ArcSwapOption<String>> = Arc::new(ArcSwapOption::empty());
        let stop = Arc::new(AtomicBool::new(false));
        let state = AppState { commands: tx, updates: updates.clone(), obj: obj.clone() };
        let flag = stop.clone();
        let thread = std::thread::spawn(move || {
            session.enable_ui();
            while !flag.load(Ordering::Relaxed) {
                if session.is_finished() {
                    if !keep_alive {
                        break;
                    }
                    session.extend(1.0);
                }
                while let Ok(cmd) = rx.try_recv() {
                    session.push_command(cmd);
                }
                session.step()?;
                let mut mesh = false;
                for m in session.drain_outbox() {
                    mesh |= matches!(m, ServerMsg::Mesh { .. });
                    // No subscribers is fine.
                    let _ = updates.send(to_line(&m));
                }
                if mesh {
                    obj.store(session.latest_obj());
                }
            }
            Ok(session.metrics())
        });
        LiveSession { state, stop, thread: Some(thread) }
    }

    pub fn state(&self) -> AppState {
        self.state.clone()
    }

    /// Stops the session thread and returns its metrics.
    pub fn stop(mut self) -> Result<SessionMetrics, SessionError> {
        self.stop.store(true, Ordering::Relaxed);
        self.thread.take().expect("joined once").join().expect("session thread panicked")
    }

    /// Waits for a session without `keep_alive` to reach its end.
    pub fn join(mut self) -> Result<SessionMetrics, SessionError> {
        self.thread.take().expect("joined once").join().expect("session thread panicked")
    }
}

impl Drop for LiveSession {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new().route("/ws", get(ws_upgrade)).route("/mesh.obj", get(mesh_obj)).with_state(state)
}

async fn mesh_obj(State(state): State<AppState>) -> Response {
    match state.obj.load_full() {
        Some(text) => ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text.as_str().to_owned()).into_response(),
        None => (StatusCode::NOT_FOUND, "no mesh published yet\n").into_response(),
    }
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| client(socket, state))
}

async fn client(socket: WebSocket, state: AppState) {
    let (mut sink, mut stream) = socket.split();
    let mut updates = state.subscribe();
    let outgoing = tokio::spawn(async move {
        loop {
            match updates.recv().await {
                Ok(line) => {
                    if sink.send(Message::Text(line)).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => log::warn!("client lagging, skipped {n} messages"),
                Err(broadcast::error::RecvError::Closed) => break,
            }
        }
    });
    while let Some(Ok(msg)) = stream.next().await {
        let text = match msg {
            Message::Text(t) => t,
            Message::Close(_) => break,
            _ => continue,
        };
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            match parse_client_line(line).and_then(|m| m.into_command()) {
                Ok(cmd) => {
                    if state.commands.send(cmd).is_err() {
                        break;
                    }
                }
                Err(e) => log::warn!("dropped client message: {e}"),
            }
        }
    }
    outgoing.abort();
}

/// Binds `addr` and serves until the future is dropped.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("serving on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
