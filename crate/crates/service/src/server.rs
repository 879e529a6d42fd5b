use std::future::Future;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use avil_core::sim::arm::{JOINT_LIMITS, MAX_JOINT_SPEED};
use avil_core::sim::{BowlKind, Camera, FoodKind, Position, SceneConfig};
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use tokio::net::TcpListener;
use tokio::sync::watch;

use crate::protocol::{parse, ErrorCode, ServerMessage, PROTOCOL_VERSION};
use crate::session::{EpisodeStore, Session};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub height: usize,
    pub width: usize,
    pub demo_dir: PathBuf,
    /// Sessions with no incoming message for this long are closed.
    pub idle_timeout: Duration,
    /// Resting steps recorded at `record_start`; matches the policy's k.
    pub hold: usize,
    pub initial_scene: SceneConfig,
}

impl ServiceConfig {
    pub fn new(demo_dir: impl Into<PathBuf>) -> Self {
        Self {
            height: 64,
            width: 64,
            demo_dir: demo_dir.into(),
            idle_timeout: Duration::from_secs(600),
            hold: 4,
            initial_scene: SceneConfig {
                bowl: BowlKind::TG,
                food: FoodKind::Granular,
                position: Position::P1,
                distractors: false,
                seed: 0,
            },
        }
    }
}

#[derive(Clone)]
struct AppState {
    config: Arc<ServiceConfig>,
    cam: Camera,
    store: EpisodeStore,
    sessions: Arc<AtomicU64>,
    shutdown: watch::Receiver<bool>,
}

/// Routes: `GET /ws` upgrades to the session protocol, `GET /health`
/// answers `ok`.
pub fn router(config: ServiceConfig, shutdown: watch::Receiver<bool>) -> Result<Router, ConfigError> {
    let cam = Camera::new(config.height, config.width).map_err(|e| ConfigError(e.to_string()))?;
    // fail at startup rather than on the first connection
    avil_core::sim::make_scene(&config.initial_scene).map_err(|e| ConfigError(e.to_string()))?;
    let state = AppState {
        store: EpisodeStore::new(config.demo_dir.clone()),
        config: Arc::new(config),
        cam,
        sessions: Arc::new(AtomicU64::new(0)),
        shutdown,
    };
    Ok(Router::new()
        .route("/ws", get(upgrade))
        .route("/health", get(|| async { "ok" }))
        .with_state(state))
}

#[derive(Debug, thiserror::Error)]
#[error("invalid service config: {0}")]
pub struct ConfigError(pub String);

/// Serve until `shutdown` resolves. Open sessions are told to stop, save
/// any recording in progress and close before this returns.
pub async fn serve(
    listener: TcpListener,
    config: ServiceConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let (tx, rx) = watch::channel(false);
    let app = router(config, rx.clone()).map_err(std::io::Error::other)?;
    tokio::spawn(async move {
        shutdown.await;
        let _ = tx.send(true);
    });
    let mut done = rx;
    axum::serve(listener, app)
        .with_graceful_shutdown(async move {
            let _ = done.wait_for(|v| *v).await;
        })
        .await
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| run_session(socket, state))
}

async fn stopping(rx: &mut watch::Receiver<bool>) {
    let _ = rx.wait_for(|v| *v).await;
}

async fn send(socket: &mut WebSocket, msg: &ServerMessage) -> bool {
    socket.send(Message::Text(msg.to_json())).await.is_ok()
}

async fn run_session(mut socket: WebSocket, state: AppState) {
    let n = state.sessions.fetch_add(1, Ordering::Relaxed);
    let token = format!("session-{n}");
    let cfg = &state.config;
    let mut session = match Session::new(&cfg.initial_scene, state.cam, cfg.hold, state.store.clone()) {
        Ok(s) => s,
        Err(e) => {
            let _ = send(&mut socket, &ServerMessage::error(None, e.code, e.message)).await;
            return;
        }
    };
    let hello = ServerMessage::Hello {
        protocol_version: PROTOCOL_VERSION,
        session: token.clone(),
        height: cfg.height,
        width: cfg.width,
        scene: cfg.initial_scene.clone(),
        joint_limits: JOINT_LIMITS.to_vec(),
        max_joint_speed: MAX_JOINT_SPEED,
    };
    if !send(&mut socket, &hello).await {
        return;
    }
    tracing::info!(%token, "session opened");
    let mut shutdown = state.shutdown.clone();

    loop {
        let incoming = tokio::select! {
            () = stopping(&mut shutdown) => {
                let saved_episode = tokio::task::spawn_blocking(move || session.flush()).await.ok().flatten();
                let _ = send(&mut socket, &ServerMessage::Shutdown { saved_episode }).await;
                let _ = socket.send(Message::Close(None)).await;
                break;
            }
            r = tokio::time::timeout(cfg.idle_timeout, socket.recv()) => r,
        };
        let text = match incoming {
            Err(_) => {
                let msg = ServerMessage::error(None, ErrorCode::IdleTimeout, "session idle for too long");
                let _ = send(&mut socket, &msg).await;
                let _ = socket.send(Message::Close(None)).await;
                break;
            }
            Ok(None) | Ok(Some(Err(_))) | Ok(Some(Ok(Message::Close(_)))) => break,
            Ok(Some(Ok(Message::Text(t)))) => t,
            Ok(Some(Ok(Message::Binary(_)))) => {
                let msg = ServerMessage::error(None, ErrorCode::BadRequest, "binary frames are not part of the protocol");
                if !send(&mut socket, &msg).await {
                    break;
                }
                continue;
            }
            Ok(Some(Ok(_))) => continue,
        };
        let reply = match parse(&text) {
            Err(reply) => reply,
            Ok(env) => {
                // Simulation and rendering run off the async workers so a
                // slow session never stalls the others.
                let joined = tokio::task::spawn_blocking(move || {
                    let reply = session.handle(env.id, env.message);
                    (session, reply)
                })
                .await;
                match joined {
                    Ok((s, reply)) => {
                        session = s;
                        reply
                    }
                    Err(e) => {
                        tracing::error!(%token, "session task failed: {e}");
                        let _ = send(&mut socket, &ServerMessage::error(None, ErrorCode::Internal, "internal error")).await;
                        break;
                    }
                }
            }
        };
        if !send(&mut socket, &reply).await {
            break;
        }
    }
    tracing::info!(%token, "session closed");
}
