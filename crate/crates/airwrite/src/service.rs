//! Streaming recognizer over WebSocket plus two plain HTTP routes.
//!
//! Protocol handling lives in [`Session`], which knows nothing about
//! sockets; the axum handlers only move JSON text in and out of it.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use airwrite_core::model::{CnnModel, Prediction};
use airwrite_core::motion::{
    MotionConfig, PenEvent, PenTracker, ReplayPoint, StepOutput, VelocityUnits, NOMINAL_HEIGHT, NOMINAL_WIDTH,
};
use airwrite_core::raster::{Glyph, Provenance};
use airwrite_core::{Error, GLYPH_SIDE};
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

use crate::io;

pub const TOP_K: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Point {
        t: f64,
        x: f64,
        y: f64,
        found: bool,
    },
    /// Motion overrides for the rest of the session.
    Config {
        #[serde(default)]
        v_threshold: Option<f64>,
        #[serde(default)]
        velocity_units: Option<VelocityUnits>,
        #[serde(default)]
        penup_hold_frames: Option<usize>,
        #[serde(default)]
        window_cap: Option<usize>,
    },
    /// Lifts the pen and flushes any open stroke.
    End,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Ack {
        session: u64,
        config: MotionConfig,
    },
    State {
        pen: String,
    },
    Prediction {
        top: Vec<Prediction>,
        glyph_png_base64: String,
    },
    ConfigAck {
        config: MotionConfig,
    },
    ConfigRejected {
        detail: String,
    },
    Error {
        code: String,
        detail: String,
    },
}

impl ServerMessage {
    fn error(code: &str, detail: impl ToString) -> Self {
        ServerMessage::Error {
            code: code.into(),
            detail: detail.to_string(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server message serializes")
    }
}

/// Top-k prediction message for a glyph.
pub fn prediction_message(model: &CnnModel, glyph: &Glyph) -> Result<ServerMessage, Error> {
    Ok(ServerMessage::Prediction {
        top: model.predict(glyph, TOP_K)?,
        glyph_png_base64: BASE64.encode(io::encode_png_gray(GLYPH_SIDE, GLYPH_SIDE, glyph.pixels())),
    })
}

/// Replies to one client message and whether the session must close.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Reply {
    pub messages: Vec<ServerMessage>,
    pub close: bool,
}

/// Per-connection state: one pen tracker over a shared read-only model.
pub struct Session {
    id: u64,
    model: Arc<CnnModel>,
    tracker: PenTracker,
    closed: bool,
}

impl Session {
    pub fn new(id: u64, model: Arc<CnnModel>, motion: MotionConfig) -> Result<Self, Error> {
        let tracker = PenTracker::new(motion, NOMINAL_HEIGHT, Provenance::Live)?.with_stream(format!("session-{id}"));
        Ok(Self {
            id,
            model,
            tracker,
            closed: false,
        })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn greeting(&self) -> ServerMessage {
        ServerMessage::Ack {
            session: self.id,
            config: *self.tracker.config(),
        }
    }

    fn fail(&mut self, message: ServerMessage) -> Reply {
        self.closed = true;
        Reply {
            messages: vec![message],
            close: true,
        }
    }

    pub fn handle_text(&mut self, text: &str) -> Reply {
        if self.closed {
            return Reply {
                messages: vec![],
                close: true,
            };
        }
        match serde_json::from_str::<ClientMessage>(text) {
            Ok(msg) => self.handle(msg),
            Err(e) => self.fail(ServerMessage::error("malformed", e)),
        }
    }

    pub fn handle(&mut self, msg: ClientMessage) -> Reply {
        match msg {
            ClientMessage::Point { t, x, y, found } => self.handle_point(t, x, y, found),
            ClientMessage::Config {
                v_threshold,
                velocity_units,
                penup_hold_frames,
                window_cap,
            } => {
                let mut next = *self.tracker.config();
                if let Some(units) = velocity_units {
                    next.velocity_units = units;
                    if v_threshold.is_none() {
                        next.v_threshold = units.default_threshold();
                    }
                }
                if let Some(v) = v_threshold {
                    next.v_threshold = v;
                }
                if let Some(h) = penup_hold_frames {
                    next.penup_hold_frames = h;
                }
                if let Some(w) = window_cap {
                    next.window_cap = w;
                }
                let message = match self.tracker.set_config(next) {
                    Ok(()) => ServerMessage::ConfigAck { config: next },
                    Err(e) => ServerMessage::ConfigRejected { detail: e.to_string() },
                };
                Reply {
                    messages: vec![message],
                    close: false,
                }
            }
            ClientMessage::End => {
                let step = self.tracker.finish();
                self.step_messages(step)
            }
        }
    }

    fn handle_point(&mut self, t: f64, x: f64, y: f64, found: bool) -> Reply {
        if !(t.is_finite() && t >= 0.0) {
            return self.fail(ServerMessage::error("malformed", "t must be a non-negative number"));
        }
        if found && !((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y)) {
            return self.fail(ServerMessage::error("malformed", "x and y must lie in [0, 1]"));
        }
        let point = ReplayPoint {
            t: t.round() as u64,
            x,
            y,
            found,
        };
        match self.tracker.observe(&point.to_observation(NOMINAL_WIDTH, NOMINAL_HEIGHT)) {
            Ok(step) => self.step_messages(step),
            Err(e @ Error::NonMonotonicTimestamp { .. }) => self.fail(ServerMessage::error("time_regression", e)),
            Err(e) => self.fail(ServerMessage::error("internal", e)),
        }
    }

    fn step_messages(&mut self, step: StepOutput) -> Reply {
        let mut messages = Vec::new();
        match step.event {
            PenEvent::PenDown => messages.push(ServerMessage::State { pen: "down".into() }),
            PenEvent::PenUp => messages.push(ServerMessage::State { pen: "up".into() }),
            PenEvent::None => {}
        }
        if let Some(glyph) = step.stroke.and_then(|s| s.glyph) {
            match prediction_message(&self.model, &glyph) {
                Ok(m) => messages.push(m),
                Err(e) => return self.fail(ServerMessage::error("internal", e)),
            }
        }
        Reply { messages, close: false }
    }
}

#[derive(Clone)]
pub struct AppState {
    pub model: Arc<CnnModel>,
    pub motion: MotionConfig,
    next_session: Arc<AtomicU64>,
}

impl AppState {
    pub fn new(model: CnnModel, motion: MotionConfig) -> Self {
        Self {
            model: Arc::new(model),
            motion,
            next_session: Arc::new(AtomicU64::new(1)),
        }
    }

    pub fn new_session(&self) -> Result<Session, Error> {
        let id = self.next_session.fetch_add(1, Ordering::Relaxed);
        Session::new(id, Arc::clone(&self.model), self.motion)
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/classify", post(classify))
        .route("/v1/stream", get(stream))
        .with_state(state)
}

async fn health(State(state): State<AppState>) -> Json<serde_json::Value> {
    let config = state.model.config();
    Json(serde_json::json!({
        "status": "ok",
        "model": {"language_tag": config.language_tag, "n_classes": config.n_classes},
    }))
}

#[derive(Debug, Deserialize)]
pub struct ClassifyRequest {
    /// 56x56 grayscale glyph, either raw row-major bytes or a PNG file.
    pub glyph_base64: String,
}

fn bad_request(code: &str, detail: impl ToString) -> Response {
    (StatusCode::BAD_REQUEST, Json(ServerMessage::error(code, detail))).into_response()
}

/// Raw 56x56 bytes or a 56x56 PNG.
pub fn decode_glyph(bytes: &[u8]) -> Result<Glyph, String> {
    let pixels = if bytes.starts_with(b"\x89PNG") {
        let (w, h, px) = io::decode_png_gray(bytes)?;
        if (w, h) != (GLYPH_SIDE, GLYPH_SIDE) {
            return Err(format!("glyph must be {GLYPH_SIDE}x{GLYPH_SIDE}, got {w}x{h}"));
        }
        px
    } else {
        bytes.to_vec()
    };
    Glyph::new(pixels, Provenance::Imported).map_err(|e| e.to_string())
}

async fn classify(State(state): State<AppState>, body: Result<Json<ClassifyRequest>, axum::extract::rejection::JsonRejection>) -> Response {
    let Json(req) = match body {
        Ok(b) => b,
        Err(e) => return bad_request("malformed", e.body_text()),
    };
    let bytes = match BASE64.decode(req.glyph_base64.trim()) {
        Ok(b) => b,
        Err(e) => return bad_request("malformed", e),
    };
    let glyph = match decode_glyph(&bytes) {
        Ok(g) => g,
        Err(e) => return bad_request("bad_glyph", e),
    };
    match prediction_message(&state.model, &glyph) {
        Ok(m) => Json(m).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, Json(ServerMessage::error("internal", e))).into_response(),
    }
}

async fn stream(State(state): State<AppState>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| run_socket(state, socket))
}

async fn send(socket: &mut WebSocket, message: &ServerMessage) -> bool {
    socket.send(Message::Text(message.to_json().into())).await.is_ok()
}

async fn run_socket(state: AppState, mut socket: WebSocket) {
    let mut session = match state.new_session() {
        Ok(s) => s,
        Err(e) => {
            send(&mut socket, &ServerMessage::error("internal", e)).await;
            return;
        }
    };
    if !send(&mut socket, &session.greeting()).await {
        return;
    }
    while let Some(Ok(msg)) = socket.recv().await {
        let reply = match msg {
            Message::Text(text) => session.handle_text(text.as_str()),
            Message::Binary(_) => session.handle_text(""),
            Message::Close(_) => break,
            Message::Ping(_) | Message::Pong(_) => continue,
        };
        for m in &reply.messages {
            if !send(&mut socket, m).await {
                return;
            }
        }
        if reply.close {
            let _ = socket.send(Message::Close(None)).await;
            return;
        }
    }
}

/// Serves until the process is interrupted.
pub async fn serve(listener: TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

pub async fn bind(addr: SocketAddr) -> std::io::Result<TcpListener> {
    TcpListener::bind(addr).await
}
