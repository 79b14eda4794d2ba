//! Frame stream socket.
//!
//! Server messages are JSON text tagged by `type` (`init`, `progress`,
//! `target`, `export`, `error`) and binary frames. Frames come from the
//! session's watch channel, so a slow socket skips to the newest frame.

use std::sync::Arc;

use axum::extract::ws::{CloseFrame, Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::response::Response;
use futures::{SinkExt, StreamExt};
use relief_core::BaseSurface;
use serde::Deserialize;
use serde_json::json;
use tokio::sync::mpsc;

use crate::http::{mesh_format, ApiError};
use crate::worker::{error_json, Job, SessionHandle, Status, Update};
use crate::AppState;

const INTERNAL_ERROR: u16 = 1011;
const NORMAL: u16 = 1000;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsMsg {
    alpha: Option<f64>,
    beta: Option<f64>,
    gamma: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetMsg {
    h0: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExportMsg {
    format: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum Command {
    SetParams(ParamsMsg),
    SetBase(BaseSurface),
    TargetHeight(TargetMsg),
    Export(ExportMsg),
}

pub async fn upgrade(
    State(state): State<AppState>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    let h = state
        .get(&id)
        .ok_or_else(|| ApiError::new(axum::http::StatusCode::NOT_FOUND, "NotFound", id))?;
    Ok(ws.on_upgrade(move |socket| stream(socket, h)))
}

fn bad(message: impl std::fmt::Display) -> String {
    json!({"type": "error", "code": "InvalidMessage", "message": message.to_string()}).to_string()
}

fn close(code: u16, reason: &str) -> Message {
    Message::Close(Some(CloseFrame {
        code,
        reason: reason.into(),
    }))
}

/// Close frame for a terminal state, if the state is terminal.
fn terminal(s: &Status) -> Option<Message> {
    match s {
        Status::Error { code, .. } => Some(close(INTERNAL_ERROR, code)),
        Status::Closed => Some(close(NORMAL, "session closed")),
        _ => None,
    }
}

async fn stream(socket: WebSocket, h: Arc<SessionHandle>) {
    let (mut tx, mut rx) = socket.split();
    let mut status = h.watch_status();
    loop {
        let s = status.borrow_and_update().clone();
        if let Some(m) = terminal(&s) {
            let _ = tx.send(m).await;
            return;
        }
        if s != Status::Preparing {
            break;
        }
        if status.changed().await.is_err() {
            return;
        }
    }

    let mut frames = h.watch_frames();
    let current = frames
        .borrow_and_update()
        .clone()
        .expect("ready session has a frame");
    let info = h.info().expect("ready session has info");
    let init = json!({
        "type": "init",
        "seq": current.seq,
        "point_count": info.visible_count,
        "xy": format!("/session/{}/xy", h.id),
        "topology": format!("/session/{}/mesh-topology", h.id),
        "params": current.params,
    });
    if tx
        .send(Message::Text(init.to_string().into()))
        .await
        .is_err()
        || tx.send(Message::Binary(current.bytes)).await.is_err()
    {
        return;
    }

    let (reply, mut replies) = mpsc::unbounded_channel::<String>();
    loop {
        tokio::select! {
            msg = rx.next() => match msg {
                Some(Ok(Message::Text(t))) => handle(&h, t.as_str(), &reply).await,
                Some(Ok(Message::Binary(_))) => {
                    let _ = reply.send(bad("binary client messages are not accepted"));
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
            changed = frames.changed() => {
                if changed.is_err() {
                    return;
                }
                let f = frames.borrow_and_update().clone();
                if let Some(f) = f {
                    if tx.send(Message::Binary(f.bytes)).await.is_err() {
                        return;
                    }
                }
            }
            Some(text) = replies.recv() => {
                if tx.send(Message::Text(text.into())).await.is_err() {
                    return;
                }
            }
            changed = status.changed() => {
                if changed.is_err() {
                    return;
                }
                let s = status.borrow_and_update().clone();
                if let Some(m) = terminal(&s) {
                    let _ = tx.send(m).await;
                    return;
                }
            }
        }
    }
}

async fn handle(h: &Arc<SessionHandle>, text: &str, reply: &mpsc::UnboundedSender<String>) {
    let cmd: Command = match serde_json::from_str(text) {
        Ok(c) => c,
        Err(e) => {
            let _ = reply.send(bad(e));
            return;
        }
    };
    match cmd {
        Command::SetParams(p) => h.submit(Job::Update(Update {
            alpha: p.alpha,
            beta: p.beta,
            gamma: p.gamma,
            base: None,
            reply: Some(reply.clone()),
        })),
        Command::SetBase(base) => h.submit(Job::Update(Update {
            base: Some(base),
            reply: Some(reply.clone()),
            ..Default::default()
        })),
        Command::TargetHeight(t) if !(t.h0 > 0.0 && t.h0.is_finite()) => {
            let _ = reply.send(bad(format!("h0 {} must be positive", t.h0)));
        }
        Command::TargetHeight(t) => h.submit(Job::Target {
            h0: t.h0,
            reply: reply.clone(),
        }),
        Command::Export(e) => {
            let format = match mesh_format(e.format.as_deref()) {
                Ok(f) => f,
                Err(e) => {
                    let _ = reply.send(error_json(&e));
                    return;
                }
            };
            let h = h.clone();
            let reply = reply.clone();
            tokio::spawn(async move {
                let msg = match h.export_to_store(format).await {
                    Ok(n) => json!({
                        "type": "export",
                        "format": format_name(format),
                        "url": format!("/session/{}/export/{n}", h.id),
                    })
                    .to_string(),
                    Err(e) => error_json(&e),
                };
                let _ = reply.send(msg);
            });
        }
    }
}

fn format_name(f: relief_core::MeshFormat) -> &'static str {
    match f {
        relief_core::MeshFormat::Ply => "ply",
        relief_core::MeshFormat::Obj => "obj",
    }
}
