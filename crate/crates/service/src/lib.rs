//! Local HTTP and WebSocket front end for relief sessions.
//!
//! `POST /session` uploads a cloud and prepares it in the background. Each
//! session then serves its XY layout and triangle topology once, streams
//! binary frames over `/session/{id}/stream` as parameters change, and
//! exports meshes on request.

pub mod codec;
mod http;
pub mod worker;
mod ws;

use std::collections::HashMap;
use std::net::{Ipv4Addr, SocketAddr};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::Router;
use tokio::net::TcpListener;

pub use codec::{DecodeError, FrameMessage, MAGIC};
pub use worker::{SessionHandle, Status};

pub const DEFAULT_PORT: u16 = 7878;
pub const DEFAULT_MAX_UPLOAD: usize = 512 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceConfig {
    pub port: u16,
    /// Largest accepted upload body in bytes.
    pub max_upload: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            port: DEFAULT_PORT,
            max_upload: DEFAULT_MAX_UPLOAD,
        }
    }
}

impl ServiceConfig {
    /// Reads `RELIEF_PORT` and `RELIEF_MAX_UPLOAD`, falling back to defaults.
    pub fn from_env() -> Result<Self, String> {
        let mut c = Self::default();
        if let Ok(v) = std::env::var("RELIEF_PORT") {
            c.port = v.parse().map_err(|_| format!("bad RELIEF_PORT `{v}`"))?;
        }
        if let Ok(v) = std::env::var("RELIEF_MAX_UPLOAD") {
            c.max_upload = v
                .parse()
                .map_err(|_| format!("bad RELIEF_MAX_UPLOAD `{v}`"))?;
        }
        Ok(c)
    }
}

/// Process-wide session table.
#[derive(Clone)]
pub struct AppState {
    pub config: ServiceConfig,
    sessions: Arc<Mutex<HashMap<String, Arc<SessionHandle>>>>,
    next_id: Arc<AtomicU64>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        Self {
            config,
            sessions: Default::default(),
            next_id: Arc::new(AtomicU64::new(1)),
        }
    }

    pub fn get(&self, id: &str) -> Option<Arc<SessionHandle>> {
        self.sessions.lock().unwrap().get(id).cloned()
    }

    fn insert(&self, make: impl FnOnce(String) -> Arc<SessionHandle>) -> String {
        let id = format!("s{:06}", self.next_id.fetch_add(1, Ordering::Relaxed));
        let handle = make(id.clone());
        self.sessions.lock().unwrap().insert(id.clone(), handle);
        id
    }

    fn remove(&self, id: &str) -> Option<Arc<SessionHandle>> {
        self.sessions.lock().unwrap().remove(id)
    }
}

pub fn router(state: AppState) -> Router {
    http::routes(state)
}

/// Serves on an already bound listener until the task is dropped.
pub async fn serve(listener: TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

/// Binds `127.0.0.1:port` and serves on a fresh runtime.
pub fn run(config: ServiceConfig) -> std::io::Result<()> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let addr = SocketAddr::from((Ipv4Addr::LOCALHOST, config.port));
        let listener = TcpListener::bind(addr).await?;
        eprintln!(
            "relief service listening on http://{}",
            listener.local_addr()?
        );
        serve(listener, AppState::new(config)).await
    })
}
