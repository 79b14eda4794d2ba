//! Per-session adjust worker and the shared handle the HTTP layer reads.
//!
//! The worker thread owns the [`Session`]. Parameter updates queue in an
//! inbox where consecutive updates merge, so a burst is solved once per
//! worker pass. Frames go out through a watch channel: every observer sees
//! only the newest one.

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Condvar, Mutex, OnceLock};

use bytes::Bytes;
use relief_core::{
    prepare_session, save_mesh, BaseSurface, FrameResult, MeshFormat, PointCloud, PrepareTimings,
    ReliefError, ReliefParams, Session, SessionConfig, TargetProgress, TargetRequest, Vector3,
};
use serde::Serialize;
use serde_json::json;
use tokio::sync::{mpsc, oneshot, watch};

use crate::codec::{encode_triangles, encode_xy, FrameMessage};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "state")]
pub enum Status {
    Preparing,
    Ready,
    Targeting,
    Error { code: String, message: String },
    Closed,
}

/// Data fixed once prepare finishes.
#[derive(Debug)]
pub struct ReadyInfo {
    pub visible_count: usize,
    pub control_count: usize,
    pub triangle_count: usize,
    pub rho: f64,
    pub diagonal: f64,
    pub timings: PrepareTimings,
    pub xy: Bytes,
    pub topology: Bytes,
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub seq: u64,
    pub span: f64,
    pub params: ReliefParams,
    pub bytes: Bytes,
}

/// Replies routed back to one socket.
pub type Reply = mpsc::UnboundedSender<String>;

/// Partial parameter change; later fields override earlier ones.
#[derive(Debug, Clone, Default)]
pub struct Update {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub base: Option<BaseSurface>,
    pub reply: Option<Reply>,
}

impl Update {
    fn merge(&mut self, later: Update) {
        self.alpha = later.alpha.or(self.alpha);
        self.beta = later.beta.or(self.beta);
        self.gamma = later.gamma.or(self.gamma);
        self.base = later.base.or(self.base.take());
        self.reply = later.reply.or(self.reply.take());
    }

    fn apply(&self, p: &ReliefParams) -> ReliefParams {
        ReliefParams {
            alpha: self.alpha.unwrap_or(p.alpha),
            beta: self.beta.unwrap_or(p.beta),
            gamma: self.gamma.unwrap_or(p.gamma),
            base: self.base.clone().unwrap_or_else(|| p.base.clone()),
        }
    }
}

pub enum Job {
    Update(Update),
    Target {
        h0: f64,
        reply: Reply,
    },
    Export {
        format: MeshFormat,
        done: oneshot::Sender<Result<Bytes, ReliefError>>,
    },
}

#[derive(Default)]
struct Inbox {
    jobs: VecDeque<Job>,
    closed: bool,
}

pub struct SessionHandle {
    pub id: String,
    pub input_count: usize,
    status: watch::Sender<Status>,
    frames: watch::Sender<Option<Frame>>,
    info: OnceLock<ReadyInfo>,
    inbox: Mutex<Inbox>,
    wake: Condvar,
    exports: Mutex<HashMap<u64, (MeshFormat, Bytes)>>,
    next_export: Mutex<u64>,
}

impl SessionHandle {
    /// Starts the worker thread, which prepares the session and then serves jobs.
    pub fn spawn(
        id: String,
        cloud: PointCloud,
        view: Vector3<f64>,
        config: SessionConfig,
    ) -> Arc<Self> {
        let handle = Arc::new(Self {
            id,
            input_count: cloud.len(),
            status: watch::channel(Status::Preparing).0,
            frames: watch::channel(None).0,
            info: OnceLock::new(),
            inbox: Mutex::new(Inbox::default()),
            wake: Condvar::new(),
            exports: Mutex::new(HashMap::new()),
            next_export: Mutex::new(0),
        });
        let h = handle.clone();
        std::thread::Builder::new()
            .name(format!("relief-{}", handle.id))
            .spawn(move || h.run(cloud, view, config))
            .expect("spawn session worker");
        handle
    }

    pub fn status(&self) -> Status {
        self.status.borrow().clone()
    }

    pub fn watch_status(&self) -> watch::Receiver<Status> {
        self.status.subscribe()
    }

    pub fn watch_frames(&self) -> watch::Receiver<Option<Frame>> {
        self.frames.subscribe()
    }

    pub fn latest(&self) -> Option<Frame> {
        self.frames.borrow().clone()
    }

    pub fn info(&self) -> Option<&ReadyInfo> {
        self.info.get()
    }

    pub fn export(&self, n: u64) -> Option<(MeshFormat, Bytes)> {
        self.exports.lock().unwrap().get(&n).cloned()
    }

    /// Queues a job; updates merge into a queued update right before them.
    pub fn submit(&self, job: Job) {
        let mut inbox = self.inbox.lock().unwrap();
        match (inbox.jobs.back_mut(), job) {
            (Some(Job::Update(prev)), Job::Update(next)) => prev.merge(next),
            (_, job) => inbox.jobs.push_back(job),
        }
        self.wake.notify_one();
    }

    /// Stops the worker after its current job.
    pub fn close(&self) {
        let mut inbox = self.inbox.lock().unwrap();
        inbox.closed = true;
        inbox.jobs.clear();
        self.wake.notify_one();
        self.status.send_replace(Status::Closed);
    }

    fn next_job(&self) -> Option<Job> {
        let mut inbox = self.inbox.lock().unwrap();
        loop {
            if inbox.closed {
                return None;
            }
            if let Some(job) = inbox.jobs.pop_front() {
                return Some(job);
            }
            inbox = self.wake.wait(inbox).unwrap();
        }
    }

    fn has_update(&self) -> bool {
        matches!(
            self.inbox.lock().unwrap().jobs.front(),
            Some(Job::Update(_))
        )
    }

    /// Moves to `next` unless the session was closed.
    fn set_status(&self, next: Status) {
        self.status.send_if_modified(|s| {
            let open = *s != Status::Closed;
            if open {
                *s = next;
            }
            open
        });
    }

    fn fail(&self, e: &ReliefError) {
        self.set_status(Status::Error {
            code: e.code().into(),
            message: e.to_string(),
        });
    }

    fn publish(&self, frame: &FrameResult) {
        let bytes = FrameMessage::from_frame(frame).encode();
        self.frames.send_replace(Some(Frame {
            seq: frame.seq,
            span: frame.span,
            params: frame.params.clone(),
            bytes,
        }));
    }

    fn run(&self, cloud: PointCloud, view: Vector3<f64>, config: SessionConfig) {
        let mut session = match prepare_session(&cloud, view, &config) {
            Ok(s) => s,
            Err(e) => return self.fail(&e),
        };
        drop(cloud);
        let prep = session.prepared();
        let _ = self.info.set(ReadyInfo {
            visible_count: session.point_count(),
            control_count: session.control_count(),
            triangle_count: session.triangles().len(),
            rho: prep.rho.get(),
            diagonal: prep.cloud.diagonal(),
            timings: prep.timings.clone(),
            xy: encode_xy(session.xy()),
            topology: encode_triangles(session.triangles()),
        });
        self.publish(session.last_frame());
        self.set_status(Status::Ready);

        while let Some(job) = self.next_job() {
            let outcome = match job {
                Job::Update(u) => self.update(&mut session, u),
                Job::Target { h0, reply } => self.target(&mut session, h0, reply),
                Job::Export { format, done } => {
                    let _ = done.send(mesh_bytes(&mut session, format));
                    self.publish(session.last_frame());
                    Ok(())
                }
            };
            if let Err(e) = outcome {
                return self.fail(&e);
            }
        }
    }

    /// Solves the merged update. When no further update is waiting the
    /// frame is drained so the idle geometry matches the parameters.
    fn update(&self, session: &mut Session, u: Update) -> Result<(), ReliefError> {
        let params = u.apply(session.params());
        if let Err(e) = params.validate() {
            send(&u.reply, error_json(&e));
            return Ok(());
        }
        let frame = session.adjust(&params)?;
        if let Some(e) = &frame.error {
            send(
                &u.reply,
                json!({"type": "error", "code": "StageFailure", "message": e}).to_string(),
            );
        }
        if self.has_update() {
            self.publish(&frame);
        } else {
            self.publish(&session.drain());
        }
        Ok(())
    }

    fn target(&self, session: &mut Session, h0: f64, reply: Reply) -> Result<(), ReliefError> {
        self.set_status(Status::Targeting);
        let req = TargetRequest::new(h0);
        let progress = |p: TargetProgress| {
            let _ = reply.send(tagged("progress", &p).to_string());
        };
        let result = session.solve_for_height(&req, progress);
        self.set_status(Status::Ready);
        match result {
            Ok(outcome) => {
                self.publish(&session.drain());
                let _ = reply.send(tagged("target", &outcome).to_string());
            }
            Err(e) => {
                let _ = reply.send(error_json(&e));
            }
        }
        Ok(())
    }

    /// Drains, exports, and keeps the bytes for download under a new number.
    pub async fn export_to_store(&self, format: MeshFormat) -> Result<u64, ReliefError> {
        let bytes = self.export_now(format).await?;
        let n = {
            let mut next = self.next_export.lock().unwrap();
            *next += 1;
            *next
        };
        self.exports.lock().unwrap().insert(n, (format, bytes));
        Ok(n)
    }

    /// Drains and serializes the relief through the worker.
    pub async fn export_now(&self, format: MeshFormat) -> Result<Bytes, ReliefError> {
        let (done, rx) = oneshot::channel();
        self.submit(Job::Export { format, done });
        rx.await
            .unwrap_or_else(|_| Err(ReliefError::InvalidParams("session closed".into())))
    }
}

fn mesh_bytes(session: &mut Session, format: MeshFormat) -> Result<Bytes, ReliefError> {
    let mesh = session.export_mesh()?;
    let mut out = Vec::new();
    save_mesh(&mesh, &mut out, format)?;
    Ok(out.into())
}

fn send(reply: &Option<Reply>, msg: String) {
    if let Some(r) = reply {
        let _ = r.send(msg);
    }
}

pub fn error_json(e: &ReliefError) -> String {
    json!({"type": "error", "code": e.code(), "message": e.to_string()}).to_string()
}

/// Serializes `body` with an added `type` field.
fn tagged(kind: &str, body: &impl Serialize) -> String {
    let mut v = serde_json::to_value(body).expect("serializable");
    v["type"] = json!(kind);
    v.to_string()
}
