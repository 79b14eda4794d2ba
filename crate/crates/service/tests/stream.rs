//! Frame stream over a real socket.

mod common;

use std::time::Duration;

use axum::Router;
use common::*;
use futures::{SinkExt, StreamExt};
use relief_core::{
    load_mesh, prepare_session, synth, MeshFormat, PointCloud, ReliefParams, SessionConfig, Vector3,
};
use relief_service::{router, serve, AppState, FrameMessage, ServiceConfig};
use serde_json::{json, Value};
use tokio::net::{TcpListener, TcpStream};
use tokio_tungstenite::tungstenite::protocol::frame::coding::CloseCode;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

type Socket = WebSocketStream<MaybeTlsStream<TcpStream>>;

const QUIET: Duration = Duration::from_millis(1500);

async fn server() -> (String, Router) {
    let state = AppState::new(ServiceConfig::default());
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve(listener, state.clone()));
    (format!("ws://{addr}"), router(state))
}

enum In {
    Json(Value),
    Frame(FrameMessage),
    Closed(Option<u16>),
}

async fn next(ws: &mut Socket, wait: Duration) -> Option<In> {
    let msg = tokio::time::timeout(wait, ws.next()).await.ok()?;
    Some(match msg {
        Some(Ok(Message::Text(t))) => In::Json(serde_json::from_str(t.as_str()).unwrap()),
        Some(Ok(Message::Binary(b))) => In::Frame(FrameMessage::decode(&b).unwrap()),
        Some(Ok(Message::Close(c))) => In::Closed(c.map(|c| u16::from(c.code))),
        Some(Ok(other)) => panic!("unexpected {other:?}"),
        Some(Err(_)) | None => In::Closed(None),
    })
}

async fn next_frame(ws: &mut Socket) -> FrameMessage {
    match next(ws, Duration::from_secs(60)).await.expect("frame in time") {
        In::Frame(f) => f,
        In::Json(v) => panic!("unexpected {v}"),
        In::Closed(c) => panic!("closed {c:?}"),
    }
}

/// Collects frames and JSON until the socket has been quiet for `QUIET`.
async fn drain(ws: &mut Socket) -> (Vec<FrameMessage>, Vec<Value>) {
    let (mut frames, mut json) = (Vec::new(), Vec::new());
    while let Some(m) = next(ws, QUIET).await {
        match m {
            In::Frame(f) => frames.push(f),
            In::Json(v) => json.push(v),
            In::Closed(c) => panic!("closed {c:?}"),
        }
    }
    (frames, json)
}

async fn send(ws: &mut Socket, v: Value) {
    ws.send(Message::Text(v.to_string().into())).await.unwrap();
}

/// Connects and consumes the init message and the current frame.
async fn open(base: &str, id: &str) -> (Socket, Value, FrameMessage) {
    let (mut ws, _) = connect_async(format!("{base}/session/{id}/stream"))
        .await
        .unwrap();
    let init = match next(&mut ws, Duration::from_secs(60)).await {
        Some(In::Json(v)) => v,
        _ => panic!("expected init"),
    };
    let first = next_frame(&mut ws).await;
    (ws, init, first)
}

fn config(controls: usize) -> String {
    json!({ "controls": controls }).to_string()
}

fn direct(cloud: &PointCloud, controls: usize) -> relief_core::Session {
    let cfg = SessionConfig {
        controls,
        ..Default::default()
    };
    prepare_session(cloud, Vector3::z(), &cfg).unwrap()
}

fn f32s(v: &[f64]) -> Vec<u32> {
    v.iter().map(|&x| (x as f32).to_bits()).collect()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn init_then_one_frame_per_isolated_update() {
    let (base, app) = server().await;
    let cloud = synth::hemisphere(6000, 1.0);
    let id = create(&app, &cloud, Some(&config(600))).await;
    let (mut ws, init, first) = open(&base, &id).await;
    let info = settle(&app, &id).await;
    assert_eq!(init["type"], "init");
    assert_eq!(init["point_count"], info["visible_count"]);
    assert_eq!(init["seq"].as_u64().unwrap(), first.seq as u64);
    assert_eq!(init["params"]["alpha"], 4.0);
    let (_, xy) = get(&app, init["xy"].as_str().unwrap()).await;
    assert_eq!(xy.len(), 8 * first.point_count());

    send(
        &mut ws,
        json!({"set_params": {"alpha": 4.0, "beta": 0.01, "gamma": 0.02}}),
    )
    .await;
    let (frames, msgs) = drain(&mut ws).await;
    assert!(msgs.is_empty(), "{msgs:?}");
    assert_eq!(frames.len(), 1);
    let f = &frames[0];
    assert!(f.seq > first.seq);
    assert_eq!(f.encode().len(), 16 + 16 * f.point_count());
    let (_, span) = get_json(&app, &format!("/session/{id}/span")).await;
    assert_eq!(f.span, span["span"].as_f64().unwrap() as f32);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn rapid_updates_coalesce_to_last_params() {
    let (base, app) = server().await;
    let cloud = synth::hemisphere(20_000, 1.0);
    let id = create(&app, &cloud, Some(&config(2000))).await;
    let (mut ws, _, _) = open(&base, &id).await;
    let alphas: Vec<f64> = (0..100).map(|i| 1.0 + 0.1 * i as f64).collect();
    for &alpha in &alphas {
        send(&mut ws, json!({"set_params": {"alpha": alpha}})).await;
    }
    let (frames, msgs) = drain(&mut ws).await;
    assert!(msgs.is_empty(), "{msgs:?}");
    assert!(
        !frames.is_empty() && frames.len() < 100,
        "{} frames",
        frames.len()
    );
    assert!(frames.windows(2).all(|w| w[1].seq > w[0].seq));

    let last = frames.last().unwrap();
    let mut oracle = direct(&cloud, 2000);
    let params = ReliefParams {
        alpha: *alphas.last().unwrap(),
        ..Default::default()
    };
    oracle.adjust(&params).unwrap();
    let want = oracle.drain();
    let got: Vec<u32> = last.z.iter().map(|v| v.to_bits()).collect();
    assert_eq!(got, f32s(&want.z));
    assert_eq!(last.span, want.span as f32);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn target_height_reports_progress_then_frame() {
    let (base, app) = server().await;
    let cloud = synth::hemisphere(20_000, 1.0);
    let h0 = 0.05 * cloud.diagonal();
    let id = create(&app, &cloud, Some(&config(2000))).await;
    let (mut ws, _, _) = open(&base, &id).await;
    send(&mut ws, json!({"target_height": {"h0": h0}})).await;

    let mut progress = 0;
    let mut frames = Vec::new();
    let outcome = loop {
        match next(&mut ws, Duration::from_secs(120))
            .await
            .expect("target reply")
        {
            In::Json(v) if v["type"] == "progress" => progress += 1,
            In::Json(v) if v["type"] == "target" => break v,
            In::Json(v) => panic!("unexpected {v}"),
            In::Frame(f) => frames.push(f),
            In::Closed(c) => panic!("closed {c:?}"),
        }
    };
    assert!(progress >= 1);
    assert_eq!(outcome["solves"].as_u64().unwrap(), progress);
    let height = outcome["height"].as_f64().unwrap();
    assert!((height - h0).abs() <= 0.01 * h0, "{height} vs {h0}");

    frames.extend(drain(&mut ws).await.0);
    let f = frames.last().expect("frame after targeting");
    let span = outcome["span"].as_f64().unwrap();
    assert_eq!(f.span, span as f32);
    let gamma = 0.02;
    assert!(((f.span as f64) / (1.0 - gamma) - h0).abs() <= 0.01 * h0);
    let (_, v) = get_json(&app, &format!("/session/{id}")).await;
    assert_eq!(v["state"], "Ready");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn bad_messages_keep_socket_open() {
    let (base, app) = server().await;
    let id = create(&app, &synth::bumpy(60, 1.0), Some(&config(400))).await;
    let (mut ws, _, _) = open(&base, &id).await;
    for bad in [
        json!({"set_params": {"alpha": "high"}}),
        json!({"set_params": {"alpha": 1.0, "delta": 2.0}}),
        json!({"spin": true}),
        json!({"target_height": {"h0": -1.0}}),
        json!({"set_params": {"gamma": 1.5}}),
        json!({"export": {"format": "stl"}}),
    ] {
        send(&mut ws, bad).await;
        match next(&mut ws, Duration::from_secs(30)).await {
            Some(In::Json(v)) => assert_eq!(v["type"], "error", "{v}"),
            _ => panic!("expected an error message"),
        }
    }
    ws.send(Message::Text("not json".into())).await.unwrap();
    assert!(matches!(
        next(&mut ws, Duration::from_secs(30)).await,
        Some(In::Json(_))
    ));
    send(&mut ws, json!({"set_params": {"alpha": 2.0}})).await;
    let (frames, _) = drain(&mut ws).await;
    assert_eq!(frames.len(), 1);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn base_change_and_export_download() {
    let (base, app) = server().await;
    let cloud = synth::bumpy(60, 1.0);
    let id = create(&app, &cloud, Some(&config(400))).await;
    let (mut ws, init, _) = open(&base, &id).await;
    send(&mut ws, json!({"set_base": {"kind": "plane", "z0": 0.25}})).await;
    send(&mut ws, json!({"export": {"format": "ply"}})).await;
    let (frames, msgs) = drain(&mut ws).await;
    assert!(!frames.is_empty());
    let export = msgs
        .iter()
        .find(|v| v["type"] == "export")
        .expect("export reply");
    let (_, body) = get(&app, export["url"].as_str().unwrap()).await;
    let mesh = load_mesh(&body[..], MeshFormat::Ply).unwrap();
    assert_eq!(
        mesh.vertices().len() as u64,
        init["point_count"].as_u64().unwrap()
    );

    let mut oracle = direct(&cloud, 400);
    let params = ReliefParams {
        base: relief_core::BaseSurface::Plane { z0: 0.25 },
        ..Default::default()
    };
    oracle.adjust(&params).unwrap();
    let want = oracle.export_mesh().unwrap();
    let z = |m: &relief_core::ReliefMesh| m.vertices().iter().map(|v| v.z).collect::<Vec<_>>();
    let (a, b) = (z(&mesh), z(&want));
    assert!(a
        .iter()
        .zip(&b)
        .all(|(x, y)| (x - y).abs() <= 1e-6 * (1.0 + y.abs())));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn observers_share_frames() {
    let (base, app) = server().await;
    let id = create(&app, &synth::bumpy(60, 1.0), Some(&config(400))).await;
    let (mut a, _, _) = open(&base, &id).await;
    let (mut b, _, _) = open(&base, &id).await;
    send(&mut a, json!({"set_params": {"alpha": 6.0}})).await;
    let fa = next_frame(&mut a).await;
    let fb = next_frame(&mut b).await;
    assert_eq!(fa, fb);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn session_error_closes_with_1011() {
    let (base, app) = server().await;
    let id = create(&app, &synth::bumpy(40, 1.0), Some(&config(5))).await;
    let (mut ws, _) = connect_async(format!("{base}/session/{id}/stream"))
        .await
        .unwrap();
    match next(&mut ws, Duration::from_secs(60)).await {
        Some(In::Closed(code)) => assert_eq!(code, Some(u16::from(CloseCode::Error))),
        _ => panic!("expected close"),
    }
    assert_eq!(u16::from(CloseCode::Error), 1011);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn delete_closes_stream() {
    let (base, app) = server().await;
    let id = create(&app, &synth::bumpy(40, 1.0), Some(&config(200))).await;
    let (mut ws, _, _) = open(&base, &id).await;
    let req = axum::http::Request::delete(format!("/session/{id}"))
        .body(axum::body::Body::empty())
        .unwrap();
    call(&app, req).await;
    match next(&mut ws, Duration::from_secs(30)).await {
        Some(In::Closed(code)) => assert_eq!(code, Some(1000)),
        _ => panic!("expected close"),
    }
}
