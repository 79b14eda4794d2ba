#![allow(dead_code)]

use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use relief_core::{save_cloud, PointCloud};
use relief_service::{router, AppState, ServiceConfig};
use serde_json::Value;
use tower::ServiceExt;

pub const BOUNDARY: &str = "relief-test-boundary";

pub fn cloud_bytes(c: &PointCloud) -> Vec<u8> {
    let mut out = Vec::new();
    save_cloud(c, &mut out).unwrap();
    out
}

/// Hand-built multipart body: `(name, file name, data)` parts.
pub fn multipart(parts: &[(&str, Option<&str>, &[u8])]) -> Vec<u8> {
    let mut b = Vec::new();
    for (name, file, data) in parts {
        b.extend_from_slice(format!("--{BOUNDARY}\r\n").as_bytes());
        match file {
            Some(f) => b.extend_from_slice(
                format!(
                    "Content-Disposition: form-data; name=\"{name}\"; filename=\"{f}\"\r\n\
                     Content-Type: application/octet-stream\r\n\r\n"
                )
                .as_bytes(),
            ),
            None => b.extend_from_slice(
                format!("Content-Disposition: form-data; name=\"{name}\"\r\n\r\n").as_bytes(),
            ),
        }
        b.extend_from_slice(data);
        b.extend_from_slice(b"\r\n");
    }
    b.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    b
}

pub fn upload_request(body: Vec<u8>) -> Request<Body> {
    Request::post("/session")
        .header(
            "content-type",
            format!("multipart/form-data; boundary={BOUNDARY}"),
        )
        .header("content-length", body.len())
        .body(Body::from(body))
        .unwrap()
}

pub fn app() -> (AppState, Router) {
    let state = AppState::new(ServiceConfig::default());
    (state.clone(), router(state))
}

pub async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let body = resp
        .into_body()
        .collect()
        .await
        .unwrap()
        .to_bytes()
        .to_vec();
    (status, body)
}

pub async fn get(app: &Router, uri: &str) -> (StatusCode, Vec<u8>) {
    call(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

pub async fn get_json(app: &Router, uri: &str) -> (StatusCode, Value) {
    let (s, b) = get(app, uri).await;
    (s, serde_json::from_slice(&b).unwrap())
}

/// Uploads `cloud` with an optional config JSON and returns the session id.
pub async fn create(app: &Router, cloud: &PointCloud, config: Option<&str>) -> String {
    let data = cloud_bytes(cloud);
    let mut parts: Vec<(&str, Option<&str>, &[u8])> = vec![
        ("cloud", Some("cloud.ply"), &data),
        ("view", None, b"0,0,1"),
    ];
    if let Some(c) = config {
        parts.push(("config", None, c.as_bytes()));
    }
    let (status, body) = call(app, upload_request(multipart(&parts))).await;
    assert_eq!(
        status,
        StatusCode::ACCEPTED,
        "{}",
        String::from_utf8_lossy(&body)
    );
    let v: Value = serde_json::from_slice(&body).unwrap();
    v["id"].as_str().unwrap().to_string()
}

/// Polls until the session leaves `Preparing` and returns its description.
pub async fn settle(app: &Router, id: &str) -> Value {
    for _ in 0..1200 {
        let (_, v) = get_json(app, &format!("/session/{id}")).await;
        if v["state"] != "Preparing" {
            return v;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    panic!("session {id} never finished preparing");
}
