//! Starts the job service on an ephemeral port with the model in
//! `TLC_MODEL_DIR` (else `models/toy`), submits a root-trajectory request over
//! plain HTTP, polls it to completion and prints the control errors.

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::path::PathBuf;
use std::time::Duration;

use serde_json::{json, Value};
use tlc_service::{router, AppState, LoadedModel};
use tlcontrol::config::{ServiceConfig, MODEL_DIR_ENV};

fn request(addr: SocketAddr, method: &str, path: &str, body: Option<&Value>) -> (u16, Value) {
    let body = body.map(|b| b.to_string()).unwrap_or_default();
    let mut stream = TcpStream::connect(addr).expect("connect");
    write!(
        stream,
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut raw = String::new();
    stream.read_to_string(&mut raw).unwrap();
    let status = raw[9..12].parse().unwrap();
    let payload = raw.split_once("\r\n\r\n").map_or("", |(_, b)| b);
    (status, serde_json::from_str(payload).unwrap_or(Value::Null))
}

fn main() {
    let dir = std::env::var_os(MODEL_DIR_ENV).map_or_else(|| PathBuf::from("models/toy"), PathBuf::from);
    let model = LoadedModel::load(&dir).expect("load a trained model first (see the train_mtt example)");
    let frames = model.frames();

    let rt = tokio::runtime::Runtime::new().unwrap();
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let addr = listener.local_addr().unwrap();
    // the job table task is spawned onto the runtime
    let app = rt.block_on(async { router(AppState::new(ServiceConfig::default(), Some(model))) });
    rt.spawn(async move { axum::serve(listener, app).await.unwrap() });
    println!("serving on http://{addr}");

    let (_, health) = request(addr, "GET", "/api/v1/health", None);
    println!("health: {health}");

    let waypoints: Vec<Value> =
        (0..frames).step_by(8).map(|t| json!({"frame": t, "position": [0.06 * t as f64, 0.92, 0.0]})).collect();
    let body = json!({
        "text": "a person walks forward",
        "trajectory": {"length": frames, "controls": [{"joint_group": "root", "waypoints": waypoints}]},
        "seed": 1,
        "num_samples": 2,
    });
    let (status, submitted) = request(addr, "POST", "/api/v1/jobs", Some(&body));
    println!("submit -> {status} {submitted}");
    let id = submitted["id"].as_str().unwrap().to_string();

    loop {
        let (_, job) = request(addr, "GET", &format!("/api/v1/jobs/{id}"), None);
        match job["status"].as_str().unwrap() {
            "done" => {
                for s in job["result"]["samples"].as_array().unwrap() {
                    println!("sample: {:.2} cm -> {:.2} cm", s["unrefined_avg_err_cm"].as_f64().unwrap(), s["avg_err_cm"].as_f64().unwrap());
                }
                println!("control: {}", job["result"]["control"]);
                break;
            }
            "error" | "cancelled" => {
                println!("job ended: {job}");
                break;
            }
            status => {
                println!("{status}: {:.0}%", 100.0 * job["progress"]["fraction"].as_f64().unwrap_or(0.0));
                std::thread::sleep(Duration::from_millis(200));
            }
        }
    }

    let bad = json!({"text": "walk", "trajectory": {"length": frames, "controls": [{"joint_group": "tail", "waypoints": []}]}});
    println!("invalid request -> {:?}", request(addr, "POST", "/api/v1/jobs", Some(&bad)));
}
