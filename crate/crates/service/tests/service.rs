use std::path::Path;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tlc_service::{router, AppState, LoadedModel};
use tlcontrol::config::ServiceConfig;
use tlcontrol::container::{save_model, Manifest, MANIFEST_FILE};
use tlcontrol::dataset::NormStats;
use tlcontrol::mtt::{Mtt, MttConfig};
use tlcontrol::vqvae::{Codec, VqvaeConfig};

const M: usize = 137;
const FRAMES: usize = 16;

fn small_model() -> Mtt {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let stats = NormStats {
        mean: (0..M).map(|_| rng.gen_range(-0.05..0.05)).collect(),
        std: (0..M).map(|_| rng.gen_range(0.05..0.3)).collect(),
    };
    let vq = VqvaeConfig { codebook_size: 16, code_dim: 8, enc_width: 16, dec_width: 24, window: 8, ..Default::default() };
    let mut codec = Codec::new(vq, stats, &mut rng).unwrap();
    for cb in &mut codec.codebooks {
        cb.codes.iter_mut().for_each(|c| *c = rng.gen_range(-1.0..1.0));
    }
    let config = MttConfig {
        stage1_width: 16,
        stage1_layers: 1,
        stage2_width: 8,
        stage2_layers: 1,
        heads: 2,
        ff_mult: 2,
        max_len: FRAMES,
        ..Default::default()
    };
    Mtt::new(config, codec, &mut rng).unwrap()
}

fn saved_model(dir: &Path) -> LoadedModel {
    save_model(dir, &small_model()).unwrap();
    LoadedModel::load(dir).unwrap()
}

fn app(workers: usize, model: Option<LoadedModel>) -> (AppState, Router) {
    let state = AppState::new(ServiceConfig { workers, ..Default::default() }, model);
    (state.clone(), router(state))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    use tower::ServiceExt;
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

fn root_request(seed: u64, samples: usize) -> Value {
    let waypoints: Vec<Value> = (0..FRAMES).step_by(3).map(|f| json!({"frame": f, "position": [0.05 * f as f64, 0.9, 0.0]})).collect();
    json!({
        "text": "a person walks forward",
        "trajectory": {"length": FRAMES, "controls": [{"joint_group": "root", "waypoints": waypoints}]},
        "seed": seed,
        "num_samples": samples,
        "optimize": {"tolerance": 1e-6, "max_iterations": 15}
    })
}

async fn submit(app: &Router, body: Value) -> String {
    let (status, v) = call(app, "POST", "/api/v1/jobs", Some(body)).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{v}");
    v["id"].as_str().unwrap().to_string()
}

async fn wait_terminal(app: &Router, id: &str) -> Value {
    for _ in 0..2000 {
        let (status, v) = call(app, "GET", &format!("/api/v1/jobs/{id}"), None).await;
        assert_eq!(status, StatusCode::OK);
        if matches!(v["status"].as_str(), Some("done" | "error" | "cancelled")) {
            return v;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    panic!("job {id} did not finish");
}

#[tokio::test]
async fn submit_without_a_model_conflicts() {
    let (_, app) = app(1, None);
    let (status, _) = call(&app, "POST", "/api/v1/jobs", Some(root_request(0, 1))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = call(&app, "GET", "/api/v1/model", None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, health) = call(&app, "GET", "/api/v1/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(health["model_loaded"], json!(false));
}

#[tokio::test]
async fn validation_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app(1, Some(saved_model(dir.path())));

    let mut bad_group = root_request(0, 1);
    bad_group["trajectory"]["controls"][0]["joint_group"] = json!("pelvis_x");
    let (status, v) = call(&app, "POST", "/api/v1/jobs", Some(bad_group)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["field"], json!("trajectory.controls[0].joint_group"));

    let mut bad_frame = root_request(0, 1);
    bad_frame["trajectory"]["controls"][0]["waypoints"][1]["frame"] = json!(FRAMES);
    let (status, v) = call(&app, "POST", "/api/v1/jobs", Some(bad_frame)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["field"], json!("trajectory.controls[0].waypoints[1].frame"));

    let (status, v) = call(&app, "POST", "/api/v1/jobs", Some(json!({"text": " "}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["field"], json!("text"));

    let (status, v) = call(&app, "POST", "/api/v1/jobs", Some(json!({"text": "walk", "num_samples": "two"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["field"], json!("num_samples"));

    let mut bad_len = root_request(0, 1);
    bad_len["trajectory"]["length"] = json!(FRAMES + 1);
    let (status, v) = call(&app, "POST", "/api/v1/jobs", Some(bad_len)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["field"], json!("trajectory.length"));
}

#[tokio::test]
async fn unknown_job_is_not_found() {
    let (_, app) = app(1, None);
    assert_eq!(call(&app, "GET", "/api/v1/jobs/job-99", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "DELETE", "/api/v1/jobs/job-99", None).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn job_runs_to_completion_with_motions_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app(1, Some(saved_model(dir.path())));
    let id = submit(&app, root_request(3, 2)).await;
    let v = wait_terminal(&app, &id).await;
    assert_eq!(v["status"], json!("done"), "{v}");
    assert_eq!(v["progress"]["fraction"], json!(1.0));
    let result = &v["result"];
    let motions = result["motions"].as_array().unwrap();
    assert_eq!(motions.len(), 2);
    for m in motions {
        assert_eq!(m["global_positions"].as_array().unwrap().len(), FRAMES);
    }
    for s in result["samples"].as_array().unwrap() {
        let refined = s["avg_err_cm"].as_f64().unwrap();
        assert!(refined <= s["unrefined_avg_err_cm"].as_f64().unwrap() + 1e-9);
        assert!(!s["trace"]["objective"].as_array().unwrap().is_empty());
    }
    assert!(result["control"].is_object());
    let (status, _) = call(&app, "DELETE", &format!("/api/v1/jobs/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn identical_requests_give_identical_motions() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app(2, Some(saved_model(dir.path())));
    let a = submit(&app, root_request(11, 2)).await;
    let b = submit(&app, root_request(11, 2)).await;
    let c = submit(&app, root_request(12, 2)).await;
    let ra = wait_terminal(&app, &a).await;
    let rb = wait_terminal(&app, &b).await;
    let rc = wait_terminal(&app, &c).await;
    let bytes = |v: &Value| serde_json::to_string(&v["result"]["motions"]).unwrap();
    assert_eq!(bytes(&ra), bytes(&rb));
    assert_ne!(bytes(&ra), bytes(&rc));
}

#[tokio::test]
async fn pending_job_cancels_without_a_result() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app(1, Some(saved_model(dir.path())));
    let busy = submit(&app, root_request(1, 4)).await;
    let queued = submit(&app, root_request(2, 1)).await;
    let (status, snap) = call(&app, "DELETE", &format!("/api/v1/jobs/{queued}"), None).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{snap}");
    let v = wait_terminal(&app, &queued).await;
    assert_eq!(v["status"], json!("cancelled"));
    assert!(v.get("result").is_none());
    assert_eq!(wait_terminal(&app, &busy).await["status"], json!("done"));
}

#[tokio::test]
async fn running_job_stops_when_cancelled() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app(1, Some(saved_model(dir.path())));
    let mut long = root_request(5, 16);
    long["optimize"] = json!({"tolerance": 1e-30, "max_iterations": 100000});
    let id = submit(&app, long).await;
    for _ in 0..500 {
        let (_, v) = call(&app, "GET", &format!("/api/v1/jobs/{id}"), None).await;
        if v["status"] == json!("running") && v["progress"]["iteration"].as_u64().unwrap_or(0) > 0 {
            break;
        }
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    call(&app, "DELETE", &format!("/api/v1/jobs/{id}"), None).await;
    let v = wait_terminal(&app, &id).await;
    assert_eq!(v["status"], json!("cancelled"));
    assert!(v.get("result").is_none());
}

#[tokio::test]
async fn concurrent_jobs_never_exceed_the_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let (state, app) = app(2, Some(saved_model(dir.path())));
    let mut ids = Vec::new();
    for s in 0..6 {
        ids.push(submit(&app, root_request(s, 1)).await);
    }
    for id in &ids {
        assert_eq!(wait_terminal(&app, id).await["status"], json!("done"));
    }
    assert!(state.peak_running() <= 2 && state.peak_running() >= 1);
    let (_, health) = call(&app, "GET", "/api/v1/health", None).await;
    assert_eq!(health["running"], json!(0));
}

#[tokio::test]
async fn model_endpoint_loads_and_rejects_bad_directories() {
    let dir = tempfile::tempdir().unwrap();
    save_model(dir.path(), &small_model()).unwrap();
    let (_, app) = app(1, None);
    let (status, info) = call(&app, "POST", "/api/v1/model", Some(json!({"dir": dir.path()}))).await;
    assert_eq!(status, StatusCode::OK, "{info}");
    assert_eq!(info["frames"], json!(FRAMES));
    assert_eq!(call(&app, "GET", "/api/v1/model", None).await.0, StatusCode::OK);

    let stale = tempfile::tempdir().unwrap();
    save_model(stale.path(), &small_model()).unwrap();
    let path = stale.path().join(MANIFEST_FILE);
    let mut manifest: Manifest = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    manifest.version += 1;
    std::fs::write(&path, serde_json::to_vec(&manifest).unwrap()).unwrap();
    let (status, v) = call(&app, "POST", "/api/v1/model", Some(json!({"dir": stale.path()}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["field"], json!("dir"));

    let (status, v) = call(&app, "POST", "/api/v1/model", Some(json!({"path": "x"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{v}");
}
