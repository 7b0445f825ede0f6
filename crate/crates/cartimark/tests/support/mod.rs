#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use cartimark::dataset::{generate_phantoms, save_split, Dataset};
use cartimark::resolver::Resolver;
use cartimark::service::{router, AppState, ModelRegistry, ServiceConfig};
use cartimark_core::phantom::PhantomConfig;
use cartimark_core::split::{split_dataset, SplitRatios};
use cartimark_core::table2::Table2Dataset;
use cartimark_core::Label;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

/// A phantom dataset on disk with a stratified split next to it.
pub struct PhantomFiles {
    pub dir: PathBuf,
    pub manifest: PathBuf,
    pub split: PathBuf,
}

pub fn phantom_files(dir: &Path, config: &PhantomConfig, split_seed: u64) -> PhantomFiles {
    let m = generate_phantoms(config, dir).unwrap();
    let split = split_dataset(&m, SplitRatios::STANDARD, split_seed, true).unwrap();
    save_split(&dir.join("split.json"), &split).unwrap();
    PhantomFiles { dir: dir.into(), manifest: dir.join("manifest.json"), split: dir.join("split.json") }
}

pub fn small_phantoms() -> PhantomConfig {
    PhantomConfig { n_patients: 40, seed: 11, image_size: 32, ..PhantomConfig::default() }
}

pub fn open(files: &PhantomFiles) -> Dataset {
    Dataset::open(&files.manifest).unwrap()
}

/// In-process service over a tempdir root.
pub struct App {
    pub state: Arc<AppState>,
    pub router: Router,
    pub token: Option<String>,
}

pub struct Reply {
    pub status: StatusCode,
    pub content_type: Option<String>,
    pub bytes: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.bytes).unwrap_or_else(|e| {
            panic!("not JSON ({e}): {}", String::from_utf8_lossy(&self.bytes))
        })
    }
}

impl App {
    pub fn new(root: &Path, resolver: Resolver, models: ModelRegistry, token: Option<&str>) -> Self {
        let state = Arc::new(
            AppState::new(ServiceConfig { root: root.into(), api_token: token.map(String::from) }, resolver, models)
                .unwrap(),
        );
        App { router: router(state.clone()), state, token: token.map(String::from) }
    }

    pub async fn raw(&self, method: Method, uri: &str, body: Option<Value>, token: Option<&str>) -> Reply {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        let req = match body {
            Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let resp = self.router.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let content_type = resp.headers().get("content-type").map(|v| v.to_str().unwrap().to_string());
        let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        Reply { status, content_type, bytes }
    }

    pub async fn call(&self, method: Method, uri: &str, body: Option<Value>) -> Reply {
        let token = self.token.clone();
        self.raw(method, uri, body, token.as_deref()).await
    }

    pub async fn get(&self, uri: &str) -> Reply {
        self.call(Method::GET, uri, None).await
    }

    pub async fn post(&self, uri: &str, body: Value) -> Reply {
        self.call(Method::POST, uri, Some(body)).await
    }

    pub async fn create_session(&self, reader: &str, role: &str, dataset_ref: &str, seed: u64) -> Reply {
        self.post("/sessions", json!({ "reader_id": reader, "reader_role": role, "dataset_ref": dataset_ref, "seed": seed }))
            .await
    }
}

/// Every JSON payload a reader saw before completion, plus the session id.
pub struct ReadTranscript {
    pub session_id: String,
    pub payloads: Vec<Value>,
    pub image_urls: Vec<String>,
}

/// Drives a whole session, answering each case with `answer(patient_id)`.
pub async fn read_session(app: &App, reader: &str, dataset_ref: &str, seed: u64, answer: &dyn Fn(&str) -> Label) -> ReadTranscript {
    let created = app.create_session(reader, "reader", dataset_ref, seed).await;
    assert_eq!(created.status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&created.bytes));
    let created = created.json();
    let session_id = created["session_id"].as_str().unwrap().to_string();
    let total = created["progress"]["total"].as_u64().unwrap();
    let mut payloads = vec![created];
    let mut image_urls = Vec::new();
    for _ in 0..total {
        let case = app.get(&format!("/sessions/{session_id}/next")).await;
        assert_eq!(case.status, StatusCode::OK);
        let case = case.json();
        for view in ["sagittal", "coronal"] {
            image_urls.push(case["images"][view]["url"].as_str().unwrap().to_string());
        }
        let pid = case["patient_id"].as_str().unwrap().to_string();
        payloads.push(case);
        let ack = app
            .post(&format!("/sessions/{session_id}/responses"), json!({ "patient_id": pid, "diagnosis": answer(&pid) }))
            .await;
        assert_eq!(ack.status, StatusCode::OK, "{}", String::from_utf8_lossy(&ack.bytes));
        payloads.push(ack.json());
    }
    ReadTranscript { session_id, payloads, image_urls }
}

/// A reader answering exactly like one column of the bundled table.
pub fn table_reader(rater: &'static str) -> impl Fn(&str) -> Label {
    let table = Table2Dataset::bundled().unwrap();
    move |pid: &str| {
        let row = table.rows.iter().find(|r| Table2Dataset::patient_id(r.patient_index) == pid).expect("table patient");
        row.call(rater).unwrap()
    }
}

/// Keys and values that would leak ground truth into a reader payload.
pub fn leaks(value: &Value) -> Vec<String> {
    let mut out = Vec::new();
    walk(value, "$", &mut out);
    out
}

fn walk(value: &Value, at: &str, out: &mut Vec<String>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let lk = k.to_ascii_lowercase();
                if lk.contains("label") || lk.contains("truth") || lk == "diagnosis" || lk == "case_order" {
                    out.push(format!("{at}.{k}"));
                }
                walk(v, &format!("{at}.{k}"), out);
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                walk(v, &format!("{at}[{i}]"), out);
            }
        }
        Value::String(s) if s == "defect" || s == "no_defect" => out.push(format!("{at}={s}")),
        _ => {}
    }
}

/// One simulated crash during a reader session, followed by a restart.
/// Returns a description of the first violated guarantee, if any.
pub async fn crash_trial(root: &Path, seed: u64) -> Result<(), String> {
    use cartimark::store::FaultPoint;
    use rand::{Rng, SeedableRng};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let point = [FaultPoint::BeforeAppend, FaultPoint::TornAppend, FaultPoint::AfterAppend][rng.random_range(0..3)];
    let nth = rng.random_range(0..29usize);
    let answer = |pid: &str| if pid.bytes().map(u32::from).sum::<u32>() % 2 == 0 { Label::Defect } else { Label::NoDefect };

    let app = App::new(root, Resolver::default(), ModelRegistry::default(), None);
    let created = app.create_session("crash", "reader", "table2:test", seed).await.json();
    let id = created["session_id"].as_str().ok_or("no session id")?.to_string();
    app.state.store.inject_fault(point, nth);
    let mut acked: Vec<String> = Vec::new();
    let in_flight = loop {
        let case = app.get(&format!("/sessions/{id}/next")).await;
        if case.status != StatusCode::OK {
            return Err(format!("next failed before the crash: {}", case.status));
        }
        let pid = case.json()["patient_id"].as_str().unwrap().to_string();
        let reply = app.post(&format!("/sessions/{id}/responses"), serde_json::json!({ "patient_id": pid, "diagnosis": answer(&pid) })).await;
        if reply.status == StatusCode::OK {
            acked.push(pid);
        } else {
            if reply.json()["code"] != "storage_failure" {
                return Err(format!("unexpected failure {}", String::from_utf8_lossy(&reply.bytes)));
            }
            break pid;
        }
    };
    drop(app);

    let app = App::new(root, Resolver::default(), ModelRegistry::default(), None);
    let session = app.state.store.get(&id).map_err(|e| format!("session lost: {e}"))?;
    let stored: Vec<String> = session.responses.iter().map(|r| r.patient_id.clone()).collect();
    if stored.len() < acked.len() || stored[..acked.len()] != acked[..] {
        return Err(format!("{point:?}@{nth}: acknowledged {acked:?} but replayed {stored:?}"));
    }
    let extra = &stored[acked.len()..];
    let allowed = point == FaultPoint::AfterAppend && extra.len() == 1 && extra[0] == in_flight;
    if !extra.is_empty() && !allowed {
        return Err(format!("{point:?}@{nth}: unexpected extra responses {extra:?}"));
    }
    for r in &session.responses {
        if r.diagnosis != answer(&r.patient_id) {
            return Err(format!("diagnosis for {} changed", r.patient_id));
        }
    }
    // The reader resubmits the in-flight answer and finishes.
    let retry = app
        .post(&format!("/sessions/{id}/responses"), serde_json::json!({ "patient_id": in_flight, "diagnosis": answer(&in_flight) }))
        .await;
    if retry.status != StatusCode::OK {
        return Err(format!("retry after restart failed: {}", String::from_utf8_lossy(&retry.bytes)));
    }
    loop {
        let case = app.get(&format!("/sessions/{id}/next")).await;
        if case.status == StatusCode::CONFLICT {
            break;
        }
        let pid = case.json()["patient_id"].as_str().unwrap().to_string();
        let reply = app.post(&format!("/sessions/{id}/responses"), serde_json::json!({ "patient_id": pid, "diagnosis": answer(&pid) })).await;
        if reply.status != StatusCode::OK {
            return Err(format!("post-restart submit failed: {}", String::from_utf8_lossy(&reply.bytes)));
        }
    }
    let done = app.state.store.get(&id).map_err(|e| e.to_string())?;
    let distinct: BTreeSet<_> = done.responses.iter().map(|r| r.patient_id.as_str()).collect();
    if done.responses.len() != 29 || distinct.len() != 29 {
        return Err(format!("finished with {} responses ({} distinct)", done.responses.len(), distinct.len()));
    }
    if app.get(&format!("/sessions/{id}/report")).await.status != StatusCode::OK {
        return Err("report unavailable after completion".into());
    }
    Ok(())
}
