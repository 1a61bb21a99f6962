#![allow(dead_code)]

use std::path::{Path, PathBuf};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use stepverify_service::app::{router, AppState};
use stepverify_service::config::ServiceConfig;
use stepverify_service::workflow::Workflow;
use tower::ServiceExt;

pub const HARBOR_QUESTION: &str = "Can you see harbor seals in Washington D.C.?";
pub const LOOPING_QUESTION: &str = "Is a cactus a good pet for a toddler?";
pub const NOAA_URL: &str = "https://www.fisheries.noaa.gov/species/harbor-seal";

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn offline_config(store: &Path) -> ServiceConfig {
    let mut config = ServiceConfig::load(&manifest_dir().join("fixtures/offline.toml")).unwrap();
    config.store_path = store.to_path_buf();
    config
}

pub fn offline_app(store: &Path, token: Option<&str>) -> Router {
    let workflow = Workflow::from_config(&offline_config(store)).unwrap();
    router(AppState::new(workflow).with_token(token.map(str::to_string)))
}

pub struct Reply {
    pub status: StatusCode,
    pub content_type: Option<String>,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }

    pub fn text(&self) -> String {
        String::from_utf8(self.body.clone()).unwrap()
    }

    pub fn error_code(&self) -> String {
        self.json()["error"]["code"].as_str().unwrap().to_string()
    }
}

pub async fn call(app: &Router, method: Method, uri: &str, body: Option<&Value>, token: Option<&str>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let content_type = resp.headers().get("content-type").map(|v| v.to_str().unwrap().to_string());
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, content_type, body }
}

pub async fn get(app: &Router, uri: &str) -> Reply {
    call(app, Method::GET, uri, None, None).await
}

pub async fn post(app: &Router, uri: &str, body: &Value) -> Reply {
    call(app, Method::POST, uri, Some(body), None).await
}

/// Display rank at which `url` shows up in a step's evidence list.
pub fn rank_of(task: &Value, step: usize, url: &str) -> u64 {
    task["bundle"]["steps"][step]["evidence"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["chunk"]["parent_url"] == url)
        .map(|e| e["display_rank"].as_u64().unwrap())
        .unwrap_or_else(|| panic!("{url} not in step {step}"))
}

/// The harbor-seal review: the first sub-answer misses the east coast, the
/// annotator checks the NOAA range description, rewrites steps 1 and 3 and
/// flips the answer to yes.
pub fn harbor_annotation(task: &Value) -> Value {
    json!({
        "annotator_id": "annotator-1",
        "step_annotations": [
            {
                "step_index": 0,
                "rating": 1,
                "revised_sub_answer": "Harbor seals live in east and west coasts of United States.",
                "checked_evidence": [{"step_index": 0, "display_rank": rank_of(task, 0, NOAA_URL)}]
            },
            {"step_index": 1, "rating": 5},
            {
                "step_index": 2,
                "rating": 2,
                "revised_sub_answer": "Since Washington D.C. is near the east coast, you can see harbor seals in Washington D.C."
            }
        ],
        "answer_correct": false,
        "revised_answer": "Yes",
        "error_type": "InsufficientKnowledge"
    })
}

/// A stricter second reviewer: no rewrites, low ratings throughout.
pub fn strict_annotation(task: &Value) -> Value {
    json!({
        "annotator_id": "annotator-2",
        "step_annotations": [
            {"step_index": 0, "rating": 1, "checked_evidence": [{"step_index": 0, "display_rank": rank_of(task, 0, NOAA_URL)}]},
            {"step_index": 1, "rating": 3},
            {"step_index": 2, "rating": 1}
        ],
        "answer_correct": false,
        "revised_answer": "Yes",
        "error_type": "WrongFact"
    })
}

/// Compares `actual` with `tests/golden/<name>`. With `UPDATE_GOLDEN=1` the
/// file is rewritten instead.
pub fn check_golden(name: &str, actual: &[u8]) -> Result<(), String> {
    let path = manifest_dir().join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return Ok(());
    }
    let expected = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == actual {
        Ok(())
    } else {
        Err(format!(
            "{} differs\n--- expected\n{}\n--- actual\n{}",
            path.display(),
            String::from_utf8_lossy(&expected),
            String::from_utf8_lossy(actual)
        ))
    }
}

pub const EXPORT_KINDS: [&str; 4] = ["cot_finetune", "unlikelihood", "fact_verification", "retrieval"];

/// Creates the harbor-seal task, submits the scripted review and fetches
/// every export. Returns the transcript of exchanges and the four bodies.
pub async fn run_harbor_session(app: &Router) -> (Value, Vec<(String, Vec<u8>)>) {
    let mut transcript = Vec::new();
    let mut log = |method: &str, path: &str, req: Option<&Value>, reply: &Reply| {
        let body = match &reply.content_type {
            Some(ct) if ct.starts_with("application/json") => reply.json(),
            _ => Value::String(reply.text()),
        };
        transcript.push(json!({
            "request": {"method": method, "path": path, "body": req},
            "response": {"status": reply.status.as_u16(), "body": body},
        }));
    };

    let create = json!({ "question": HARBOR_QUESTION });
    let created = post(app, "/v1/tasks", &create).await;
    assert_eq!(created.status, StatusCode::CREATED, "{}", created.text());
    log("POST", "/v1/tasks", Some(&create), &created);
    let task = created.json();
    let id = task["task_id"].as_str().unwrap().to_string();

    let review = harbor_annotation(&task);
    let path = format!("/v1/tasks/{id}/annotation");
    let accepted = post(app, &path, &review).await;
    assert_eq!(accepted.status, StatusCode::OK, "{}", accepted.text());
    log("POST", &path, Some(&review), &accepted);

    let path = format!("/v1/tasks/{id}");
    log("GET", &path, None, &get(app, &path).await);

    let mut exports = Vec::new();
    for kind in EXPORT_KINDS {
        let path = format!("/v1/exports/{kind}");
        let reply = get(app, &path).await;
        assert_eq!(reply.status, StatusCode::OK);
        log("GET", &path, None, &reply);
        exports.push((kind.to_string(), reply.body));
    }
    (Value::Array(transcript), exports)
}
