use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use registerdex_cli::commands::{self, Format};
use registerdex_cli::config::ServiceConfig;
use registerdex_cli::runtime::Runtime;
use registerdex_cli::server::router;
use registerdex_cli::state::SearchState;

struct Fixture {
    _dir: tempfile::TempDir,
    rt: Runtime,
}

fn fixture() -> Fixture {
    let fx = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/tiny");
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig {
        corpus: fx.join("corpus.jsonl"),
        registers: fx.join("registers.golden.jsonl"),
        index_dir: dir.path().join("index"),
        ..Default::default()
    };
    let rt = Runtime::new(config).unwrap();
    commands::build_index(&rt, &mut std::io::sink()).unwrap();
    Fixture { _dir: dir, rt }
}

fn app(f: &Fixture) -> axum::Router {
    router(Arc::new(SearchState::load(&f.rt).unwrap()))
}

async fn call(app: &axum::Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn post(uri: &str, body: Value) -> Request<Body> {
    Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

#[tokio::test]
async fn healthz() {
    let f = fixture();
    let (status, body) = call(&app(&f), get("/healthz")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
    assert_eq!(body["papers"], 20);
}

#[tokio::test]
async fn search_matches_cli_output() {
    let f = fixture();
    let app = app(&f);
    let queries: Vec<String> = std::fs::read_to_string(f.rt.config.corpus.with_file_name("queries.jsonl"))
        .unwrap()
        .lines()
        .step_by(7)
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["query"].as_str().unwrap().to_string())
        .collect();
    assert!(queries.len() >= 10);
    for q in &queries {
        let mut buf = Vec::new();
        commands::search(&f.rt, q, None, Format::Json, &mut buf).unwrap();
        let cli: Value = serde_json::from_slice(&buf).unwrap();
        let (status, http) = call(&app, post("/search", json!({ "query": q }))).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(http, cli, "{q}");
        assert!(!http["results"].as_array().unwrap().is_empty());
    }
}

#[tokio::test]
async fn search_options_and_rejections() {
    let f = fixture();
    let app = app(&f);
    let (status, body) = call(&app, post("/search", json!({"query": "dutrasu", "k": 2, "m": 4, "kind": "lexical"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["views_used"].as_array().unwrap().len(), 2);
    assert_eq!(body["results"].as_array().unwrap().len(), 4);
    let hit = &body["results"][0];
    for field in ["paper_id", "title", "score", "best_view", "snippet"] {
        assert!(hit.get(field).is_some(), "{field}");
    }

    let (status, body) = call(&app, post("/search", json!({"query": "dutrasu", "views": ["Abstract/Background"]}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["views_used"], json!(["Abstract/Background"]));

    for bad in [
        json!({"query": "x", "k": 0}),
        json!({"query": "x", "m": 0}),
        json!({"query": "x", "kind": "dense"}),
        json!({"query": "x", "views": ["Abstract/Nowhere"]}),
        json!({"query": "  "}),
    ] {
        let (status, body) = call(&app, post("/search", bad.clone())).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{bad}");
        assert!(body["error"].is_string());
    }
    let (status, _) = call(&app, post("/search", json!({"k": 3}))).await;
    assert!(status.is_client_error());
}

#[tokio::test]
async fn identify_returns_at_most_k_valid_paths() {
    let f = fixture();
    let app = app(&f);
    for k in [1, 3, 5, 500] {
        let (status, body) = call(&app, post("/identify", json!({"query": "training optimizer learning rate", "k": k}))).await;
        assert_eq!(status, StatusCode::OK);
        let views = body["views"].as_array().unwrap();
        assert!(!views.is_empty() && views.len() <= k);
        for v in views {
            let path = registerdex::schema::NodePath::parse(v.as_str().unwrap()).unwrap();
            assert!(f.rt.schemas.is_valid_view(&path));
        }
    }
}

#[tokio::test]
async fn register_and_schema_documents() {
    let f = fixture();
    let app = app(&f);
    let (status, body) = call(&app, get("/paper/synth-0000/register")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["paper_id"], "synth-0000");
    assert!(body["contents"]["Abstract"].as_str().unwrap().len() > 10);
    let (status, _) = call(&app, get("/paper/nope/register")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, body) = call(&app, get("/schema/survey")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["paper_type"], "survey");
    assert_eq!(body["root"]["name"], "Abstract");
    let (status, _) = call(&app, get("/schema/poetry")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_identical_requests_agree() {
    let f = fixture();
    let app = app(&f);
    let mut handles = Vec::new();
    for _ in 0..16 {
        let app = app.clone();
        handles.push(tokio::spawn(async move {
            call(&app, post("/search", json!({"query": "dutrasu krakremu bristili", "m": 10}))).await
        }));
    }
    let mut bodies = Vec::new();
    for h in handles {
        let (status, body) = h.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        bodies.push(body);
    }
    assert!(bodies.windows(2).all(|w| w[0] == w[1]));
}
