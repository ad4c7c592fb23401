mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use probsmith_review::{router, ReviewStats, ReviewStore, StoreConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let body = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or(Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, body)
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn post(uri: &str, body: &Value) -> Request<Body> {
    Request::post(uri).header("content-type", "application/json").body(Body::from(body.to_string())).unwrap()
}

fn rating(batch: &str, problem: &str, annotator: &str, novelty: u8) -> Value {
    json!({
        "batch_id": batch,
        "problem_id": problem,
        "annotator_id": annotator,
        "solvable": true,
        "novelty": novelty,
        "variant_type": "SameTypeFusion",
    })
}

fn setup(size: usize, raters: usize) -> (tempfile::TempDir, Arc<ReviewStore>, String) {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(ReviewStore::open(dir.path(), StoreConfig::default()).unwrap());
    let b = store.create_batch(&common::pool(40), &common::seeds(), size, 11, &common::annotators(raters)).unwrap();
    (dir, store, b.batch_id)
}

#[tokio::test]
async fn scripted_sessions_reach_full_solvability_and_agreement() {
    let (_dir, store, batch) = setup(6, 3);
    let app = router(store.clone(), None);

    let (s, body) = call(&app, get("/healthz")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body, json!({"status": "ok", "batches": 1}));
    let (_, list) = call(&app, get("/batches")).await;
    assert_eq!(list[0]["batch_id"], batch.as_str());

    for a in common::annotators(3) {
        let mut steps = 0;
        loop {
            let (s, next) = call(&app, get(&format!("/batches/{batch}/next?annotator={a}"))).await;
            assert_eq!(s, StatusCode::OK);
            assert_eq!(next["rated"], steps);
            assert_eq!(next["total"], 6);
            if next["done"] == true {
                assert!(next.get("item").is_none());
                break;
            }
            assert!(!next["item"]["seeds"].as_array().unwrap().is_empty());
            assert_eq!(next["criteria"]["novelty_max"], 5);
            let pid = next["item"]["problem"]["id"].as_str().unwrap().to_string();
            let (s, done) = call(&app, post("/ratings", &rating(&batch, &pid, &a, 4))).await;
            assert_eq!(s, StatusCode::CREATED);
            assert_eq!(done["overwritten"], false);
            steps += 1;
        }
        assert_eq!(steps, 6);
    }

    let (s, stats) = call(&app, get(&format!("/batches/{batch}/stats"))).await;
    assert_eq!(s, StatusCode::OK);
    let stats: ReviewStats = serde_json::from_value(stats).unwrap();
    assert_eq!(stats.solvability_rate, Some(1.0));
    assert_eq!(stats.agreement, Some(1.0));
    assert_eq!(stats.novelty_mean, Some(4.0));
    assert_eq!(stats, store.stats(&batch).unwrap());
}

#[tokio::test]
async fn error_statuses() {
    let (_dir, store, batch) = setup(3, 2);
    let app = router(store.clone(), None);
    let pid = store.batch(&batch).unwrap().problem_ids[0].clone();

    let cases = [
        (rating(&batch, &pid, "rater0", 7), StatusCode::UNPROCESSABLE_ENTITY),
        (rating(&batch, &pid, "intruder", 3), StatusCode::FORBIDDEN),
        (rating(&batch, "ST-000000000000", "rater0", 3), StatusCode::NOT_FOUND),
        (rating("RB-none", &pid, "rater0", 3), StatusCode::NOT_FOUND),
    ];
    for (body, want) in cases {
        let (s, err) = call(&app, post("/ratings", &body)).await;
        assert_eq!(s, want, "{body}");
        assert!(err["error"].is_string());
    }
    let mut extra = rating(&batch, &pid, "rater0", 3);
    extra["score"] = json!(10);
    let (s, _) = call(&app, post("/ratings", &extra)).await;
    assert!(s.is_client_error());
    assert!(store.ledger().unwrap().is_empty());

    let (s, _) = call(&app, get(&format!("/batches/{batch}/next?annotator=intruder"))).await;
    assert_eq!(s, StatusCode::FORBIDDEN);
    let (s, _) = call(&app, get("/batches/RB-none/stats")).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (s, _) = call(&app, post("/ratings", &rating(&batch, &pid, "rater0", 3))).await;
    assert_eq!(s, StatusCode::CREATED);
    let (s, again) = call(&app, post("/ratings", &rating(&batch, &pid, "rater0", 5))).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(again["overwritten"], true);
    assert_eq!(store.history(&batch, &pid, "rater0").unwrap().len(), 2);
}

#[tokio::test]
async fn serves_the_ui_with_index_fallback() {
    let (_dir, store, _) = setup(2, 1);
    let ui = tempfile::tempdir().unwrap();
    std::fs::write(ui.path().join("index.html"), "<html>review</html>").unwrap();
    std::fs::write(ui.path().join("app.js"), "console.log(1)").unwrap();
    let app = router(store, Some(ui.path()));

    let (s, body) = call(&app, get("/")).await;
    assert_eq!((s, body), (StatusCode::OK, Value::String("<html>review</html>".into())));
    let (s, body) = call(&app, get("/app.js")).await;
    assert_eq!((s, body), (StatusCode::OK, Value::String("console.log(1)".into())));
    let (s, body) = call(&app, get("/batch/anything")).await;
    assert_eq!((s, body), (StatusCode::OK, Value::String("<html>review</html>".into())));
    let (s, _) = call(&app, get("/healthz")).await;
    assert_eq!(s, StatusCode::OK);
}
