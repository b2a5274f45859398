use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use shelflife_service::faults::demo_setup;
use shelflife_service::http::router;
use shelflife_service::store::{FileLogStore, MemoryLogStore};
use shelflife_service::AnnotationService;

fn app() -> Router {
    let mut setup = demo_setup(2, 2, 3, 7);
    setup.search_url_template = Some("https://search.example/?q={query}".into());
    router(Arc::new(
        AnnotationService::open(setup, Box::new(MemoryLogStore::default())).unwrap(),
    ))
}

async fn call(app: &Router, method: &str, uri: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value =
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, value)
}

#[tokio::test]
async fn config_lists_grades_without_auth() {
    let app = app();
    let (status, body) = call(&app, "GET", "/config", None, None).await;
    assert_eq!(status, StatusCode::OK);
    let labels: Vec<&str> = body["grades"]
        .as_array()
        .unwrap()
        .iter()
        .map(|g| g["label"].as_str().unwrap())
        .collect();
    assert_eq!(
        labels,
        ["perfectly relevant", "highly relevant", "related", "non-relevant"]
    );
    assert_eq!(body["search_url_template"], "https://search.example/?q={query}");
}

#[tokio::test]
async fn auth_is_required_and_checked() {
    let app = app();
    assert_eq!(
        call(&app, "GET", "/task/next", None, None).await.0,
        StatusCode::UNAUTHORIZED
    );
    assert_eq!(
        call(&app, "GET", "/task/next", Some("bogus"), None).await.0,
        StatusCode::UNAUTHORIZED
    );
    let (status, _) = call(&app, "GET", "/progress?annotator=ann1", Some("tok0"), None).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    let (status, body) = call(&app, "GET", "/progress?annotator=ann1", Some("admin"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["annotator"], "ann1");
}

#[tokio::test]
async fn judge_until_done() {
    let app = app();
    let mut judged = 0;
    loop {
        let (status, next) = call(&app, "GET", "/task/next?annotator=ann0", Some("tok0"), None).await;
        assert_eq!(status, StatusCode::OK);
        if next["done"] == true {
            break;
        }
        let task = &next["task"];
        assert!(task["doc_text"].as_str().unwrap().starts_with("passage"));
        assert_eq!(task["position"], judged + 1);
        let body = json!({"topic": task["topic"], "doc": task["doc"], "grade": 2});
        let (status, ack) = call(&app, "POST", "/judgment", Some("tok0"), Some(body)).await;
        assert_eq!(status, StatusCode::OK, "{ack}");
        judged += 1;
        assert_eq!(ack["judged"], judged);
        assert_eq!(ack["first"], true);
    }
    assert_eq!(judged, 6);
    let (_, progress) = call(&app, "GET", "/progress", Some("tok0"), None).await;
    assert_eq!(
        (progress["judged"].as_u64(), progress["total"].as_u64()),
        (Some(6), Some(6))
    );
    let (_, topics) = call(&app, "GET", "/topics", Some("tok0"), None).await;
    assert_eq!(topics.as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn validation_and_ownership_statuses() {
    let app = app();
    let bad_grade = json!({"topic": "t0", "doc": "t0-d0", "grade": 4});
    assert_eq!(
        call(&app, "POST", "/judgment", Some("tok0"), Some(bad_grade)).await.0,
        StatusCode::UNPROCESSABLE_ENTITY
    );
    let foreign = json!({"topic": "t2", "doc": "t2-d0", "grade": 1});
    assert_eq!(
        call(&app, "POST", "/judgment", Some("tok0"), Some(foreign)).await.0,
        StatusCode::FORBIDDEN
    );
    let spoofed = json!({"annotator": "ann1", "topic": "t2", "doc": "t2-d0", "grade": 1});
    assert_eq!(
        call(&app, "POST", "/judgment", Some("tok0"), Some(spoofed)).await.0,
        StatusCode::FORBIDDEN
    );
    let admin_submit = json!({"topic": "t0", "doc": "t0-d0", "grade": 1});
    assert_eq!(
        call(&app, "POST", "/judgment", Some("admin"), Some(admin_submit))
            .await
            .0,
        StatusCode::FORBIDDEN
    );
    let empty = json!({"topic": "t0", "narrative_text": ""});
    assert_eq!(
        call(&app, "POST", "/narrative", Some("tok0"), Some(empty)).await.0,
        StatusCode::UNPROCESSABLE_ENTITY
    );
    let unowned = json!({"topic": "t3", "narrative_text": "mine"});
    assert_eq!(
        call(&app, "POST", "/narrative", Some("tok0"), Some(unowned)).await.0,
        StatusCode::FORBIDDEN
    );
    let flag = json!({"topic": "t0", "doc": "t0-d1", "note": "ambiguous"});
    assert_eq!(
        call(&app, "POST", "/flag", Some("tok0"), Some(flag)).await.0,
        StatusCode::OK
    );
}

#[tokio::test]
async fn narratives_round_trip() {
    let app = app();
    assert_eq!(
        call(&app, "GET", "/narrative?topic=t0", Some("tok0"), None).await.0,
        StatusCode::NOT_FOUND
    );
    for text in ["first take", "second take"] {
        let body = json!({"topic": "t0", "narrative_text": text});
        assert_eq!(
            call(&app, "POST", "/narrative", Some("tok0"), Some(body)).await.0,
            StatusCode::OK
        );
    }
    let (status, latest) = call(&app, "GET", "/narrative?topic=t0", Some("tok0"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(latest["text"], "second take");
    assert_eq!(latest["versions"], 2);
}

#[tokio::test]
async fn export_is_admin_only_and_last_write_wins() {
    let app = app();
    for grade in [2, 1] {
        let body = json!({"topic": "t0", "doc": "t0-d0", "grade": grade});
        call(&app, "POST", "/judgment", Some("tok0"), Some(body)).await;
    }
    assert_eq!(
        call(&app, "GET", "/export/qrels", Some("tok0"), None).await.0,
        StatusCode::FORBIDDEN
    );
    let (status, text) = call(&app, "GET", "/export/qrels?annotator=ann0", Some("admin"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(text, Value::String("t0 0 t0-d0 1\n".into()));
    let (_, dump) = call(&app, "GET", "/export/qrels", Some("admin"), None).await;
    assert_eq!(dump["qrels"]["ann0"], "t0 0 t0-d0 1\n");
    let (again_status, again) = call(&app, "GET", "/export/qrels", Some("admin"), None).await;
    assert_eq!((again_status, &again), (StatusCode::OK, &dump));
}

#[tokio::test]
async fn responses_never_carry_primary_grades() {
    let app = app();
    let (_, next) = call(&app, "GET", "/task/next", Some("tok0"), None).await;
    let keys: Vec<&String> = next["task"].as_object().unwrap().keys().collect();
    assert_eq!(keys.len(), 6);
    assert!(keys.iter().all(|k| !k.contains("grade")));
}

#[tokio::test]
async fn file_backed_service_restores_progress() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    let open = || {
        let store = FileLogStore::open(&path).unwrap();
        router(Arc::new(
            AnnotationService::open(demo_setup(2, 1, 2, 1), Box::new(store)).unwrap(),
        ))
    };
    let app = open();
    let (_, next) = call(&app, "GET", "/task/next", Some("tok1"), None).await;
    let body = json!({"topic": next["task"]["topic"], "doc": next["task"]["doc"], "grade": 3});
    assert_eq!(
        call(&app, "POST", "/judgment", Some("tok1"), Some(body)).await.0,
        StatusCode::OK
    );
    drop(app);
    let app = open();
    let (_, progress) = call(&app, "GET", "/progress", Some("tok1"), None).await;
    assert_eq!(progress["judged"], 1);
    let (_, next_after) = call(&app, "GET", "/task/next", Some("tok1"), None).await;
    assert_eq!(next_after["task"]["position"], 2);
}
