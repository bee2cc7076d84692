mod common;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use common::*;
use currikg::project::Project;
use currikg_app::server::{router, AppState};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use std::path::Path;
use std::sync::Arc;
use tower::ServiceExt;

fn app(dir: &Path, allow_runs: bool) -> Router {
    let project = Project::open_with_env(dir, |_| None).unwrap();
    router(Arc::new(AppState::new(project, allow_runs).unwrap()))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn error_code(body: &Value) -> &str {
    body["error"]["code"].as_str().unwrap_or_default()
}

#[tokio::test]
async fn pending_queue_and_read_your_write() {
    let dir = tempfile::tempdir().unwrap();
    mini_extracted(dir.path());
    let app = app(dir.path(), false);

    let (status, list) = call(&app, "GET", "/api/candidates?status=pending", None).await;
    assert_eq!(status, StatusCode::OK);
    let list = list.as_array().unwrap().clone();
    assert_eq!(list.len(), 5);
    let (_, session) = call(&app, "GET", "/api/candidates?session=es-l1-s1", None).await;
    assert_eq!(session.as_array().unwrap().len(), 5);

    let id = list[0]["id"].as_str().unwrap();
    let (status, decided) = call(
        &app,
        "POST",
        &format!("/api/candidates/{id}/decision"),
        Some(json!({"verdict": "accept", "reviewer": "alice"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{decided}");
    assert_eq!(decided["status"], "accepted");
    let (_, fetched) = call(&app, "GET", &format!("/api/candidates/{id}"), None).await;
    assert_eq!(fetched["status"], "accepted");

    let sub = list.iter().find(|c| c["kind"] == "SubTopic").unwrap()["id"]
        .as_str()
        .unwrap();
    let (status, edited) = call(
        &app,
        "POST",
        &format!("/api/candidates/{sub}/decision"),
        Some(json!({"verdict": "edit", "edited_title": "Vector table", "reviewer": "alice"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{edited}");
    assert_eq!(edited["status"], "edited");
    assert_eq!(edited["edited_title"], "Vector table");

    // Persisted: a fresh service over the same directory sees both verdicts.
    let reopened = self::app(dir.path(), false);
    let (_, pending) = call(&reopened, "GET", "/api/candidates?status=pending", None).await;
    assert_eq!(pending.as_array().unwrap().len(), 3);
}

#[tokio::test]
async fn errors_carry_codes_without_losing_data() {
    let dir = tempfile::tempdir().unwrap();
    mini_extracted(dir.path());
    let app = app(dir.path(), false);
    let body = json!({"verdict": "reject", "reviewer": "bob"});

    let (status, err) = call(&app, "POST", "/api/candidates/nope/decision", Some(body.clone())).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(error_code(&err), "not_found");
    assert!(err["error"]["message"].as_str().unwrap().contains("nope"));

    let (_, list) = call(&app, "GET", "/api/candidates", None).await;
    let id = list[0]["id"].as_str().unwrap().to_string();
    let uri = format!("/api/candidates/{id}/decision");
    assert_eq!(call(&app, "POST", &uri, Some(body.clone())).await.0, StatusCode::OK);
    let (status, err) = call(
        &app,
        "POST",
        &uri,
        Some(json!({"verdict": "accept", "reviewer": "bob"})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(error_code(&err), "already_decided");
    let (_, still) = call(&app, "GET", &format!("/api/candidates/{id}"), None).await;
    assert_eq!(still["status"], "rejected");
    let (status, _) = call(
        &app,
        "POST",
        &uri,
        Some(json!({"verdict": "accept", "reviewer": "bob", "override": true})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);

    for bad in [
        json!({"verdict": "maybe", "reviewer": "bob"}),
        json!({"verdict": "accept"}),
        json!({"verdict": "edit", "reviewer": "bob"}),
        json!({"verdict": "accept", "reviewer": "bob", "extra": 1}),
    ] {
        let (status, err) = call(
            &app,
            "POST",
            &format!("/api/candidates/{}/decision", list[1]["id"].as_str().unwrap()),
            Some(bad.clone()),
        )
        .await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{bad} -> {err}");
    }
    assert_eq!(
        call(&app, "GET", "/api/candidates?status=bogus", None).await.0,
        StatusCode::BAD_REQUEST
    );
    let (status, err) = call(&app, "GET", "/api/nowhere", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(error_code(&err), "not_found");
    let (status, err) = call(&app, "POST", "/api/runs", Some(json!({"stage": "promote"}))).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    assert_eq!(error_code(&err), "runs_disabled");
}

#[tokio::test]
async fn relations_metrics_and_runs() {
    let dir = tempfile::tempdir().unwrap();
    two_module_linked(dir.path());
    let app = app(dir.path(), true);

    let (_, rels) = call(&app, "GET", "/api/relations?status=proposed", None).await;
    let rels = rels.as_array().unwrap().clone();
    assert!(!rels.is_empty());
    let id = rels[0]["id"].as_str().unwrap();
    let encoded = id.replace(':', "%3A").replace('|', "%7C");
    let (status, r) = call(
        &app,
        "POST",
        &format!("/api/relations/{encoded}/decision"),
        Some(json!({"verdict": "reject", "reviewer": "carol"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{r}");
    assert_eq!(r["status"], "rejected");
    let (status, _) = call(
        &app,
        "POST",
        &format!("/api/relations/{encoded}/decision"),
        Some(json!({"verdict": "edit", "reviewer": "carol", "override": true})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, sample) = call(&app, "GET", "/api/relations/sample?seed=3", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(sample.as_array().unwrap().len(), rels.len());
    let (status, err) = call(&app, "GET", "/api/relations/sample?fraction=0", None).await;
    assert_eq!(
        (status, error_code(&err)),
        (StatusCode::BAD_REQUEST, "invalid_fraction")
    );

    // The dashboard values are the stored report, field for field.
    let (status, metrics) = call(&app, "GET", "/api/metrics", None).await;
    assert_eq!(status, StatusCode::OK);
    let stored: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("reports/structure_report.json")).unwrap()).unwrap();
    assert_eq!(metrics, stored);

    let (status, extraction) = call(&app, "GET", "/api/metrics/extraction?policy=strict", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(extraction["kinds"]["Topic"]["precision"], 1.0);

    // Promotion drops the rejected relation's edge from the graph.
    let (status, run) = call(&app, "POST", "/api/runs", Some(json!({"stage": "promote"}))).await;
    assert_eq!(status, StatusCode::OK, "{run}");
    assert_eq!(run["report"]["relations_removed"], 1);
    let (_, graph) = call(&app, "GET", "/api/graph", None).await;
    let similar = graph["edges"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| e["type"] == "SIMILAR_TO")
        .count();
    assert_eq!(similar, rels.len() - 1);
    assert_eq!(
        call(&app, "POST", "/api/runs", Some(json!({"stage": "train"}))).await.0,
        StatusCode::BAD_REQUEST
    );
}

#[tokio::test]
async fn serves_over_tcp_and_reports_busy_ports() {
    let dir = tempfile::tempdir().unwrap();
    mini_extracted(dir.path());
    let project = Project::open_with_env(dir.path(), |_| None).unwrap();
    let state = Arc::new(AppState::new(project, false).unwrap());
    let listener = currikg_app::server::bind("127.0.0.1:0".parse().unwrap()).await.unwrap();
    let addr = listener.local_addr().unwrap();
    assert!(matches!(
        currikg_app::server::bind(addr).await,
        Err(currikg_app::server::ServeError::PortInUse(p)) if p == addr.port()
    ));

    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(currikg_app::server::serve(listener, state, async {
        let _ = stopped.await;
    }));
    let response = tokio::task::spawn_blocking(move || {
        use std::io::{Read, Write};
        let mut s = std::net::TcpStream::connect(addr).unwrap();
        write!(
            s,
            "GET /api/candidates HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n"
        )
        .unwrap();
        let mut text = String::new();
        s.read_to_string(&mut text).unwrap();
        text
    })
    .await
    .unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    stop.send(()).unwrap();
    server.await.unwrap().unwrap();
}
