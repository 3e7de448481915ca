mod common;

use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use common::*;
use exoar_core::session::Session;
use exoar_service::llm::LlmSource;
use exoar_service::ErrorCode;
use serde_json::json;

fn walkthrough_csv() -> Vec<u8> {
    std::fs::read(fixture_dir("walkthrough").join("awt.csv")).unwrap()
}

#[tokio::test]
async fn create_returns_id_and_title_summary() {
    let app = fixture_app("walkthrough");
    let r = send(&app.router, create_request("Academic staff", "april.csv", &walkthrough_csv(), None)).await;
    assert_eq!(r.status, StatusCode::CREATED);
    let body = r.json();
    let id = body["id"].as_str().unwrap();
    assert_eq!(body["dataset"]["events"], 1750);
    assert_eq!(body["dataset"]["skipped_empty_titles"], 4);
    assert_eq!(body["dataset"]["distinct_titles"], 161);
    assert_eq!(body["dataset"]["source_name"], "april.csv");
    assert_eq!(body["top_titles"].as_array().unwrap().len(), 20);
    assert_eq!(body["statuses"], json!(["empty", "empty", "empty", "empty"]));

    let r = get(&app.router, &format!("/sessions/{id}")).await;
    assert_eq!(r.status, StatusCode::OK);
    let session: Session = serde_json::from_slice(&r.body).unwrap();
    assert_eq!(session.id, id);

    let r = get(&app.router, "/sessions").await;
    assert_eq!(r.json()["sessions"], json!([id]));
}

#[tokio::test]
async fn upload_errors_are_coded() {
    let app = fixture_app("walkthrough");
    let bad_row = b"start,end,app,title\n2025-04-01T09:00:00Z,2025-04-01T09:01:00Z,App,ok\nnot-a-time,2025-04-01T09:01:00Z,App,x\n";
    let r = send(&app.router, create_request("Academic staff", "bad.csv", bad_row, None)).await;
    assert_eq!((r.status, r.code().as_str()), (StatusCode::BAD_REQUEST, "malformed_row"));
    assert_eq!(r.json()["details"]["line"], 3);

    let r = send(&app.router, create_request("Academic staff", "empty.csv", b"", None)).await;
    assert_eq!((r.status, r.code().as_str()), (StatusCode::BAD_REQUEST, "empty_file"));

    let r = send(&app.router, create_request("   ", "a.csv", &walkthrough_csv(), None)).await;
    assert_eq!((r.status, r.code().as_str()), (StatusCode::BAD_REQUEST, "empty_profession"));

    let (ct, body) = multipart(&[("profession", None, b"Academic staff")]);
    let r = send(&app.router, request(Method::POST, "/sessions", Some(&ct), body)).await;
    assert_eq!((r.status, r.code().as_str()), (StatusCode::BAD_REQUEST, "bad_request"));

    let r = send(&app.router, request(Method::POST, "/sessions", Some("application/json"), "{}")).await;
    assert_eq!((r.status, r.code().as_str()), (StatusCode::BAD_REQUEST, "bad_request"));
}

#[tokio::test]
async fn unknown_ids_routes_and_methods() {
    let app = fixture_app("walkthrough");
    let r = get(&app.router, "/sessions/no-such-session").await;
    assert_eq!((r.status, r.code().as_str()), (StatusCode::NOT_FOUND, "not_found"));
    let r = get(&app.router, "/sessions/..%2Fetc").await;
    assert_eq!(r.code(), "not_found");
    let r = get(&app.router, "/nowhere").await;
    assert_eq!((r.status, r.code().as_str()), (StatusCode::NOT_FOUND, "not_found"));
    let r = send(&app.router, request(Method::PUT, "/sessions", None, Body::empty())).await;
    assert_eq!((r.status, r.code().as_str()), (StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed"));
    let id = create(&app.router, "walkthrough").await;
    let r = post_empty(&app.router, &format!("/sessions/{id}/steps/5/generate")).await;
    assert_eq!((r.status, r.code().as_str()), (StatusCode::BAD_REQUEST, "invalid_step"));
}

#[tokio::test]
async fn steps_follow_the_pipeline_order() {
    let app = fixture_app("walkthrough");
    let id = create(&app.router, "walkthrough").await;

    let r = post_empty(&app.router, &format!("/sessions/{id}/steps/3/generate")).await;
    assert_eq!((r.status, r.code().as_str()), (StatusCode::CONFLICT, "step_order_violation"));

    let r = post_empty(&app.router, &format!("/sessions/{id}/steps/1/generate")).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["candidates"].as_array().unwrap().len(), 13);
    assert_eq!(r.json()["records"][0]["prompt_tokens"], 260);

    let review = json!({"edits": [
        {"kind": "add", "target": "conferences"},
        {"kind": "remove", "target": "classes"},
        {"kind": "remove", "target": "grades"},
        {"kind": "remove", "target": "administrators"},
    ]});
    let r = send(
        &app.router,
        request(Method::POST, &format!("/sessions/{id}/steps/1/review"), Some("application/json"), review.to_string()),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text());
    let body = r.json();
    assert_eq!(body["confirmed"].as_array().unwrap().len(), 11);
    assert_eq!(body["metrics"]["kept_as_is"], 10);
    assert_eq!(body["metrics"]["added"], 1);

    let r = post_empty(&app.router, &format!("/sessions/{id}/steps/2/generate")).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["candidates"].as_array().unwrap().len(), 20);
}

#[tokio::test]
async fn review_errors_are_coded() {
    let app = fixture_app("walkthrough");
    let id = create(&app.router, "walkthrough").await;
    post_empty(&app.router, &format!("/sessions/{id}/steps/1/generate")).await;
    let uri = format!("/sessions/{id}/steps/1/review");
    let cases = [
        (Some("application/json"), r#"{"edits":[{"kind":"remove","target":"grants and more"}]}"#, "unknown_target"),
        (Some("application/json"), r#"{"edits":[{"kind":"add","target":"courses"}]}"#, "duplicate_add"),
        (Some("application/json"), r#"{"edits":[{"kind":"add","target":"   "}]}"#, "empty_label"),
        (Some("application/json"), r#"{"edits":[{"kind":"edit","target":"courses"}]}"#, "invalid_edit"),
        (Some("application/json"), r#"{"edits":[{"kind":"rename","target":"courses"}]}"#, "bad_request"),
        (Some("application/json"), r#"{"edits": 3}"#, "bad_request"),
        (Some("text/plain"), "add 2 \"grade exams\"\n", "step_mismatch"),
        (Some("text/plain"), "add 1 \"unterminated\n", "invalid_script"),
        (Some("application/xml"), "<edits/>", "bad_request"),
    ];
    for (ct, body, code) in cases {
        let r = send(&app.router, request(Method::POST, &uri, ct, body.to_owned())).await;
        assert_eq!(r.code(), code, "{body}");
        let expected = ErrorCode::ALL.iter().find(|c| c.as_str() == code).unwrap().status();
        assert_eq!(r.status, expected, "{body}");
    }
    // nothing was confirmed by the failed reviews
    let r = get(&app.router, &format!("/sessions/{id}/metrics")).await;
    assert_eq!((r.status, r.code().as_str()), (StatusCode::CONFLICT, "nothing_confirmed"));
}

#[tokio::test]
async fn metrics_as_json_and_tsv() {
    let app = fixture_app("academic_b");
    let id = run_fixture(&app.router, "academic_b").await;
    let r = get(&app.router, &format!("/sessions/{id}/metrics")).await;
    let rows = r.json()["rows"].as_array().unwrap().clone();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[3]["removed"], 1);
    assert_eq!(rows[2]["generated"], 50);
    assert_eq!(rows[2]["kept_as_is"], 48);

    let r = get(&app.router, &format!("/sessions/{id}/metrics?format=tsv")).await;
    assert_eq!(r.headers["content-type"], "text/tab-separated-values; charset=utf-8");
    let text = r.text();
    assert_eq!(text.lines().next().unwrap(), "step\tgenerated\tkept\tadded\tedited\tremoved\tkept_pct");
    assert_eq!(text.lines().nth(4).unwrap(), "4\t18\t5\t0\t4\t1\t50");

    let mut req = request(Method::GET, &format!("/sessions/{id}/metrics"), None, Body::empty());
    req.headers_mut().insert("accept", "text/tab-separated-values".parse().unwrap());
    assert_eq!(send(&app.router, req).await.text(), text);

    let r = get(&app.router, &format!("/sessions/{id}/metrics?format=xml")).await;
    assert_eq!(r.code(), "bad_request");
}

#[tokio::test]
async fn cost_needs_a_price_table() {
    let app = fixture_app("walkthrough");
    let id = run_fixture(&app.router, "walkthrough").await;
    let r = get(&app.router, &format!("/sessions/{id}/cost")).await;
    assert_eq!(r.status, StatusCode::OK);
    let body = r.json();
    assert_eq!((body["prompt_tokens"].as_u64(), body["completion_tokens"].as_u64()), (Some(14290), Some(6410)));
    assert!((body["cost"].as_f64().unwrap() - 0.07986).abs() < 1e-12);

    let bare = app_with(LlmSource::Fixture(fixture_dir("walkthrough").join("llm")), "http://127.0.0.1:9", None);
    let id = create(&bare.router, "walkthrough").await;
    let r = get(&bare.router, &format!("/sessions/{id}/cost")).await;
    assert_eq!((r.status, r.code().as_str()), (StatusCode::CONFLICT, "missing_price_table"));
}

#[tokio::test]
async fn export_requires_step_four_and_carries_the_manifest() {
    let app = fixture_app("walkthrough");
    let id = create(&app.router, "walkthrough").await;
    let r = get(&app.router, &format!("/sessions/{id}/export/ocel")).await;
    assert_eq!((r.status, r.code().as_str()), (StatusCode::CONFLICT, "step_order_violation"));

    let id = run_fixture(&app.router, "walkthrough").await;
    let uri = format!("/sessions/{id}/export/ocel");
    let r = get(&app.router, &uri).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.headers["content-type"], "application/json");
    assert_eq!(r.headers["content-disposition"], format!("attachment; filename=\"ocel-{id}.json\""));
    assert_eq!(r.headers["x-ocel-object-types"], "10");
    assert_eq!(r.headers["x-ocel-event-types"], "24");
    assert_eq!(r.headers["x-ocel-objects"], "39");
    let doc = r.json();
    assert_eq!(doc["objectTypes"].as_array().unwrap().len(), 10);
    assert_eq!(r.headers["x-ocel-events"], doc["events"].as_array().unwrap().len().to_string().as_str());

    let schema: serde_json::Value =
        serde_json::from_str(include_str!("../../../fixtures/schema/ocel20-schema.json")).unwrap();
    let validator = jsonschema::options().should_validate_formats(true).build(&schema).unwrap();
    assert!(validator.is_valid(&doc));

    let head = send(&app.router, request(Method::HEAD, &uri, None, Body::empty())).await;
    assert_eq!(head.status, StatusCode::OK);
    assert!(head.body.is_empty());
    for h in exoar_service::http::MANIFEST_HEADERS {
        assert_eq!(head.headers[h], r.headers[h], "{h}");
    }
    assert_eq!(head.headers["content-disposition"], r.headers["content-disposition"]);
}

#[tokio::test]
async fn delete_removes_the_session() {
    let app = fixture_app("walkthrough");
    let id = create(&app.router, "walkthrough").await;
    let r = send(&app.router, request(Method::DELETE, &format!("/sessions/{id}"), None, Body::empty())).await;
    assert_eq!(r.status, StatusCode::NO_CONTENT);
    assert!(std::fs::read_dir(app.dir.path()).unwrap().next().is_none());
    assert_eq!(get(&app.router, &format!("/sessions/{id}")).await.code(), "not_found");
}

#[tokio::test]
async fn live_source_needs_a_key() {
    let app = app_with(LlmSource::Live, "http://127.0.0.1:9", None);
    let id = create(&app.router, "walkthrough").await;
    let r = post_empty(&app.router, &format!("/sessions/{id}/steps/1/generate")).await;
    assert_eq!((r.status, r.code().as_str()), (StatusCode::BAD_REQUEST, "missing_api_key"));
}

#[tokio::test]
async fn upstream_failures_map_to_gateway_codes() {
    let rejecting = mock_llm(vec![(401, String::new())], Duration::ZERO);
    let app = app_with(LlmSource::Live, &rejecting.url, None);
    let r = send(&app.router, create_request("Academic staff", "a.csv", &walkthrough_csv(), Some("sk-bad"))).await;
    let id = r.json()["id"].as_str().unwrap().to_owned();
    let r = post_empty(&app.router, &format!("/sessions/{id}/steps/1/generate")).await;
    assert_eq!((r.status, r.code().as_str()), (StatusCode::UNAUTHORIZED, "upstream_auth"));

    let failing = mock_llm(vec![(404, String::new())], Duration::ZERO);
    let app = app_with(LlmSource::Live, &failing.url, None);
    let id = create(&app.router, "walkthrough").await;
    let mut req = request(Method::POST, &format!("/sessions/{id}/steps/1/generate"), None, Body::empty());
    req.headers_mut().insert("x-api-key", "sk-x".parse().unwrap());
    let r = send(&app.router, req).await;
    assert_eq!((r.status, r.code().as_str()), (StatusCode::BAD_GATEWAY, "upstream_transport"));
    assert_eq!(r.json()["details"]["attempts"], 1);

    let garbage = mock_llm(vec![(200, "no idea".into())], Duration::ZERO);
    let app = app_with(LlmSource::Live, &garbage.url, None);
    let r = send(&app.router, create_request("Academic staff", "a.csv", &walkthrough_csv(), Some("sk-x"))).await;
    let id = r.json()["id"].as_str().unwrap().to_owned();
    let r = post_empty(&app.router, &format!("/sessions/{id}/steps/1/generate")).await;
    assert_eq!((r.status, r.code().as_str()), (StatusCode::BAD_GATEWAY, "parse_failed"));
    assert_eq!(r.json()["details"]["attempts"], 2);
    assert_eq!(garbage.calls.load(std::sync::atomic::Ordering::SeqCst), 2);
}

#[tokio::test]
async fn transport_failures_report_attempts() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let app = app_with(LlmSource::Live, &format!("http://127.0.0.1:{port}"), None);
    let r = send(&app.router, create_request("Academic staff", "a.csv", &walkthrough_csv(), Some("sk-x"))).await;
    let id = r.json()["id"].as_str().unwrap().to_owned();
    let r = post_empty(&app.router, &format!("/sessions/{id}/steps/1/generate")).await;
    assert_eq!((r.status, r.code().as_str()), (StatusCode::BAD_GATEWAY, "upstream_transport"));
    assert_eq!(r.json()["details"]["attempts"], 3);
}

#[tokio::test]
async fn api_key_is_used_but_never_stored() {
    const KEY: &str = "sk-live-7f3c9a1e5d2b";
    let llm = mock_llm(fixture_responses("walkthrough"), Duration::ZERO);
    let app = app_with(LlmSource::Live, &llm.url, None);
    let r = send(&app.router, create_request("Academic staff", "a.csv", &walkthrough_csv(), Some(KEY))).await;
    let id = r.json()["id"].as_str().unwrap().to_owned();
    let script = std::fs::read_to_string(fixture_dir("walkthrough").join("edits.txt")).unwrap();
    for step in 1..=4u8 {
        let r = post_empty(&app.router, &format!("/sessions/{id}/steps/{step}/generate")).await;
        assert_eq!(r.status, StatusCode::OK, "{}", r.text());
        let r = send(
            &app.router,
            request(Method::POST, &format!("/sessions/{id}/steps/{step}/review"), Some("text/plain"), script_for_step(&script, step)),
        )
        .await;
        assert_eq!(r.status, StatusCode::OK, "{}", r.text());
    }
    assert!(llm.authorizations.lock().unwrap().iter().all(|a| a == &format!("Bearer {KEY}")));
    assert_eq!(llm.calls.load(std::sync::atomic::Ordering::SeqCst), 4);

    for entry in std::fs::read_dir(app.dir.path()).unwrap() {
        let bytes = std::fs::read(entry.unwrap().path()).unwrap();
        assert!(!String::from_utf8_lossy(&bytes).contains(KEY));
    }
    let r = get(&app.router, &format!("/sessions/{id}")).await;
    assert!(!r.text().contains(KEY));
}

#[tokio::test]
async fn cors_preflight_for_the_configured_origin() {
    let app = fixture_app("walkthrough");
    let req = Request::builder()
        .method(Method::OPTIONS)
        .uri("/sessions")
        .header("origin", "http://ui.example")
        .header("access-control-request-method", "POST")
        .header("access-control-request-headers", "x-api-key")
        .body(Body::empty())
        .unwrap();
    let r = send(&app.router, req).await;
    assert_eq!(r.headers["access-control-allow-origin"], "http://ui.example");

    let mut req = request(Method::GET, "/healthz", None, Body::empty());
    req.headers_mut().insert("origin", "http://elsewhere.example".parse().unwrap());
    let r = send(&app.router, req).await;
    assert!(r.headers.get("access-control-allow-origin").is_none());
}

#[tokio::test]
async fn random_malformed_requests_always_get_a_coded_error() {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    let app = fixture_app("walkthrough");
    let id = create(&app.router, "walkthrough").await;
    let mut rng = StdRng::seed_from_u64(7);
    let methods = [Method::GET, Method::POST, Method::PUT, Method::DELETE, Method::PATCH, Method::HEAD];
    let paths = [
        "/sessions".to_owned(),
        format!("/sessions/{id}"),
        format!("/sessions/{id}/steps/{{n}}/generate"),
        format!("/sessions/{id}/steps/{{n}}/review"),
        format!("/sessions/{id}/metrics?format={{n}}"),
        format!("/sessions/{id}/export/ocel"),
        "/sessions/{n}/cost".to_owned(),
        "/sessions/%00/steps/1/generate".to_owned(),
        "/sessions/%FF".to_owned(),
        "/sessions/%FF/steps/%FE/review".to_owned(),
        format!("/sessions/{id}/metrics?format=%FF&{{n}}"),
        "/{n}".to_owned(),
    ];
    let content_types = [None, Some("application/json"), Some("text/plain"), Some("multipart/form-data"), Some("multipart/form-data; boundary=x")];
    let bodies: [&[u8]; 7] = [b"", b"{", b"{\"edits\":[{}]}", b"add 9 \"x\"", b"\xff\xfe", b"--x\r\n\r\n--x--", b"null"];
    let allowed: Vec<&str> = ErrorCode::ALL.iter().map(|c| c.as_str()).collect();
    for _ in 0..400 {
        let method = methods[rng.gen_range(0..methods.len())].clone();
        let n = ["0", "1", "4", "5", "-1", "x", "99999999999", "tsv"][rng.gen_range(0..8)];
        let path = paths[rng.gen_range(0..paths.len())].replace("{n}", n);
        let ct = content_types[rng.gen_range(0..content_types.len())];
        let body = bodies[rng.gen_range(0..bodies.len())].to_vec();
        let r = send(&app.router, request(method.clone(), &path, ct, body)).await;
        assert_ne!(r.status, StatusCode::INTERNAL_SERVER_ERROR, "{method} {path}: {}", r.text());
        if r.status.is_success() || method == Method::HEAD {
            continue;
        }
        let code = r.code();
        assert!(allowed.contains(&code.as_str()), "{method} {path} -> {}: {}", r.status, r.text());
        let expected = ErrorCode::ALL.iter().find(|c| c.as_str() == code).unwrap().status();
        assert_eq!(r.status, expected, "{method} {path}");
    }
}
