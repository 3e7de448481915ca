#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use axum::body::Body;
use axum::http::{HeaderMap, Method, Request, StatusCode};
use axum::Router;
use exoar_core::session::{Engine, PriceTable, SessionStore};
use exoar_service::http::{router, AppState, SessionDefaults};
use exoar_service::llm::{BackendFactory, LlmSource};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub const FIXTURES: [&str; 5] = ["walkthrough", "academic_a", "academic_b", "bookkeeper", "business_advisor"];

pub fn fixture_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn profession(name: &str) -> &'static str {
    match name {
        "bookkeeper" => "Bookkeeper",
        "business_advisor" => "Self-employed business advisor",
        _ => "Academic staff",
    }
}

pub fn prices(name: &str) -> PriceTable {
    PriceTable::from_toml(&std::fs::read_to_string(fixture_dir(name).join("prices.toml")).unwrap()).unwrap()
}

pub struct TestApp {
    pub dir: tempfile::TempDir,
    pub state: AppState,
    pub router: Router,
}

pub fn app_with(llm: LlmSource, base_url: &str, prices: Option<PriceTable>) -> TestApp {
    let dir = tempfile::tempdir().unwrap();
    let engine = Arc::new(Engine::new(SessionStore::open(dir.path()).unwrap()));
    let factory = BackendFactory::new(&llm, base_url).unwrap().with_timeout(Duration::from_secs(10));
    let state = AppState::new(engine, factory, SessionDefaults { prices, ..SessionDefaults::default() });
    let router = router(state.clone(), &["http://ui.example".to_owned()]);
    TestApp { dir, state, router }
}

/// App answering from a fixture's recorded responses.
pub fn fixture_app(name: &str) -> TestApp {
    app_with(LlmSource::Fixture(fixture_dir(name).join("llm")), "http://127.0.0.1:9", Some(prices(name)))
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body)
            .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }

    pub fn code(&self) -> String {
        self.json()["code"].as_str().unwrap_or_default().to_owned()
    }

    pub fn text(&self) -> String {
        String::from_utf8(self.body.clone()).unwrap()
    }
}

pub async fn send(router: &Router, request: Request<Body>) -> Reply {
    let resp = router.clone().oneshot(request).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, headers, body }
}

pub fn request(method: Method, uri: &str, content_type: Option<&str>, body: impl Into<Body>) -> Request<Body> {
    let mut b = Request::builder().method(method).uri(uri);
    if let Some(ct) = content_type {
        b = b.header("content-type", ct);
    }
    b.body(body.into()).unwrap()
}

pub async fn get(router: &Router, uri: &str) -> Reply {
    send(router, request(Method::GET, uri, None, Body::empty())).await
}

pub async fn post_empty(router: &Router, uri: &str) -> Reply {
    send(router, request(Method::POST, uri, None, Body::empty())).await
}

pub const BOUNDARY: &str = "exoar-test-boundary";

/// `multipart/form-data` body; a part with a file name is sent as a file.
pub fn multipart(parts: &[(&str, Option<&str>, &[u8])]) -> (String, Vec<u8>) {
    let mut body = Vec::new();
    for (name, file_name, content) in parts {
        body.extend_from_slice(format!("--{BOUNDARY}\r\n").as_bytes());
        match file_name {
            Some(f) => body.extend_from_slice(
                format!("Content-Disposition: form-data; name=\"{name}\"; filename=\"{f}\"\r\nContent-Type: text/csv\r\n\r\n")
                    .as_bytes(),
            ),
            None => body.extend_from_slice(format!("Content-Disposition: form-data; name=\"{name}\"\r\n\r\n").as_bytes()),
        }
        body.extend_from_slice(content);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    (format!("multipart/form-data; boundary={BOUNDARY}"), body)
}

pub fn create_request(profession: &str, file_name: &str, csv: &[u8], api_key: Option<&str>) -> Request<Body> {
    let (ct, body) = multipart(&[("profession", None, profession.as_bytes()), ("file", Some(file_name), csv)]);
    let mut req = request(Method::POST, "/sessions", Some(&ct), body);
    if let Some(key) = api_key {
        req.headers_mut().insert("x-api-key", key.parse().unwrap());
    }
    req
}

pub async fn create(router: &Router, name: &str) -> String {
    let csv = std::fs::read(fixture_dir(name).join("awt.csv")).unwrap();
    let reply = send(router, create_request(profession(name), "awt.csv", &csv, None)).await;
    assert_eq!(reply.status, StatusCode::CREATED, "{}", reply.text());
    reply.json()["id"].as_str().unwrap().to_owned()
}

/// The lines of an edit script that belong to `step`, comments dropped.
pub fn script_for_step(script: &str, step: u8) -> String {
    script
        .lines()
        .filter(|l| {
            let mut words = l.split_whitespace();
            matches!(words.next(), Some("add" | "remove" | "edit")) && words.next() == Some(&step.to_string())
        })
        .map(|l| format!("{l}\n"))
        .collect()
}

/// Generates and reviews all four steps, posting each step's part of the
/// fixture's edit script as `text/plain`.
pub async fn run_fixture(router: &Router, name: &str) -> String {
    let id = create(router, name).await;
    let script = std::fs::read_to_string(fixture_dir(name).join("edits.txt")).unwrap();
    for step in 1..=4u8 {
        let r = post_empty(router, &format!("/sessions/{id}/steps/{step}/generate")).await;
        assert_eq!(r.status, StatusCode::OK, "generate {step}: {}", r.text());
        let r = send(
            router,
            request(Method::POST, &format!("/sessions/{id}/steps/{step}/review"), Some("text/plain"), script_for_step(&script, step)),
        )
        .await;
        assert_eq!(r.status, StatusCode::OK, "review {step}: {}", r.text());
    }
    id
}

/// Minimal chat-completions endpoint. Answers each connection with the
/// next scripted (status, content) pair after `delay`, repeating the last
/// one when the script runs out.
pub struct MockLlm {
    pub url: String,
    pub calls: Arc<AtomicUsize>,
    pub authorizations: Arc<std::sync::Mutex<Vec<String>>>,
}

pub fn mock_llm(script: Vec<(u16, String)>, delay: Duration) -> MockLlm {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let calls = Arc::new(AtomicUsize::new(0));
    let authorizations = Arc::new(std::sync::Mutex::new(Vec::new()));
    let (c, a) = (calls.clone(), authorizations.clone());
    let script = Arc::new(script);
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { continue };
            let n = c.fetch_add(1, Ordering::SeqCst);
            let (status, content) = script[n.min(script.len() - 1)].clone();
            let a = a.clone();
            thread::spawn(move || {
                thread::sleep(delay);
                answer(stream, status, &content, &a);
            });
        }
    });
    MockLlm { url, calls, authorizations }
}

fn answer(mut stream: TcpStream, status: u16, content: &str, auths: &std::sync::Mutex<Vec<String>>) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut line = String::new();
    let mut length = 0;
    reader.read_line(&mut line).unwrap();
    loop {
        line.clear();
        reader.read_line(&mut line).unwrap();
        let l = line.trim_end();
        if l.is_empty() {
            break;
        }
        if let Some((name, value)) = l.split_once(':') {
            match name.to_ascii_lowercase().as_str() {
                "content-length" => length = value.trim().parse().unwrap(),
                "authorization" => auths.lock().unwrap().push(value.trim().to_owned()),
                _ => {}
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).unwrap();
    let payload = if status == 200 {
        serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": content}}],
            "usage": {"prompt_tokens": 100, "completion_tokens": 20}
        })
        .to_string()
    } else {
        "{}".to_owned()
    };
    let _ = stream.write_all(
        format!(
            "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{payload}",
            payload.len()
        )
        .as_bytes(),
    );
}

/// The step responses recorded in a fixture, in call order.
pub fn fixture_responses(name: &str) -> Vec<(u16, String)> {
    (1..=4)
        .map(|s| (200, std::fs::read_to_string(fixture_dir(name).join(format!("llm/step{s}_attempt1.txt"))).unwrap()))
        .collect()
}
