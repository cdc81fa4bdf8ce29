mod common;

use std::fs;
use std::time::Duration;

use common::{reply_for, Behavior, MockServer};
use metricmap_cli::client::{run_batch, ClientConfig, QueryJob, QueryStatus, RetryPolicy, Secret};

fn jobs(n: usize) -> Vec<QueryJob> {
    (0..n)
        .map(|i| QueryJob {
            qa_id: format!("q{i:03}"),
            prompt: format!("question number {i}{}", "?".repeat(i % 5)),
            images: vec![format!("https://img.example/{i}.jpg")],
        })
        .collect()
}

fn config(url: &str, max_parallel: usize) -> ClientConfig {
    ClientConfig {
        base_url: url.to_string(),
        api_key: Secret::new("sk-test-0123456789"),
        model_name: "test-model".into(),
        max_parallel,
        retry: RetryPolicy {
            max_attempts: 3,
            backoff_base: Duration::from_millis(5),
        },
        request_timeout: Duration::from_secs(10),
        ..ClientConfig::default()
    }
}

#[test]
fn records_follow_input_order_and_carry_replies() {
    let server = MockServer::start(Behavior::Echo { delay_ms: 5 });
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.jsonl");
    let js = jobs(12);
    let recs = run_batch(&js, &config(&server.url, 3), &out).unwrap();
    assert_eq!(recs.len(), 12);
    for (r, j) in recs.iter().zip(&js) {
        assert_eq!(r.qa_id, j.qa_id);
        assert_eq!(r.status, QueryStatus::Ok);
        assert_eq!(r.raw, reply_for(&j.prompt));
    }
    assert_eq!(server.requests(), 12);
    assert!(server.max_in_flight() <= 3);

    let bodies = server.stats.bodies.lock().unwrap();
    let b = &bodies[0];
    assert_eq!(b["model"], "test-model");
    assert_eq!(b["temperature"], 0.01);
    assert_eq!(b["max_tokens"], 2048);
    assert_eq!(b["messages"][0]["content"][1]["type"], "image_url");
    let auth = server.stats.auth.lock().unwrap();
    assert!(auth.iter().all(|a| a == "Bearer sk-test-0123456789"));

    // the key is sent but never written out
    let text = fs::read_to_string(&out).unwrap();
    assert!(!text.contains("sk-test"));
    assert_eq!(text.lines().count(), 12);
}

#[test]
fn client_errors_fail_without_retry() {
    let server = MockServer::start(Behavior::Status(400));
    let dir = tempfile::tempdir().unwrap();
    let recs = run_batch(
        &jobs(2),
        &config(&server.url, 2),
        &dir.path().join("r.jsonl"),
    )
    .unwrap();
    assert_eq!(server.requests(), 2);
    assert!(recs
        .iter()
        .all(|r| r.status == QueryStatus::Failed("http 400".into()) && r.raw.is_empty()));
}

#[test]
fn unreachable_endpoint_is_recorded_per_item() {
    // bind then drop to get a port nobody listens on
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let dir = tempfile::tempdir().unwrap();
    let recs = run_batch(
        &jobs(2),
        &config(&format!("http://127.0.0.1:{port}"), 2),
        &dir.path().join("r.jsonl"),
    )
    .unwrap();
    assert!(recs
        .iter()
        .all(|r| r.status == QueryStatus::Failed("max retries".into())));
}

#[test]
fn dry_run_needs_no_endpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ClientConfig {
        base_url: String::new(),
        dry_run: true,
        ..ClientConfig::default()
    };
    let js = jobs(3);
    let recs = run_batch(&js, &cfg, &dir.path().join("r.jsonl")).unwrap();
    for (r, j) in recs.iter().zip(&js) {
        assert_eq!(r.status, QueryStatus::Ok);
        assert!(r
            .raw
            .contains(&metricmap_cli::client::prompt_hash(&j.prompt)));
        assert_eq!(metricmap_core::reward::format_reward(&r.raw), 1.0);
    }
}

#[test]
fn invalid_config_aborts_batch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ClientConfig {
        max_parallel: 0,
        dry_run: true,
        ..ClientConfig::default()
    };
    assert!(run_batch(&jobs(1), &cfg, &dir.path().join("r.jsonl")).is_err());
    assert!(!dir.path().join("r.jsonl").exists());
}
