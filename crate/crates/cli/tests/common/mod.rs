//! Minimal chat-completions server for offline client tests.
#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

#[derive(Clone, Copy)]
pub enum Behavior {
    /// Answer every request after `delay_ms`.
    Echo { delay_ms: u64 },
    /// Always fail with this HTTP status.
    Status(u16),
}

#[derive(Default)]
pub struct Stats {
    pub requests: AtomicUsize,
    pub in_flight: AtomicUsize,
    pub max_in_flight: AtomicUsize,
    pub bodies: Mutex<Vec<Value>>,
    pub auth: Mutex<Vec<String>>,
}

pub struct MockServer {
    pub url: String,
    pub stats: Arc<Stats>,
}

impl MockServer {
    pub fn start(behavior: Behavior) -> MockServer {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let stats = Arc::new(Stats::default());
        let s = stats.clone();
        thread::spawn(move || {
            for conn in listener.incoming() {
                let Ok(conn) = conn else { continue };
                let s = s.clone();
                thread::spawn(move || handle(conn, behavior, &s));
            }
        });
        MockServer { url, stats }
    }

    pub fn requests(&self) -> usize {
        self.stats.requests.load(Ordering::SeqCst)
    }

    pub fn max_in_flight(&self) -> usize {
        self.stats.max_in_flight.load(Ordering::SeqCst)
    }
}

/// Deterministic reply for a prompt, so repeated runs produce equal output.
pub fn reply_for(prompt: &str) -> String {
    let letter = ["A", "B", "C", "D"][prompt.len() % 4];
    format!(
        "<map></map>\n<think>prompt has {} bytes</think>\n<answer>{letter}</answer>",
        prompt.len()
    )
}

fn handle(conn: TcpStream, behavior: Behavior, s: &Stats) {
    let mut reader = BufReader::new(conn.try_clone().unwrap());
    let mut content_length = 0;
    let mut auth = String::new();
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            match k.trim().to_ascii_lowercase().as_str() {
                "content-length" => content_length = v.trim().parse().unwrap_or(0),
                "authorization" => auth = v.trim().to_string(),
                _ => {}
            }
        }
    }
    let mut body = vec![0u8; content_length];
    if reader.read_exact(&mut body).is_err() {
        return;
    }
    let request: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);

    s.requests.fetch_add(1, Ordering::SeqCst);
    let now = s.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    s.max_in_flight.fetch_max(now, Ordering::SeqCst);
    s.auth.lock().unwrap().push(auth);

    let (status, payload) = match behavior {
        Behavior::Echo { delay_ms } => {
            thread::sleep(Duration::from_millis(delay_ms));
            let prompt = request["messages"][0]["content"][0]["text"]
                .as_str()
                .unwrap_or("");
            let payload = json!({
                "choices": [{"index": 0, "message": {"role": "assistant", "content": reply_for(prompt)}}]
            });
            (200, payload)
        }
        Behavior::Status(code) => (code, json!({"error": {"message": "unavailable"}})),
    };
    s.bodies.lock().unwrap().push(request);
    s.in_flight.fetch_sub(1, Ordering::SeqCst);

    let text = payload.to_string();
    let reason = if status == 200 { "OK" } else { "Error" };
    let mut conn = conn;
    let _ = write!(
        conn,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    );
    let _ = conn.flush();
}
