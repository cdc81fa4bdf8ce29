//! Batch client for OpenAI-compatible chat-completions endpoints.
//!
//! Requests run on a bounded pool of worker threads. Each finished record is
//! appended to the output file immediately, so an interrupted run can be
//! resumed; once the batch completes the file is rewritten in input order.

use std::collections::HashMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use base64::Engine as _;
use metricmap_core::qa::QAPair;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const API_KEY_ENV: &str = "METRICMAP_API_KEY";
pub const BASE_URL_ENV: &str = "METRICMAP_BASE_URL";

pub const DEFAULT_PROMPT_TEMPLATE: &str = "You are given frames from a video captured while moving through an indoor scene.\n\
First lay out the relevant objects on a top-down metric map centered on the first camera: \
+y points the way the camera initially faces, +x to its right, units are meters. \
Write the map inside <map></map> as a JSON list of {\"label\": name, \"bbox\": [xmin, ymin, xmax, ymax]}.\n\
Then reason step by step inside <think></think> and give only the final answer inside <answer></answer>.\n\n\
{question}";

/// API key wrapper that never prints its contents.
#[derive(Clone, Default)]
pub struct Secret(String);

impl Secret {
    pub fn new(s: impl Into<String>) -> Self {
        Secret(s.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.0.is_empty() { "\"\"" } else { "\"***\"" })
    }
}

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    /// Total attempts per item, including the first.
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles after each further failure.
    pub backoff_base: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            backoff_base: Duration::from_secs(1),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClientConfig {
    pub base_url: String,
    pub api_key: Secret,
    pub model_name: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub max_parallel: usize,
    pub retry: RetryPolicy,
    pub request_timeout: Duration,
    pub dry_run: bool,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8000".into(),
            api_key: Secret::default(),
            model_name: "default".into(),
            temperature: 0.01,
            max_output_tokens: 2048,
            max_parallel: 4,
            retry: RetryPolicy::default(),
            request_timeout: Duration::from_secs(300),
            dry_run: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("invalid client configuration: {0}")]
    Config(String),
    #[error("output file {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl ClientConfig {
    pub fn validate(&self) -> Result<(), ClientError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(ClientError::Config(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_parallel == 0 {
            return Err(ClientError::Config("max_parallel must be >= 1".into()));
        }
        if self.retry.max_attempts == 0 {
            return Err(ClientError::Config("max_attempts must be >= 1".into()));
        }
        if !self.dry_run && self.base_url.trim().is_empty() {
            return Err(ClientError::Config("base URL is empty".into()));
        }
        Ok(())
    }

    pub fn endpoint(&self) -> String {
        let base = self.base_url.trim_end_matches('/');
        if base.ends_with("/v1") {
            format!("{base}/chat/completions")
        } else {
            format!("{base}/v1/chat/completions")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub qa_id: String,
    pub prompt: String,
    pub images: Vec<String>,
    pub raw: String,
    pub status: QueryStatus,
    /// Wall-clock seconds; kept out of the output file so reruns stay identical.
    #[serde(skip)]
    pub latency: f64,
}

/// One request to issue.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryJob {
    pub qa_id: String,
    pub prompt: String,
    pub images: Vec<String>,
}

/// Expands `{scene_id}` and `{frame}` in `pattern` for every frame of `qa`.
/// `{frame:05}` zero-pads to the given width.
pub fn image_refs(pattern: &str, qa: &QAPair) -> Vec<String> {
    qa.frames
        .iter()
        .map(|f| expand_pattern(pattern, &qa.scene_id, *f))
        .collect()
}

fn expand_pattern(pattern: &str, scene_id: &str, frame: usize) -> String {
    let mut out = pattern.replace("{scene_id}", scene_id);
    while let Some(start) = out.find("{frame") {
        let Some(len) = out[start..].find('}') else {
            break;
        };
        let spec = &out[start + "{frame".len()..start + len];
        let text = match spec
            .strip_prefix(":0")
            .and_then(|w| w.parse::<usize>().ok())
        {
            Some(width) => format!("{frame:0width$}"),
            None => frame.to_string(),
        };
        out.replace_range(start..=start + len, &text);
    }
    out
}

pub fn build_jobs(qas: &[QAPair], template: &str, image_pattern: Option<&str>) -> Vec<QueryJob> {
    qas.iter()
        .map(|qa| QueryJob {
            qa_id: qa.qa_id.clone(),
            prompt: template.replace("{question}", &qa.prompt_text()),
            images: image_pattern.map(|p| image_refs(p, qa)).unwrap_or_default(),
        })
        .collect()
}

pub fn prompt_hash(prompt: &str) -> String {
    Sha256::digest(prompt.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn dry_run_response(prompt: &str) -> String {
    format!(
        "<map></map>\n<think>dry run, prompt sha256 {}</think>\n<answer>none</answer>",
        prompt_hash(prompt)
    )
}

fn image_part(reference: &str) -> Result<Value, String> {
    let url = if reference.starts_with("http://")
        || reference.starts_with("https://")
        || reference.starts_with("data:")
    {
        reference.to_string()
    } else {
        let bytes = fs::read(reference).map_err(|e| format!("image {reference}: {e}"))?;
        let mime = match Path::new(reference)
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            Some("png") => "image/png",
            Some("webp") => "image/webp",
            Some("gif") => "image/gif",
            _ => "image/jpeg",
        };
        let b64 = base64::engine::general_purpose::STANDARD.encode(bytes);
        format!("data:{mime};base64,{b64}")
    };
    Ok(json!({"type": "image_url", "image_url": {"url": url}}))
}

pub fn request_body(job: &QueryJob, cfg: &ClientConfig) -> Result<Value, String> {
    let mut content = vec![json!({"type": "text", "text": job.prompt})];
    for r in &job.images {
        content.push(image_part(r)?);
    }
    Ok(json!({
        "model": cfg.model_name,
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_output_tokens,
        "messages": [{"role": "user", "content": content}],
    }))
}

enum Attempt {
    Done(String),
    Retry(String),
    Fatal(String),
}

fn attempt(http: &reqwest::blocking::Client, cfg: &ClientConfig, body: &Value) -> Attempt {
    let mut req = http.post(cfg.endpoint()).json(body);
    if !cfg.api_key.is_empty() {
        req = req.bearer_auth(cfg.api_key.expose());
    }
    let resp = match req.send() {
        Ok(r) => r,
        Err(e) => return Attempt::Retry(format!("request error: {}", e.without_url())),
    };
    let status = resp.status();
    if !status.is_success() {
        let msg = format!("http {}", status.as_u16());
        return if status.is_server_error() || status.as_u16() == 429 {
            Attempt::Retry(msg)
        } else {
            Attempt::Fatal(msg)
        };
    }
    let v: Value = match resp.json() {
        Ok(v) => v,
        Err(e) => return Attempt::Retry(format!("bad response body: {}", e.without_url())),
    };
    match v["choices"][0]["message"]["content"].as_str() {
        Some(s) if !s.is_empty() => Attempt::Done(s.to_string()),
        _ => Attempt::Retry("empty response".into()),
    }
}

fn run_one(http: &reqwest::blocking::Client, job: &QueryJob, cfg: &ClientConfig) -> QueryRecord {
    let started = Instant::now();
    let status_raw = if cfg.dry_run {
        Ok(dry_run_response(&job.prompt))
    } else {
        match request_body(job, cfg) {
            Err(e) => Err(e),
            Ok(body) => {
                let mut result = Err("max retries".to_string());
                for n in 0..cfg.retry.max_attempts {
                    if n > 0 {
                        thread::sleep(cfg.retry.backoff_base * 2u32.saturating_pow(n - 1));
                    }
                    match attempt(http, cfg, &body) {
                        Attempt::Done(s) => {
                            result = Ok(s);
                            break;
                        }
                        Attempt::Fatal(e) => {
                            result = Err(e);
                            break;
                        }
                        Attempt::Retry(e) => {
                            eprintln!("{}: attempt {} failed: {e}", job.qa_id, n + 1);
                        }
                    }
                }
                result
            }
        }
    };
    let (raw, status) = match status_raw {
        Ok(raw) => (raw, QueryStatus::Ok),
        Err(reason) => (String::new(), QueryStatus::Failed(reason)),
    };
    QueryRecord {
        qa_id: job.qa_id.clone(),
        prompt: job.prompt.clone(),
        images: job.images.clone(),
        raw,
        status,
        latency: started.elapsed().as_secs_f64(),
    }
}

/// Records already present in `path`. Lines that do not parse (a run killed
/// mid-write) are ignored.
pub fn load_existing(path: &Path) -> HashMap<String, QueryRecord> {
    let Ok(text) = fs::read_to_string(path) else {
        return HashMap::new();
    };
    text.lines()
        .filter_map(|l| serde_json::from_str::<QueryRecord>(l).ok())
        .map(|r| (r.qa_id.clone(), r))
        .collect()
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> ClientError + '_ {
    move |source| ClientError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn to_line(r: &QueryRecord) -> String {
    serde_json::to_string(r).expect("records serialize")
}

/// Runs every job not already recorded in `out` and returns one record per
/// job, in job order. Per-item failures are recorded, never raised.
pub fn run_batch(
    jobs: &[QueryJob],
    cfg: &ClientConfig,
    out: &Path,
) -> Result<Vec<QueryRecord>, ClientError> {
    cfg.validate()?;
    let mut done = load_existing(out);
    let pending: Vec<&QueryJob> = jobs
        .iter()
        .filter(|j| !done.contains_key(&j.qa_id))
        .collect();
    eprintln!(
        "{} of {} items already recorded, querying {}",
        jobs.len() - pending.len(),
        jobs.len(),
        pending.len()
    );

    if !pending.is_empty() {
        let http = reqwest::blocking::Client::builder()
            .timeout(cfg.request_timeout)
            .build()
            .map_err(|e| ClientError::Config(e.to_string()))?;
        let mut log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(out)
            .map_err(io_err(out))?;
        let next = AtomicUsize::new(0);
        let (tx, rx) = mpsc::channel::<QueryRecord>();
        thread::scope(|s| -> Result<(), ClientError> {
            for _ in 0..cfg.max_parallel.min(pending.len()) {
                let tx = tx.clone();
                let (next, pending, http) = (&next, &pending, &http);
                s.spawn(move || loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(job) = pending.get(i) else {
                        break;
                    };
                    if tx.send(run_one(http, job, cfg)).is_err() {
                        break;
                    }
                });
            }
            drop(tx);
            let mut latency = 0.0;
            let mut received = 0usize;
            for rec in rx {
                if let QueryStatus::Failed(reason) = &rec.status {
                    eprintln!("{} failed: {reason}", rec.qa_id);
                }
                latency += rec.latency;
                received += 1;
                writeln!(log, "{}", to_line(&rec)).map_err(io_err(out))?;
                log.flush().map_err(io_err(out))?;
                done.insert(rec.qa_id.clone(), rec);
            }
            eprintln!(
                "mean latency {:.3}s over {received} requests",
                latency / received.max(1) as f64
            );
            Ok(())
        })?;
    }

    let records: Vec<QueryRecord> = jobs
        .iter()
        .map(|j| done.remove(&j.qa_id).expect("every job recorded"))
        .collect();
    let tmp = out.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp).map_err(io_err(&tmp))?);
        for r in &records {
            writeln!(w, "{}", to_line(r)).map_err(io_err(&tmp))?;
        }
        w.flush().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, out).map_err(io_err(out))?;
    Ok(records)
}
