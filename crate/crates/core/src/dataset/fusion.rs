//! Sentence fusion: the request shape, provider transports, and a caller
//! that adds retries, a call budget and a shared rate limit.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FUSION_TEMPERATURE: f64 = 0.5;
pub const SYSTEM_PROMPT: &str = "You are a paraphraser.";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    #[error("fusion provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("fusion provider returned an empty completion")]
    EmptyCompletion,
    #[error("fusion call budget of {0} exhausted")]
    BudgetExceeded(u64),
    #[error("malformed provider response: {0}")]
    Protocol(String),
    #[error("invalid fusion request: {0}")]
    InvalidRequest(String),
}

impl FusionError {
    fn is_transient(&self) -> bool {
        matches!(self, FusionError::ProviderUnavailable(_))
    }
}

pub type Result<T> = std::result::Result<T, FusionError>;

/// Whitespace as Python's `str.split()` sees it.
fn is_py_space(c: char) -> bool {
    c.is_whitespace() || ('\u{1c}'..='\u{1f}').contains(&c)
}

/// Word count matching `len(s.split())`.
pub fn word_count(s: &str) -> usize {
    s.split(is_py_space).filter(|w| !w.is_empty()).count()
}

/// Formats a float the way Python's `str(float)` does for the values a
/// half-sum of word counts can take (`12.0`, `12.5`).
pub fn python_float(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e16 {
        format!("{x:.1}")
    } else {
        format!("{x}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionRequest {
    pub a: String,
    pub b: String,
    pub max_words: f64,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl FusionRequest {
    /// `max_words` is half the combined word count, possibly fractional.
    pub fn new(a: &str, b: &str) -> Result<Self> {
        if a.trim().is_empty() || b.trim().is_empty() {
            return Err(FusionError::InvalidRequest("empty sentence".into()));
        }
        Ok(Self {
            a: a.to_string(),
            b: b.to_string(),
            max_words: 0.5 * (word_count(a) + word_count(b)) as f64,
            temperature: FUSION_TEMPERATURE,
        })
    }

    pub fn user_prompt(&self) -> String {
        format!(
            "Fuse the following two sentences in {} words: {}\n{}",
            python_float(self.max_words),
            self.a,
            self.b
        )
    }

    pub fn messages(&self) -> Vec<ChatMessage> {
        vec![
            ChatMessage {
                role: "system".into(),
                content: SYSTEM_PROMPT.into(),
            },
            ChatMessage {
                role: "user".into(),
                content: self.user_prompt(),
            },
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FusionResult {
    pub text: String,
    /// Provider response body as received.
    pub raw: String,
}

/// One attempt at fusing a pair; returns the raw response body.
pub trait FusionProvider: Send + Sync {
    fn complete(&self, req: &FusionRequest) -> Result<FusionResponse>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FusionResponse {
    pub text: String,
    pub raw: String,
}

#[derive(Deserialize)]
struct TextBody {
    text: String,
}

fn http_error(e: ureq::Error) -> FusionError {
    match e {
        ureq::Error::Status(code, resp) if code >= 500 || code == 429 => {
            FusionError::ProviderUnavailable(format!(
                "status {code}: {}",
                resp.into_string().unwrap_or_default()
            ))
        }
        ureq::Error::Status(code, resp) => FusionError::Protocol(format!(
            "status {code}: {}",
            resp.into_string().unwrap_or_default()
        )),
        ureq::Error::Transport(t) => FusionError::ProviderUnavailable(t.to_string()),
    }
}

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::AgentBuilder::new().timeout(timeout).build()
}

/// `POST {base}/fuse` with the request object, expecting `{"text": ...}`.
pub struct HttpFusionProvider {
    url: String,
    agent: ureq::Agent,
}

impl HttpFusionProvider {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        Self {
            url: format!("{}/fuse", base_url.trim_end_matches('/')),
            agent: agent(timeout),
        }
    }
}

impl FusionProvider for HttpFusionProvider {
    fn complete(&self, req: &FusionRequest) -> Result<FusionResponse> {
        let raw = self
            .agent
            .post(&self.url)
            .send_json(req)
            .map_err(http_error)?
            .into_string()
            .map_err(|e| FusionError::ProviderUnavailable(e.to_string()))?;
        let body: TextBody =
            serde_json::from_str(&raw).map_err(|e| FusionError::Protocol(e.to_string()))?;
        Ok(FusionResponse {
            text: body.text,
            raw,
        })
    }
}

/// Talks to an OpenAI-style chat-completions endpoint directly, sending the
/// paraphraser messages.
pub struct ChatCompletionProvider {
    url: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl ChatCompletionProvider {
    pub fn new(url: &str, model: &str, api_key: Option<String>, timeout: Duration) -> Self {
        Self {
            url: url.to_string(),
            model: model.to_string(),
            api_key,
            agent: agent(timeout),
        }
    }

    pub fn request_body(&self, req: &FusionRequest) -> serde_json::Value {
        serde_json::json!({
            "model": self.model,
            "messages": req.messages(),
            "temperature": req.temperature,
        })
    }
}

impl FusionProvider for ChatCompletionProvider {
    fn complete(&self, req: &FusionRequest) -> Result<FusionResponse> {
        let mut call = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            call = call.set("Authorization", &format!("Bearer {key}"));
        }
        let raw = call
            .send_json(self.request_body(req))
            .map_err(http_error)?
            .into_string()
            .map_err(|e| FusionError::ProviderUnavailable(e.to_string()))?;
        let v: serde_json::Value =
            serde_json::from_str(&raw).map_err(|e| FusionError::Protocol(e.to_string()))?;
        let text = v["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| FusionError::Protocol("no choices[0].message.content".into()))?
            .to_string();
        Ok(FusionResponse { text, raw })
    }
}

struct ChildIo {
    _child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// A long-lived child process speaking one JSON object per line: requests
/// on its stdin, `{"text": ...}` replies on its stdout.
pub struct SubprocessFusionProvider {
    io: Mutex<ChildIo>,
}

impl SubprocessFusionProvider {
    /// Runs `command` through `sh -c`.
    pub fn spawn(command: &str) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| FusionError::ProviderUnavailable(format!("spawn `{command}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self {
            io: Mutex::new(ChildIo {
                _child: child,
                stdin,
                stdout,
            }),
        })
    }
}

impl FusionProvider for SubprocessFusionProvider {
    fn complete(&self, req: &FusionRequest) -> Result<FusionResponse> {
        let mut io = self.io.lock().unwrap_or_else(|p| p.into_inner());
        let gone = |e: std::io::Error| FusionError::ProviderUnavailable(e.to_string());
        let mut line =
            serde_json::to_string(req).map_err(|e| FusionError::Protocol(e.to_string()))?;
        line.push('\n');
        io.stdin.write_all(line.as_bytes()).map_err(gone)?;
        io.stdin.flush().map_err(gone)?;
        let mut raw = String::new();
        if io.stdout.read_line(&mut raw).map_err(gone)? == 0 {
            return Err(FusionError::ProviderUnavailable(
                "subprocess closed its output".into(),
            ));
        }
        let raw = raw.trim_end_matches(['\r', '\n']).to_string();
        let body: TextBody =
            serde_json::from_str(&raw).map_err(|e| FusionError::Protocol(e.to_string()))?;
        Ok(FusionResponse {
            text: body.text,
            raw,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub multiplier: f64,
    pub max_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            initial_backoff: Duration::from_millis(500),
            multiplier: 2.0,
            max_backoff: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    pub fn backoff(&self, attempt: u32) -> Duration {
        let secs = self.initial_backoff.as_secs_f64() * self.multiplier.powi(attempt as i32);
        Duration::from_secs_f64(secs.min(self.max_backoff.as_secs_f64()))
    }
}

/// Minimum spacing between consecutive calls, shared by all threads.
struct Throttle {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl Throttle {
    fn wait(&self) {
        if self.interval.is_zero() {
            return;
        }
        let delay = {
            let mut next = self.next.lock().unwrap_or_else(|p| p.into_inner());
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + self.interval);
            slot - now
        };
        std::thread::sleep(delay);
    }
}

/// Calls a provider with retries on transient failures, a cap on the total
/// number of calls, and a shared rate limit.
pub struct Fuser {
    provider: Box<dyn FusionProvider>,
    retry: RetryPolicy,
    max_calls: Option<u64>,
    calls: AtomicU64,
    throttle: Throttle,
}

impl Fuser {
    pub fn new(provider: Box<dyn FusionProvider>) -> Self {
        Self {
            provider,
            retry: RetryPolicy::default(),
            max_calls: None,
            calls: AtomicU64::new(0),
            throttle: Throttle {
                interval: Duration::ZERO,
                next: Mutex::new(None),
            },
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_max_calls(mut self, max_calls: Option<u64>) -> Self {
        self.max_calls = max_calls;
        self
    }

    pub fn with_min_interval(mut self, interval: Duration) -> Self {
        self.throttle.interval = interval;
        self
    }

    /// Provider calls made so far, including failed attempts.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn fuse(&self, req: &FusionRequest) -> Result<FusionResult> {
        let mut attempt = 0;
        loop {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if let Some(cap) = self.max_calls {
                if n >= cap {
                    self.calls.fetch_sub(1, Ordering::SeqCst);
                    return Err(FusionError::BudgetExceeded(cap));
                }
            }
            self.throttle.wait();
            match self.provider.complete(req) {
                Ok(resp) => {
                    let text = resp.text.trim();
                    if text.is_empty() {
                        return Err(FusionError::EmptyCompletion);
                    }
                    return Ok(FusionResult {
                        text: text.to_string(),
                        raw: resp.raw,
                    });
                }
                Err(e) if e.is_transient() && attempt + 1 < self.retry.max_attempts => {
                    let wait = self.retry.backoff(attempt);
                    log::warn!(
                        "fusion attempt {} failed ({e}); retrying in {wait:?}",
                        attempt + 1
                    );
                    std::thread::sleep(wait);
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

pub fn fuse(fuser: &Fuser, req: &FusionRequest) -> Result<FusionResult> {
    fuser.fuse(req)
}
