//! A local HTTP server that replays recorded request/response pairs, for
//! exercising [`super::HttpBackend`] offline.
//!
//! Fixture files are JSON, either one fixture object or an array of them:
//!
//! ```json
//! {"request": {"method": "POST", "path": "/v1/chat/completions", "body": {...}},
//!  "response": {"status": 200, "body": {...}, "delay_ms": 0},
//!  "repeat": false}
//! ```
//!
//! A request is answered by the first unused fixture whose method and path
//! match and whose `body`, when present, equals the request body as JSON.
//! Fixtures without `repeat` are used once. A response body given as a JSON
//! string is sent verbatim, which allows replaying malformed payloads.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRequest {
    #[serde(default = "default_method")]
    pub method: String,
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<Value>,
}

fn default_method() -> String {
    "POST".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureResponse {
    #[serde(default = "default_status")]
    pub status: u16,
    pub body: Value,
    #[serde(default)]
    pub delay_ms: u64,
}

fn default_status() -> u16 {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub request: FixtureRequest,
    pub response: FixtureResponse,
    #[serde(default)]
    pub repeat: bool,
}

impl Fixture {
    pub fn new(path: &str, status: u16, body: Value) -> Self {
        Self {
            request: FixtureRequest { method: default_method(), path: path.into(), body: None },
            response: FixtureResponse { status, body, delay_ms: 0 },
            repeat: false,
        }
    }

    pub fn matching_body(mut self, body: Value) -> Self {
        self.request.body = Some(body);
        self
    }

    pub fn repeating(mut self) -> Self {
        self.repeat = true;
        self
    }

    pub fn delayed(mut self, ms: u64) -> Self {
        self.response.delay_ms = ms;
        self
    }

    /// Loads every `*.json` file of `dir`, in file-name order.
    pub fn load_dir(dir: &Path) -> std::io::Result<Vec<Fixture>> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut out = Vec::new();
        for p in paths {
            let text = std::fs::read_to_string(&p)?;
            let value: Value = serde_json::from_str(&text).map_err(std::io::Error::other)?;
            match value {
                Value::Array(items) => {
                    for item in items {
                        out.push(serde_json::from_value(item).map_err(std::io::Error::other)?);
                    }
                }
                other => out.push(serde_json::from_value(other).map_err(std::io::Error::other)?),
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordedRequest {
    pub method: String,
    pub path: String,
    /// Header names lowercased.
    pub headers: HashMap<String, String>,
    pub body: Value,
}

struct State {
    fixtures: Vec<(Fixture, bool)>,
    recorded: Vec<RecordedRequest>,
}

pub struct ReplayServer {
    addr: SocketAddr,
    state: Arc<Mutex<State>>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl ReplayServer {
    pub fn start(fixtures: Vec<Fixture>) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let state = Arc::new(Mutex::new(State {
            fixtures: fixtures.into_iter().map(|f| (f, false)).collect(),
            recorded: Vec::new(),
        }));
        let stop = Arc::new(AtomicBool::new(false));
        let handle = {
            let state = Arc::clone(&state);
            let stop = Arc::clone(&stop);
            std::thread::spawn(move || {
                for conn in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    if let Ok(stream) = conn {
                        let state = Arc::clone(&state);
                        std::thread::spawn(move || {
                            let _ = serve(stream, &state);
                        });
                    }
                }
            })
        };
        Ok(Self { addr, state, stop, handle: Some(handle) })
    }

    pub fn from_dir(dir: &Path) -> std::io::Result<Self> {
        Self::start(Fixture::load_dir(dir)?)
    }

    /// Base URL including the `/v1` prefix.
    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.state.lock().unwrap_or_else(|e| e.into_inner()).recorded.clone()
    }
}

impl Drop for ReplayServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn serve(stream: TcpStream, state: &Mutex<State>) -> std::io::Result<()> {
    stream.set_read_timeout(Some(Duration::from_secs(10)))?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    if reader.read_line(&mut request_line)? == 0 {
        return Ok(());
    }
    let mut parts = request_line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_string();
    let path = parts.next().unwrap_or_default().to_string();

    let mut headers = HashMap::new();
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            headers.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
        }
    }
    let len: usize = headers.get("content-length").and_then(|v| v.parse().ok()).unwrap_or(0);
    let mut raw = vec![0u8; len];
    reader.read_exact(&mut raw)?;
    let body: Value = serde_json::from_slice(&raw).unwrap_or(Value::Null);

    let response = {
        let mut st = state.lock().unwrap_or_else(|e| e.into_inner());
        st.recorded.push(RecordedRequest { method: method.clone(), path: path.clone(), headers, body: body.clone() });
        let found = st.fixtures.iter_mut().find(|(f, used)| {
            !*used
                && f.request.method.eq_ignore_ascii_case(&method)
                && f.request.path == path
                && f.request.body.as_ref().is_none_or(|b| *b == body)
        });
        match found {
            Some((f, used)) => {
                if !f.repeat {
                    *used = true;
                }
                f.response.clone()
            }
            None => FixtureResponse {
                status: 404,
                body: serde_json::json!({"error": {"message": format!("no fixture for {method} {path}")}}),
                delay_ms: 0,
            },
        }
    };

    if response.delay_ms > 0 {
        std::thread::sleep(Duration::from_millis(response.delay_ms));
    }
    let payload = match &response.body {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    };
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {} {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        response.status,
        reason(response.status),
        payload.len(),
        payload
    )?;
    stream.flush()
}

fn reason(status: u16) -> &'static str {
    match status {
        200 => "OK",
        400 => "Bad Request",
        401 => "Unauthorized",
        404 => "Not Found",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        502 => "Bad Gateway",
        503 => "Service Unavailable",
        _ => "Status",
    }
}
