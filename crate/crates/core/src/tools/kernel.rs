//! Client side of the code-execution worker protocol.
//!
//! One JSON object per line in each direction, one response per request.
//! Requests: `{"op": "exec"|"preload_image"|"reset"|"ping", "code"?, "name"?,
//! "payload"?}`. Responses: `{"status": "ok"|"syntax_error"|"runtime_error",
//! "stdout", "stderr", "traceback"?, "images": [base64...]}`.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelOp {
    Exec,
    PreloadImage,
    Reset,
    Ping,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelRequest {
    pub op: KernelOp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Base64 image bytes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
}

impl KernelRequest {
    pub fn exec(code: &str) -> Self {
        Self { op: KernelOp::Exec, code: Some(code.to_string()), name: None, payload: None }
    }

    pub fn preload(name: &str, payload_b64: String) -> Self {
        Self { op: KernelOp::PreloadImage, code: None, name: Some(name.to_string()), payload: Some(payload_b64) }
    }

    pub fn reset() -> Self {
        Self { op: KernelOp::Reset, code: None, name: None, payload: None }
    }

    pub fn ping() -> Self {
        Self { op: KernelOp::Ping, code: None, name: None, payload: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelStatus {
    Ok,
    SyntaxError,
    RuntimeError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelResponse {
    pub status: KernelStatus,
    #[serde(default)]
    pub stdout: String,
    #[serde(default)]
    pub stderr: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traceback: Option<String>,
    /// Base64 image payloads in production order.
    #[serde(default)]
    pub images: Vec<String>,
}

impl KernelResponse {
    pub fn ok(stdout: &str) -> Self {
        Self { status: KernelStatus::Ok, stdout: stdout.to_string(), stderr: String::new(), traceback: None, images: Vec::new() }
    }

    pub fn error(status: KernelStatus, traceback: &str) -> Self {
        Self { status, traceback: Some(traceback.to_string()), ..Self::ok("") }
    }

    pub fn with_images(mut self, images: Vec<String>) -> Self {
        self.images = images;
        self
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum KernelError {
    #[error("kernel could not be started: {0}")]
    Spawn(String),
    #[error("kernel exited unexpectedly")]
    Died,
    #[error("kernel exceeded the {0:?} execution limit")]
    Timeout(Duration),
    #[error("kernel protocol violation: {0}")]
    Protocol(String),
}

/// A live, stateful execution session.
pub trait KernelSession: Send {
    fn request(&mut self, request: &KernelRequest) -> Result<KernelResponse, KernelError>;

    fn exec(&mut self, code: &str) -> Result<KernelResponse, KernelError> {
        self.request(&KernelRequest::exec(code))
    }
}

/// Creates one fresh session per rollout.
pub trait KernelFactory: Send + Sync {
    fn spawn(&self) -> Box<dyn KernelSession>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernelLimits {
    pub exec_timeout: Duration,
    pub max_stdout_bytes: usize,
}

impl Default for KernelLimits {
    fn default() -> Self {
        Self { exec_timeout: Duration::from_secs(60), max_stdout_bytes: 1 << 20 }
    }
}

// ---------------------------------------------------------------- process

struct Running {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

/// Worker subprocess speaking the protocol on stdin/stdout. Spawned on first
/// use; after a timeout or crash it is killed and respawned on the next
/// request with empty state.
pub struct ProcessKernel {
    command: Vec<String>,
    limits: KernelLimits,
    running: Option<Running>,
}

impl ProcessKernel {
    pub fn new(command: Vec<String>, limits: KernelLimits) -> Self {
        Self { command, limits, running: None }
    }

    fn start(&self) -> Result<Running, KernelError> {
        let (program, args) = self
            .command
            .split_first()
            .ok_or_else(|| KernelError::Spawn("empty kernel command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| KernelError::Spawn(format!("{program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        tracing::debug!(?self.command, "kernel started");
        Ok(Running { child, stdin, lines: rx })
    }

    fn kill(&mut self) {
        if let Some(mut r) = self.running.take() {
            let _ = r.child.kill();
            let _ = r.child.wait();
        }
    }

    fn roundtrip(&mut self, request: &KernelRequest) -> Result<String, KernelError> {
        if self.running.is_none() {
            self.running = Some(self.start()?);
        }
        let running = self.running.as_mut().expect("started");
        let mut line = serde_json::to_string(request).map_err(|e| KernelError::Protocol(e.to_string()))?;
        line.push('\n');
        if running.stdin.write_all(line.as_bytes()).and_then(|_| running.stdin.flush()).is_err() {
            return Err(KernelError::Died);
        }
        match running.lines.recv_timeout(self.limits.exec_timeout) {
            Ok(Ok(reply)) => Ok(reply),
            Ok(Err(_)) | Err(RecvTimeoutError::Disconnected) => Err(KernelError::Died),
            Err(RecvTimeoutError::Timeout) => Err(KernelError::Timeout(self.limits.exec_timeout)),
        }
    }
}

impl KernelSession for ProcessKernel {
    fn request(&mut self, request: &KernelRequest) -> Result<KernelResponse, KernelError> {
        let reply = self.roundtrip(request).inspect_err(|e| {
            tracing::warn!(error = %e, "kernel session lost");
        });
        let reply = match reply {
            Ok(r) => r,
            Err(e) => {
                self.kill();
                return Err(e);
            }
        };
        let mut response: KernelResponse = serde_json::from_str(&reply).map_err(|e| {
            self.kill();
            KernelError::Protocol(format!("{e}: {}", crate::textutil::truncate_chars(&reply, 200)))
        })?;
        if response.stdout.len() > self.limits.max_stdout_bytes {
            let mut cut = self.limits.max_stdout_bytes;
            while !response.stdout.is_char_boundary(cut) {
                cut -= 1;
            }
            response.stdout.truncate(cut);
            response.stdout.push_str("\n[stdout truncated]");
        }
        Ok(response)
    }
}

impl Drop for ProcessKernel {
    fn drop(&mut self) {
        self.kill();
    }
}

pub struct ProcessKernelFactory {
    pub command: Vec<String>,
    pub limits: KernelLimits,
}

impl KernelFactory for ProcessKernelFactory {
    fn spawn(&self) -> Box<dyn KernelSession> {
        Box::new(ProcessKernel::new(self.command.clone(), self.limits.clone()))
    }
}

// ---------------------------------------------------------------- stub

type Rules = Arc<Vec<(String, KernelResponse)>>;

/// In-process stand-in for the worker.
///
/// Scripted rules (substring of the code → response) are consulted first.
/// Otherwise a toy evaluator handles `name = literal` assignments,
/// `print(name)` / `print(literal)` (other expressions print nothing), unbalanced brackets (syntax error) and
/// `/0` (ZeroDivisionError). Anything else succeeds with no output.
#[derive(Debug, Clone, Default)]
pub struct StubKernel {
    rules: Rules,
    vars: BTreeMap<String, String>,
    preloaded: Vec<String>,
    log: Vec<KernelRequest>,
}

impl StubKernel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_rules(rules: Vec<(String, KernelResponse)>) -> Self {
        Self { rules: Arc::new(rules), ..Self::default() }
    }

    pub fn preloaded(&self) -> &[String] {
        &self.preloaded
    }

    pub fn log(&self) -> &[KernelRequest] {
        &self.log
    }

    fn balanced(code: &str) -> bool {
        let mut stack = Vec::new();
        for c in code.chars() {
            match c {
                '(' | '[' | '{' => stack.push(c),
                ')' | ']' | '}' => {
                    let want = match c { ')' => '(', ']' => '[', _ => '{' };
                    if stack.pop() != Some(want) {
                        return false;
                    }
                }
                _ => {}
            }
        }
        stack.is_empty()
    }

    fn is_identifier(s: &str) -> bool {
        s.chars().next().is_some_and(|c| c.is_alphabetic() || c == '_')
            && s.chars().all(|c| c.is_alphanumeric() || c == '_')
    }

    fn literal(&self, expr: &str) -> Option<String> {
        let expr = expr.trim();
        if let Some(v) = self.vars.get(expr) {
            return Some(v.clone());
        }
        if expr.parse::<f64>().is_ok() {
            return Some(expr.to_string());
        }
        for q in ['"', '\''] {
            if expr.len() >= 2 && expr.starts_with(q) && expr.ends_with(q) {
                return Some(expr[1..expr.len() - 1].to_string());
            }
        }
        None
    }

    fn evaluate(&mut self, code: &str) -> KernelResponse {
        if !Self::balanced(code) {
            return KernelResponse::error(
                KernelStatus::SyntaxError,
                "SyntaxError: '(' was never closed",
            );
        }
        let mut stdout = String::new();
        for line in code.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if line.replace(' ', "").contains("/0") {
                return KernelResponse {
                    stdout,
                    ..KernelResponse::error(
                        KernelStatus::RuntimeError,
                        "Traceback (most recent call last):\nZeroDivisionError: division by zero",
                    )
                };
            }
            if let Some(inner) = line.strip_prefix("print(").and_then(|l| l.strip_suffix(')')) {
                match self.literal(inner) {
                    Some(v) => {
                        stdout.push_str(&v);
                        stdout.push('\n');
                    }
                    None if !Self::is_identifier(inner.trim()) => {}
                    None => {
                        return KernelResponse {
                            stdout,
                            ..KernelResponse::error(
                                KernelStatus::RuntimeError,
                                &format!("Traceback (most recent call last):\nNameError: name '{}' is not defined", inner.trim()),
                            )
                        }
                    }
                }
                continue;
            }
            if let Some((name, value)) = line.split_once('=') {
                let name = name.trim();
                if Self::is_identifier(name) {
                    if let Some(v) = self.literal(value) {
                        self.vars.insert(name.to_string(), v);
                    }
                }
            }
        }
        KernelResponse::ok(&stdout)
    }
}

impl KernelSession for StubKernel {
    fn request(&mut self, request: &KernelRequest) -> Result<KernelResponse, KernelError> {
        self.log.push(request.clone());
        match request.op {
            KernelOp::Ping => Ok(KernelResponse::ok("")),
            KernelOp::Reset => {
                self.vars.clear();
                self.preloaded.clear();
                Ok(KernelResponse::ok(""))
            }
            KernelOp::PreloadImage => {
                let name = request.name.clone().unwrap_or_default();
                if !self.preloaded.contains(&name) {
                    self.preloaded.push(name);
                }
                Ok(KernelResponse::ok(""))
            }
            KernelOp::Exec => {
                let code = request.code.as_deref().unwrap_or_default();
                if let Some((_, resp)) = self.rules.iter().find(|(needle, _)| code.contains(needle.as_str())) {
                    return Ok(resp.clone());
                }
                Ok(self.evaluate(code))
            }
        }
    }
}

/// Hands out independent [`StubKernel`]s sharing one rule table.
#[derive(Debug, Clone, Default)]
pub struct StubKernelFactory {
    rules: Rules,
    spawned: Arc<Mutex<usize>>,
}

impl StubKernelFactory {
    pub fn new(rules: Vec<(String, KernelResponse)>) -> Self {
        Self { rules: Arc::new(rules), spawned: Arc::default() }
    }

    pub fn spawned(&self) -> usize {
        *self.spawned.lock().expect("factory lock")
    }
}

impl KernelFactory for StubKernelFactory {
    fn spawn(&self) -> Box<dyn KernelSession> {
        *self.spawned.lock().expect("factory lock") += 1;
        Box::new(StubKernel { rules: Arc::clone(&self.rules), ..StubKernel::default() })
    }
}
