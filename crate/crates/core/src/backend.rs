//! Classifier backends and batch dispatch.
//!
//! A backend answers [`ProtocolRequest`]s for both tasks. Three transports exist: the
//! in-process lexicon baseline, a child process speaking JSON Lines on stdin/stdout,
//! and HTTP `POST <base>/classify` with one request per call.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::detect::{BaselineWsd, WsdLabel};
use crate::ingest::tokenize_with_spans;
use crate::protocol::{parse_response_line, ProtocolRequest, ProtocolResponse, Task};
use crate::regard::{BaselineRegard, RegardLabel};

const EXCERPT_LEN: usize = 200;

#[derive(Debug, Clone, thiserror::Error)]
pub enum BackendError {
    /// The backend could not be reached or died; retrying may help.
    #[error("backend transport error: {0}")]
    Transport(String),
    /// The backend answered with something outside the protocol.
    #[error("backend protocol error: {message} (payload: {excerpt:?})")]
    Protocol { message: String, excerpt: String },
}

impl BackendError {
    pub(crate) fn protocol(message: impl Into<String>, payload: &str) -> Self {
        let excerpt = match payload.char_indices().nth(EXCERPT_LEN) {
            Some((i, _)) => format!("{}...", &payload[..i]),
            None => payload.to_owned(),
        };
        BackendError::Protocol {
            message: message.into(),
            excerpt,
        }
    }

    pub fn is_retriable(&self) -> bool {
        matches!(self, BackendError::Transport(_))
    }
}

pub trait Classifier: Send + Sync {
    /// Recorded as the `source` of every decision this backend makes.
    fn id(&self) -> &str;

    /// Must return exactly one response per request, in request order.
    fn classify_batch(
        &self,
        batch: &[ProtocolRequest],
    ) -> Result<Vec<ProtocolResponse>, BackendError>;
}

/// Dependency-free lexicon heuristics for both tasks.
#[derive(Debug, Clone)]
pub struct Builtin {
    wsd: BaselineWsd,
    regard: BaselineRegard,
}

impl Builtin {
    pub fn new(wsd: BaselineWsd, regard: BaselineRegard) -> Self {
        Builtin { wsd, regard }
    }

    pub fn answer(&self, req: &ProtocolRequest) -> Result<ProtocolResponse, BackendError> {
        let payload = || serde_json::to_string(req).unwrap_or_default();
        req.validate()
            .map_err(|m| BackendError::protocol(m, &payload()))?;
        let tokens = tokenize_with_spans(&req.text);
        let texts: Vec<&str> = tokens.iter().map(|t| t.text.as_str()).collect();
        match req.task {
            Task::Wsd => {
                let index = tokens
                    .iter()
                    .position(|t| [t.start, t.end] == req.span)
                    .ok_or_else(|| {
                        BackendError::protocol("span does not address a token", &payload())
                    })?;
                let (label, confidence) = self.wsd.decide(&texts, index, &req.keyword);
                Ok(ProtocolResponse::wsd(label, confidence))
            }
            Task::Regard => {
                let (label, confidence) = self.regard.decide(&texts);
                Ok(ProtocolResponse::regard(label, confidence))
            }
        }
    }
}

impl Default for Builtin {
    fn default() -> Self {
        Builtin::new(BaselineWsd::bundled(), BaselineRegard::bundled())
    }
}

impl Classifier for Builtin {
    fn id(&self) -> &str {
        "builtin"
    }

    fn classify_batch(
        &self,
        batch: &[ProtocolRequest],
    ) -> Result<Vec<ProtocolResponse>, BackendError> {
        batch.iter().map(|r| self.answer(r)).collect()
    }
}

/// Answers every request with the same labels. Useful for tests and pass-through runs.
#[derive(Debug, Clone, Copy)]
pub struct FixedBackend {
    pub wsd: WsdLabel,
    pub regard: RegardLabel,
}

impl Classifier for FixedBackend {
    fn id(&self) -> &str {
        "fixed"
    }

    fn classify_batch(
        &self,
        batch: &[ProtocolRequest],
    ) -> Result<Vec<ProtocolResponse>, BackendError> {
        Ok(batch
            .iter()
            .map(|r| match r.task {
                Task::Wsd => ProtocolResponse::wsd(self.wsd, 1.0),
                Task::Regard => ProtocolResponse::regard(self.regard, 1.0),
            })
            .collect())
    }
}

struct ChildIo {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// A sidecar process reading requests on stdin and answering on stdout, one line each.
pub struct ExecBackend {
    id: String,
    io: Mutex<ChildIo>,
}

impl ExecBackend {
    /// Runs `command` through `sh -c`.
    pub fn spawn(command: &str) -> Result<Self, BackendError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| BackendError::Transport(format!("cannot start {command:?}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(ExecBackend {
            id: format!("exec:{command}"),
            io: Mutex::new(ChildIo {
                child,
                stdin,
                stdout,
            }),
        })
    }
}

impl Classifier for ExecBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn classify_batch(
        &self,
        batch: &[ProtocolRequest],
    ) -> Result<Vec<ProtocolResponse>, BackendError> {
        let mut guard = self
            .io
            .lock()
            .map_err(|_| BackendError::Transport("sidecar handle poisoned".into()))?;
        let ChildIo { stdin, stdout, .. } = &mut *guard;
        let mut payload = String::new();
        for req in batch {
            payload.push_str(&serde_json::to_string(req).expect("request serializes"));
            payload.push('\n');
        }
        // Write from a helper thread so a sidecar that answers while we are still
        // writing cannot fill both pipes and deadlock.
        std::thread::scope(|scope| {
            let writer = scope.spawn(|| {
                stdin
                    .write_all(payload.as_bytes())
                    .and_then(|_| stdin.flush())
            });
            let mut out = Vec::with_capacity(batch.len());
            let mut line = String::new();
            for req in batch {
                line.clear();
                let n = stdout
                    .read_line(&mut line)
                    .map_err(|e| BackendError::Transport(format!("reading sidecar: {e}")))?;
                if n == 0 {
                    return Err(BackendError::Transport("sidecar closed its output".into()));
                }
                out.push(parse_response_line(req.task, &line)?);
            }
            writer
                .join()
                .expect("writer thread")
                .map_err(|e| BackendError::Transport(format!("writing to sidecar: {e}")))?;
            Ok(out)
        })
    }
}

impl Drop for ExecBackend {
    fn drop(&mut self) {
        if let Ok(io) = self.io.get_mut() {
            let _ = io.child.kill();
            let _ = io.child.wait();
        }
    }
}

/// A sidecar served over HTTP. Each request is a separate `POST <base>/classify`.
pub struct HttpBackend {
    id: String,
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(base_url: &str) -> Self {
        let base = base_url.trim_end_matches('/');
        let endpoint = if base.ends_with("/classify") {
            base.to_owned()
        } else {
            format!("{base}/classify")
        };
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend {
            id: format!("http:{base}"),
            endpoint,
            agent,
        }
    }

    fn post(&self, req: &ProtocolRequest) -> Result<ProtocolResponse, BackendError> {
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .send_json(req)
            .map_err(|e| BackendError::Transport(format!("{}: {e}", self.endpoint)))?;
        let status = resp.status();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(format!("{}: {e}", self.endpoint)))?;
        if status.is_server_error() {
            return Err(BackendError::Transport(format!(
                "{} answered {status}",
                self.endpoint
            )));
        }
        parse_response_line(req.task, &body)
    }
}

impl Classifier for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn classify_batch(
        &self,
        batch: &[ProtocolRequest],
    ) -> Result<Vec<ProtocolResponse>, BackendError> {
        batch.iter().map(|r| self.post(r)).collect()
    }
}

/// `builtin`, `exec:<command>` or `http:<url>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Builtin,
    Exec(String),
    Http(String),
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "builtin" {
            return Ok(BackendSpec::Builtin);
        }
        if s.starts_with("http://") || s.starts_with("https://") {
            return Ok(BackendSpec::Http(s.to_owned()));
        }
        match s.split_once(':') {
            Some(("exec", cmd)) if !cmd.trim().is_empty() => Ok(BackendSpec::Exec(cmd.to_owned())),
            Some(("http", url)) if !url.trim().is_empty() => {
                let url = if url.contains("://") {
                    url.to_owned()
                } else {
                    format!("http://{}", url.trim_start_matches('/'))
                };
                Ok(BackendSpec::Http(url))
            }
            _ => Err(format!(
                "unknown backend {s:?} (expected builtin, exec:<cmd> or http:<url>)"
            )),
        }
    }
}

impl std::fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BackendSpec::Builtin => f.write_str("builtin"),
            BackendSpec::Exec(cmd) => write!(f, "exec:{cmd}"),
            BackendSpec::Http(url) => write!(f, "http:{url}"),
        }
    }
}

impl BackendSpec {
    pub fn connect(&self) -> Result<Box<dyn Classifier>, BackendError> {
        Ok(match self {
            BackendSpec::Builtin => Box::new(Builtin::default()),
            BackendSpec::Exec(cmd) => Box::new(ExecBackend::spawn(cmd)?),
            BackendSpec::Http(url) => Box::new(HttpBackend::new(url)),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DispatchOptions {
    pub batch_size: usize,
    /// Upper bound on batches handed to the backend at the same time.
    pub max_in_flight: usize,
}

impl Default for DispatchOptions {
    fn default() -> Self {
        DispatchOptions {
            batch_size: 256,
            max_in_flight: 4,
        }
    }
}

/// Sends `requests` to the backend in batches, at most `max_in_flight` at once, and
/// returns responses in request order. Labels are validated against each task.
pub fn dispatch(
    backend: &dyn Classifier,
    requests: &[ProtocolRequest],
    opts: DispatchOptions,
) -> Result<Vec<ProtocolResponse>, BackendError> {
    let batch_size = opts.batch_size.max(1);
    let batches: Vec<&[ProtocolRequest]> = requests.chunks(batch_size).collect();
    let workers = opts.max_in_flight.clamp(1, batches.len().max(1));

    let run = |batch: &[ProtocolRequest]| -> Result<Vec<ProtocolResponse>, BackendError> {
        let responses = backend.classify_batch(batch)?;
        if responses.len() != batch.len() {
            return Err(BackendError::protocol(
                format!(
                    "expected {} responses, got {}",
                    batch.len(),
                    responses.len()
                ),
                "",
            ));
        }
        for (req, resp) in batch.iter().zip(&responses) {
            resp.interpret(req.task)?;
        }
        Ok(responses)
    };

    if workers == 1 {
        let mut out = Vec::with_capacity(requests.len());
        for batch in batches {
            out.extend(run(batch)?);
        }
        return Ok(out);
    }

    let next = AtomicUsize::new(0);
    let results: Vec<Mutex<Option<Result<Vec<ProtocolResponse>, BackendError>>>> =
        batches.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(batch) = batches.get(i) else { break };
                let res = run(batch);
                let failed = res.is_err();
                *results[i].lock().unwrap() = Some(res);
                if failed {
                    // stop handing out work; remaining slots stay empty
                    next.store(batches.len(), Ordering::Relaxed);
                    break;
                }
            });
        }
    });
    let mut out = Vec::with_capacity(requests.len());
    for slot in results {
        match slot.into_inner().unwrap() {
            Some(res) => out.extend(res?),
            None => {
                return Err(BackendError::Transport(
                    "dispatch aborted after an earlier batch failed".into(),
                ))
            }
        }
    }
    Ok(out)
}
