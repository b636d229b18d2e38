//! Newline-delimited JSON inference over TCP.
//!
//! Each request line is `{"id": "...", "features": ...}` where `features` is
//! either a preprocessed numeric array of the model's width or an object
//! mapping raw flow column names to cell values. Each line gets exactly one
//! response line, in order:
//!
//! ```text
//! {"id":"a","probability":0.97,"label":"malicious","model_digest":"…","latency_micros":41}
//! {"id":"b","error":{"code":"bad_dimension","message":"expected 78 features, got 3"}}
//! ```
//!
//! Error codes: `parse_error`, `missing_fields`, `bad_dimension`, `bad_value`.
//! One thread serves each connection; the model is shared read-only.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::pipeline::{label_for, Detector};

const POLL: Duration = Duration::from_millis(25);
/// Largest batch the coalescing worker will score in one pass.
const MAX_BATCH: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub enum Features {
    Vector(Vec<f64>),
    Raw(BTreeMap<String, String>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct InferenceRequest {
    pub id: String,
    pub features: Features,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceResponse {
    pub id: String,
    pub probability: f64,
    pub label: String,
    pub model_digest: String,
    pub latency_micros: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub id: Option<String>,
    pub error: ErrorBody,
}

impl ErrorResponse {
    fn new(id: Option<String>, code: &str, message: impl Into<String>) -> Self {
        ErrorResponse {
            id,
            error: ErrorBody {
                code: code.into(),
                message: message.into(),
            },
        }
    }
}

fn cell_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Parses one request line.
pub fn parse_request(line: &str) -> std::result::Result<InferenceRequest, ErrorResponse> {
    let value: Value =
        serde_json::from_str(line).map_err(|e| ErrorResponse::new(None, "parse_error", e.to_string()))?;
    let Value::Object(obj) = value else {
        return Err(ErrorResponse::new(None, "parse_error", "request must be a JSON object"));
    };
    let id = match obj.get("id") {
        Some(Value::String(s)) => Some(s.clone()),
        Some(Value::Number(n)) => Some(n.to_string()),
        Some(_) => return Err(ErrorResponse::new(None, "parse_error", "`id` must be a string")),
        None => None,
    };
    let missing: Vec<&str> = ["id", "features"]
        .into_iter()
        .filter(|k| !obj.contains_key(*k))
        .collect();
    if !missing.is_empty() {
        return Err(ErrorResponse::new(
            id,
            "missing_fields",
            format!("missing field(s): {}", missing.join(", ")),
        ));
    }
    let id = id.expect("checked");
    let features = match &obj["features"] {
        Value::Array(items) => {
            let v: Option<Vec<f64>> = items.iter().map(Value::as_f64).collect();
            Features::Vector(v.ok_or_else(|| {
                ErrorResponse::new(Some(id.clone()), "bad_value", "feature vector must contain only numbers")
            })?)
        }
        Value::Object(map) => {
            let mut raw = BTreeMap::new();
            for (k, v) in map {
                let text = cell_text(v).ok_or_else(|| {
                    ErrorResponse::new(Some(id.clone()), "bad_value", format!("field `{k}` must be a string or number"))
                })?;
                raw.insert(k.clone(), text);
            }
            Features::Raw(raw)
        }
        _ => {
            return Err(ErrorResponse::new(
                Some(id),
                "parse_error",
                "`features` must be an array or an object",
            ))
        }
    };
    Ok(InferenceRequest { id, features })
}

/// Turns request features into one preprocessed row, using the same
/// transform as batch prediction.
pub fn prepare_row(detector: &Detector, req: &InferenceRequest) -> std::result::Result<Vec<f64>, ErrorResponse> {
    let fail = |code: &str, msg: String| ErrorResponse::new(Some(req.id.clone()), code, msg);
    match &req.features {
        Features::Vector(v) => {
            if v.len() != detector.n_features() {
                return Err(fail(
                    "bad_dimension",
                    format!("expected {} features, got {}", detector.n_features(), v.len()),
                ));
            }
            Ok(v.clone())
        }
        Features::Raw(map) => {
            let mut unseen = 0;
            detector
                .preprocessor
                .transform_record(0, |c| map.get(c).map(String::as_str), &mut unseen)
                .map_err(|e| match e {
                    Error::MissingColumns(cols) => {
                        fail("missing_fields", format!("missing field(s): {}", cols.join(", ")))
                    }
                    other => fail("bad_value", other.to_string()),
                })
        }
    }
}

fn ceil_micros(d: Duration) -> u64 {
    (d.as_nanos().div_ceil(1000) as u64).max(1)
}

/// Scores a single parsed request. `started` marks the end of parsing.
pub fn classify_request(
    detector: &Detector,
    req: &InferenceRequest,
    threshold: f64,
    started: Instant,
) -> std::result::Result<InferenceResponse, ErrorResponse> {
    let row = prepare_row(detector, req)?;
    let p = detector
        .score(&row)
        .map_err(|e| ErrorResponse::new(Some(req.id.clone()), "bad_value", e.to_string()))?[0];
    Ok(respond(detector, req, p, threshold, started))
}

fn respond(detector: &Detector, req: &InferenceRequest, p: f64, threshold: f64, started: Instant) -> InferenceResponse {
    InferenceResponse {
        id: req.id.clone(),
        probability: p,
        label: label_for(p, threshold).into(),
        model_digest: detector.model_digest.clone(),
        latency_micros: ceil_micros(started.elapsed()),
    }
}

type Job = (Vec<f64>, Sender<f64>);

/// Scores coalesced rows: waits up to `window` after the first arrival.
fn batch_worker(detector: Arc<Detector>, jobs: Receiver<Job>, window: Duration) {
    while let Ok(first) = jobs.recv() {
        let deadline = Instant::now() + window;
        let mut batch = vec![first];
        while batch.len() < MAX_BATCH {
            let left = deadline.saturating_duration_since(Instant::now());
            match jobs.recv_timeout(left) {
                Ok(job) => batch.push(job),
                Err(_) => break,
            }
        }
        let rows: Vec<f64> = batch.iter().flat_map(|(r, _)| r.iter().copied()).collect();
        match detector.score(&rows) {
            Ok(probs) => {
                for ((_, tx), p) in batch.into_iter().zip(probs) {
                    let _ = tx.send(p);
                }
            }
            Err(e) => log::error!("batch scoring failed: {e}"),
        }
    }
}

#[derive(Clone)]
struct Shared {
    detector: Arc<Detector>,
    threshold: f64,
    batcher: Option<Arc<Mutex<Sender<Job>>>>,
    stop: Arc<AtomicBool>,
}

impl Shared {
    fn handle_line(&self, line: &str) -> String {
        let out = parse_request(line).and_then(|req| {
            let started = Instant::now();
            match &self.batcher {
                None => classify_request(&self.detector, &req, self.threshold, started),
                Some(tx) => {
                    let row = prepare_row(&self.detector, &req)?;
                    let (rtx, rrx) = mpsc::channel();
                    let sent = tx.lock().expect("batcher lock").send((row, rtx));
                    let p = sent.ok().and_then(|_| rrx.recv().ok()).ok_or_else(|| {
                        ErrorResponse::new(Some(req.id.clone()), "internal", "batch worker unavailable")
                    })?;
                    Ok(respond(&self.detector, &req, p, self.threshold, started))
                }
            }
        });
        match out {
            Ok(r) => serde_json::to_string(&r),
            Err(e) => serde_json::to_string(&e),
        }
        .expect("responses serialize")
    }

    fn connection(&self, stream: TcpStream) {
        let peer = stream.peer_addr().ok();
        if let Err(e) = self.connection_inner(stream) {
            log::debug!("connection {peer:?} closed: {e}");
        }
    }

    fn connection_inner(&self, stream: TcpStream) -> std::io::Result<()> {
        stream.set_read_timeout(Some(POLL))?;
        stream.set_nodelay(true)?;
        let mut writer = stream.try_clone()?;
        let mut reader = BufReader::new(stream);
        let mut buf = Vec::new();
        loop {
            match reader.read_until(b'\n', &mut buf) {
                Ok(0) => {
                    if !buf.is_empty() {
                        self.reply(&mut writer, &buf)?;
                    }
                    return Ok(());
                }
                Ok(_) if buf.ends_with(b"\n") => {
                    self.reply(&mut writer, &buf)?;
                    buf.clear();
                }
                Ok(_) => {}
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                    // Idle: leave once shutdown is requested and no request is half-read.
                    if self.stop.load(Ordering::SeqCst) && buf.is_empty() {
                        return Ok(());
                    }
                }
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(e) => return Err(e),
            }
        }
    }

    fn reply(&self, writer: &mut TcpStream, raw: &[u8]) -> std::io::Result<()> {
        let text = String::from_utf8_lossy(raw);
        let line = text.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() {
            return Ok(());
        }
        let mut out = self.handle_line(line);
        out.push('\n');
        writer.write_all(out.as_bytes())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ServeConfig {
    pub bind: String,
    pub threshold: f64,
    /// Coalesce requests arriving within this window into one forward pass.
    pub batch_window: Option<Duration>,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            bind: "127.0.0.1:7878".into(),
            threshold: 0.5,
            batch_window: None,
        }
    }
}

/// A running server. Dropping the handle without calling [`Self::shutdown`]
/// leaves the server running in the background.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    acceptor: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Flag that stops the server when set; suitable for a signal handler.
    pub fn stop_flag(&self) -> Arc<AtomicBool> {
        self.stop.clone()
    }

    /// Stops accepting, lets open connections finish the requests they have
    /// already sent, and waits for all threads.
    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        self.join();
    }

    /// Blocks until the stop flag is set by someone else.
    pub fn wait(mut self) {
        self.join();
    }

    fn join(&mut self) {
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }
}

/// Binds `cfg.bind` and serves `detector` on background threads.
pub fn serve(detector: Detector, cfg: &ServeConfig) -> Result<ServerHandle> {
    if !(0.0..=1.0).contains(&cfg.threshold) {
        return Err(Error::Config(format!("threshold {} outside [0, 1]", cfg.threshold)));
    }
    let addrs: Vec<SocketAddr> = cfg
        .bind
        .to_socket_addrs()
        .map_err(|e| Error::Config(format!("bind address `{}`: {e}", cfg.bind)))?
        .collect();
    let listener =
        TcpListener::bind(&addrs[..]).map_err(|e| Error::Config(format!("cannot bind `{}`: {e}", cfg.bind)))?;
    let addr = listener.local_addr().map_err(|e| Error::Invalid(e.to_string()))?;
    listener
        .set_nonblocking(true)
        .map_err(|e| Error::Invalid(e.to_string()))?;

    let detector = Arc::new(detector);
    let stop = Arc::new(AtomicBool::new(false));
    let batcher = cfg.batch_window.map(|window| {
        let (tx, rx) = mpsc::channel();
        let d = detector.clone();
        std::thread::spawn(move || batch_worker(d, rx, window));
        Arc::new(Mutex::new(tx))
    });
    let shared = Shared {
        detector,
        threshold: cfg.threshold,
        batcher,
        stop: stop.clone(),
    };
    log::info!("serving on {addr} (model {})", shared.detector.model_digest);

    let acceptor = std::thread::spawn(move || {
        let mut workers: Vec<JoinHandle<()>> = Vec::new();
        while !shared.stop.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((stream, _)) => {
                    if stream.set_nonblocking(false).is_err() {
                        continue;
                    }
                    let s = shared.clone();
                    workers.push(std::thread::spawn(move || s.connection(stream)));
                    workers.retain(|w| !w.is_finished());
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => std::thread::sleep(POLL),
                Err(e) => log::warn!("accept failed: {e}"),
            }
        }
        for w in workers {
            let _ = w.join();
        }
    });
    Ok(ServerHandle {
        addr,
        stop,
        acceptor: Some(acceptor),
    })
}
