//! Segmentation by an external model process.
//!
//! Each request is one JSON line on the child's stdin:
//! `{"patch_path": "...", "point": [x, y], "box": [x1, y1, x2, y2]}`.
//! The child answers with one line `{"rle": [...], "score": s}` (see
//! [`super::rle`]). Requests on one child are serialized; a pool of children
//! serves concurrent callers.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{rle, InstanceMask, SegmentError, SegmentErrorKind, SegmentRequest, Segmenter};
use crate::raster::write_patch_png;

pub const TIMEOUT_ENV: &str = "SEEKER_BACKEND_TIMEOUT_MS";
const DEFAULT_TIMEOUT_MS: u64 = 30_000;

#[derive(Debug, Clone)]
pub struct ExternalConfig {
    /// Program followed by its arguments.
    pub command: Vec<String>,
    /// Working directory of the child; normally the patch directory.
    pub working_dir: PathBuf,
    pub workers: usize,
    pub timeout_ms: u64,
}

impl ExternalConfig {
    /// Config with the timeout taken from `SEEKER_BACKEND_TIMEOUT_MS`.
    pub fn from_env(command: Vec<String>, working_dir: PathBuf, workers: usize) -> Result<Self, String> {
        let timeout_ms = match std::env::var(TIMEOUT_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| format!("{TIMEOUT_ENV} must be an integer, got {v:?}"))?,
            Err(_) => DEFAULT_TIMEOUT_MS,
        };
        Ok(Self {
            command,
            working_dir,
            workers: workers.max(1),
            timeout_ms,
        })
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    patch_path: &'a str,
    point: [f64; 2],
    #[serde(rename = "box")]
    prompt_box: [f64; 4],
}

#[derive(Deserialize)]
struct WireReply {
    rle: Vec<u32>,
    score: f64,
}

struct Worker {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Worker {
    fn spawn(config: &ExternalConfig) -> std::io::Result<Self> {
        let (program, args) = config
            .command
            .split_first()
            .ok_or_else(|| std::io::Error::other("empty backend command"))?;
        let mut child = Command::new(program)
            .args(args)
            .current_dir(&config.working_dir)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            lines: rx,
        })
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub struct ExternalBackend {
    config: ExternalConfig,
    workers: Vec<Mutex<Option<Worker>>>,
    next: AtomicUsize,
    scratch: tempfile::TempDir,
    written: Mutex<HashSet<String>>,
}

impl ExternalBackend {
    pub fn new(config: ExternalConfig) -> std::io::Result<Self> {
        let mut workers = Vec::with_capacity(config.workers.max(1));
        for _ in 0..config.workers.max(1) {
            workers.push(Mutex::new(Some(Worker::spawn(&config)?)));
        }
        Ok(Self {
            config,
            workers,
            next: AtomicUsize::new(0),
            scratch: tempfile::tempdir()?,
            written: Mutex::new(HashSet::new()),
        })
    }

    /// Patch location sent to the child; patches without a file are written
    /// to a scratch directory first.
    fn patch_path(&self, req: &SegmentRequest<'_>) -> Result<String, SegmentError> {
        if let Some(p) = req.patch_path {
            return Ok(absolute(p).display().to_string());
        }
        let mut written = self.written.lock().unwrap_or_else(|e| e.into_inner());
        let path = self.scratch.path().join(format!("{}.png", req.patch.patch_id));
        if written.insert(req.patch.patch_id.clone()) {
            write_patch_png(req.patch, self.scratch.path())
                .map_err(|e| req.error(SegmentErrorKind::Io(e.to_string())))?;
        }
        Ok(path.display().to_string())
    }

    fn exchange(&self, worker: &mut Worker, line: &str, req: &SegmentRequest<'_>) -> Result<String, SegmentError> {
        let sent = writeln!(worker.stdin, "{line}").and_then(|_| worker.stdin.flush());
        if sent.is_err() {
            return Err(req.error(SegmentErrorKind::Exited));
        }
        match worker.lines.recv_timeout(Duration::from_millis(self.config.timeout_ms)) {
            Ok(Ok(reply)) => Ok(reply),
            Ok(Err(e)) => Err(req.error(SegmentErrorKind::Io(e.to_string()))),
            Err(RecvTimeoutError::Timeout) => Err(req.error(SegmentErrorKind::Timeout(self.config.timeout_ms))),
            Err(RecvTimeoutError::Disconnected) => Err(req.error(SegmentErrorKind::Exited)),
        }
    }
}

fn absolute(p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        std::env::current_dir().map(|d| d.join(p)).unwrap_or_else(|_| p.to_path_buf())
    }
}

impl Segmenter for ExternalBackend {
    fn segment(&self, req: &SegmentRequest<'_>) -> Result<InstanceMask, SegmentError> {
        req.validate()?;
        let patch_path = self.patch_path(req)?;
        let b = req.prompt_box;
        let line = serde_json::to_string(&WireRequest {
            patch_path: &patch_path,
            point: [req.point.0, req.point.1],
            prompt_box: [b.x1, b.y1, b.x2, b.y2],
        })
        .expect("request serializes");

        // Prefer an idle child; otherwise queue on one chosen round-robin.
        let n = self.workers.len();
        let start = self.next.fetch_add(1, Ordering::Relaxed);
        let mut guard = (0..n)
            .find_map(|k| self.workers[(start + k) % n].try_lock().ok())
            .unwrap_or_else(|| self.workers[start % n].lock().unwrap_or_else(|e| e.into_inner()));
        if guard.is_none() {
            *guard = Some(
                Worker::spawn(&self.config).map_err(|e| req.error(SegmentErrorKind::Io(e.to_string())))?,
            );
        }
        let worker = guard.as_mut().expect("worker present");
        let reply = match self.exchange(worker, &line, req) {
            Ok(r) => r,
            Err(e) => {
                // The child's state is unknown after a failed exchange; replace it on next use.
                *guard = None;
                return Err(e);
            }
        };
        drop(guard);

        let reply: WireReply = serde_json::from_str(&reply)
            .map_err(|e| req.error(SegmentErrorKind::Protocol(e.to_string())))?;
        if !(0.0..=1.0).contains(&reply.score) {
            return Err(req.error(SegmentErrorKind::Protocol(format!("score {} outside [0,1]", reply.score))));
        }
        let size = req.patch.size;
        let mask = rle::decode(&reply.rle, size, size).map_err(|e| req.error(e.into()))?;
        Ok(InstanceMask {
            ann_id: req.ann_id.to_string(),
            mask,
            score: reply.score,
        })
    }
}
