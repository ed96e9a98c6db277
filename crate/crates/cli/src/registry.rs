use std::collections::{HashMap, VecDeque};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender, TryRecvError};
use std::sync::{Arc, Mutex};
use std::thread;

use fastdata::engine::{execute_oneshot, query_id, QueryReport, RunControl, StreamingPipeline};
use fastdata::query::Mode;
use fastdata::{Error, QuerySpec};
use log::{info, warn};
use serde::Serialize;
use tokio::sync::oneshot;

/// Emissions kept in memory per streaming query.
pub const KEPT_EMISSIONS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum QueryState {
    Running,
    Done,
    Failed,
    Cancelled,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Progress {
    pub points_processed: u64,
    pub emissions: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct QueryStatus {
    pub query_id: String,
    pub mode: Mode,
    pub state: QueryState,
    pub progress: Progress,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

enum Command {
    Emit(oneshot::Sender<Arc<QueryReport>>),
}

struct Shared {
    state: QueryState,
    error: Option<String>,
    reports: VecDeque<Arc<QueryReport>>,
    emissions: u64,
}

/// One submitted query. Handlers only read snapshots and post commands;
/// the pipeline lives on the query's own thread.
pub struct QueryHandle {
    id: String,
    mode: Mode,
    shared: Mutex<Shared>,
    ctl: RunControl,
    points: AtomicU64,
    mailbox: Mutex<Option<Sender<Command>>>,
    log_path: Option<PathBuf>,
}

impl QueryHandle {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn status(&self) -> QueryStatus {
        let s = self.shared.lock().unwrap();
        let points = match s.reports.back() {
            Some(r) if s.state != QueryState::Running => r.points_processed,
            _ => self.points.load(Ordering::Relaxed).max(self.ctl.points()),
        };
        QueryStatus {
            query_id: self.id.clone(),
            mode: self.mode,
            state: s.state,
            progress: Progress {
                points_processed: points,
                emissions: s.emissions,
            },
            error: s.error.clone(),
        }
    }

    pub fn state(&self) -> QueryState {
        self.shared.lock().unwrap().state
    }

    /// Latest report together with the state it was read under.
    pub fn latest(&self) -> (QueryState, Option<Arc<QueryReport>>) {
        let s = self.shared.lock().unwrap();
        (s.state, s.reports.back().cloned())
    }

    pub fn kept_reports(&self) -> usize {
        self.shared.lock().unwrap().reports.len()
    }

    pub fn cancel(&self) {
        self.ctl.cancel();
        self.mailbox.lock().unwrap().take();
    }

    /// Asks a running streaming query for an emission. `None` when the
    /// query is no longer running.
    pub fn request_emit(&self) -> Option<oneshot::Receiver<Arc<QueryReport>>> {
        let (tx, rx) = oneshot::channel();
        let mailbox = self.mailbox.lock().unwrap();
        mailbox.as_ref()?.send(Command::Emit(tx)).ok()?;
        Some(rx)
    }

    fn push_report(&self, report: QueryReport) -> Arc<QueryReport> {
        let report = Arc::new(report);
        let evicted = {
            let mut s = self.shared.lock().unwrap();
            s.reports.push_back(report.clone());
            s.emissions += 1;
            if s.reports.len() > KEPT_EMISSIONS {
                s.reports.pop_front()
            } else {
                None
            }
        };
        if let (Some(old), Some(path)) = (evicted, &self.log_path) {
            if let Err(e) = append_line(path, &old) {
                warn!("cannot append to report log {}: {e}", path.display());
            }
        }
        report
    }

    fn finish(&self, state: QueryState, error: Option<String>) {
        let mut s = self.shared.lock().unwrap();
        s.state = state;
        s.error = error;
        drop(s);
        self.mailbox.lock().unwrap().take();
    }
}

fn append_line(path: &Path, report: &QueryReport) -> std::io::Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let line = serde_json::to_string(report).map_err(std::io::Error::other)?;
    writeln!(f, "{line}")
}

/// Submitted queries by id. Relative source paths resolve against the data
/// directory.
pub struct Registry {
    data_dir: PathBuf,
    report_log: Option<PathBuf>,
    queries: Mutex<HashMap<String, Arc<QueryHandle>>>,
    next: AtomicU64,
}

impl Registry {
    pub fn new(data_dir: impl Into<PathBuf>, report_log: Option<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            report_log,
            queries: Mutex::new(HashMap::new()),
            next: AtomicU64::new(1),
        }
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }

    pub fn get(&self, id: &str) -> Option<Arc<QueryHandle>> {
        self.queries.lock().unwrap().get(id).cloned()
    }

    /// Starts `spec`, which must already be validated, on a new thread.
    pub fn submit(&self, spec: QuerySpec) -> Arc<QueryHandle> {
        let n = self.next.fetch_add(1, Ordering::Relaxed);
        let id = format!("{}-{n}", query_id(&spec));
        let (tx, rx) = mpsc::channel();
        let handle = Arc::new(QueryHandle {
            id: id.clone(),
            mode: spec.mode,
            shared: Mutex::new(Shared {
                state: QueryState::Running,
                error: None,
                reports: VecDeque::new(),
                emissions: 0,
            }),
            ctl: RunControl::default(),
            points: AtomicU64::new(0),
            mailbox: Mutex::new(Some(tx)),
            log_path: self.report_log.clone(),
        });
        self.queries.lock().unwrap().insert(id.clone(), handle.clone());
        let worker = handle.clone();
        let base = self.data_dir.clone();
        thread::Builder::new()
            .name(format!("query-{id}"))
            .spawn(move || run_worker(&worker, &spec, &base, rx))
            .expect("spawn query thread");
        info!("query {id} started");
        handle
    }
}

fn run_worker(h: &QueryHandle, spec: &QuerySpec, base: &Path, rx: Receiver<Command>) {
    let result = match spec.mode {
        Mode::OneShot => execute_oneshot(spec, Some(base), &h.ctl).map(|run| {
            h.push_report(run.report);
        }),
        Mode::Streaming => run_streaming_worker(h, spec, base, &rx),
    };
    match result {
        Ok(()) => h.finish(QueryState::Done, None),
        Err(Error::Cancelled) => h.finish(QueryState::Cancelled, None),
        Err(e) => {
            warn!("query {} failed: {e}", h.id);
            h.finish(QueryState::Failed, Some(e.to_string()));
        }
    }
}

fn run_streaming_worker(h: &QueryHandle, spec: &QuerySpec, base: &Path, rx: &Receiver<Command>) -> fastdata::Result<()> {
    let mut pipeline = StreamingPipeline::new(spec, Some(base))?;
    loop {
        loop {
            match rx.try_recv() {
                Ok(Command::Emit(reply)) => {
                    let r = h.push_report(pipeline.emit());
                    let _ = reply.send(r);
                }
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => break,
            }
        }
        if h.ctl.is_cancelled() {
            return Err(Error::Cancelled);
        }
        let Some(step) = pipeline.step()? else { break };
        h.points.store(pipeline.points_processed(), Ordering::Relaxed);
        if step.emit_due {
            h.push_report(pipeline.emit());
        }
    }
    h.push_report(pipeline.emit());
    // Requests that raced with the end of the stream get the final report.
    while let Ok(Command::Emit(reply)) = rx.try_recv() {
        let (_, last) = h.latest();
        if let Some(r) = last {
            let _ = reply.send(r);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use fastdata::ingest::{SourceDescriptor, SourceKind, SynthDeviceParams};

    fn streaming_spec(n: u64) -> QuerySpec {
        QuerySpec {
            source: SourceDescriptor::new(SourceKind::SyntheticDevices(SynthDeviceParams {
                n_points: n,
                ..Default::default()
            }))
            .with_batch_size(100),
            mode: Mode::Streaming,
            emit_every: Some(fastdata::query::Period::Tuples(100)),
            ..Default::default()
        }
        .validate()
        .unwrap()
    }

    fn wait(h: &QueryHandle) {
        while h.state() == QueryState::Running {
            thread::sleep(std::time::Duration::from_millis(5));
        }
    }

    #[test]
    fn keeps_latest_emissions_and_logs_the_rest() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("reports.ndjson");
        let reg = Registry::new(dir.path(), Some(log.clone()));
        let h = reg.submit(streaming_spec(3000));
        wait(&h);
        assert_eq!(h.state(), QueryState::Done);
        let emitted = h.status().progress.emissions as usize;
        assert!(emitted > KEPT_EMISSIONS, "{emitted}");
        assert_eq!(h.kept_reports(), KEPT_EMISSIONS);
        let logged = std::fs::read_to_string(&log).unwrap().lines().count();
        assert_eq!(logged, emitted - KEPT_EMISSIONS);
        let (_, last) = h.latest();
        assert_eq!(last.unwrap().points_processed, 3000);
    }

    #[test]
    fn unknown_ids_are_absent() {
        let reg = Registry::new(".", None);
        assert!(reg.get("nope").is_none());
    }
}
