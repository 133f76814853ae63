use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::Serialize;
use serde_json::value::RawValue;

use crate::error::ApiError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Succeeded,
    Failed,
    Canceled,
}

impl JobStatus {
    fn is_final(self) -> bool {
        matches!(self, JobStatus::Succeeded | JobStatus::Failed | JobStatus::Canceled)
    }
}

/// What `GET /api/jobs/{id}` returns. `query`, `plan` and `result` hold the
/// engine's own serialization, passed through untouched.
#[derive(Debug, Clone, Serialize)]
pub struct JobView {
    pub job_id: String,
    pub status: JobStatus,
    pub reasoner: String,
    pub query: Arc<RawValue>,
    pub plan: Arc<RawValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<Arc<RawValue>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ApiError>,
}

struct Entry {
    view: JobView,
    canceled: Arc<AtomicBool>,
    finished_at: Option<Instant>,
}

/// In-memory job table. Finished jobs are dropped `ttl` after completion.
pub struct JobStore {
    next: AtomicU64,
    ttl: Duration,
    entries: Mutex<HashMap<String, Entry>>,
}

impl JobStore {
    pub fn new(ttl: Duration) -> Self {
        Self { next: AtomicU64::new(1), ttl, entries: Mutex::new(HashMap::new()) }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HashMap<String, Entry>> {
        let mut entries = self.entries.lock().expect("job table");
        let ttl = self.ttl;
        entries.retain(|_, e| e.finished_at.is_none_or(|t| t.elapsed() < ttl));
        entries
    }

    /// Registers a queued job and returns its id and cancel flag.
    pub fn create(&self, reasoner: String, query: Arc<RawValue>, plan: Arc<RawValue>) -> (String, Arc<AtomicBool>) {
        let id = format!("job-{:06}", self.next.fetch_add(1, Ordering::Relaxed));
        let canceled = Arc::new(AtomicBool::new(false));
        let view = JobView { job_id: id.clone(), status: JobStatus::Queued, reasoner, query, plan, result: None, error: None };
        self.lock().insert(id.clone(), Entry { view, canceled: canceled.clone(), finished_at: None });
        (id, canceled)
    }

    pub fn get(&self, id: &str) -> Option<JobView> {
        self.lock().get(id).map(|e| e.view.clone())
    }

    /// Moves a queued job to running; false when it was canceled meanwhile.
    pub fn start(&self, id: &str) -> bool {
        let mut entries = self.lock();
        match entries.get_mut(id) {
            Some(e) if e.view.status == JobStatus::Queued => {
                e.view.status = JobStatus::Running;
                true
            }
            _ => false,
        }
    }

    pub fn finish(&self, id: &str, outcome: Result<Arc<RawValue>, ApiError>) {
        let mut entries = self.lock();
        let Some(e) = entries.get_mut(id) else { return };
        if e.view.status.is_final() {
            return;
        }
        match outcome {
            Ok(result) => {
                e.view.status = JobStatus::Succeeded;
                e.view.result = Some(result);
            }
            Err(err) => {
                e.view.status = JobStatus::Failed;
                e.view.error = Some(err);
            }
        }
        e.finished_at = Some(Instant::now());
    }

    /// Cancels a queued or running job. A running step is not interrupted;
    /// its outcome is discarded.
    pub fn cancel(&self, id: &str) -> Option<JobView> {
        let mut entries = self.lock();
        let e = entries.get_mut(id)?;
        if !e.view.status.is_final() {
            e.canceled.store(true, Ordering::Relaxed);
            e.view.status = JobStatus::Canceled;
            e.finished_at = Some(Instant::now());
        }
        Some(e.view.clone())
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
