//! Read-only HTTP JSON API over one loaded causal graph.
//!
//! | route | purpose |
//! |---|---|
//! | `GET /api/graph` | filtered, paginated graph slice |
//! | `GET /api/node/{id}` | one node with its neighbours |
//! | `POST /api/whatif` | queue an inference job |
//! | `GET /api/jobs/{id}` | poll a job (`DELETE` cancels it) |
//! | `POST /api/dataset` | generate a query dataset as JSONL |
//! | `GET /api/stats` | structural statistics |
//!
//! GET bodies carry a content-hash `ETag`. Inference jobs run one at a time
//! by default, in submission order.

mod error;
mod jobs;
mod routes;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use axum::routing::{get, post};
use axum::Router;
use ctg_core::inference::{ChatReasoner, DeterministicReasoner, ExecuteConfig, Reasoner};
use ctg_core::llm::ChatBackend;
use ctg_core::scm::ScmInstance;
use ctg_core::world_graph::{StatsReport, WorldGraph};
use sha2::{Digest, Sha256};
use tokio::sync::Semaphore;

pub use error::{ApiError, ErrorCode};
pub use jobs::{JobStatus, JobStore, JobView};

/// Suggested client poll interval for queued jobs.
pub const POLL_INTERVAL_MS: u64 = 500;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub job_ttl: Duration,
    /// Jobs executing at once; the rest wait in FIFO order.
    pub max_concurrent_jobs: usize,
    pub execute: ExecuteConfig,
    pub default_page_size: usize,
    pub max_page_size: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            job_ttl: Duration::from_secs(3600),
            max_concurrent_jobs: 1,
            execute: ExecuteConfig::default(),
            default_page_size: 500,
            max_page_size: 5000,
        }
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// An immutable graph snapshot with derived lookups.
pub struct LoadedGraph {
    pub graph: WorldGraph,
    /// SHA-256 of the canonical graph JSON.
    pub hash: String,
    /// Node id → weakly connected component, named by its smallest node id.
    pub clusters: BTreeMap<String, String>,
    stats: OnceLock<StatsReport>,
}

impl LoadedGraph {
    pub fn new(graph: WorldGraph) -> Self {
        let hash = sha256_hex(graph.to_json_string().as_bytes());
        let clusters = weak_components(&graph);
        Self { graph, hash, clusters, stats: OnceLock::new() }
    }

    pub fn stats(&self) -> &StatsReport {
        self.stats.get_or_init(|| ctg_core::world_graph::graph_stats(&self.graph, Default::default()))
    }
}

fn weak_components(graph: &WorldGraph) -> BTreeMap<String, String> {
    let mut label: BTreeMap<String, String> = BTreeMap::new();
    // node ids iterate in sorted order, so the first unlabeled id is the
    // smallest of its component
    for start in graph.node_ids() {
        if label.contains_key(start) {
            continue;
        }
        let mut stack = vec![start.to_string()];
        label.insert(start.to_string(), start.to_string());
        while let Some(n) = stack.pop() {
            for m in graph.parents(&n).iter().chain(graph.children(&n)) {
                if !label.contains_key(m) {
                    label.insert(m.clone(), start.to_string());
                    stack.push(m.clone());
                }
            }
        }
    }
    label
}

/// Configured reasoners by request name.
#[derive(Clone, Default)]
pub struct Reasoners {
    by_name: BTreeMap<String, Arc<dyn Reasoner>>,
}

impl Reasoners {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `deterministic`, backed by known mechanisms.
    pub fn with_scm(mut self, scm: ScmInstance) -> Self {
        self.by_name.insert("deterministic".into(), Arc::new(DeterministicReasoner::new(scm)));
        self
    }

    /// Registers `chat`, backed by a chat model.
    pub fn with_chat(mut self, chat: Arc<dyn ChatBackend>) -> Self {
        self.by_name.insert("chat".into(), Arc::new(ChatReasoner::new(chat)));
        self
    }

    pub fn with(mut self, name: impl Into<String>, reasoner: Arc<dyn Reasoner>) -> Self {
        self.by_name.insert(name.into(), reasoner);
        self
    }

    /// `deterministic` when configured, otherwise `chat`.
    pub fn default_name(&self) -> Option<&str> {
        ["deterministic", "chat"].into_iter().find(|n| self.by_name.contains_key(*n))
    }

    pub fn get(&self, name: &str) -> Option<Arc<dyn Reasoner>> {
        self.by_name.get(name).cloned()
    }

    pub fn names(&self) -> Vec<String> {
        self.by_name.keys().cloned().collect()
    }
}

#[derive(Clone)]
pub struct AppState {
    pub(crate) graph: Option<Arc<LoadedGraph>>,
    pub(crate) reasoners: Reasoners,
    pub(crate) jobs: Arc<JobStore>,
    pub(crate) queue: Arc<Semaphore>,
    pub(crate) config: Arc<ServiceConfig>,
}

impl AppState {
    pub fn new(graph: Option<WorldGraph>, reasoners: Reasoners, config: ServiceConfig) -> Self {
        Self {
            graph: graph.map(|g| Arc::new(LoadedGraph::new(g))),
            reasoners,
            jobs: Arc::new(JobStore::new(config.job_ttl)),
            queue: Arc::new(Semaphore::new(config.max_concurrent_jobs.max(1))),
            config: Arc::new(config),
        }
    }

    pub fn jobs(&self) -> &JobStore {
        &self.jobs
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/graph", get(routes::get_graph))
        .route("/api/node/{id}", get(routes::get_node))
        .route("/api/whatif", post(routes::post_whatif))
        .route("/api/jobs/{id}", get(routes::get_job).delete(routes::cancel_job))
        .route("/api/dataset", post(routes::post_dataset))
        .route("/api/stats", get(routes::get_stats))
        .fallback(routes::not_found)
        .with_state(state)
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "serving");
    axum::serve(listener, router(state)).await
}
