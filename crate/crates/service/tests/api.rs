use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use ctg_core::fixtures::{fig1_graph, fig1_scm};
use ctg_core::inference::{
    execute, plan_inference, whatif_query, DeterministicReasoner, ExecuteConfig, Reasoner, ReasonerError, StepOutput, StepRequest, WhatIfRequest,
};
use ctg_core::world_graph::{CausalRelation, CausalVariable, VarType, WorldAssignment, WorldGraph, WorldInfo};
use ctg_service::{router, AppState, ErrorCode, Reasoners, ServiceConfig};
use http_body_util::BodyExt;
use serde_json::value::RawValue;
use serde_json::{json, Value};
use tower::ServiceExt;

struct Reply {
    status: StatusCode,
    headers: axum::http::HeaderMap,
    body: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|_| panic!("not JSON: {}", String::from_utf8_lossy(&self.body)))
    }

    fn header(&self, name: &str) -> Option<&str> {
        self.headers.get(name).map(|v| v.to_str().unwrap())
    }
}

async fn send(app: &Router, method: &str, uri: &str, body: Option<Value>, etag: Option<&str>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(tag) = etag {
        req = req.header(header::IF_NONE_MATCH, tag);
    }
    let req = match body {
        Some(b) => req.header(header::CONTENT_TYPE, "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, headers, body }
}

async fn get(app: &Router, uri: &str) -> Reply {
    send(app, "GET", uri, None, None).await
}

async fn post(app: &Router, uri: &str, body: Value) -> Reply {
    send(app, "POST", uri, Some(body), None).await
}

fn assert_error(r: &Reply, status: StatusCode, code: &str) {
    assert_eq!(r.status, status, "{}", String::from_utf8_lossy(&r.body));
    let body = r.json();
    assert_eq!(body["code"], code);
    assert!(body["message"].as_str().is_some_and(|m| !m.is_empty()));
    assert!(body.get("detail").is_some());
}

/// `a → b → c`, all three recorded in `world_1`, only `a` in `world_2`.
fn chain() -> WorldGraph {
    let mut g = WorldGraph::new();
    g.register_world("world_1", WorldInfo::default());
    g.register_world("world_2", WorldInfo::default());
    for (name, v) in [("a", "1"), ("b", "2"), ("c", "3")] {
        let mut var = CausalVariable::new(name, format!("node {name}"), VarType::Integer, "0-9").with_world("world_1", WorldAssignment::new(v));
        if name == "a" {
            var = var.with_world("world_2", WorldAssignment::new("5"));
        }
        g.upsert_variable(var).unwrap();
    }
    g.upsert_relation(CausalRelation::new("a", "b", "a raises b")).unwrap();
    g.upsert_relation(CausalRelation::new("b", "c", "b raises c")).unwrap();
    g
}

fn fig1_app(config: ServiceConfig) -> Router {
    router(AppState::new(Some(fig1_graph()), Reasoners::new().with_scm(fig1_scm()), config))
}

fn ids(body: &Value) -> Vec<String> {
    body["nodes"].as_array().unwrap().iter().map(|n| n["id"].as_str().unwrap().to_string()).collect()
}

async fn wait_for(app: &Router, job: &str) -> Value {
    for _ in 0..400 {
        let r = get(app, &format!("/api/jobs/{job}")).await;
        assert_eq!(r.status, StatusCode::OK);
        let body = r.json();
        if !matches!(body["status"].as_str(), Some("queued" | "running")) {
            return body;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    panic!("job {job} did not finish");
}

#[tokio::test]
async fn graph_slices_follow_filters() {
    let app = router(AppState::new(Some(chain()), Reasoners::new(), ServiceConfig::default()));
    let all = get(&app, "/api/graph").await.json();
    assert_eq!(ids(&all), ["a", "b", "c"]);
    assert_eq!(all["edges"].as_array().unwrap().len(), 2);
    assert_eq!(all["total"], 3);
    assert_eq!(all["nodes"][0]["worlds"]["world_1"]["current_value"], "1");
    assert_eq!(all["nodes"][0]["cluster"], "a");

    let single = get(&app, "/api/graph?neighborhood_of=b&radius=0").await.json();
    assert_eq!(ids(&single), ["b"]);
    let near = get(&app, "/api/graph?neighborhood_of=a&radius=1").await.json();
    assert_eq!(ids(&near), ["a", "b"]);
    assert_eq!(near["edges"].as_array().unwrap().len(), 1);

    // world filter against a membership oracle over the fixture itself
    let g = fig1_graph();
    let app = fig1_app(ServiceConfig::default());
    for w in ["world_1", "world_2"] {
        let want: Vec<String> = g.nodes().filter(|n| n.worlds.contains_key(w)).map(|n| n.id.clone()).collect();
        assert_eq!(ids(&get(&app, &format!("/api/graph?world={w}")).await.json()), want);
    }
    assert_error(&get(&app, "/api/graph?world=world_9").await, StatusCode::NOT_FOUND, "WORLD_NOT_FOUND");
    assert_error(&get(&app, "/api/graph?neighborhood_of=nope").await, StatusCode::NOT_FOUND, "NODE_NOT_FOUND");
    assert_error(&get(&app, "/api/graph?radius=two").await, StatusCode::BAD_REQUEST, "INVALID_REQUEST");
}

#[tokio::test]
async fn pagination_is_stable_and_covers_every_edge_once() {
    let app = fig1_app(ServiceConfig::default());
    let full = get(&app, "/api/graph").await.json();
    let mut seen = Vec::new();
    let mut edges = 0;
    let mut offset = Some(0);
    while let Some(o) = offset {
        let page = get(&app, &format!("/api/graph?limit=2&offset={o}")).await.json();
        assert!(page["nodes"].as_array().unwrap().len() <= 2);
        seen.extend(ids(&page));
        edges += page["edges"].as_array().unwrap().len();
        offset = page["next_offset"].as_u64();
    }
    assert_eq!(seen, ids(&full));
    assert_eq!(edges, full["edges"].as_array().unwrap().len());
}

#[tokio::test]
async fn identical_gets_share_body_and_etag() {
    let app = fig1_app(ServiceConfig::default());
    for uri in ["/api/graph?world=world_1", "/api/node/y", "/api/stats"] {
        let a = get(&app, uri).await;
        let b = get(&app, uri).await;
        assert_eq!(a.status, StatusCode::OK);
        assert_eq!(a.body, b.body);
        let tag = a.header("etag").unwrap().to_string();
        assert_eq!(b.header("etag"), Some(tag.as_str()));
        assert_eq!(a.header("x-graph-hash"), b.header("x-graph-hash"));
        let cached = send(&app, "GET", uri, None, Some(&tag)).await;
        assert_eq!(cached.status, StatusCode::NOT_MODIFIED);
        assert!(cached.body.is_empty());
    }
}

#[tokio::test]
async fn node_and_stats_endpoints() {
    let app = fig1_app(ServiceConfig::default());
    let x = get(&app, "/api/node/x").await.json();
    assert_eq!(x["parents"], json!(["v"]));
    assert_eq!(x["children"], json!(["y"]));
    assert_eq!(x["edges_out"][0]["effect"], "y");
    assert_error(&get(&app, "/api/node/missing").await, StatusCode::NOT_FOUND, "NODE_NOT_FOUND");

    let stats = get(&app, "/api/stats").await.json();
    assert_eq!((stats["node_count"].as_u64(), stats["edge_count"].as_u64()), (Some(5), Some(4)));
    assert_eq!(stats["world_count"], 2);
}

#[tokio::test]
async fn whatif_returns_the_engine_trace_unchanged() {
    let app = fig1_app(ServiceConfig::default());
    let r = post(&app, "/api/whatif", json!({"target": "y", "interventions": {"x": 0}, "factual_world": "world_1"})).await;
    assert_eq!(r.status, StatusCode::ACCEPTED);
    let job = r.json()["job_id"].as_str().unwrap().to_string();
    assert_eq!(r.header("location"), Some(format!("/api/jobs/{job}").as_str()));

    let body = wait_for(&app, &job).await;
    assert_eq!(body["status"], "succeeded", "{body}");
    assert_eq!(body["result"]["target_value"], "1");
    let steps: Vec<&str> = body["result"]["trace"]["entries"].as_array().unwrap().iter().map(|s| s["node"].as_str().unwrap()).collect();
    assert_eq!(steps, ["u", "z", "y"]);
    assert_eq!(body["result"]["trace"]["steps"], 3);

    // byte-for-byte against a direct engine run
    let request = WhatIfRequest { target: "y".into(), interventions: [("x".to_string(), "0".to_string())].into(), factual_world: "world_1".into() };
    let q = whatif_query(&fig1_graph(), &request).unwrap();
    let plan = plan_inference(&q).unwrap();
    let direct = execute(&plan, &q, &DeterministicReasoner::new(fig1_scm()), &ExecuteConfig::default()).unwrap();
    #[derive(serde::Deserialize)]
    struct Raw<'a> {
        #[serde(borrow)]
        result: &'a RawValue,
        #[serde(borrow)]
        plan: &'a RawValue,
    }
    let raw_body = get(&app, &format!("/api/jobs/{job}")).await.body;
    let parsed: Raw = serde_json::from_slice(&raw_body).unwrap();
    assert_eq!(parsed.result.get(), serde_json::to_string(&direct).unwrap());
    assert_eq!(parsed.plan.get(), serde_json::to_string(&plan).unwrap());
}

#[tokio::test]
async fn whatif_errors_map_to_codes() {
    let app = fig1_app(ServiceConfig::default());
    let req = |v: Value| post(&app, "/api/whatif", v);
    assert_error(
        &req(json!({"target": "y", "interventions": {"nope": 0}, "factual_world": "world_1"})).await,
        StatusCode::NOT_FOUND,
        "NODE_NOT_FOUND",
    );
    assert_error(&req(json!({"target": "y", "interventions": {}, "factual_world": "world_1"})).await, StatusCode::BAD_REQUEST, "INVALID_REQUEST");
    assert_error(&req(json!({"target": "y", "factual_world": "world_1"})).await, StatusCode::BAD_REQUEST, "INVALID_REQUEST");
    assert_error(
        &req(json!({"target": "y", "interventions": {"x": [1]}, "factual_world": "world_1"})).await,
        StatusCode::BAD_REQUEST,
        "INVALID_REQUEST",
    );
    assert_error(&req(json!({"target": "y", "interventions": {"x": 0}, "factual_world": "w9"})).await, StatusCode::NOT_FOUND, "WORLD_NOT_FOUND");
    assert_error(
        &req(json!({"target": "y", "interventions": {"x": 0}, "factual_world": "world_1", "reasoner": "chat"})).await,
        StatusCode::UNPROCESSABLE_ENTITY,
        "REASONER_NOT_CONFIGURED",
    );

    // with `z` unrecorded nothing blocks the background factor of `z`
    let mut g = fig1_graph();
    g.register_world("world_3", WorldInfo::default());
    for (id, v) in [("x", "1"), ("y", "0")] {
        let node = g.node(id).unwrap().clone();
        g.upsert_variable(CausalVariable { worlds: [("world_3".to_string(), WorldAssignment::new(v))].into(), ..node }).unwrap();
    }
    let app = router(AppState::new(Some(g), Reasoners::new().with_scm(fig1_scm()), ServiceConfig::default()));
    let r = post(&app, "/api/whatif", json!({"target": "y", "interventions": {"x": 0}, "factual_world": "world_3"})).await;
    assert_error(&r, StatusCode::UNPROCESSABLE_ENTITY, "NO_BLANKET_FOUND");
    assert_eq!(r.json()["detail"]["missing_roots"], json!(["u"]));

    let unloaded = router(AppState::new(None, Reasoners::new(), ServiceConfig::default()));
    assert_error(&get(&unloaded, "/api/graph").await, StatusCode::SERVICE_UNAVAILABLE, "GRAPH_NOT_LOADED");
    assert_error(&get(&unloaded, "/api/nowhere").await, StatusCode::BAD_REQUEST, "INVALID_REQUEST");
}

struct Broken;

impl Reasoner for Broken {
    fn infer_step(&self, _: &StepRequest, _: Option<&str>) -> Result<StepOutput, ReasonerError> {
        Err(ReasonerError::Backend("connection refused".into()))
    }
}

#[tokio::test]
async fn reasoner_failure_fails_the_job() {
    let reasoners = Reasoners::new().with("broken", Arc::new(Broken));
    let app = router(AppState::new(Some(fig1_graph()), reasoners, ServiceConfig::default()));
    let r = post(&app, "/api/whatif", json!({"target": "y", "interventions": {"x": 0}, "factual_world": "world_1", "reasoner": "broken"})).await;
    let body = wait_for(&app, r.json()["job_id"].as_str().unwrap()).await;
    assert_eq!(body["status"], "failed");
    assert_eq!(body["error"]["code"], "REASONER_FAILURE");
    assert_eq!(body["error"]["detail"]["node"], "u");
    assert!(body.get("result").is_none());
}

/// Deterministic steps, slowed down, logging which intervention value each
/// prediction of `y` saw and how many steps overlapped.
struct Slow {
    inner: DeterministicReasoner,
    active: AtomicUsize,
    peak: AtomicUsize,
    order: Mutex<Vec<String>>,
}

impl Reasoner for Slow {
    fn infer_step(&self, request: &StepRequest, feedback: Option<&str>) -> Result<StepOutput, ReasonerError> {
        let now = self.active.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(Duration::from_millis(15));
        if request.target.id == "y" {
            let x = request.inputs.iter().find(|v| v.id == "x").and_then(|v| v.current_value.clone()).unwrap_or_default();
            self.order.lock().unwrap().push(x);
        }
        self.active.fetch_sub(1, Ordering::SeqCst);
        self.inner.infer_step(request, feedback)
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn jobs_run_one_at_a_time_in_submission_order() {
    let slow = Arc::new(Slow {
        inner: DeterministicReasoner::new(fig1_scm()),
        active: AtomicUsize::new(0),
        peak: AtomicUsize::new(0),
        order: Mutex::new(Vec::new()),
    });
    let app = router(AppState::new(Some(fig1_graph()), Reasoners::new().with("slow", slow.clone()), ServiceConfig::default()));
    let mut jobs = Vec::new();
    for x in [0, 1, 1, 0, 1] {
        let r = post(&app, "/api/whatif", json!({"target": "y", "interventions": {"x": x}, "factual_world": "world_1", "reasoner": "slow"})).await;
        jobs.push(r.json()["job_id"].as_str().unwrap().to_string());
    }
    assert_eq!(jobs.iter().collect::<BTreeSet<_>>().len(), 5);
    for j in &jobs {
        assert_eq!(wait_for(&app, j).await["status"], "succeeded");
    }
    assert_eq!(slow.peak.load(Ordering::SeqCst), 1);
    assert_eq!(*slow.order.lock().unwrap(), ["0", "1", "1", "0", "1"]);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn queued_jobs_cancel_and_finished_jobs_expire() {
    let slow = Arc::new(Slow {
        inner: DeterministicReasoner::new(fig1_scm()),
        active: AtomicUsize::new(0),
        peak: AtomicUsize::new(0),
        order: Mutex::new(Vec::new()),
    });
    let config = ServiceConfig { job_ttl: Duration::from_millis(300), ..Default::default() };
    let app = router(AppState::new(Some(fig1_graph()), Reasoners::new().with("slow", slow.clone()), config));
    let submit = |x: u8| post(&app, "/api/whatif", json!({"target": "y", "interventions": {"x": x}, "factual_world": "world_1", "reasoner": "slow"}));
    let first = submit(0).await.json()["job_id"].as_str().unwrap().to_string();
    let second = submit(1).await.json()["job_id"].as_str().unwrap().to_string();
    let canceled = send(&app, "DELETE", &format!("/api/jobs/{second}"), None, None).await.json();
    assert_eq!(canceled["status"], "canceled");
    assert_eq!(wait_for(&app, &first).await["status"], "succeeded");
    tokio::time::sleep(Duration::from_millis(100)).await;
    assert_eq!(*slow.order.lock().unwrap(), ["0"], "the canceled job must not run");

    tokio::time::sleep(Duration::from_millis(400)).await;
    assert_error(&get(&app, &format!("/api/jobs/{first}")).await, StatusCode::NOT_FOUND, "JOB_NOT_FOUND");
    assert_error(&get(&app, "/api/jobs/job-999999").await, StatusCode::NOT_FOUND, "JOB_NOT_FOUND");
}

#[tokio::test]
async fn dataset_download_is_reproducible() {
    let mut g = WorldGraph::new();
    g.register_world("world_1", WorldInfo::default());
    for (n, v) in [("a", "1"), ("b", "1")] {
        g.upsert_variable(CausalVariable::new(n, "", VarType::Integer, "").with_world("world_1", WorldAssignment::new(v))).unwrap();
    }
    g.upsert_relation(CausalRelation::new("a", "b", "")).unwrap();
    let app = router(AppState::new(Some(g), Reasoners::new(), ServiceConfig::default()));

    let one = post(&app, "/api/dataset", json!({"n_samples": 1, "seed": 3})).await;
    assert_eq!(one.status, StatusCode::OK);
    assert_eq!(one.header("content-type"), Some("application/x-ndjson"));
    let lines: Vec<Value> = String::from_utf8(one.body.clone()).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 1);
    assert_eq!((lines[0]["target"].as_str(), lines[0]["kind"].as_str()), (Some("b"), Some("observation")));
    assert_eq!(one.header("x-query-count"), Some("1"));
    assert!(one.header("x-dataset-warning").is_none());
    assert_eq!(post(&app, "/api/dataset", json!({"n_samples": 1, "seed": 3})).await.body, one.body);

    let partial = post(&app, "/api/dataset", json!({"n_samples": 40})).await;
    assert_eq!(partial.status, StatusCode::OK);
    assert!(partial.header("x-dataset-warning").is_some_and(|w| !w.is_empty()));
    assert_error(&post(&app, "/api/dataset", json!({"n_samples": "many"})).await, StatusCode::BAD_REQUEST, "INVALID_REQUEST");
}

#[test]
fn error_codes_are_distinct_and_serialize_as_documented() {
    let names: BTreeSet<&str> = ErrorCode::ALL.iter().map(|c| c.as_str()).collect();
    assert_eq!(names.len(), ErrorCode::ALL.len());
    for c in ErrorCode::ALL {
        assert_eq!(serde_json::to_value(c).unwrap(), c.as_str());
    }
}
