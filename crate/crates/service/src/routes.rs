use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::header::{CONTENT_TYPE, ETAG, IF_NONE_MATCH, LOCATION};
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use ctg_core::blanket::{generate_dataset, DatasetConfig};
use ctg_core::inference::{execute, plan_inference, whatif_query, WhatIfRequest};
use ctg_core::retrieval::{expand, Direction};
use ctg_core::world_graph::{CausalVariable, WorldGraph};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use serde_json::{json, Value};

use crate::error::{ApiError, ErrorCode};
use crate::{sha256_hex, AppState, LoadedGraph, POLL_INTERVAL_MS};

type ApiResult<T> = Result<T, ApiError>;

fn loaded(state: &AppState) -> ApiResult<Arc<LoadedGraph>> {
    state.graph.clone().ok_or_else(|| ApiError::new(ErrorCode::GraphNotLoaded, "no graph is loaded"))
}

fn bad_request(message: String) -> ApiError {
    ApiError::new(ErrorCode::InvalidRequest, message)
}

fn raw<T: Serialize>(value: &T) -> ApiResult<Arc<RawValue>> {
    serde_json::value::to_raw_value(value).map(Arc::from).map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))
}

/// JSON body with a content-hash ETag; answers 304 when the client already
/// holds the same body.
fn cached_json(headers: &HeaderMap, graph_hash: &str, body: &impl Serialize) -> Response {
    let bytes = match serde_json::to_vec(body) {
        Ok(b) => b,
        Err(e) => return ApiError::new(ErrorCode::Internal, e.to_string()).into_response(),
    };
    let tag = format!("\"{}\"", sha256_hex(&bytes));
    let graph = HeaderValue::from_str(graph_hash).expect("hex is a valid header");
    if headers.get(IF_NONE_MATCH).is_some_and(|v| v.as_bytes() == tag.as_bytes()) {
        return (StatusCode::NOT_MODIFIED, [(ETAG, tag)]).into_response();
    }
    let mut resp = ([(CONTENT_TYPE, "application/json"), (ETAG, tag.as_str())], bytes).into_response();
    resp.headers_mut().insert("x-graph-hash", graph);
    resp
}

fn node_json(g: &LoadedGraph, n: &CausalVariable) -> Value {
    json!({
        "id": n.id,
        "name": n.name,
        "description": n.description,
        "type": n.var_type.as_str(),
        "values": n.values,
        "cluster": g.clusters.get(&n.id),
        "worlds": n.worlds,
    })
}

#[derive(Debug, Deserialize)]
pub(crate) struct GraphParams {
    world: Option<String>,
    cluster: Option<String>,
    neighborhood_of: Option<String>,
    radius: Option<usize>,
    offset: Option<usize>,
    limit: Option<usize>,
}

pub(crate) async fn get_graph(
    State(state): State<AppState>,
    headers: HeaderMap,
    params: Result<Query<GraphParams>, QueryRejection>,
) -> ApiResult<Response> {
    let Query(p) = params.map_err(|e| bad_request(e.body_text()))?;
    let g = loaded(&state)?;
    let graph: &WorldGraph = &g.graph;

    let mut ids: BTreeSet<String> = graph.node_ids().map(str::to_string).collect();
    if let Some(w) = &p.world {
        if !graph.worlds().contains_key(w) {
            return Err(ApiError::new(ErrorCode::WorldNotFound, format!("unknown world `{w}`")).with_detail(json!({ "world": w })));
        }
        ids.retain(|id| graph.node(id).is_some_and(|n| n.worlds.contains_key(w)));
    }
    if let Some(c) = &p.cluster {
        ids.retain(|id| g.clusters.get(id) == Some(c));
    }
    if let Some(center) = &p.neighborhood_of {
        if !graph.contains(center) {
            return Err(ApiError::node_not_found(center));
        }
        let seeds = BTreeSet::from([center.clone()]);
        let hood = expand(graph, &seeds, p.radius.unwrap_or(1), Direction::Undirected).map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?;
        let hood: BTreeSet<&str> = hood.node_ids().collect();
        ids.retain(|id| hood.contains(id.as_str()));
    } else if p.radius.is_some() {
        return Err(bad_request("`radius` needs `neighborhood_of`".into()));
    }

    let total = ids.len();
    let offset = p.offset.unwrap_or(0);
    let limit = p.limit.unwrap_or(state.config.default_page_size).min(state.config.max_page_size);
    if limit == 0 {
        return Err(bad_request("`limit` must be positive".into()));
    }
    let page: Vec<&String> = ids.iter().skip(offset).take(limit).collect();
    let on_page: BTreeSet<&str> = page.iter().map(|s| s.as_str()).collect();
    let nodes: Vec<Value> = page.iter().map(|id| node_json(&g, graph.node(id).expect("listed id"))).collect();
    // an edge travels with the page holding its cause
    let edges: Vec<_> = graph.edges().filter(|e| on_page.contains(e.cause.as_str()) && ids.contains(&e.effect)).collect();
    let next_offset = (offset + page.len() < total).then_some(offset + page.len());
    let body = json!({
        "graph_hash": g.hash,
        "total": total,
        "offset": offset,
        "limit": limit,
        "next_offset": next_offset,
        "nodes": nodes,
        "edges": edges,
    });
    Ok(cached_json(&headers, &g.hash, &body))
}

pub(crate) async fn get_node(State(state): State<AppState>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult<Response> {
    let g = loaded(&state)?;
    let n = g.graph.node(&id).ok_or_else(|| ApiError::node_not_found(&id))?;
    let mut body = node_json(&g, n);
    body["parents"] = json!(g.graph.parents(&id));
    body["children"] = json!(g.graph.children(&id));
    body["edges_in"] = json!(g.graph.parents(&id).iter().filter_map(|p| g.graph.edge(p, &id)).collect::<Vec<_>>());
    body["edges_out"] = json!(g.graph.children(&id).iter().filter_map(|c| g.graph.edge(&id, c)).collect::<Vec<_>>());
    Ok(cached_json(&headers, &g.hash, &body))
}

pub(crate) async fn get_stats(State(state): State<AppState>, headers: HeaderMap) -> ApiResult<Response> {
    let g = loaded(&state)?;
    let stats_graph = g.clone();
    tokio::task::spawn_blocking(move || {
        stats_graph.stats();
    })
    .await
    .map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?;
    Ok(cached_json(&headers, &g.hash, g.stats()))
}

#[derive(Debug, Deserialize)]
pub(crate) struct WhatIfBody {
    target: String,
    /// Values may be given as JSON strings, numbers or booleans.
    interventions: BTreeMap<String, Value>,
    factual_world: String,
    reasoner: Option<String>,
}

fn scalar_text(node: &str, v: &Value) -> ApiResult<String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        _ => Err(bad_request(format!("intervention on `{node}` must be a string, number or boolean"))),
    }
}

pub(crate) async fn post_whatif(State(state): State<AppState>, body: Result<Json<WhatIfBody>, JsonRejection>) -> ApiResult<Response> {
    let Json(body) = body.map_err(|e| bad_request(e.body_text()))?;
    let g = loaded(&state)?;
    let name = match &body.reasoner {
        Some(n) => n.clone(),
        None => state
            .reasoners
            .default_name()
            .ok_or_else(|| ApiError::new(ErrorCode::ReasonerNotConfigured, "no reasoner is configured"))?
            .to_string(),
    };
    let reasoner = state.reasoners.get(&name).ok_or_else(|| {
        ApiError::new(ErrorCode::ReasonerNotConfigured, format!("reasoner `{name}` is not configured"))
            .with_detail(json!({ "available": state.reasoners.names() }))
    })?;
    let interventions = body.interventions.iter().map(|(k, v)| Ok((k.clone(), scalar_text(k, v)?))).collect::<ApiResult<_>>()?;
    let request = WhatIfRequest { target: body.target, interventions, factual_world: body.factual_world };

    // query construction and planning are cheap and fail fast
    let query = whatif_query(&g.graph, &request)?;
    let plan = plan_inference(&query)?;
    let (job_id, canceled) = state.jobs.create(name, raw(&query)?, raw(&plan)?);

    let (jobs, queue, cfg, id) = (state.jobs.clone(), state.queue.clone(), state.config.execute, job_id.clone());
    tokio::spawn(async move {
        let Ok(_permit) = queue.acquire_owned().await else { return };
        if canceled.load(std::sync::atomic::Ordering::Relaxed) || !jobs.start(&id) {
            return;
        }
        let outcome = tokio::task::spawn_blocking(move || execute(&plan, &query, reasoner.as_ref(), &cfg)).await;
        let outcome = match outcome {
            Ok(Ok(result)) => raw(&result),
            Ok(Err(e)) => Err(e.into()),
            Err(e) => Err(ApiError::new(ErrorCode::Internal, format!("inference task failed: {e}"))),
        };
        jobs.finish(&id, outcome);
    });

    let location = format!("/api/jobs/{job_id}");
    let body = json!({ "job_id": job_id, "status": "queued", "poll_after_ms": POLL_INTERVAL_MS });
    Ok((StatusCode::ACCEPTED, [(LOCATION, location)], Json(body)).into_response())
}

fn job_not_found(id: &str) -> ApiError {
    ApiError::new(ErrorCode::JobNotFound, format!("unknown or expired job `{id}`")).with_detail(json!({ "job_id": id }))
}

pub(crate) async fn get_job(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let view = state.jobs.get(&id).ok_or_else(|| job_not_found(&id))?;
    Ok(Json(view).into_response())
}

pub(crate) async fn cancel_job(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let view = state.jobs.cancel(&id).ok_or_else(|| job_not_found(&id))?;
    Ok(Json(view).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(default)]
pub(crate) struct DatasetBody {
    n_samples: usize,
    k: usize,
    path_cap: u64,
    seed: u64,
}

impl Default for DatasetBody {
    fn default() -> Self {
        let d = DatasetConfig::default();
        Self { n_samples: d.n_samples, k: d.k, path_cap: d.path_cap, seed: d.seed }
    }
}

/// Header-safe rendering of warnings: printable ASCII only.
fn header_text(warnings: &[String]) -> String {
    warnings.join("; ").chars().map(|c| if c.is_ascii_graphic() || c == ' ' { c } else { '?' }).collect()
}

pub(crate) async fn post_dataset(State(state): State<AppState>, body: Result<Json<DatasetBody>, JsonRejection>) -> ApiResult<Response> {
    let Json(b) = body.map_err(|e| bad_request(e.body_text()))?;
    let g = loaded(&state)?;
    let cfg = DatasetConfig { n_samples: b.n_samples, k: b.k, path_cap: b.path_cap, seed: b.seed };
    let outcome = tokio::task::spawn_blocking(move || generate_dataset(&g.graph, &cfg))
        .await
        .map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))??;
    let mut resp = ([(CONTENT_TYPE, "application/x-ndjson")], outcome.to_jsonl()).into_response();
    let headers = resp.headers_mut();
    headers.insert("x-query-count", HeaderValue::from(outcome.queries.len()));
    if !outcome.warnings.is_empty() {
        let text = header_text(&outcome.warnings);
        headers.insert("x-dataset-warning", HeaderValue::from_str(&text).expect("sanitized header"));
    }
    Ok(resp)
}

pub(crate) async fn not_found() -> ApiError {
    ApiError::new(ErrorCode::InvalidRequest, "no such route")
}
