use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use ctg_core::blanket::BlanketError;
use ctg_core::inference::{InferenceError, ReasonerError};
use serde::Serialize;
use serde_json::{json, Value};

/// Every error the API can return. The list is closed: engine errors map
/// onto it through exhaustive matches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    GraphNotLoaded,
    NodeNotFound,
    WorldNotFound,
    JobNotFound,
    InvalidRequest,
    NoBlanketFound,
    CyclicQueryRegion,
    UnresolvableNode,
    TargetNotInstantiated,
    NoSharedObservations,
    ReasonerNotConfigured,
    ReasonerFailure,
    Internal,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 13] = [
        ErrorCode::GraphNotLoaded,
        ErrorCode::NodeNotFound,
        ErrorCode::WorldNotFound,
        ErrorCode::JobNotFound,
        ErrorCode::InvalidRequest,
        ErrorCode::NoBlanketFound,
        ErrorCode::CyclicQueryRegion,
        ErrorCode::UnresolvableNode,
        ErrorCode::TargetNotInstantiated,
        ErrorCode::NoSharedObservations,
        ErrorCode::ReasonerNotConfigured,
        ErrorCode::ReasonerFailure,
        ErrorCode::Internal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::GraphNotLoaded => "GRAPH_NOT_LOADED",
            ErrorCode::NodeNotFound => "NODE_NOT_FOUND",
            ErrorCode::WorldNotFound => "WORLD_NOT_FOUND",
            ErrorCode::JobNotFound => "JOB_NOT_FOUND",
            ErrorCode::InvalidRequest => "INVALID_REQUEST",
            ErrorCode::NoBlanketFound => "NO_BLANKET_FOUND",
            ErrorCode::CyclicQueryRegion => "CYCLIC_QUERY_REGION",
            ErrorCode::UnresolvableNode => "UNRESOLVABLE_NODE",
            ErrorCode::TargetNotInstantiated => "TARGET_NOT_INSTANTIATED",
            ErrorCode::NoSharedObservations => "NO_SHARED_OBSERVATIONS",
            ErrorCode::ReasonerNotConfigured => "REASONER_NOT_CONFIGURED",
            ErrorCode::ReasonerFailure => "REASONER_FAILURE",
            ErrorCode::Internal => "INTERNAL",
        }
    }

    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::GraphNotLoaded => StatusCode::SERVICE_UNAVAILABLE,
            ErrorCode::NodeNotFound | ErrorCode::WorldNotFound | ErrorCode::JobNotFound => StatusCode::NOT_FOUND,
            ErrorCode::InvalidRequest => StatusCode::BAD_REQUEST,
            ErrorCode::NoBlanketFound
            | ErrorCode::CyclicQueryRegion
            | ErrorCode::UnresolvableNode
            | ErrorCode::TargetNotInstantiated
            | ErrorCode::NoSharedObservations
            | ErrorCode::ReasonerNotConfigured => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorCode::ReasonerFailure => StatusCode::BAD_GATEWAY,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

/// Response body `{code, message, detail}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    pub detail: Value,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self { code, message: message.into(), detail: Value::Null }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }

    pub fn node_not_found(id: &str) -> Self {
        Self::new(ErrorCode::NodeNotFound, format!("unknown node `{id}`")).with_detail(json!({ "node": id }))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self)).into_response()
    }
}

impl From<BlanketError> for ApiError {
    fn from(e: BlanketError) -> Self {
        let message = e.to_string();
        match e {
            BlanketError::UnknownNode(n) => ApiError::node_not_found(&n),
            BlanketError::UnknownWorld(w) => ApiError::new(ErrorCode::WorldNotFound, message).with_detail(json!({ "world": w })),
            BlanketError::NotFound { target, missing_roots } => {
                ApiError::new(ErrorCode::NoBlanketFound, message).with_detail(json!({ "target": target, "missing_roots": missing_roots }))
            }
            BlanketError::NoBlanketFound(t) => ApiError::new(ErrorCode::NoBlanketFound, message).with_detail(json!({ "target": t })),
            BlanketError::CyclicQueryRegion(t) => ApiError::new(ErrorCode::CyclicQueryRegion, message).with_detail(json!({ "target": t })),
            BlanketError::TargetNotInstantiated { target, world } => {
                ApiError::new(ErrorCode::TargetNotInstantiated, message).with_detail(json!({ "target": target, "world": world }))
            }
            BlanketError::NoSharedObservations => ApiError::new(ErrorCode::NoSharedObservations, message),
        }
    }
}

fn reasoner_detail(e: &ReasonerError) -> Value {
    match e {
        ReasonerError::AmbiguousAbduction { candidates, .. } => json!({ "kind": "ambiguous_abduction", "candidates": candidates }),
        ReasonerError::Parse { .. } => json!({ "kind": "parse" }),
        ReasonerError::Backend(_) => json!({ "kind": "backend" }),
        ReasonerError::Inconsistent(_) => json!({ "kind": "inconsistent" }),
        ReasonerError::MechanismMissing(_) => json!({ "kind": "mechanism_missing" }),
        ReasonerError::Domain(_) => json!({ "kind": "domain" }),
    }
}

impl From<InferenceError> for ApiError {
    fn from(e: InferenceError) -> Self {
        let message = e.to_string();
        match e {
            InferenceError::UnknownNode(n) => ApiError::node_not_found(&n),
            InferenceError::UnknownWorld(w) => ApiError::new(ErrorCode::WorldNotFound, message).with_detail(json!({ "world": w })),
            InferenceError::InvalidRequest(_) => ApiError::new(ErrorCode::InvalidRequest, message),
            InferenceError::CyclicQueryRegion(t) => ApiError::new(ErrorCode::CyclicQueryRegion, message).with_detail(json!({ "target": t })),
            InferenceError::UnresolvableNode(n) => ApiError::new(ErrorCode::UnresolvableNode, message).with_detail(json!({ "node": n })),
            InferenceError::Step { node, source } => {
                let mut detail = reasoner_detail(&source);
                detail["node"] = json!(node);
                ApiError::new(ErrorCode::ReasonerFailure, message).with_detail(detail)
            }
            InferenceError::MaxRetriesExceeded { node, retries, .. } => {
                ApiError::new(ErrorCode::ReasonerFailure, message).with_detail(json!({ "kind": "max_retries", "node": node, "retries": retries }))
            }
            InferenceError::Blanket(b) => b.into(),
        }
    }
}
