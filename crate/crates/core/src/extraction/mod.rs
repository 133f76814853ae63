//! Document-to-graph extraction: an agent loop over a chat backend, schema
//! checks on its structured output, and retrieval-assisted merging into the
//! world graph.

mod agent;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use thiserror::Error;

pub use agent::{ingest, run_extraction, AgentStep, AgentTranscript, ExtractionConfig, IngestRecord};

use crate::llm::ChatError;
use crate::retrieval::{serialize_node, EmbeddingBackend, RetrievalError, VectorIndex};
use crate::world_graph::{slugify, CausalRelation, CausalVariable, GraphError, VarType, WorldAssignment, WorldGraph, WorldInfo};

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error("document `{0}` is empty")]
    EmptyDocument(String),
    #[error(transparent)]
    Backend(#[from] ChatError),
    #[error("giving up after {retries} retries: {last}")]
    MaxRetriesExceeded { retries: usize, last: String },
    #[error("no final answer within {0} steps")]
    MaxStepsExceeded(usize),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// One input document; each becomes one world.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    #[serde(default)]
    pub title: String,
    pub body: String,
    #[serde(default)]
    pub source: Option<String>,
    #[serde(default)]
    pub date: Option<String>,
    /// Assigned at ingestion when absent.
    #[serde(default)]
    pub world_id: Option<String>,
}

impl Document {
    pub fn text(&self) -> String {
        if self.title.trim().is_empty() {
            self.body.clone()
        } else {
            format!("{}\n\n{}", self.title.trim(), self.body)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariablePayload {
    pub name: String,
    pub description: String,
    #[serde(rename = "type")]
    pub var_type: String,
    pub values: String,
    pub causal_effect: Option<String>,
    pub supporting_text_snippets: Option<Vec<String>>,
    pub current_value: Option<String>,
    pub contextual_information: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationPayload {
    pub cause: String,
    pub effect: String,
    pub description: String,
    pub contextual_information: Option<String>,
    #[serde(rename = "type")]
    pub rel_type: Option<String>,
    pub strength: Option<String>,
    pub confidence: Option<String>,
    pub function: Option<String>,
}

/// Variables and relationships produced by one extraction run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphPayload {
    pub nodes: Vec<VariablePayload>,
    pub edges: Vec<RelationPayload>,
}

/// Text form of a loosely typed literal: strings verbatim, lists as `[a, b]`.
fn text_of(v: &Json) -> Option<String> {
    match v {
        Json::Null => None,
        Json::String(s) => Some(s.clone()),
        Json::Array(items) => Some(format!("[{}]", items.iter().filter_map(text_of).collect::<Vec<_>>().join(", "))),
        Json::Bool(b) => Some(if *b { "True" } else { "False" }.to_string()),
        other => Some(other.to_string()),
    }
}

fn field(obj: &serde_json::Map<String, Json>, key: &str, what: &str) -> Result<String, ExtractionError> {
    match obj.get(key).and_then(text_of) {
        Some(s) if !s.trim().is_empty() => Ok(s),
        _ => Err(ExtractionError::SchemaViolation(format!("{what} is missing a non-empty `{key}`"))),
    }
}

fn optional(obj: &serde_json::Map<String, Json>, key: &str) -> Option<String> {
    obj.get(key).and_then(text_of).filter(|s| !s.trim().is_empty())
}

impl VariablePayload {
    pub fn from_json(v: &Json) -> Result<Self, ExtractionError> {
        let obj = v.as_object().ok_or_else(|| ExtractionError::SchemaViolation("a variable is not a dict".into()))?;
        let name = field(obj, "name", "a variable")?;
        let what = format!("variable `{name}`");
        let snippets = match obj.get("supporting_text_snippets") {
            None | Some(Json::Null) => None,
            Some(Json::Array(xs)) => Some(xs.iter().filter_map(text_of).collect()),
            Some(Json::String(s)) => Some(vec![s.clone()]),
            Some(_) => return Err(ExtractionError::SchemaViolation(format!("{what} has non-list `supporting_text_snippets`"))),
        };
        Ok(Self {
            description: field(obj, "description", &what)?,
            var_type: field(obj, "type", &what)?,
            values: obj.get("values").and_then(text_of).unwrap_or_default(),
            causal_effect: optional(obj, "causal_effect"),
            supporting_text_snippets: snippets,
            current_value: optional(obj, "current_value"),
            contextual_information: optional(obj, "contextual_information"),
            name,
        })
    }

    pub fn to_variable(&self) -> CausalVariable {
        CausalVariable::new(self.name.trim(), self.description.clone(), VarType::parse(&self.var_type), self.values.clone())
    }

    fn assignment(&self, doc: Option<&str>) -> Option<WorldAssignment> {
        let value = self.current_value.as_deref()?.trim();
        if value.is_empty() {
            return None;
        }
        Some(WorldAssignment {
            current_value: value.to_string(),
            contextual_information: self.contextual_information.clone().unwrap_or_default(),
            supporting_text_snippets: self.supporting_text_snippets.clone().unwrap_or_default(),
            causal_effect: self.causal_effect.clone(),
            source_doc: doc.map(str::to_string),
        })
    }
}

impl RelationPayload {
    pub fn from_json(v: &Json) -> Result<Self, ExtractionError> {
        let obj = v.as_object().ok_or_else(|| ExtractionError::SchemaViolation("a relationship is not a dict".into()))?;
        let cause = field(obj, "cause", "a relationship")?;
        let effect = field(obj, "effect", "a relationship")?;
        Ok(Self {
            description: obj.get("description").and_then(text_of).unwrap_or_default(),
            contextual_information: optional(obj, "contextual_information"),
            rel_type: optional(obj, "type"),
            strength: optional(obj, "strength"),
            confidence: optional(obj, "confidence"),
            function: optional(obj, "function"),
            cause,
            effect,
        })
    }
}

impl GraphPayload {
    /// Builds a payload from the literal lists an agent assigned.
    pub fn from_literals(variables: &[Json], relationships: &[Json]) -> Result<Self, ExtractionError> {
        let payload = Self {
            nodes: variables.iter().map(VariablePayload::from_json).collect::<Result<_, _>>()?,
            edges: relationships.iter().map(RelationPayload::from_json).collect::<Result<_, _>>()?,
        };
        Ok(payload)
    }

    /// Checks names, types, and that every edge endpoint is a payload variable
    /// or an existing graph node.
    pub fn validate(&self, graph: &WorldGraph) -> Result<(), ExtractionError> {
        let mut seen = BTreeSet::new();
        for n in &self.nodes {
            let slug = slugify(&n.name);
            if slug.is_empty() {
                return Err(ExtractionError::SchemaViolation(format!("`{}` has no usable identifier", n.name)));
            }
            if !seen.insert(slug) {
                return Err(ExtractionError::SchemaViolation(format!("variable `{}` is listed twice", n.name)));
            }
            if n.description.trim().is_empty() || n.var_type.trim().is_empty() {
                return Err(ExtractionError::SchemaViolation(format!("variable `{}` lacks a description or type", n.name)));
            }
        }
        for e in &self.edges {
            for end in [&e.cause, &e.effect] {
                let slug = slugify(end);
                if !seen.contains(&slug) && !graph.contains(&slug) {
                    return Err(ExtractionError::SchemaViolation(format!("relationship endpoint `{end}` is not a known variable")));
                }
            }
            if slugify(&e.cause) == slugify(&e.effect) {
                return Err(ExtractionError::SchemaViolation(format!("relationship `{}` points to itself", e.cause)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeConfig {
    /// Minimum cosine for a candidate to be merged into an existing node.
    pub match_threshold: f64,
    pub k: usize,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self { match_threshold: 0.85, k: 3 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MergeReport {
    pub new_nodes: usize,
    pub matched_nodes: usize,
    pub new_edges: usize,
    pub skipped_edges: usize,
    /// Payload variable name → graph node id.
    pub resolved: BTreeMap<String, String>,
}

/// Merges a schema-valid payload into `graph` as world `world_id`.
///
/// A candidate whose best retrieval hit scores at least the threshold (or
/// whose slug already exists) is merged into that node; otherwise it becomes
/// a new node and is indexed. Existing edges are kept untouched.
pub fn merge_payload(
    graph: &mut WorldGraph,
    payload: &GraphPayload,
    world_id: &str,
    index: &mut VectorIndex,
    embedder: &dyn EmbeddingBackend,
    config: &MergeConfig,
) -> Result<MergeReport, ExtractionError> {
    payload.validate(graph)?;
    graph.register_world(world_id, WorldInfo::default());
    let source_doc = graph.worlds().get(world_id).and_then(|w| w.doc_id.clone());
    let mut report = MergeReport::default();
    for candidate in &payload.nodes {
        let fresh = candidate.to_variable();
        let hit = if index.is_empty() {
            None
        } else {
            index
                .top_k(embedder, &serialize_node(&fresh), config.k.max(1))?
                .into_iter()
                .find(|(id, score)| *score >= config.match_threshold && graph.contains(id))
                .map(|(id, _)| id)
        };
        let existing = hit.or_else(|| graph.contains(&fresh.id).then(|| fresh.id.clone()));
        let assignment = candidate.assignment(source_doc.as_deref());
        let id = match existing {
            Some(id) => {
                report.matched_nodes += 1;
                if let Some(a) = assignment {
                    let mut var = graph.node(&id).expect("matched node exists").clone();
                    var.worlds = [(world_id.to_string(), a)].into();
                    graph.upsert_variable(var)?;
                }
                id
            }
            None => {
                report.new_nodes += 1;
                let mut var = fresh;
                if let Some(a) = assignment {
                    var.worlds.insert(world_id.to_string(), a);
                }
                let id = graph.upsert_variable(var)?;
                index.index_node(embedder, graph.node(&id).expect("just inserted"))?;
                id
            }
        };
        report.resolved.insert(candidate.name.clone(), id);
    }
    let resolve = |name: &str| -> String {
        report
            .resolved
            .iter()
            .find(|(k, _)| slugify(k) == slugify(name))
            .map(|(_, v)| v.clone())
            .unwrap_or_else(|| slugify(name))
    };
    let mut new_edges = 0;
    let mut skipped = 0;
    for e in &payload.edges {
        let (cause, effect) = (resolve(&e.cause), resolve(&e.effect));
        if cause == effect {
            // both endpoints were merged into one node
            skipped += 1;
            continue;
        }
        let mut rel = CausalRelation::new(cause, effect, e.description.clone());
        rel.contextual_information = e.contextual_information.clone();
        if let Some(t) = &e.rel_type {
            rel.rel_type = t.clone();
        }
        rel.strength = e.strength.clone();
        rel.confidence = e.confidence.clone();
        rel.mechanism = e.function.clone();
        if graph.upsert_relation(rel)? {
            new_edges += 1;
        } else {
            skipped += 1;
        }
    }
    report.new_edges = new_edges;
    report.skipped_edges = skipped;
    Ok(report)
}
