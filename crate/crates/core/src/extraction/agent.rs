//! The extraction agent loop. Replies are parsed, never executed: the code
//! blocks are scanned for literal variable and relationship lists, retrieval
//! tool calls are answered from the vector index, and `final_answer` ends the
//! run.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use tracing::{debug, info};

use super::{merge_payload, Document, ExtractionError, GraphPayload, MergeConfig, MergeReport};
use crate::llm::{ChatBackend, ChatMessage, Usage};
use crate::prompts::{render, Prompts};
use crate::pyliteral::{calls_function, scan_assignments};
use crate::retrieval::{retrieve_for_document, EmbeddingBackend, RetrieveConfig, VectorIndex};
use crate::world_graph::{WorldGraph, WorldInfo};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    pub max_steps: usize,
    pub max_retries: usize,
    pub retrieval: RetrieveConfig,
    pub tool_name: String,
    pub merge: MergeConfig,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            max_steps: 8,
            max_retries: 5,
            retrieval: RetrieveConfig::default(),
            tool_name: "graph_retriever".into(),
            merge: MergeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentStep {
    pub thought: String,
    pub code: String,
    pub observation: String,
    /// Set when the reply was rejected and retried.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentTranscript {
    pub doc_id: String,
    pub steps: Vec<AgentStep>,
    pub final_payload: Option<GraphPayload>,
    pub retry_count: usize,
    pub token_counts: Usage,
}

impl AgentTranscript {
    /// Accepted steps (rejected replies are counted as retries instead).
    pub fn step_count(&self) -> usize {
        self.steps.iter().filter(|s| s.error.is_none()).count()
    }
}

/// Splits a reply into the thought text and the first fenced code block.
fn split_reply(reply: &str) -> Option<(String, String)> {
    let start = reply.find("```")?;
    let after_fence = &reply[start + 3..];
    let body_start = after_fence.find('\n').map_or(after_fence.len(), |i| i + 1);
    let body = &after_fence[body_start..];
    let end = body.find("```")?;
    let thought = reply[..start].trim().trim_end_matches("Code:").trim().trim_start_matches("Thought:").trim().to_string();
    Some((thought, body[..end].trim_end().to_string()))
}

fn is_list_of_dicts_with(v: &Json, keys: &[&str]) -> bool {
    v.as_array()
        .is_some_and(|xs| !xs.is_empty() && xs.iter().all(|x| x.as_object().is_some_and(|o| keys.iter().all(|k| o.contains_key(*k)))))
}

#[derive(Default)]
struct AgentState {
    variables: BTreeMap<String, Json>,
    order: Vec<String>,
    relationships: Vec<Json>,
    retrieved: bool,
}

impl AgentState {
    /// Folds the literal lists of one code block into the state.
    fn absorb(&mut self, code: &str) -> Result<(), String> {
        for a in scan_assignments(code) {
            match a.value {
                Some(Err(e)) => return Err(format!("line {}: could not read the literal assigned to `{}`: {e}", a.line, a.name)),
                Some(Ok(v)) if a.path.is_empty() && is_list_of_dicts_with(&v, &["cause", "effect"]) => {
                    self.relationships = v.as_array().expect("checked").clone();
                }
                Some(Ok(v)) if a.path.is_empty() && is_list_of_dicts_with(&v, &["name"]) => {
                    for item in v.as_array().expect("checked") {
                        let name = item["name"].as_str().unwrap_or_default().to_string();
                        if !self.variables.contains_key(&name) {
                            self.order.push(name.clone());
                        }
                        self.variables.insert(name, item.clone());
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn payload(&self) -> Result<GraphPayload, ExtractionError> {
        let vars: Vec<Json> = self.order.iter().map(|n| self.variables[n].clone()).collect();
        GraphPayload::from_literals(&vars, &self.relationships)
    }
}

/// Runs the agent on one document until it calls `final_answer` with a
/// schema-valid payload. Malformed replies are answered with the error and
/// retried, up to `max_retries` in total.
pub fn run_extraction(
    doc: &Document,
    graph: &WorldGraph,
    index: &VectorIndex,
    embedder: &dyn EmbeddingBackend,
    chat: &dyn ChatBackend,
    config: &ExtractionConfig,
) -> Result<AgentTranscript, ExtractionError> {
    if doc.body.trim().is_empty() {
        return Err(ExtractionError::EmptyDocument(doc.doc_id.clone()));
    }
    let prompts = Prompts::bundled();
    let context = retrieve_for_document(graph, index, embedder, &doc.text(), &config.retrieval)?;
    let user = render(&prompts.extraction_user, &[("document", doc.text().trim()), ("retrieved", context.render().trim_end())]);
    let mut messages = vec![ChatMessage::system(prompts.extraction_system(&config.tool_name)), ChatMessage::user(user)];
    let mut transcript =
        AgentTranscript { doc_id: doc.doc_id.clone(), steps: Vec::new(), final_payload: None, retry_count: 0, token_counts: Usage::default() };
    let mut state = AgentState::default();

    while transcript.step_count() < config.max_steps {
        let reply = chat.complete(&messages)?;
        transcript.token_counts += reply.usage;
        messages.push(ChatMessage::assistant(reply.content.clone()));
        let outcome = step(&reply.content, &mut state, graph, index, embedder, config);
        let (thought, code) = split_reply(&reply.content).unwrap_or_else(|| (reply.content.trim().to_string(), String::new()));
        match outcome {
            Ok(StepOutcome::Continue(observation)) => {
                messages.push(ChatMessage::user(format!("Observation:\n{observation}")));
                transcript.steps.push(AgentStep { thought, code, observation, error: None, usage: reply.usage });
            }
            Ok(StepOutcome::Final(payload)) => {
                transcript.steps.push(AgentStep { thought, code, observation: "final answer accepted".into(), error: None, usage: reply.usage });
                info!(doc = %doc.doc_id, nodes = payload.nodes.len(), edges = payload.edges.len(), "extraction finished");
                transcript.final_payload = Some(payload);
                return Ok(transcript);
            }
            Err(error) => {
                debug!(doc = %doc.doc_id, %error, "rejected agent reply");
                transcript.retry_count += 1;
                transcript.steps.push(AgentStep {
                    thought,
                    code,
                    observation: String::new(),
                    error: Some(error.clone()),
                    usage: reply.usage,
                });
                if transcript.retry_count > config.max_retries {
                    return Err(ExtractionError::MaxRetriesExceeded { retries: config.max_retries, last: error });
                }
                messages.push(ChatMessage::user(format!("Error:\n{error}\nFix the code and try again.")));
            }
        }
    }
    Err(ExtractionError::MaxStepsExceeded(config.max_steps))
}

enum StepOutcome {
    Continue(String),
    Final(GraphPayload),
}

fn step(
    reply: &str,
    state: &mut AgentState,
    graph: &WorldGraph,
    index: &VectorIndex,
    embedder: &dyn EmbeddingBackend,
    config: &ExtractionConfig,
) -> Result<StepOutcome, String> {
    let (_, code) = split_reply(reply).ok_or("no fenced code block found in the reply")?;
    // absorb into a scratch copy so a rejected reply leaves no trace
    let mut next = AgentState {
        variables: state.variables.clone(),
        order: state.order.clone(),
        relationships: state.relationships.clone(),
        retrieved: state.retrieved,
    };
    next.absorb(&code)?;
    if calls_function(&code, "final_answer") {
        if !next.retrieved {
            return Err(format!("the `{}` lookup is mandatory before the final answer", config.tool_name));
        }
        let payload = next.payload().map_err(|e| e.to_string())?;
        payload.validate(graph).map_err(|e| e.to_string())?;
        *state = next;
        return Ok(StepOutcome::Final(payload));
    }
    let mut observation = String::new();
    if calls_function(&code, &config.tool_name) {
        next.retrieved = true;
        for name in &next.order {
            let v = &next.variables[name];
            let query = format!("{name}: {}", v["description"].as_str().unwrap_or_default());
            let ctx = retrieve_for_document(graph, index, embedder, &query, &config.retrieval).map_err(|e| e.to_string())?;
            observation.push_str(&format!("Query for variable '{name}': {}\n", ctx.render()));
        }
    }
    if observation.is_empty() {
        observation = format!("{} variables and {} relationships recorded", next.order.len(), next.relationships.len());
    }
    *state = next;
    Ok(StepOutcome::Continue(observation))
}

/// Outcome of ingesting one document.
#[derive(Debug, Serialize)]
pub struct IngestRecord {
    pub doc_id: String,
    pub world_id: String,
    pub order: u64,
    pub transcript: Option<AgentTranscript>,
    pub report: Option<MergeReport>,
    pub error: Option<String>,
}

/// Ingests documents strictly in the given order, one world each. A failed
/// document is recorded and skipped; its world id is not reused.
pub fn ingest(
    docs: &[Document],
    graph: &mut WorldGraph,
    index: &mut VectorIndex,
    embedder: &dyn EmbeddingBackend,
    chat: &dyn ChatBackend,
    config: &ExtractionConfig,
) -> Vec<IngestRecord> {
    let mut records = Vec::new();
    for doc in docs {
        let world_id = doc.world_id.clone().unwrap_or_else(|| graph.next_world_id());
        let order = graph.worlds().values().filter_map(|w| w.order).max().map_or(0, |m| m + 1);
        let info = WorldInfo {
            source: doc.source.clone(),
            doc_id: Some(doc.doc_id.clone()),
            title: (!doc.title.is_empty()).then(|| doc.title.clone()),
            date: doc.date.clone(),
            order: Some(order),
        };
        let mut record = IngestRecord { doc_id: doc.doc_id.clone(), world_id: world_id.clone(), order, transcript: None, report: None, error: None };
        match run_extraction(doc, graph, index, embedder, chat, config) {
            Ok(transcript) => {
                graph.register_world(world_id.clone(), info);
                let payload = transcript.final_payload.clone().expect("successful run has a payload");
                match merge_payload(graph, &payload, &world_id, index, embedder, &config.merge) {
                    Ok(r) => record.report = Some(r),
                    Err(e) => record.error = Some(e.to_string()),
                }
                record.transcript = Some(transcript);
            }
            Err(e) => {
                // keep the id reserved so later documents keep their numbering
                graph.register_world(world_id.clone(), info);
                record.error = Some(e.to_string());
            }
        }
        records.push(record);
    }
    records
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reply_splitting() {
        let (t, c) = split_reply("Thought: look\nCode:\n```py\nx = 1\n```<end_code>").unwrap();
        assert_eq!((t.as_str(), c.as_str()), ("look", "x = 1"));
        assert!(split_reply("no code here").is_none());
    }
}
