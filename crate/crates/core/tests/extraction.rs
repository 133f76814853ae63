use std::collections::BTreeSet;

use ctg_core::extraction::{ingest, merge_payload, run_extraction, Document, ExtractionConfig, ExtractionError, GraphPayload, MergeConfig};
use ctg_core::llm::{ChatBackend, ChatMessage, Completion, MockChat, Usage};
use ctg_core::retrieval::{serialize_node, HashingEmbedder, TableEmbedder, VectorIndex};
use ctg_core::world_graph::{CausalVariable, VarType, WorldGraph};
use serde_json::json;

const TRANSCRIPT: &str = include_str!("fixtures/air_pollution.jsonl");
const RETRY_TRANSCRIPT: &str = include_str!("fixtures/air_pollution_retry.jsonl");
const DOC: &str = include_str!("fixtures/air_pollution_doc.json");

fn doc() -> Document {
    serde_json::from_str(DOC).unwrap()
}

#[test]
fn replayed_transcript_yields_five_nodes_four_edges() {
    let chat = MockChat::from_jsonl(TRANSCRIPT).unwrap();
    let emb = HashingEmbedder::new(256);
    let t = run_extraction(&doc(), &WorldGraph::new(), &VectorIndex::new(""), &emb, &chat, &ExtractionConfig::default()).unwrap();
    let payload = t.final_payload.as_ref().unwrap();
    let names: BTreeSet<&str> = payload.nodes.iter().map(|n| n.name.as_str()).collect();
    assert_eq!(
        names,
        BTreeSet::from(["Air Pollution", "Industrial Pollution", "Pre-existing Respiratory Conditions", "Respiratory Issues", "Temperature"])
    );
    assert_eq!(payload.edges.len(), 4);
    assert!(payload.edges.iter().any(|e| e.cause == "Air Pollution" && e.effect == "Respiratory Issues"));
    assert_eq!((t.retry_count, t.step_count()), (0, 2));
    // token totals are the exact sum of the scripted usage
    assert_eq!(t.token_counts, Usage { input_tokens: 2150 + 3020, output_tokens: 612 + 388 });

    // the retrieval observation reports the empty database per variable
    assert!(t.steps[0].observation.contains("Query for variable 'Air Pollution': Retrieved nodes:\n<empty>"));
    let requests = chat.requests();
    assert!(requests[0][1].content.contains("Retrieved nodes:\n<empty>\n\nRetrieved edges:\n<empty>"));
    assert!(requests[0][0].content.contains("graph_retriever"));
}

#[test]
fn malformed_replies_are_retried() {
    let chat = MockChat::from_jsonl(RETRY_TRANSCRIPT).unwrap();
    let t = run_extraction(&doc(), &WorldGraph::new(), &VectorIndex::new(""), &HashingEmbedder::new(64), &chat, &ExtractionConfig::default())
        .unwrap();
    assert_eq!(t.retry_count, 2);
    assert_eq!(t.final_payload.unwrap().nodes.len(), 5);
    assert_eq!(chat.calls(), 4);
    // the parse error is fed back to the agent
    assert!(chat.requests()[1].last().unwrap().content.starts_with("Error:"));
    assert_eq!(t.token_counts.input_tokens, 100 + 120 + 2150 + 3020);
}

#[test]
fn retry_budget_is_enforced() {
    let chat = MockChat::from_jsonl(RETRY_TRANSCRIPT).unwrap();
    let cfg = ExtractionConfig { max_retries: 1, ..Default::default() };
    let err = run_extraction(&doc(), &WorldGraph::new(), &VectorIndex::new(""), &HashingEmbedder::new(64), &chat, &cfg).unwrap_err();
    assert!(matches!(err, ExtractionError::MaxRetriesExceeded { retries: 1, .. }));
}

#[test]
fn empty_document_fails_before_any_call() {
    let chat = MockChat::from_jsonl(TRANSCRIPT).unwrap();
    let empty = Document { body: "  ".into(), ..doc() };
    let err = run_extraction(&empty, &WorldGraph::new(), &VectorIndex::new(""), &HashingEmbedder::new(64), &chat, &Default::default());
    assert!(matches!(err, Err(ExtractionError::EmptyDocument(_))));
    assert_eq!(chat.calls(), 0);
}

/// Answers once without consulting the retriever, then follows the script.
struct SkipsRetrieval(MockChat);

impl ChatBackend for SkipsRetrieval {
    fn complete(&self, messages: &[ChatMessage]) -> Result<Completion, ctg_core::llm::ChatError> {
        if messages.len() == 2 {
            let content = "Thought: done\nCode:\n```py\ncausal_variables = [{'name': 'A', 'description': 'a', 'type': 'float', 'values': ''}]\nfinal_answer(G)\n```";
            return Ok(Completion { content: content.into(), usage: Usage::default() });
        }
        self.0.complete(messages)
    }
}

#[test]
fn retrieval_step_is_mandatory() {
    let chat = SkipsRetrieval(MockChat::from_jsonl(TRANSCRIPT).unwrap());
    let t = run_extraction(&doc(), &WorldGraph::new(), &VectorIndex::new(""), &HashingEmbedder::new(64), &chat, &Default::default()).unwrap();
    assert_eq!(t.retry_count, 1);
    assert!(t.steps[0].error.as_deref().unwrap().contains("mandatory"));
}

#[test]
fn ingest_assigns_sequential_worlds_and_replay_is_idempotent() {
    let emb = HashingEmbedder::new(256);
    let mut g = WorldGraph::new();
    let mut index = VectorIndex::new("");
    let mut second = doc();
    second.doc_id = "air-pollution-2".into();
    let chat = MockChat::from_jsonl(&format!("{TRANSCRIPT}{TRANSCRIPT}")).unwrap();
    let records = ingest(&[doc(), second], &mut g, &mut index, &emb, &chat, &ExtractionConfig::default());
    assert_eq!(records.iter().map(|r| r.world_id.as_str()).collect::<Vec<_>>(), ["world_0", "world_1"]);
    assert_eq!(records[0].report.as_ref().unwrap().new_nodes, 5);
    let r2 = records[1].report.as_ref().unwrap();
    assert_eq!((r2.new_nodes, r2.matched_nodes, r2.new_edges, r2.skipped_edges), (0, 5, 0, 4));
    assert_eq!((g.node_count(), g.edge_count()), (5, 4));
    assert_eq!(g.node("air-pollution").unwrap().worlds.len(), 2);
    assert_eq!(g.worlds()["world_1"].order, Some(1));

    // replaying one transcript against the same start graph gives the same structure
    let replay = |_: ()| {
        let mut g = WorldGraph::new();
        let mut idx = VectorIndex::new("");
        let chat = MockChat::from_jsonl(TRANSCRIPT).unwrap();
        ingest(&[doc()], &mut g, &mut idx, &emb, &chat, &ExtractionConfig::default());
        g.structure_fingerprint()
    };
    assert_eq!(replay(()), replay(()));
}

#[test]
fn merge_never_rewrites_invariant_fields_and_stores_explicit_nulls() {
    let mut g = WorldGraph::new();
    g.upsert_variable(CausalVariable::new("Oil Price", "original description", VarType::Float, "USD")).unwrap();
    let incoming = GraphPayload::from_literals(
        &[json!({"name": "Oil Price", "description": "something else", "type": "string", "values": "x", "current_value": "40"})],
        &[],
    )
    .unwrap();
    let emb = HashingEmbedder::new(64);
    let mut index = VectorIndex::new("");
    index.index_graph(&emb, &g).unwrap();
    merge_payload(&mut g, &incoming, "world_0", &mut index, &emb, &MergeConfig::default()).unwrap();
    let n = g.node("oil-price").unwrap();
    assert_eq!((n.description.as_str(), n.var_type.clone(), n.values.as_str()), ("original description", VarType::Float, "USD"));
    let saved: serde_json::Value = serde_json::from_str(&g.to_json_string()).unwrap();
    let world = &saved["nodes"][0]["worlds"]["world_0"];
    assert_eq!(world["current_value"], "40");
    assert!(world.get("causal_effect").is_some_and(|v| v.is_null()));
}

#[test]
fn high_similarity_merges_into_existing_node() {
    // one-hot embedder: the payload's text maps onto the stored node's vector
    let mut g = WorldGraph::new();
    let stored = CausalVariable::new("Crude Oil Prices", "price per barrel", VarType::Float, "USD");
    g.upsert_variable(stored.clone()).unwrap();
    let candidate = CausalVariable::new("Oil Price", "price of oil", VarType::Float, "USD");
    let mut table = TableEmbedder::new("t", 2);
    table.insert(serialize_node(&stored), vec![1.0, 0.0]);
    table.insert(serialize_node(&candidate), vec![0.9, 0.1]);
    let mut index = VectorIndex::new("t");
    index.index_graph(&table, &g).unwrap();
    let payload = GraphPayload::from_literals(
        &[json!({"name": "Oil Price", "description": "price of oil", "type": "float", "values": "USD", "current_value": "63"})],
        &[],
    )
    .unwrap();
    let r = merge_payload(&mut g, &payload, "world_0", &mut index, &table, &MergeConfig::default()).unwrap();
    assert_eq!((r.new_nodes, r.matched_nodes), (0, 1));
    assert_eq!(r.resolved["Oil Price"], "crude-oil-prices");
    assert_eq!(g.node("crude-oil-prices").unwrap().value_in("world_0"), Some("63"));
}
