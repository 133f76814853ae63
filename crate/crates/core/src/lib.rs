//! Multi-world causal graph engine.
//!
//! [`world_graph`] stores causal variables whose values are recorded per
//! world (one world per source document), filled by the LLM-driven
//! [`extraction`] pipeline and searched through [`retrieval`]. [`blanket`]
//! derives counterfactual queries whose answers are pinned down by the graph,
//! and [`inference`] answers them one causal step at a time through a
//! pluggable reasoner. The finite structural causal model engine in [`scm`]
//! supplies exact ground truth for tests and the deterministic reasoner;
//! [`evaluation`] scores result files.

pub mod blanket;
pub mod evaluation;
pub mod extraction;
pub mod fixtures;
mod http;
pub mod inference;
pub mod llm;
pub mod prompts;
pub mod pyliteral;
pub mod retrieval;
pub mod scm;
pub mod values;
pub mod world_graph;

pub use blanket::{generate_dataset, is_causal_blanket, k_match, minimal_blanket, Blanket, BlanketError, DatasetConfig, MatchProposal, Query, QueryKind};
pub use inference::{execute, plan_inference, whatif_query, InferenceError, InferencePlan, InferenceResult, Reasoner, WhatIfRequest};
pub use scm::{ScmError, ScmInstance, Value};
pub use world_graph::{CausalRelation, CausalVariable, GraphError, VarType, WorldAssignment, WorldGraph};
