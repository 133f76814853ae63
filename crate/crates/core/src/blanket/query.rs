//! Observational and counterfactual query records.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{frontier_search, graph_parents, BlanketError, MatchProposal};
use crate::evaluation::{coerce, AnswerType};
use crate::world_graph::{count_directed_paths, VarType, WorldGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryKind {
    Observation,
    Counterfactual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Observed,
    Intervened,
    Latent,
    Target,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryNode {
    pub id: String,
    pub name: String,
    pub description: String,
    #[serde(rename = "type")]
    pub var_type: VarType,
    pub values: String,
    pub role: Role,
    /// Observed or intervened value; absent for latent nodes and the target.
    pub value: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryEdge {
    pub cause: String,
    pub effect: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct QueryGraph {
    pub nodes: Vec<QueryNode>,
    pub edges: Vec<QueryEdge>,
}

impl QueryGraph {
    pub fn node(&self, id: &str) -> Option<&QueryNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn ids(&self) -> BTreeSet<String> {
        self.nodes.iter().map(|n| n.id.clone()).collect()
    }

    pub fn parents(&self, id: &str) -> Vec<String> {
        self.edges.iter().filter(|e| e.effect == id).map(|e| e.cause.clone()).collect()
    }

    pub fn children(&self, id: &str) -> Vec<String> {
        self.edges.iter().filter(|e| e.cause == id).map(|e| e.effect.clone()).collect()
    }

    pub fn edge(&self, cause: &str, effect: &str) -> Option<&QueryEdge> {
        self.edges.iter().find(|e| e.cause == cause && e.effect == effect)
    }

    /// Copy of the graph as a [`WorldGraph`] without world data.
    pub fn to_world_graph(&self) -> WorldGraph {
        let mut g = WorldGraph::new();
        for n in &self.nodes {
            let mut v = crate::world_graph::CausalVariable::new(n.name.clone(), n.description.clone(), n.var_type.clone(), n.values.clone());
            v.id = n.id.clone();
            g.upsert_variable(v).expect("query node is valid");
        }
        for e in &self.edges {
            g.upsert_relation(crate::world_graph::CausalRelation::new(e.cause.clone(), e.effect.clone(), e.description.clone()))
                .expect("query edge endpoints exist");
        }
        g
    }
}

/// One observational or counterfactual task with its ground truth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub kind: QueryKind,
    pub target: String,
    pub query_graph: QueryGraph,
    pub factual_world: String,
    pub counterfactual_world: Option<String>,
    pub interventions: BTreeMap<String, String>,
    pub observations: BTreeMap<String, String>,
    /// Matched observations shared by both worlds (counterfactual queries).
    #[serde(default)]
    pub matched: BTreeMap<String, String>,
    pub ground_truth: String,
    pub ground_truth_type: AnswerType,
    pub k: usize,
    /// Directed paths from the blanket into the target.
    pub path_count: u64,
}

/// Nodes of the backward search from `target` stopped at `stop`, including
/// `target` and the reached stop nodes.
fn region_to(graph: &WorldGraph, target: &str, stop: &BTreeSet<String>) -> Result<BTreeSet<String>, BlanketError> {
    let f = frontier_search(target, |n| stop.contains(n), graph_parents(graph)).map_err(|e| match e {
        super::FrontierError::Missing(roots) => BlanketError::NotFound {
            target: target.to_string(),
            missing_roots: roots.into_iter().collect(),
        },
        super::FrontierError::Cyclic => BlanketError::CyclicQueryRegion(target.to_string()),
    })?;
    let mut out: BTreeSet<String> = f.members.into_iter().chain(f.expanded).collect();
    out.insert(target.to_string());
    Ok(out)
}

pub(crate) fn build_query_graph(
    graph: &WorldGraph,
    region: &BTreeSet<String>,
    target: &str,
    observations: &BTreeMap<String, String>,
    interventions: &BTreeMap<String, String>,
) -> QueryGraph {
    let nodes = region
        .iter()
        .filter_map(|id| graph.node(id))
        .map(|n| {
            let (role, value) = if n.id == target {
                (Role::Target, None)
            } else if let Some(v) = interventions.get(&n.id) {
                (Role::Intervened, Some(v.clone()))
            } else if let Some(v) = observations.get(&n.id) {
                (Role::Observed, Some(v.clone()))
            } else {
                (Role::Latent, None)
            };
            QueryNode {
                id: n.id.clone(),
                name: n.name.clone(),
                description: n.description.clone(),
                var_type: n.var_type.clone(),
                values: n.values.clone(),
                role,
                value,
            }
        })
        .collect();
    let edges = graph
        .edges()
        .filter(|e| region.contains(&e.cause) && region.contains(&e.effect))
        .map(|e| QueryEdge { cause: e.cause.clone(), effect: e.effect.clone(), description: e.description.clone() })
        .collect();
    QueryGraph { nodes, edges }
}

/// `P(target | blanket)` in one world. Every region node instantiated in the
/// world (other than the target) is observed.
pub fn observation_query(
    graph: &WorldGraph,
    world: &str,
    target: &str,
    blanket: &BTreeSet<String>,
    path_cap: u64,
) -> Result<Query, BlanketError> {
    let values = graph.world_values(world);
    let ground_truth = values
        .get(target)
        .ok_or_else(|| BlanketError::TargetNotInstantiated { target: target.to_string(), world: world.to_string() })?
        .to_string();
    let region = region_to(graph, target, blanket)?;
    let observations: BTreeMap<String, String> = region
        .iter()
        .filter(|id| *id != target)
        .filter_map(|id| values.get(id.as_str()).map(|v| (id.clone(), v.to_string())))
        .collect();
    Ok(Query {
        id: String::new(),
        kind: QueryKind::Observation,
        target: target.to_string(),
        query_graph: build_query_graph(graph, &region, target, &observations, &BTreeMap::new()),
        factual_world: world.to_string(),
        counterfactual_world: None,
        interventions: BTreeMap::new(),
        observations,
        matched: BTreeMap::new(),
        ground_truth_type: coerce(&ground_truth).answer_type,
        ground_truth,
        k: 0,
        path_count: count_directed_paths(graph, blanket, target, path_cap)?,
    })
}

/// `P(T | do(B_c \ O_s), O_o \ O_s)` for one K-matching. The region is the
/// target's ancestry down to the counterfactual blanket plus each matched
/// node's ancestry down to its abduction support. Factual values of region
/// nodes (target and intervened nodes excepted) are observations.
pub fn counterfactual_query(graph: &WorldGraph, proposal: &MatchProposal, path_cap: u64) -> Result<Query, BlanketError> {
    let target = proposal.target.as_str();
    let cv = graph.world_values(&proposal.counterfactual_world);
    let fv = graph.world_values(&proposal.factual_world);
    let ground_truth = cv
        .get(target)
        .ok_or_else(|| BlanketError::TargetNotInstantiated {
            target: target.to_string(),
            world: proposal.counterfactual_world.clone(),
        })?
        .to_string();
    let mut region = region_to(graph, target, &proposal.blanket_c)?;
    for m in proposal.matched_observations.keys() {
        region.extend(region_to(graph, m, &proposal.abduction_support)?);
    }
    let observations: BTreeMap<String, String> = region
        .iter()
        .filter(|id| *id != target && !proposal.intervened.contains_key(*id))
        .filter_map(|id| fv.get(id.as_str()).map(|v| (id.clone(), v.to_string())))
        .collect();
    Ok(Query {
        id: String::new(),
        kind: QueryKind::Counterfactual,
        target: target.to_string(),
        query_graph: build_query_graph(graph, &region, target, &observations, &proposal.intervened),
        factual_world: proposal.factual_world.clone(),
        counterfactual_world: Some(proposal.counterfactual_world.clone()),
        interventions: proposal.intervened.clone(),
        observations,
        matched: proposal.matched_observations.clone(),
        ground_truth_type: coerce(&ground_truth).answer_type,
        ground_truth,
        k: proposal.intervened.len(),
        path_count: count_directed_paths(graph, &proposal.blanket_c, target, path_cap)?,
    })
}
