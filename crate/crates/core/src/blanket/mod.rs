//! Causal blankets, K-matching across worlds, and query dataset generation.
//!
//! A set `B` is treated as a causal blanket of `T` when `B ⊆ anc(T)`,
//! `T ∉ B`, and every directed path that starts at a root ancestor of `T` and
//! ends in `T` passes through `B`, with no directed cycle left in the part of
//! the ancestor region that `B` does not cut off. Under deterministic
//! mechanisms this makes `T` a function of `B`.

mod dataset;
mod matching;
mod query;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world_graph::{GraphError, WorldGraph};

pub use dataset::{generate_dataset, DatasetConfig, DatasetOutcome};
pub use matching::{k_match, MatchProposal};
pub(crate) use query::build_query_graph;
pub use query::{counterfactual_query, observation_query, Query, QueryEdge, QueryGraph, QueryKind, QueryNode, Role};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BlanketError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("unknown world `{0}`")]
    UnknownWorld(String),
    #[error("no blanket for `{target}` within the available nodes; uncovered roots: {missing_roots:?}")]
    NotFound { target: String, missing_roots: Vec<String> },
    #[error("the ancestor region of `{0}` is cyclic")]
    CyclicQueryRegion(String),
    #[error("target `{target}` is not instantiated in world `{world}`")]
    TargetNotInstantiated { target: String, world: String },
    #[error("the two worlds share no matching observation")]
    NoSharedObservations,
    #[error("no K-matching blanket found for `{0}`")]
    NoBlanketFound(String),
}

impl From<GraphError> for BlanketError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::UnknownNode(n) | GraphError::UnknownEndpoint(n) => BlanketError::UnknownNode(n),
            GraphError::UnknownWorld(w) => BlanketError::UnknownWorld(w),
            GraphError::CyclicQueryRegion(t) => BlanketError::CyclicQueryRegion(t),
            other => BlanketError::UnknownNode(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Blanket {
    pub target: String,
    pub members: BTreeSet<String>,
    /// Structure fingerprint of the graph the blanket was computed on.
    pub graph_ref: String,
}

/// Outcome of a backward search from a target that stops at available nodes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub(crate) struct Frontier {
    /// Available nodes where the search stopped.
    pub members: BTreeSet<String>,
    /// Unavailable nodes that were expanded through to their parents.
    pub expanded: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum FrontierError {
    /// Roots reached without passing an available node.
    Missing(BTreeSet<String>),
    /// The expanded region (with the target) contains a directed cycle.
    Cyclic,
}

/// Backward breadth-first search from `target`. A reached node is admitted as
/// a member when `available` holds for it and expanded to its parents
/// otherwise. Fails when an unavailable root is reached or the expanded region
/// is cyclic. `parents` defines the graph, so cut views work too.
pub(crate) fn frontier_search<P, I>(target: &str, available: impl Fn(&str) -> bool, parents: P) -> Result<Frontier, FrontierError>
where
    P: Fn(&str) -> I,
    I: IntoIterator<Item = String>,
{
    let mut out = Frontier::default();
    let mut missing = BTreeSet::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut start: Vec<String> = parents(target).into_iter().collect();
    start.sort();
    let mut queue: VecDeque<String> = start.into();
    let mut cyclic = false;
    while let Some(n) = queue.pop_front() {
        if !seen.insert(n.clone()) {
            continue;
        }
        if n == target {
            cyclic = true;
            continue;
        }
        if available(&n) {
            out.members.insert(n);
            continue;
        }
        let mut ps: Vec<String> = parents(&n).into_iter().collect();
        if ps.is_empty() {
            missing.insert(n);
        } else {
            ps.sort();
            queue.extend(ps);
            out.expanded.insert(n);
        }
    }
    if !missing.is_empty() {
        return Err(FrontierError::Missing(missing));
    }
    if cyclic || has_cycle(&out.expanded, &parents) {
        return Err(FrontierError::Cyclic);
    }
    Ok(out)
}

fn has_cycle<P, I>(region: &BTreeSet<String>, parents: &P) -> bool
where
    P: Fn(&str) -> I,
    I: IntoIterator<Item = String>,
{
    let mut indeg: BTreeMap<&str, usize> = region.iter().map(|n| (n.as_str(), 0)).collect();
    let mut kids: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    for n in region {
        for p in parents(n) {
            if region.contains(&p) {
                *indeg.get_mut(n.as_str()).expect("in region") += 1;
                kids.entry(p).or_default().push(n);
            }
        }
    }
    let mut ready: Vec<&str> = indeg.iter().filter(|(_, d)| **d == 0).map(|(n, _)| *n).collect();
    let mut done = 0;
    while let Some(n) = ready.pop() {
        done += 1;
        for k in kids.get(n).into_iter().flatten() {
            let d = indeg.get_mut(k).expect("in region");
            *d -= 1;
            if *d == 0 {
                ready.push(k);
            }
        }
    }
    done != region.len()
}

fn graph_parents(graph: &WorldGraph) -> impl Fn(&str) -> Vec<String> + '_ {
    move |n| graph.parents(n).iter().cloned().collect()
}

/// Drops members (smallest id first) whose removal keeps the set a blanket.
/// Members in `keep` are never dropped.
pub(crate) fn prune<P, I>(target: &str, members: &BTreeSet<String>, keep: &BTreeSet<String>, parents: &P) -> BTreeSet<String>
where
    P: Fn(&str) -> I,
    I: IntoIterator<Item = String>,
{
    let mut current = members.clone();
    for m in members {
        if keep.contains(m) {
            continue;
        }
        current.remove(m);
        if frontier_search(target, |n| current.contains(n), parents).is_err() {
            current.insert(m.clone());
        }
    }
    current
}

fn require(graph: &WorldGraph, id: &str) -> Result<(), BlanketError> {
    if graph.contains(id) {
        Ok(())
    } else {
        Err(BlanketError::UnknownNode(id.to_string()))
    }
}

/// Structural blanket test (see the module docs).
pub fn is_causal_blanket(graph: &WorldGraph, members: &BTreeSet<String>, target: &str) -> Result<bool, BlanketError> {
    require(graph, target)?;
    for m in members {
        require(graph, m)?;
    }
    if members.contains(target) {
        return Ok(false);
    }
    let anc = graph.ancestors(target)?;
    if !members.is_subset(&anc) {
        return Ok(false);
    }
    Ok(frontier_search(target, |n| members.contains(n), graph_parents(graph)).is_ok())
}

/// Nearest blanket of `target` drawn from `available`, reduced to an
/// inclusion-minimal set by dropping members in id order.
pub fn minimal_blanket(graph: &WorldGraph, target: &str, available: &BTreeSet<String>) -> Result<Blanket, BlanketError> {
    require(graph, target)?;
    let parents = graph_parents(graph);
    let frontier = frontier_search(target, |n| available.contains(n), &parents).map_err(|e| match e {
        FrontierError::Missing(roots) => BlanketError::NotFound {
            target: target.to_string(),
            missing_roots: roots.into_iter().collect(),
        },
        FrontierError::Cyclic => BlanketError::CyclicQueryRegion(target.to_string()),
    })?;
    let members = prune(target, &frontier.members, &BTreeSet::new(), &parents);
    Ok(Blanket { target: target.to_string(), members, graph_ref: graph.structure_fingerprint() })
}
