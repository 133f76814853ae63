//! Step-wise inference over a query graph.
//!
//! A plan works on two layers. The factual layer holds the values of the
//! observed world; missing ones are derived from known parents or, failing
//! that, abduced from known children. When the query intervenes, a second
//! counterfactual layer is built on the graph with the edges into intervened
//! nodes cut: intervened nodes are pinned, roots and matched nodes carry their
//! factual value across, and everything else on the way to the target is
//! predicted from its cut-graph parents. Each step only ever sees one node and
//! its direct neighbours.

mod execute;
mod reasoner;
mod whatif;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blanket::{BlanketError, Query, QueryGraph};

pub use execute::{execute, ExecuteConfig, InferenceResult, InferenceTrace, StepTrace};
pub use reasoner::{
    ChatReasoner, DeterministicReasoner, Reasoner, ReasonerError, RecordedRequest, RecordingReasoner, StepOutput, StepRequest,
    VariableView,
};
pub use whatif::{whatif_query, WhatIfRequest};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum InferenceError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("unknown world `{0}`")]
    UnknownWorld(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("the query region of `{0}` is cyclic")]
    CyclicQueryRegion(String),
    #[error("no derivation reaches `{0}` from the observed values")]
    UnresolvableNode(String),
    #[error("step for `{node}` failed: {source}")]
    Step { node: String, source: ReasonerError },
    #[error("step for `{node}` gave no usable answer after {retries} retries: {last}")]
    MaxRetriesExceeded { node: String, retries: usize, last: String },
    #[error(transparent)]
    Blanket(#[from] BlanketError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Factual,
    Counterfactual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepDirection {
    /// From the node's parents.
    Causal,
    /// From the node's children.
    Anticausal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub node: String,
    pub layer: Layer,
    pub direction: StepDirection,
    /// Parents (causal) or children (anticausal) whose values the step reads.
    pub inputs: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Disposition {
    Observed,
    Intervened,
    Abduced,
    Transferred,
    Predicted,
    /// Present in the query graph but not needed for the answer.
    Unused,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferencePlan {
    pub target: String,
    pub counterfactual: bool,
    /// Factual-layer steps of a counterfactual plan, in execution order.
    pub abduction_steps: Vec<PlanStep>,
    /// Nodes whose factual value seeds the counterfactual layer.
    pub transfer: Vec<String>,
    /// Edges into intervened nodes.
    pub cut_edges: Vec<(String, String)>,
    /// Counterfactual-layer steps, or all steps of a plan without interventions.
    pub prediction_steps: Vec<PlanStep>,
    pub dispositions: BTreeMap<String, BTreeSet<Disposition>>,
}

impl InferencePlan {
    pub fn steps(&self) -> impl Iterator<Item = &PlanStep> {
        self.abduction_steps.iter().chain(&self.prediction_steps)
    }

    pub fn step_count(&self) -> usize {
        self.abduction_steps.len() + self.prediction_steps.len()
    }
}

fn sorted(mut v: Vec<String>) -> Vec<String> {
    v.sort();
    v.dedup();
    v
}

/// Kahn order of `nodes` under `parents`, smallest id first; `None` on a cycle.
fn topo(nodes: &BTreeSet<String>, parents: &dyn Fn(&str) -> Vec<String>) -> Option<Vec<String>> {
    let mut indegree: BTreeMap<&str, usize> = nodes.iter().map(|n| (n.as_str(), 0)).collect();
    let mut children: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for n in nodes {
        for p in parents(n).into_iter().filter(|p| nodes.contains(p)) {
            *indegree.get_mut(n.as_str()).expect("member") += 1;
            children.entry(p).or_default().push(n.clone());
        }
    }
    let mut ready: BTreeSet<String> = indegree.iter().filter(|(_, d)| **d == 0).map(|(n, _)| n.to_string()).collect();
    let mut order = Vec::new();
    while let Some(n) = ready.pop_first() {
        for c in children.get(&n).into_iter().flatten() {
            let d = indegree.get_mut(c.as_str()).expect("member");
            *d -= 1;
            if *d == 0 {
                ready.insert(c.clone());
            }
        }
        order.push(n);
    }
    (order.len() == nodes.len()).then_some(order)
}

/// Derives factual values by rounds from the observed set. A node becomes
/// known causally once all its parents are known, otherwise anticausally once
/// any child is. Returns each derived node's step with its round.
fn factual_derivations(qg: &QueryGraph, observed: &BTreeSet<String>) -> BTreeMap<String, (usize, PlanStep)> {
    let ids = qg.ids();
    let mut known = observed.clone();
    let mut out = BTreeMap::new();
    for round in 0.. {
        let mut fresh = Vec::new();
        for n in ids.iter().filter(|n| !known.contains(*n)) {
            let parents = sorted(qg.parents(n));
            let step = if !parents.is_empty() && parents.iter().all(|p| known.contains(p)) {
                Some((StepDirection::Causal, parents))
            } else {
                let kids: Vec<String> = sorted(qg.children(n)).into_iter().filter(|c| known.contains(c)).collect();
                (!kids.is_empty()).then_some((StepDirection::Anticausal, kids))
            };
            if let Some((direction, inputs)) = step {
                fresh.push((round, PlanStep { node: n.clone(), layer: Layer::Factual, direction, inputs }));
            }
        }
        if fresh.is_empty() {
            break;
        }
        for (r, s) in fresh {
            known.insert(s.node.clone());
            out.insert(s.node.clone(), (r, s));
        }
    }
    out
}

/// Builds the step plan for `query`.
pub fn plan_inference(query: &Query) -> Result<InferencePlan, InferenceError> {
    let qg = &query.query_graph;
    let ids = qg.ids();
    let target = query.target.clone();
    if !ids.contains(&target) {
        return Err(InferenceError::UnknownNode(target));
    }
    for n in query.interventions.keys().chain(query.observations.keys()).chain(query.matched.keys()) {
        if !ids.contains(n) {
            return Err(InferenceError::UnknownNode(n.clone()));
        }
    }
    let intervened: BTreeSet<String> = query.interventions.keys().cloned().collect();
    let cut_parents = |n: &str| if intervened.contains(n) { Vec::new() } else { sorted(qg.parents(n)) };
    let cut_order = topo(&ids, &cut_parents).ok_or_else(|| InferenceError::CyclicQueryRegion(target.clone()))?;

    let observed: BTreeSet<String> = query.observations.keys().cloned().collect();
    let counterfactual = !intervened.is_empty();
    let mut dispositions: BTreeMap<String, BTreeSet<Disposition>> = BTreeMap::new();
    let mut mark = |n: &str, d: Disposition| {
        dispositions.entry(n.to_string()).or_default().insert(d);
    };
    for n in &observed {
        mark(n, Disposition::Observed);
    }
    for n in &intervened {
        mark(n, Disposition::Intervened);
    }

    // counterfactual layer: walk back from the target through the cut graph
    let mut transfer = BTreeSet::new();
    let mut predicted = BTreeSet::new();
    let mut factual_needs = BTreeSet::new();
    if counterfactual {
        let mut stack = vec![target.clone()];
        let mut seen = BTreeSet::new();
        while let Some(n) = stack.pop() {
            if !seen.insert(n.clone()) || intervened.contains(&n) {
                continue;
            }
            let parents = cut_parents(&n);
            if query.matched.contains_key(&n) || parents.is_empty() {
                transfer.insert(n.clone());
                factual_needs.insert(n);
            } else {
                stack.extend(parents);
                predicted.insert(n);
            }
        }
    } else if !observed.contains(&target) {
        factual_needs.insert(target.clone());
    }

    // factual layer: derive what the counterfactual layer (or the answer) reads
    let derivations = factual_derivations(qg, &observed);
    let mut required = BTreeSet::new();
    let mut stack: Vec<String> = factual_needs.iter().cloned().collect();
    while let Some(n) = stack.pop() {
        if observed.contains(&n) || !required.insert(n.clone()) {
            continue;
        }
        let (_, step) = derivations.get(&n).ok_or_else(|| InferenceError::UnresolvableNode(n.clone()))?;
        stack.extend(step.inputs.iter().cloned());
    }
    let mut factual_steps: Vec<(usize, PlanStep)> = required.iter().map(|n| derivations[n].clone()).collect();
    factual_steps.sort_by(|a, b| (a.0, &a.1.node).cmp(&(b.0, &b.1.node)));
    let factual_steps: Vec<PlanStep> = factual_steps.into_iter().map(|(_, s)| s).collect();

    let (abduction_steps, prediction_steps) = if counterfactual {
        for s in &factual_steps {
            mark(&s.node, Disposition::Abduced);
        }
        for n in &transfer {
            mark(n, Disposition::Transferred);
        }
        let steps = cut_order
            .iter()
            .filter(|n| predicted.contains(*n))
            .map(|n| {
                mark(n, Disposition::Predicted);
                PlanStep { node: n.clone(), layer: Layer::Counterfactual, direction: StepDirection::Causal, inputs: cut_parents(n) }
            })
            .collect();
        (factual_steps, steps)
    } else {
        for s in &factual_steps {
            mark(&s.node, if s.direction == StepDirection::Causal { Disposition::Predicted } else { Disposition::Abduced });
        }
        (Vec::new(), factual_steps)
    };

    let used: BTreeSet<&str> = abduction_steps
        .iter()
        .chain(&prediction_steps)
        .flat_map(|s| s.inputs.iter().map(String::as_str).chain([s.node.as_str()]))
        .chain(transfer.iter().map(String::as_str))
        .chain([target.as_str()])
        .collect();
    for n in &ids {
        if !used.contains(n.as_str()) {
            mark(n, Disposition::Unused);
        }
    }
    let cut_edges = intervened.iter().flat_map(|x| sorted(qg.parents(x)).into_iter().map(move |p| (p, x.clone()))).collect();
    Ok(InferencePlan {
        target,
        counterfactual,
        abduction_steps,
        transfer: transfer.into_iter().collect(),
        cut_edges,
        prediction_steps,
        dispositions,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::blanket::{QueryEdge, QueryKind, QueryNode, Role};
    use crate::evaluation::AnswerType;
    use crate::world_graph::VarType;

    pub(crate) fn query(
        nodes: &[&str],
        edges: &[(&str, &str)],
        target: &str,
        observations: &[(&str, &str)],
        interventions: &[(&str, &str)],
    ) -> Query {
        let obs: BTreeMap<String, String> = observations.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        let int: BTreeMap<String, String> = interventions.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        let nodes = nodes
            .iter()
            .map(|n| {
                let (role, value) = if *n == target {
                    (Role::Target, None)
                } else if let Some(v) = int.get(*n) {
                    (Role::Intervened, Some(v.clone()))
                } else if let Some(v) = obs.get(*n) {
                    (Role::Observed, Some(v.clone()))
                } else {
                    (Role::Latent, None)
                };
                QueryNode { id: n.to_string(), name: n.to_uppercase(), description: format!("variable {n}"), var_type: VarType::Integer, values: "[0, 1]".into(), role, value }
            })
            .collect();
        let edges = edges.iter().map(|(c, e)| QueryEdge { cause: c.to_string(), effect: e.to_string(), description: format!("{c} drives {e}") }).collect();
        Query {
            id: "q".into(),
            kind: if int.is_empty() { QueryKind::Observation } else { QueryKind::Counterfactual },
            target: target.into(),
            query_graph: QueryGraph { nodes, edges },
            factual_world: "w".into(),
            counterfactual_world: None,
            interventions: int,
            observations: obs,
            matched: BTreeMap::new(),
            ground_truth: String::new(),
            ground_truth_type: AnswerType::Number,
            k: 0,
            path_count: 0,
        }
    }

    pub(crate) fn fig1_query() -> Query {
        query(&["u", "v", "x", "y", "z"], &[("u", "z"), ("v", "x"), ("x", "y"), ("z", "y")], "y", &[("x", "1"), ("z", "1"), ("y", "0")], &[("x", "0")])
    }

    #[test]
    fn chain_without_interventions_predicts_forward() {
        let q = query(&["a", "b"], &[("a", "b")], "b", &[("a", "1")], &[]);
        let p = plan_inference(&q).unwrap();
        assert!(p.abduction_steps.is_empty());
        assert_eq!(p.prediction_steps, vec![PlanStep { node: "b".into(), layer: Layer::Factual, direction: StepDirection::Causal, inputs: vec!["a".into()] }]);
    }

    #[test]
    fn fig1_plan_abduces_then_predicts() {
        let p = plan_inference(&fig1_query()).unwrap();
        let names = |s: &[PlanStep]| s.iter().map(|s| (s.node.clone(), s.direction)).collect::<Vec<_>>();
        assert_eq!(names(&p.abduction_steps), vec![("u".to_string(), StepDirection::Anticausal)]);
        assert_eq!(names(&p.prediction_steps), vec![("z".to_string(), StepDirection::Causal), ("y".to_string(), StepDirection::Causal)]);
        assert_eq!(p.transfer, vec!["u".to_string()]);
        assert_eq!(p.cut_edges, vec![("v".to_string(), "x".to_string())]);
        assert!(p.dispositions["v"].contains(&Disposition::Unused));
        assert_eq!(p.step_count(), 3);
    }

    #[test]
    fn observed_target_needs_no_steps() {
        let q = query(&["a", "b"], &[("a", "b")], "b", &[("a", "1"), ("b", "0")], &[]);
        assert_eq!(plan_inference(&q).unwrap().step_count(), 0);
    }

    #[test]
    fn cycle_and_unreachable_nodes_are_errors() {
        let q = query(&["a", "b", "t"], &[("a", "b"), ("b", "a"), ("b", "t")], "t", &[], &[]);
        assert_eq!(plan_inference(&q), Err(InferenceError::CyclicQueryRegion("t".into())));
        let q = query(&["a", "t"], &[("a", "t")], "t", &[], &[]);
        assert_eq!(plan_inference(&q), Err(InferenceError::UnresolvableNode("t".into())));
    }

    #[test]
    fn intervened_target_is_pinned() {
        let q = query(&["a", "t"], &[("a", "t")], "t", &[("a", "1")], &[("t", "5")]);
        let p = plan_inference(&q).unwrap();
        assert_eq!(p.step_count(), 0);
    }
}
