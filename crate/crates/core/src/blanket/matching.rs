//! K-matching of a factual and a counterfactual world.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{frontier_search, graph_parents, minimal_blanket, prune, BlanketError};
use crate::values::values_match;
use crate::world_graph::WorldGraph;

/// A counterfactual blanket built from `K` interventions and shared observations.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MatchProposal {
    pub target: String,
    /// Intervened ∪ matched nodes.
    pub blanket_c: BTreeSet<String>,
    /// Intervened node → value in the counterfactual world.
    pub intervened: BTreeMap<String, String>,
    /// Matched node → value shared by both worlds.
    pub matched_observations: BTreeMap<String, String>,
    /// Factual-only observations forming a blanket over every matched node.
    pub abduction_support: BTreeSet<String>,
    pub factual_world: String,
    pub counterfactual_world: String,
}

fn combinations(items: &[String], k: usize) -> Vec<Vec<String>> {
    if k > items.len() {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.iter().map(|&i| items[i].clone()).collect());
        let Some(pos) = (0..k).rev().find(|&i| idx[i] != i + items.len() - k) else { break };
        idx[pos] += 1;
        for j in pos + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
    out
}

/// All K-matchings of `target` between two worlds.
///
/// Shared observations `O_s` are nodes instantiated in both worlds with equal
/// canonical values (the target excluded). Interventions are drawn from the
/// counterfactual world's other ancestors of the target. A proposal is kept
/// when interventions and matched nodes form a blanket in which every
/// intervention is needed, no intervention is an ancestor of a matched node,
/// and the factual-only observations form a blanket over each matched node
/// (waived when `k = 0`, where nothing is intervened).
pub fn k_match(
    graph: &WorldGraph,
    factual_world: &str,
    counterfactual_world: &str,
    target: &str,
    k: usize,
) -> Result<Vec<MatchProposal>, BlanketError> {
    if !graph.contains(target) {
        return Err(BlanketError::UnknownNode(target.to_string()));
    }
    for w in [factual_world, counterfactual_world] {
        if !graph.worlds().contains_key(w) {
            return Err(BlanketError::UnknownWorld(w.to_string()));
        }
    }
    let fv = graph.world_values(factual_world);
    let cv = graph.world_values(counterfactual_world);
    for (world, values) in [(factual_world, &fv), (counterfactual_world, &cv)] {
        if !values.contains_key(target) {
            return Err(BlanketError::TargetNotInstantiated { target: target.to_string(), world: world.to_string() });
        }
    }
    let shared: BTreeSet<String> = fv
        .iter()
        .filter(|(id, v)| **id != target && cv.get(*id).is_some_and(|c| values_match(v, c)))
        .map(|(id, _)| id.to_string())
        .collect();
    if shared.is_empty() {
        return Err(BlanketError::NoSharedObservations);
    }
    let anc = graph.ancestors(target)?;
    let candidates: Vec<String> = cv
        .keys()
        .filter(|id| anc.contains(**id) && !shared.contains(**id))
        .map(|id| id.to_string())
        .collect();
    let factual_only: BTreeSet<String> =
        fv.keys().filter(|id| **id != target && !shared.contains(**id)).map(|id| id.to_string()).collect();
    let matchable: BTreeSet<&String> = shared.iter().filter(|s| anc.contains(*s)).collect();
    let parents = graph_parents(graph);

    let mut out = Vec::new();
    for combo in combinations(&candidates, k) {
        let intervened: BTreeSet<String> = combo.into_iter().collect();
        let Ok(frontier) =
            frontier_search(target, |n| intervened.contains(n) || matchable.contains(&n.to_string()), &parents)
        else {
            continue;
        };
        if !intervened.is_subset(&frontier.members) {
            continue;
        }
        let members = prune(target, &frontier.members, &intervened, &parents);
        let matched: BTreeSet<String> = members.difference(&intervened).cloned().collect();

        let mut ok = true;
        let mut support = BTreeSet::new();
        for m in &matched {
            let m_anc = graph.ancestors(m)?;
            if intervened.iter().any(|i| m_anc.contains(i)) {
                ok = false;
                break;
            }
            let avail: BTreeSet<String> = factual_only.intersection(&m_anc).cloned().collect();
            match minimal_blanket(graph, m, &avail) {
                Ok(b) => support.extend(b.members),
                // without interventions the matched value needs no abduction
                Err(_) if intervened.is_empty() => {}
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        out.push(MatchProposal {
            target: target.to_string(),
            blanket_c: members,
            intervened: intervened.iter().map(|i| (i.clone(), cv[i.as_str()].to_string())).collect(),
            matched_observations: matched.iter().map(|m| (m.clone(), fv[m.as_str()].to_string())).collect(),
            abduction_support: support,
            factual_world: factual_world.to_string(),
            counterfactual_world: counterfactual_world.to_string(),
        });
    }
    if out.is_empty() {
        return Err(BlanketError::NoBlanketFound(target.to_string()));
    }
    out.sort();
    out.dedup();
    Ok(out)
}
