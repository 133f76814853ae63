use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::InferenceError;
use crate::blanket::{minimal_blanket, Query, QueryKind};
use crate::evaluation::AnswerType;
use crate::world_graph::{count_directed_paths, topological_order, WorldGraph};

/// An ad-hoc intervention on one stored world.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WhatIfRequest {
    pub target: String,
    pub interventions: BTreeMap<String, String>,
    pub factual_world: String,
}

/// Turns a what-if request into a counterfactual query. The region is the
/// target's ancestry in the graph with the edges into intervened nodes cut;
/// every region value recorded in the factual world is evidence. The request
/// is refused unless the evidence plus the interventions form a blanket of
/// the target in the cut graph. Interventions outside the cut region cannot
/// reach the target and are dropped from the query.
pub fn whatif_query(graph: &WorldGraph, request: &WhatIfRequest) -> Result<Query, InferenceError> {
    let target = request.target.as_str();
    if !graph.contains(target) {
        return Err(InferenceError::UnknownNode(target.to_string()));
    }
    if request.interventions.is_empty() {
        return Err(InferenceError::InvalidRequest("at least one intervention is required".into()));
    }
    for n in request.interventions.keys() {
        if !graph.contains(n) {
            return Err(InferenceError::UnknownNode(n.clone()));
        }
    }
    if !graph.worlds().contains_key(&request.factual_world) {
        return Err(InferenceError::UnknownWorld(request.factual_world.clone()));
    }
    let intervened: BTreeSet<&str> = request.interventions.keys().map(String::as_str).collect();

    let mut region = BTreeSet::from([target.to_string()]);
    let mut stack = vec![target.to_string()];
    while let Some(n) = stack.pop() {
        if intervened.contains(n.as_str()) {
            continue;
        }
        for p in graph.parents(&n) {
            if region.insert(p.clone()) {
                stack.push(p.clone());
            }
        }
    }
    topological_order(graph, &region, |_, e| !intervened.contains(e)).map_err(|_| InferenceError::CyclicQueryRegion(target.to_string()))?;

    let interventions: BTreeMap<String, String> =
        request.interventions.iter().filter(|(n, _)| region.contains(*n)).map(|(n, v)| (n.clone(), v.clone())).collect();
    let mut cut = graph.induced_subgraph(&region);
    for x in interventions.keys() {
        let parents: Vec<String> = cut.parents(x).iter().cloned().collect();
        for p in parents {
            cut.remove_relation(&p, x);
        }
    }
    let values = graph.world_values(&request.factual_world);
    let observations: BTreeMap<String, String> =
        region.iter().filter_map(|id| values.get(id.as_str()).map(|v| (id.clone(), v.to_string()))).collect();
    let available: BTreeSet<String> =
        observations.keys().cloned().chain(interventions.keys().cloned()).filter(|n| n != target).collect();
    let blanket = minimal_blanket(&cut, target, &available)?;
    let path_count = count_directed_paths(&cut, &blanket.members, target, u64::MAX).unwrap_or(0);

    Ok(Query {
        id: "whatif".into(),
        kind: QueryKind::Counterfactual,
        target: target.to_string(),
        query_graph: crate::blanket::build_query_graph(graph, &region, target, &observations, &interventions),
        factual_world: request.factual_world.clone(),
        counterfactual_world: None,
        k: interventions.len(),
        interventions,
        observations,
        matched: BTreeMap::new(),
        ground_truth: String::new(),
        ground_truth_type: AnswerType::Text,
        path_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blanket::BlanketError;
    use crate::inference::{execute, plan_inference, DeterministicReasoner, ExecuteConfig};
    use crate::scm::{add_scm_world, scm_world_graph, Mechanism, ScmBuilder};

    #[test]
    fn fig1_whatif_flips_the_outcome() {
        let scm = ScmBuilder::new()
            .exogenous("u", [0, 1])
            .exogenous("v", [0, 1])
            .mechanism("x", Mechanism::expr("v").unwrap())
            .mechanism("z", Mechanism::expr("u").unwrap())
            .mechanism("y", Mechanism::expr("x ^ z").unwrap())
            .build()
            .unwrap();
        let mut g = scm_world_graph(&scm).unwrap();
        let shown: BTreeSet<String> = ["x", "y", "z"].iter().map(|s| s.to_string()).collect();
        add_scm_world(&mut g, &scm, "world_1", &[("u".to_string(), 1), ("v".to_string(), 1)].into(), &shown).unwrap();
        let req = WhatIfRequest { target: "y".into(), interventions: [("x".to_string(), "0".to_string())].into(), factual_world: "world_1".into() };
        let q = whatif_query(&g, &req).unwrap();
        assert!(!q.query_graph.ids().contains("v"));
        let mut wider = req.clone();
        wider.interventions.insert("v".into(), "0".into());
        assert_eq!(whatif_query(&g, &wider).unwrap().interventions, q.interventions);
        let plan = plan_inference(&q).unwrap();
        let r = execute(&plan, &q, &DeterministicReasoner::new(scm), &ExecuteConfig::default()).unwrap();
        assert_eq!((r.target_value.as_str(), r.trace.steps), ("1", 3));

        // without the z observation nothing blocks the latent root u
        let mut bare = scm_world_graph(&ScmBuilder::new().exogenous("u", [0, 1]).mechanism("y", Mechanism::expr("u").unwrap()).mechanism("x", Mechanism::constant(0)).build().unwrap()).unwrap();
        bare.register_world("world_0", Default::default());
        let req = WhatIfRequest { target: "y".into(), interventions: [("x".to_string(), "1".to_string())].into(), factual_world: "world_0".into() };
        assert!(matches!(whatif_query(&bare, &req), Err(InferenceError::Blanket(BlanketError::NotFound { .. }))));
    }
}
