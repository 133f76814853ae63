//! Conversions between SCM instances and world graphs.

use std::collections::{BTreeMap, BTreeSet};

use super::{ScmError, ScmInstance, Value};
use crate::world_graph::{CausalRelation, CausalVariable, GraphError, VarType, WorldAssignment, WorldGraph, WorldInfo};

/// Reads a world value as an SCM value: integers, integral floats and
/// true/false/yes/no.
pub fn parse_value(text: &str) -> Option<Value> {
    let t = text.trim();
    if let Ok(v) = t.parse::<Value>() {
        return Some(v);
    }
    match t.to_ascii_lowercase().as_str() {
        "true" | "yes" => return Some(1),
        "false" | "no" => return Some(0),
        _ => {}
    }
    let f = t.parse::<f64>().ok()?;
    (f.fract() == 0.0 && f.abs() < 9.0e15).then_some(f as Value)
}

fn render_domain(domain: &[Value]) -> String {
    let parts: Vec<String> = domain.iter().map(Value::to_string).collect();
    format!("[{}]", parts.join(", "))
}

/// A world graph with one node per SCM variable and one edge per mechanism
/// parent. Node ids equal SCM ids, which therefore must already be slugs.
pub fn scm_world_graph(scm: &ScmInstance) -> Result<WorldGraph, GraphError> {
    let mut g = WorldGraph::new();
    for (id, node) in scm.nodes() {
        let description = if scm.is_exogenous(id) { "exogenous background factor" } else { "mechanized variable" };
        let mut var = CausalVariable::new(id.as_str(), description, VarType::Integer, render_domain(&node.domain));
        if var.id != *id {
            return Err(GraphError::InvalidVariable(format!("SCM id `{id}` is not a slug")));
        }
        var.id = id.clone();
        g.upsert_variable(var)?;
    }
    for (p, c) in scm.edges() {
        let mut rel = CausalRelation::new(p.as_str(), c.as_str(), format!("{p} influences {c}"));
        rel.mechanism = scm.mechanism(&c).map(|m| m.describe());
        g.upsert_relation(rel)?;
    }
    Ok(g)
}

/// Evaluates `scm` on `exogenous`, registers `world` and records the values of
/// the `observed` nodes in it. Returns the full evaluation.
pub fn add_scm_world(
    graph: &mut WorldGraph,
    scm: &ScmInstance,
    world: &str,
    exogenous: &BTreeMap<String, Value>,
    observed: &BTreeSet<String>,
) -> Result<BTreeMap<String, Value>, ScmError> {
    let values = scm.evaluate(exogenous)?;
    graph.register_world(world, WorldInfo { source: Some("scm".into()), ..Default::default() });
    for id in observed {
        let v = *values.get(id).ok_or_else(|| ScmError::UnknownNode(id.clone()))?;
        let mut var = graph.node(id).cloned().ok_or_else(|| ScmError::UnknownNode(id.clone()))?;
        var.worlds = [(world.to_string(), WorldAssignment::new(v.to_string()))].into();
        graph.upsert_variable(var).map_err(|e| ScmError::Format(e.to_string()))?;
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::{Mechanism, ScmBuilder};

    #[test]
    fn parses_world_values() {
        assert_eq!(parse_value(" 3 "), Some(3));
        assert_eq!(parse_value("True"), Some(1));
        assert_eq!(parse_value("2.0"), Some(2));
        assert_eq!(parse_value("2.5"), None);
        assert_eq!(parse_value("high"), None);
    }

    #[test]
    fn mirrors_structure_and_worlds() {
        let scm = ScmBuilder::new()
            .exogenous("u", [0, 1])
            .mechanism("z", Mechanism::expr("u").unwrap())
            .mechanism("y", Mechanism::expr("1 - z").unwrap())
            .build()
            .unwrap();
        let mut g = scm_world_graph(&scm).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge("z", "y").unwrap().mechanism.as_deref(), Some("1 - z"));
        let obs: BTreeSet<String> = ["z".to_string(), "y".to_string()].into();
        let vals = add_scm_world(&mut g, &scm, "world_1", &[("u".to_string(), 1)].into(), &obs).unwrap();
        assert_eq!(vals["y"], 0);
        assert_eq!(g.node("y").unwrap().value_in("world_1"), Some("0"));
        assert_eq!(g.node("u").unwrap().value_in("world_1"), None);
    }
}
