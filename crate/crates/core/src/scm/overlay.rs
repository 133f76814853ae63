//! JSON overlay attaching exogenous priors and mechanisms to graph nodes.
//!
//! ```json
//! {"exogenous": {"u": {"domain": [0, 1], "prior": [1, 3]}},
//!  "mechanisms": {"z": {"parents": ["u"], "table": {"0": 1, "1": 0}},
//!                 "y": {"expr": "x ^ z", "domain": [0, 1]}}}
//! ```
//!
//! Table keys are parent values joined with `,` in sorted-parent order; a
//! parentless table uses the empty key.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Mechanism, MechanismBody, NodeKind, ScmBuilder, ScmError, ScmInstance, Value};
use crate::world_graph::WorldGraph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExogenousSpec {
    pub domain: Vec<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MechanismSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parents: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<BTreeMap<String, Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Vec<Value>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScmOverlay {
    #[serde(default)]
    pub exogenous: BTreeMap<String, ExogenousSpec>,
    #[serde(default)]
    pub mechanisms: BTreeMap<String, MechanismSpec>,
}

fn invalid(node: &str, reason: impl Into<String>) -> ScmError {
    ScmError::InvalidMechanism { node: node.to_string(), reason: reason.into() }
}

fn parse_key(node: &str, key: &str, arity: usize) -> Result<Vec<Value>, ScmError> {
    if arity == 0 {
        return if key.trim().is_empty() { Ok(Vec::new()) } else { Err(invalid(node, format!("key `{key}` for a parentless table"))) };
    }
    let parts: Vec<&str> = key.split(',').collect();
    if parts.len() != arity {
        return Err(invalid(node, format!("key `{key}` does not have {arity} values")));
    }
    parts
        .iter()
        .map(|p| p.trim().parse::<Value>().map_err(|_| invalid(node, format!("key `{key}` is not integral"))))
        .collect()
}

impl MechanismSpec {
    fn to_mechanism(&self, node: &str) -> Result<Mechanism, ScmError> {
        match (&self.table, &self.expr) {
            (Some(_), Some(_)) => Err(invalid(node, "both `table` and `expr` given")),
            (None, None) => Err(invalid(node, "neither `table` nor `expr` given")),
            (None, Some(src)) => {
                let m = Mechanism::expr(src).map_err(|e| invalid(node, e.to_string()))?;
                if let Some(declared) = &self.parents {
                    if let Some(stray) = m.parents().iter().find(|p| !declared.contains(p)) {
                        return Err(invalid(node, format!("expression references undeclared parent `{stray}`")));
                    }
                }
                Ok(m)
            }
            (Some(table), None) => {
                let parents = self.parents.clone().unwrap_or_default();
                let mut sorted = parents.clone();
                sorted.sort();
                if sorted != parents {
                    return Err(invalid(node, "table parents must be listed in sorted order"));
                }
                let rows = table
                    .iter()
                    .map(|(k, v)| Ok((parse_key(node, k, parents.len())?, *v)))
                    .collect::<Result<Vec<_>, ScmError>>()?;
                let refs: Vec<&str> = parents.iter().map(String::as_str).collect();
                Mechanism::table(&refs, rows).map_err(|e| invalid(node, e))
            }
        }
    }
}

impl ScmOverlay {
    pub fn from_json_str(text: &str) -> Result<Self, ScmError> {
        serde_json::from_str(text).map_err(|e| ScmError::Format(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScmError> {
        let text = fs::read_to_string(path).map_err(|e| ScmError::Format(e.to_string()))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("overlay serializes") + "\n"
    }

    pub fn build(&self) -> Result<ScmInstance, ScmError> {
        let mut b = ScmBuilder::new();
        for (id, spec) in &self.exogenous {
            b = match &spec.prior {
                Some(p) => b.exogenous_weighted(id, spec.domain.clone(), p.clone()),
                None => b.exogenous(id, spec.domain.clone()),
            };
        }
        for (id, spec) in &self.mechanisms {
            let m = spec.to_mechanism(id)?;
            b = match &spec.domain {
                Some(d) => b.mechanism_with_domain(id, m, d.clone()),
                None => b.mechanism(id, m),
            };
        }
        b.build()
    }

    /// Builds the instance and checks it against `graph`: every overlay node
    /// must exist there and every mechanism parent must be a graph edge.
    pub fn build_for_graph(&self, graph: &WorldGraph) -> Result<ScmInstance, ScmError> {
        let scm = self.build()?;
        for id in scm.nodes().keys() {
            if !graph.contains(id) {
                return Err(ScmError::UnknownNode(id.clone()));
            }
        }
        for (p, c) in scm.edges() {
            if graph.edge(&p, &c).is_none() {
                return Err(invalid(&c, format!("parent `{p}` has no edge `{p}` -> `{c}` in the graph")));
            }
        }
        Ok(scm)
    }
}

impl ScmInstance {
    /// Overlay form of this instance; tables and expressions are preserved and
    /// every domain is written out explicitly.
    pub fn to_overlay(&self) -> ScmOverlay {
        let mut out = ScmOverlay::default();
        for (id, node) in self.nodes() {
            match &node.kind {
                NodeKind::Exogenous { prior } => {
                    let uniform = prior.iter().all(|w| *w == prior[0]);
                    out.exogenous.insert(
                        id.clone(),
                        ExogenousSpec { domain: node.domain.clone(), prior: (!uniform).then(|| prior.clone()) },
                    );
                }
                NodeKind::Endogenous(m) => {
                    let mut spec = MechanismSpec { domain: Some(node.domain.clone()), ..Default::default() };
                    match m.body() {
                        MechanismBody::Expr { source, .. } => spec.expr = Some(source.clone()),
                        MechanismBody::Constant(v) => spec.expr = Some(v.to_string()),
                        MechanismBody::Table(rows) => {
                            spec.parents = Some(m.parents().to_vec());
                            spec.table = Some(
                                rows.iter()
                                    .map(|(k, v)| (k.iter().map(Value::to_string).collect::<Vec<_>>().join(","), *v))
                                    .collect(),
                            );
                        }
                    }
                    out.mechanisms.insert(id.clone(), spec);
                }
            }
        }
        out
    }
}
