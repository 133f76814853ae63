//! Graph JSON persistence with canonical (sorted) output.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use super::{slugify, CausalRelation, CausalVariable, GraphError, VarType, WorldAssignment, WorldGraph, WorldInfo};

#[derive(Serialize, Deserialize)]
struct GraphFile {
    #[serde(default)]
    worlds: BTreeMap<String, WorldInfo>,
    #[serde(default)]
    nodes: Vec<NodeRecord>,
    #[serde(default)]
    edges: Vec<CausalRelation>,
}

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    #[serde(default)]
    id: Option<String>,
    name: String,
    #[serde(default)]
    description: String,
    #[serde(rename = "type", default = "default_type")]
    var_type: VarType,
    #[serde(default, deserialize_with = "values_text")]
    values: String,
    #[serde(default)]
    worlds: BTreeMap<String, WorldAssignment>,
}

fn default_type() -> VarType {
    VarType::String
}

/// Accepts either a string or a list of scalars for the value domain.
fn values_text<'de, D: serde::Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    let raw = Json::deserialize(d)?;
    Ok(render_values(&raw))
}

pub(crate) fn render_values(raw: &Json) -> String {
    match raw {
        Json::Null => String::new(),
        Json::String(s) => s.clone(),
        Json::Array(items) => {
            let parts: Vec<String> = items
                .iter()
                .map(|i| match i {
                    Json::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect();
            format!("[{}]", parts.join(", "))
        }
        other => other.to_string(),
    }
}

/// Rebuilds every object with its keys in sorted order.
pub fn canonical_json(value: Json) -> Json {
    match value {
        Json::Object(map) => {
            let sorted: BTreeMap<String, Json> = map.into_iter().map(|(k, v)| (k, canonical_json(v))).collect();
            Json::Object(sorted.into_iter().collect())
        }
        Json::Array(items) => Json::Array(items.into_iter().map(canonical_json).collect()),
        other => other,
    }
}

impl WorldGraph {
    /// Parses a graph document. Worlds referenced by nodes but missing from the
    /// registry are registered with empty metadata.
    pub fn from_json_str(text: &str) -> Result<Self, GraphError> {
        let file: GraphFile = serde_json::from_str(text).map_err(|e| GraphError::Format(e.to_string()))?;
        let mut graph = WorldGraph::new();
        for (id, info) in file.worlds {
            graph.register_world(id, info);
        }
        for rec in file.nodes {
            for world in rec.worlds.keys() {
                graph.register_world(world.clone(), WorldInfo::default());
            }
            let id = rec.id.filter(|s| !s.is_empty()).unwrap_or_else(|| slugify(&rec.name));
            graph.upsert_variable(CausalVariable {
                id,
                name: rec.name,
                description: rec.description,
                var_type: rec.var_type,
                values: rec.values,
                worlds: rec.worlds,
            })?;
        }
        for rel in file.edges {
            graph.upsert_relation(rel)?;
        }
        Ok(graph)
    }

    pub fn to_json_value(&self) -> Json {
        let file = GraphFile {
            worlds: self.worlds.clone(),
            nodes: self
                .nodes
                .values()
                .map(|n| NodeRecord {
                    id: Some(n.id.clone()),
                    name: n.name.clone(),
                    description: n.description.clone(),
                    var_type: n.var_type.clone(),
                    values: n.values.clone(),
                    worlds: n.worlds.clone(),
                })
                .collect(),
            edges: self.edges.values().cloned().collect(),
        };
        canonical_json(serde_json::to_value(file).expect("graph serializes"))
    }

    /// Canonical pretty-printed JSON with a trailing newline.
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_json_value()).expect("graph serializes");
        s.push('\n');
        s
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GraphError> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GraphError> {
        fs::write(path, self.to_json_string())?;
        Ok(())
    }
}
