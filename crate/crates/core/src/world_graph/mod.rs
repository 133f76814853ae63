//! Multi-world causal graph store.
//!
//! A [`WorldGraph`] holds world-invariant causal variables (name, description,
//! type, value domain) together with their per-world instantiations, and the
//! directed cause → effect relations between them. Cycles are allowed at the
//! store level; the operations that need an acyclic region check for it and
//! report [`GraphError::CyclicQueryRegion`].

mod io;
mod paths;
mod stats;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use io::canonical_json;
pub use paths::{count_directed_paths, topological_order};
pub use stats::{graph_stats, StatsConfig, StatsReport, DEFAULT_MAX_CYCLE_LEN};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("world collision on node `{node}` in world `{world}`: existing value `{existing}`, incoming `{incoming}`")]
    WorldCollision {
        node: String,
        world: String,
        existing: String,
        incoming: String,
    },
    #[error("invalid variable: {0}")]
    InvalidVariable(String),
    #[error("unknown relation endpoint `{0}`")]
    UnknownEndpoint(String),
    #[error("self loop on `{0}` is not allowed")]
    SelfLoop(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("unknown world `{0}`")]
    UnknownWorld(String),
    #[error("the query region of `{0}` contains a directed cycle")]
    CyclicQueryRegion(String),
    #[error("malformed graph document: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Value-type tag of a causal variable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarType {
    Boolean,
    Integer,
    Float,
    String,
    Trend,
    Other(String),
}

impl VarType {
    pub fn parse(raw: &str) -> Self {
        match raw.trim().to_ascii_lowercase().as_str() {
            "boolean" | "bool" => VarType::Boolean,
            "integer" | "int" => VarType::Integer,
            "float" | "number" | "numeric" | "double" => VarType::Float,
            "string" | "str" | "text" => VarType::String,
            "trend" => VarType::Trend,
            _ => VarType::Other(raw.trim().to_string()),
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            VarType::Boolean => "boolean",
            VarType::Integer => "integer",
            VarType::Float => "float",
            VarType::String => "string",
            VarType::Trend => "trend",
            VarType::Other(s) => s,
        }
    }
}

impl fmt::Display for VarType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for VarType {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for VarType {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        Ok(VarType::parse(&raw))
    }
}

/// One world's instantiation of a variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldAssignment {
    pub current_value: String,
    #[serde(default)]
    pub contextual_information: String,
    #[serde(default)]
    pub supporting_text_snippets: Vec<String>,
    #[serde(default)]
    pub causal_effect: Option<String>,
    #[serde(default)]
    pub source_doc: Option<String>,
}

impl WorldAssignment {
    pub fn new(current_value: impl Into<String>) -> Self {
        Self {
            current_value: current_value.into(),
            contextual_information: String::new(),
            supporting_text_snippets: Vec::new(),
            causal_effect: None,
            source_doc: None,
        }
    }

    pub fn with_context(mut self, context: impl Into<String>) -> Self {
        self.contextual_information = context.into();
        self
    }
}

/// A world-invariant causal concept plus its per-world instantiations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalVariable {
    pub id: String,
    pub name: String,
    pub description: String,
    pub var_type: VarType,
    /// Free-text description of the value domain, e.g. `True/False` or `USD per barrel`.
    pub values: String,
    pub worlds: BTreeMap<String, WorldAssignment>,
}

impl CausalVariable {
    /// Creates a variable whose id is the slug of `name`.
    pub fn new(name: impl Into<String>, description: impl Into<String>, var_type: VarType, values: impl Into<String>) -> Self {
        let name = name.into();
        Self {
            id: slugify(&name),
            name,
            description: description.into(),
            var_type,
            values: values.into(),
            worlds: BTreeMap::new(),
        }
    }

    pub fn with_world(mut self, world: impl Into<String>, assignment: WorldAssignment) -> Self {
        self.worlds.insert(world.into(), assignment);
        self
    }

    pub fn value_in(&self, world: &str) -> Option<&str> {
        self.worlds.get(world).map(|w| w.current_value.as_str())
    }
}

/// A directed cause → effect relation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CausalRelation {
    pub cause: String,
    pub effect: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub contextual_information: Option<String>,
    #[serde(rename = "type", default = "default_relation_type")]
    pub rel_type: String,
    #[serde(default)]
    pub strength: Option<String>,
    #[serde(default)]
    pub confidence: Option<String>,
    /// Provenance text of an attached mechanism; executable mechanisms live in SCM overlays.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mechanism: Option<String>,
}

fn default_relation_type() -> String {
    "direct".to_string()
}

impl CausalRelation {
    pub fn new(cause: impl Into<String>, effect: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            cause: cause.into(),
            effect: effect.into(),
            description: description.into(),
            contextual_information: None,
            rel_type: default_relation_type(),
            strength: None,
            confidence: None,
            mechanism: None,
        }
    }
}

/// Source metadata of a world (one ingested document).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldInfo {
    #[serde(default)]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<String>,
    /// Ingestion order of the document that produced this world.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<u64>,
}

/// Normalized node key: lowercase, runs of non-alphanumerics collapsed to `-`.
pub fn slugify(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    let mut pending_dash = false;
    for ch in name.chars() {
        if ch.is_alphanumeric() {
            if pending_dash && !out.is_empty() {
                out.push('-');
            }
            pending_dash = false;
            out.extend(ch.to_lowercase());
        } else {
            pending_dash = true;
        }
    }
    out
}

static EMPTY: BTreeSet<String> = BTreeSet::new();

#[derive(Debug, Clone, Default)]
pub struct WorldGraph {
    nodes: BTreeMap<String, CausalVariable>,
    edges: BTreeMap<(String, String), CausalRelation>,
    worlds: BTreeMap<String, WorldInfo>,
    parents: BTreeMap<String, BTreeSet<String>>,
    children: BTreeMap<String, BTreeSet<String>>,
}

impl WorldGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: &str) -> Option<&CausalVariable> {
        self.nodes.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &CausalVariable> {
        self.nodes.values()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &str> {
        self.nodes.keys().map(String::as_str)
    }

    pub fn edges(&self) -> impl Iterator<Item = &CausalRelation> {
        self.edges.values()
    }

    pub fn edge(&self, cause: &str, effect: &str) -> Option<&CausalRelation> {
        self.edges.get(&(cause.to_string(), effect.to_string()))
    }

    pub fn worlds(&self) -> &BTreeMap<String, WorldInfo> {
        &self.worlds
    }

    pub fn parents(&self, id: &str) -> &BTreeSet<String> {
        self.parents.get(id).unwrap_or(&EMPTY)
    }

    pub fn children(&self, id: &str) -> &BTreeSet<String> {
        self.children.get(id).unwrap_or(&EMPTY)
    }

    /// Registers a world; re-registering an existing id keeps the original metadata.
    pub fn register_world(&mut self, id: impl Into<String>, info: WorldInfo) -> bool {
        let id = id.into();
        if self.worlds.contains_key(&id) {
            return false;
        }
        self.worlds.insert(id, info);
        true
    }

    /// Next free id of the form `world_<n>`.
    pub fn next_world_id(&self) -> String {
        let mut n = self.worlds.len();
        loop {
            let id = format!("world_{n}");
            if !self.worlds.contains_key(&id) {
                return id;
            }
            n += 1;
        }
    }

    /// Nodes instantiated in `world`, with their raw values.
    pub fn world_values(&self, world: &str) -> BTreeMap<&str, &str> {
        self.nodes
            .values()
            .filter_map(|n| n.value_in(world).map(|v| (n.id.as_str(), v)))
            .collect()
    }

    /// Inserts a variable or merges its world assignments into the existing node.
    ///
    /// World-invariant fields of an existing node are never overwritten. Adding a
    /// world that the node already carries with a different value is a
    /// [`GraphError::WorldCollision`]; the same value is accepted as a no-op.
    pub fn upsert_variable(&mut self, variable: CausalVariable) -> Result<String, GraphError> {
        if variable.name.trim().is_empty() {
            return Err(GraphError::InvalidVariable("name must not be empty".into()));
        }
        if variable.id.is_empty() {
            return Err(GraphError::InvalidVariable(format!(
                "`{}` does not produce a usable identifier",
                variable.name
            )));
        }
        for (world, assignment) in &variable.worlds {
            if !self.worlds.contains_key(world) {
                return Err(GraphError::InvalidVariable(format!(
                    "`{}` references unregistered world `{world}`",
                    variable.id
                )));
            }
            if assignment.current_value.trim().is_empty() {
                return Err(GraphError::InvalidVariable(format!(
                    "`{}` has an empty value in world `{world}`",
                    variable.id
                )));
            }
        }

        let id = variable.id.clone();
        match self.nodes.get_mut(&id) {
            Some(existing) => {
                for (world, incoming) in &variable.worlds {
                    if let Some(current) = existing.worlds.get(world) {
                        if current.current_value != incoming.current_value {
                            return Err(GraphError::WorldCollision {
                                node: id.clone(),
                                world: world.clone(),
                                existing: current.current_value.clone(),
                                incoming: incoming.current_value.clone(),
                            });
                        }
                    }
                }
                for (world, incoming) in variable.worlds {
                    existing.worlds.entry(world).or_insert(incoming);
                }
            }
            None => {
                self.parents.entry(id.clone()).or_default();
                self.children.entry(id.clone()).or_default();
                self.nodes.insert(id.clone(), variable);
            }
        }
        Ok(id)
    }

    /// Inserts a relation. Returns `false` when the ordered pair already exists,
    /// in which case the stored attributes are kept.
    pub fn upsert_relation(&mut self, relation: CausalRelation) -> Result<bool, GraphError> {
        if relation.cause == relation.effect {
            return Err(GraphError::SelfLoop(relation.cause));
        }
        for endpoint in [&relation.cause, &relation.effect] {
            if !self.nodes.contains_key(endpoint) {
                return Err(GraphError::UnknownEndpoint(endpoint.clone()));
            }
        }
        let key = (relation.cause.clone(), relation.effect.clone());
        if self.edges.contains_key(&key) {
            return Ok(false);
        }
        self.parents
            .entry(relation.effect.clone())
            .or_default()
            .insert(relation.cause.clone());
        self.children
            .entry(relation.cause.clone())
            .or_default()
            .insert(relation.effect.clone());
        self.edges.insert(key, relation);
        Ok(true)
    }

    /// Removes the edge `cause → effect`; returns whether it existed.
    pub fn remove_relation(&mut self, cause: &str, effect: &str) -> bool {
        if self.edges.remove(&(cause.to_string(), effect.to_string())).is_none() {
            return false;
        }
        self.parents.get_mut(effect).map(|s| s.remove(cause));
        self.children.get_mut(cause).map(|s| s.remove(effect));
        true
    }

    fn require(&self, id: &str) -> Result<(), GraphError> {
        if self.nodes.contains_key(id) {
            Ok(())
        } else {
            Err(GraphError::UnknownNode(id.to_string()))
        }
    }

    /// All nodes with a directed path to `target`; `target` itself is never included.
    pub fn ancestors(&self, target: &str) -> Result<BTreeSet<String>, GraphError> {
        self.require(target)?;
        Ok(self.reach(target, |g, n| g.parents(n)))
    }

    /// All nodes reachable from `source`; `source` itself is never included.
    pub fn descendants(&self, source: &str) -> Result<BTreeSet<String>, GraphError> {
        self.require(source)?;
        Ok(self.reach(source, |g, n| g.children(n)))
    }

    fn reach<'a>(&'a self, start: &str, next: impl Fn(&'a Self, &str) -> &'a BTreeSet<String>) -> BTreeSet<String> {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([start.to_string()]);
        while let Some(cur) = queue.pop_front() {
            for n in next(self, &cur) {
                if n != start && seen.insert(n.clone()) {
                    queue.push_back(n.clone());
                }
            }
        }
        seen
    }

    /// Subgraph induced on `ids` (unknown ids are ignored). Only worlds still
    /// referenced by a kept node are carried over.
    pub fn induced_subgraph(&self, ids: &BTreeSet<String>) -> WorldGraph {
        let mut sub = WorldGraph::new();
        for id in ids {
            if let Some(node) = self.nodes.get(id) {
                for world in node.worlds.keys() {
                    if let Some(info) = self.worlds.get(world) {
                        sub.worlds.entry(world.clone()).or_insert_with(|| info.clone());
                    }
                }
                sub.parents.entry(id.clone()).or_default();
                sub.children.entry(id.clone()).or_default();
                sub.nodes.insert(id.clone(), node.clone());
            }
        }
        for ((cause, effect), rel) in &self.edges {
            if sub.nodes.contains_key(cause) && sub.nodes.contains_key(effect) {
                sub.parents.get_mut(effect).map(|s| s.insert(cause.clone()));
                sub.children.get_mut(cause).map(|s| s.insert(effect.clone()));
                sub.edges.insert((cause.clone(), effect.clone()), rel.clone());
            }
        }
        sub
    }

    /// Stable 64-bit FNV-1a fingerprint of node ids and edge pairs, hex encoded.
    pub fn structure_fingerprint(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |bytes: &[u8]| {
            for b in bytes {
                h ^= u64::from(*b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for id in self.nodes.keys() {
            feed(id.as_bytes());
            feed(&[0]);
        }
        feed(&[1]);
        for (c, e) in self.edges.keys() {
            feed(c.as_bytes());
            feed(&[2]);
            feed(e.as_bytes());
            feed(&[0]);
        }
        format!("{h:016x}")
    }

    /// Density `|E| / (|V| (|V| - 1))`; zero for fewer than two nodes.
    pub fn density(&self) -> f64 {
        density(self.nodes.len(), self.edges.len())
    }
}

pub fn density(nodes: usize, edges: usize) -> f64 {
    if nodes < 2 {
        0.0
    } else {
        edges as f64 / (nodes as f64 * (nodes as f64 - 1.0))
    }
}
