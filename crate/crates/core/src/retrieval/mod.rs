//! Graph retrieval: node embeddings, exact top-k cosine search and hop-bounded
//! neighborhood expansion.

mod embed;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use embed::{cosine, normalize, EmbeddingBackend, HashingEmbedder, HttpEmbedder, TableEmbedder};

use crate::world_graph::{CausalVariable, WorldGraph};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RetrievalError {
    #[error("the vector index is empty")]
    EmptyIndex,
    #[error("embedding backend failure: {0}")]
    BackendFailure(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("k must be at least 1")]
    InvalidK,
}

/// Text embedded for a node: world-invariant fields only.
pub fn serialize_node(node: &CausalVariable) -> String {
    format!("name: {}\ndescription: {}\ntype: {}\nvalues: {}", node.name, node.description, node.var_type.as_str(), node.values)
}

/// Exact in-memory vector index over node ids.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VectorIndex {
    model_tag: String,
    dimension: Option<usize>,
    entries: BTreeMap<String, Vec<f64>>,
}

impl VectorIndex {
    pub fn new(model_tag: impl Into<String>) -> Self {
        Self { model_tag: model_tag.into(), dimension: None, entries: BTreeMap::new() }
    }

    pub fn model_tag(&self) -> &str {
        &self.model_tag
    }

    pub fn dimension(&self) -> Option<usize> {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.contains_key(id)
    }

    pub fn vector(&self, id: &str) -> Option<&[f64]> {
        self.entries.get(id).map(Vec::as_slice)
    }

    pub fn remove(&mut self, id: &str) -> bool {
        self.entries.remove(id).is_some()
    }

    /// Stores a vector (normalized here); replaces an existing entry.
    pub fn insert_vector(&mut self, id: impl Into<String>, vector: Vec<f64>) -> Result<(), RetrievalError> {
        if let Some(d) = self.dimension {
            if vector.len() != d {
                return Err(RetrievalError::BackendFailure(format!("expected dimension {d}, got {}", vector.len())));
            }
        }
        let unit = normalize(vector).ok_or_else(|| RetrievalError::BackendFailure("zero or non-finite vector".into()))?;
        self.dimension = Some(unit.len());
        self.entries.insert(id.into(), unit);
        Ok(())
    }

    pub fn index_node(&mut self, backend: &dyn EmbeddingBackend, node: &CausalVariable) -> Result<(), RetrievalError> {
        let mut v = backend.embed(&[serialize_node(node)])?;
        self.check_tag(backend)?;
        self.insert_vector(node.id.clone(), v.pop().expect("embed returns one vector per text"))
    }

    /// Indexes every node of `graph` in one backend batch.
    pub fn index_graph(&mut self, backend: &dyn EmbeddingBackend, graph: &WorldGraph) -> Result<(), RetrievalError> {
        let nodes: Vec<&CausalVariable> = graph.nodes().collect();
        if nodes.is_empty() {
            return Ok(());
        }
        self.check_tag(backend)?;
        let texts: Vec<String> = nodes.iter().map(|n| serialize_node(n)).collect();
        let vectors = backend.embed(&texts)?;
        for (n, v) in nodes.into_iter().zip(vectors) {
            self.insert_vector(n.id.clone(), v)?;
        }
        Ok(())
    }

    fn check_tag(&mut self, backend: &dyn EmbeddingBackend) -> Result<(), RetrievalError> {
        if self.model_tag.is_empty() {
            self.model_tag = backend.model_tag().to_string();
        } else if self.model_tag != backend.model_tag() {
            return Err(RetrievalError::BackendFailure(format!(
                "index built with `{}`, backend is `{}`",
                self.model_tag,
                backend.model_tag()
            )));
        }
        Ok(())
    }

    pub fn top_k(&self, backend: &dyn EmbeddingBackend, query: &str, k: usize) -> Result<Vec<(String, f64)>, RetrievalError> {
        if self.entries.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        let q = backend.embed(&[query.to_string()])?.pop().expect("one vector");
        self.top_k_vector(&q, k)
    }

    /// Exact scan: cosine descending, ties by node id.
    pub fn top_k_vector(&self, query: &[f64], k: usize) -> Result<Vec<(String, f64)>, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::InvalidK);
        }
        if self.entries.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        let q = normalize(query.to_vec()).ok_or_else(|| RetrievalError::BackendFailure("zero query vector".into()))?;
        if Some(q.len()) != self.dimension {
            return Err(RetrievalError::BackendFailure(format!("query dimension {} does not match index", q.len())));
        }
        let mut scored: Vec<(String, f64)> = self.entries.iter().map(|(id, v)| (id.clone(), cosine(&q, v))).collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored.truncate(k);
        Ok(scored)
    }
}

/// Edge direction followed by [`expand`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Undirected,
    /// Cause to effect only.
    Forward,
    /// Effect to cause only.
    Backward,
}

/// Nodes within `p` hops of any seed, and the edges among them.
pub fn expand(graph: &WorldGraph, seeds: &BTreeSet<String>, p: usize, direction: Direction) -> Result<WorldGraph, RetrievalError> {
    let mut dist: BTreeMap<String, usize> = BTreeMap::new();
    let mut queue = VecDeque::new();
    for s in seeds {
        if !graph.contains(s) {
            return Err(RetrievalError::UnknownNode(s.clone()));
        }
        dist.insert(s.clone(), 0);
        queue.push_back(s.clone());
    }
    while let Some(cur) = queue.pop_front() {
        let d = dist[&cur];
        if d == p {
            continue;
        }
        let forward = matches!(direction, Direction::Undirected | Direction::Forward).then(|| graph.children(&cur));
        let backward = matches!(direction, Direction::Undirected | Direction::Backward).then(|| graph.parents(&cur));
        for n in forward.into_iter().chain(backward).flatten() {
            if !dist.contains_key(n) {
                dist.insert(n.clone(), d + 1);
                queue.push_back(n.clone());
            }
        }
    }
    Ok(graph.induced_subgraph(&dist.into_keys().collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrieveConfig {
    pub k: usize,
    pub p: usize,
    pub direction: Direction,
}

impl Default for RetrieveConfig {
    fn default() -> Self {
        Self { k: 3, p: 2, direction: Direction::Undirected }
    }
}

/// Ranked seeds plus their expanded neighborhood.
#[derive(Debug, Clone, Default)]
pub struct RetrievalContext {
    pub seeds: Vec<(String, f64)>,
    pub subgraph: WorldGraph,
}

impl RetrievalContext {
    /// Text block handed to the extraction agent.
    pub fn render(&self) -> String {
        let mut out = String::from("Retrieved nodes:\n");
        if self.subgraph.is_empty() {
            out.push_str("<empty>\n");
        }
        for n in self.subgraph.nodes() {
            let attrs = serde_json::json!({
                "name": n.name,
                "description": n.description,
                "type": n.var_type.as_str(),
                "values": n.values,
            });
            let _ = writeln!(out, "{attrs}");
        }
        out.push_str("\nRetrieved edges:\n");
        if self.subgraph.edge_count() == 0 {
            out.push_str("<empty>\n");
        }
        let name = |id: &str| self.subgraph.node(id).map(|n| n.name.clone()).unwrap_or_else(|| id.to_string());
        for e in self.subgraph.edges() {
            let attrs = serde_json::json!({
                "cause": name(&e.cause),
                "effect": name(&e.effect),
                "description": e.description,
            });
            let _ = writeln!(out, "{attrs}");
        }
        out
    }
}

/// `top_k` followed by `expand`. An empty index yields an empty context.
pub fn retrieve_for_document(
    graph: &WorldGraph,
    index: &VectorIndex,
    backend: &dyn EmbeddingBackend,
    text: &str,
    config: &RetrieveConfig,
) -> Result<RetrievalContext, RetrievalError> {
    if index.is_empty() {
        return Ok(RetrievalContext::default());
    }
    let seeds: Vec<(String, f64)> =
        index.top_k(backend, text, config.k)?.into_iter().filter(|(id, _)| graph.contains(id)).collect();
    let ids: BTreeSet<String> = seeds.iter().map(|(id, _)| id.clone()).collect();
    let subgraph = expand(graph, &ids, config.p, config.direction)?;
    Ok(RetrievalContext { seeds, subgraph })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world_graph::{CausalRelation, VarType};

    fn chain() -> WorldGraph {
        let mut g = WorldGraph::new();
        for n in ["a", "b", "c"] {
            g.upsert_variable(CausalVariable::new(n, format!("node {n}"), VarType::Float, "")).unwrap();
        }
        g.upsert_relation(CausalRelation::new("a", "b", "")).unwrap();
        g.upsert_relation(CausalRelation::new("b", "c", "")).unwrap();
        g
    }

    fn ids(g: &WorldGraph) -> Vec<&str> {
        g.node_ids().collect()
    }

    #[test]
    fn expand_follows_hops() {
        let g = chain();
        let seed: BTreeSet<String> = ["a".to_string()].into();
        let one = expand(&g, &seed, 1, Direction::Undirected).unwrap();
        assert_eq!(ids(&one), ["a", "b"]);
        assert_eq!(one.edge_count(), 1);
        assert_eq!(ids(&expand(&g, &seed, 0, Direction::Undirected).unwrap()), ["a"]);
        let c: BTreeSet<String> = ["c".to_string()].into();
        assert_eq!(ids(&expand(&g, &c, 5, Direction::Forward).unwrap()), ["c"]);
        assert_eq!(expand(&g, &c, 5, Direction::Backward).unwrap().node_count(), 3);
        assert!(matches!(expand(&g, &["zz".to_string()].into(), 1, Direction::Undirected), Err(RetrievalError::UnknownNode(_))));
    }

    #[test]
    fn identical_text_scores_one() {
        let g = chain();
        let backend = HashingEmbedder::new(64);
        let mut index = VectorIndex::new("");
        index.index_graph(&backend, &g).unwrap();
        let hits = index.top_k(&backend, &serialize_node(g.node("b").unwrap()), 1).unwrap();
        assert_eq!(hits[0].0, "b");
        assert!((hits[0].1 - 1.0).abs() < 1e-6);
        index.index_node(&backend, g.node("b").unwrap()).unwrap();
        assert_eq!(index.len(), 3);
    }

    #[test]
    fn one_hot_backend_separates_nodes() {
        let mut table = TableEmbedder::new("onehot", 3);
        let g = chain();
        for (i, n) in g.nodes().enumerate() {
            let mut v = vec![0.0; 3];
            v[i] = 1.0;
            table.insert(serialize_node(n), v);
        }
        table.insert("query b", vec![0.0, 1.0, 0.0]);
        let mut index = VectorIndex::new("onehot");
        index.index_graph(&table, &g).unwrap();
        let hits = index.top_k(&table, "query b", 3).unwrap();
        assert_eq!(hits, vec![("b".to_string(), 1.0), ("a".to_string(), 0.0), ("c".to_string(), 0.0)]);
    }

    #[test]
    fn wrong_dimension_is_backend_failure() {
        let mut index = VectorIndex::new("t");
        index.insert_vector("a", vec![1.0, 0.0]).unwrap();
        assert!(matches!(index.insert_vector("b", vec![1.0]), Err(RetrievalError::BackendFailure(_))));
        assert!(matches!(index.top_k_vector(&[1.0, 0.0], 0), Err(RetrievalError::InvalidK)));
        assert!(matches!(VectorIndex::new("t").top_k_vector(&[1.0], 1), Err(RetrievalError::EmptyIndex)));
    }

    #[test]
    fn empty_graph_renders_empty_sections() {
        let ctx = retrieve_for_document(&WorldGraph::new(), &VectorIndex::new(""), &HashingEmbedder::new(8), "doc", &Default::default())
            .unwrap();
        assert_eq!(ctx.render(), "Retrieved nodes:\n<empty>\n\nRetrieved edges:\n<empty>\n");
        assert_eq!(RetrieveConfig::default(), RetrieveConfig { k: 3, p: 2, direction: Direction::Undirected });
    }
}
