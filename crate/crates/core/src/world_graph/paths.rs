use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use super::{GraphError, WorldGraph};

/// Kahn topological order of the subgraph induced on `subset`, smallest id
/// first among ready nodes. Edges for which `keep_edge(cause, effect)` is
/// false are ignored. On a cycle, returns the nodes that could not be ordered.
pub fn topological_order(
    graph: &WorldGraph,
    subset: &BTreeSet<String>,
    keep_edge: impl Fn(&str, &str) -> bool,
) -> Result<Vec<String>, BTreeSet<String>> {
    let mut indegree: BTreeMap<&str, usize> = subset.iter().map(|n| (n.as_str(), 0)).collect();
    for node in subset {
        for child in graph.children(node) {
            if subset.contains(child) && keep_edge(node, child) {
                *indegree.get_mut(child.as_str()).expect("child in subset") += 1;
            }
        }
    }
    let mut ready: BinaryHeap<Reverse<&str>> = indegree
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(n, _)| Reverse(*n))
        .collect();
    let mut order = Vec::with_capacity(subset.len());
    while let Some(Reverse(node)) = ready.pop() {
        order.push(node.to_string());
        for child in graph.children(node) {
            if subset.contains(child) && keep_edge(node, child) {
                let d = indegree.get_mut(child.as_str()).expect("child in subset");
                *d -= 1;
                if *d == 0 {
                    ready.push(Reverse(child.as_str()));
                }
            }
        }
    }
    if order.len() == subset.len() {
        Ok(order)
    } else {
        let done: BTreeSet<&str> = order.iter().map(String::as_str).collect();
        Err(subset.iter().filter(|n| !done.contains(n.as_str())).cloned().collect())
    }
}

/// Number of distinct directed paths that start at any of `sources` and end at
/// `target`, saturating at `cap`.
///
/// The region `ancestors(target) ∪ {target}` must be acyclic. A source equal
/// to the target does not contribute the trivial zero-length path.
pub fn count_directed_paths(
    graph: &WorldGraph,
    sources: &BTreeSet<String>,
    target: &str,
    cap: u64,
) -> Result<u64, GraphError> {
    for s in sources {
        if !graph.contains(s) {
            return Err(GraphError::UnknownNode(s.clone()));
        }
    }
    let mut region = graph.ancestors(target)?;
    region.insert(target.to_string());
    let order = topological_order(graph, &region, |_, _| true)
        .map_err(|_| GraphError::CyclicQueryRegion(target.to_string()))?;

    let mut count: BTreeMap<&str, u64> = BTreeMap::new();
    for node in &order {
        let mut total: u64 = if sources.contains(node) && node != target { 1 } else { 0 };
        for parent in graph.parents(node) {
            if let Some(c) = count.get(parent.as_str()) {
                total = total.saturating_add(*c).min(cap);
            }
        }
        count.insert(node.as_str(), total.min(cap));
    }
    Ok(count.get(target).copied().unwrap_or(0).min(cap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world_graph::{CausalRelation, CausalVariable, VarType};

    fn graph(nodes: &[&str], edges: &[(&str, &str)]) -> WorldGraph {
        let mut g = WorldGraph::new();
        for n in nodes {
            g.upsert_variable(CausalVariable::new(*n, "", VarType::Float, "")).unwrap();
        }
        for (c, e) in edges {
            g.upsert_relation(CausalRelation::new(*c, *e, "")).unwrap();
        }
        g
    }

    fn set(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    /// Enumerates every directed path by depth-first search.
    fn enumerate_paths(g: &WorldGraph, from: &str, to: &str, path: &mut Vec<String>, out: &mut u64) {
        if from == to && path.len() > 1 {
            *out += 1;
            return;
        }
        for child in g.children(from) {
            if !path.contains(child) {
                path.push(child.clone());
                enumerate_paths(g, child, to, path, out);
                path.pop();
            }
        }
    }

    fn layered(width: usize, depth: usize) -> WorldGraph {
        let mut names = vec!["s".to_string()];
        for layer in 0..depth {
            for i in 0..width {
                names.push(format!("l{layer}n{i}"));
            }
        }
        names.push("t".to_string());
        let mut edges = Vec::new();
        for i in 0..width {
            edges.push(("s".to_string(), format!("l0n{i}")));
            edges.push((format!("l{}n{i}", depth - 1), "t".to_string()));
        }
        for layer in 1..depth {
            for a in 0..width {
                for b in 0..width {
                    edges.push((format!("l{}n{a}", layer - 1), format!("l{layer}n{b}")));
                }
            }
        }
        let nodes: Vec<&str> = names.iter().map(String::as_str).collect();
        let edges: Vec<(&str, &str)> = edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        graph(&nodes, &edges)
    }

    #[test]
    fn chain_and_diamond_counts() {
        let c = graph(&["a", "b", "c"], &[("a", "b"), ("b", "c")]);
        assert_eq!(count_directed_paths(&c, &set(&["a"]), "c", 50).unwrap(), 1);
        let d = graph(&["a", "b", "c", "d"], &[("a", "b"), ("a", "c"), ("b", "d"), ("c", "d")]);
        assert_eq!(count_directed_paths(&d, &set(&["a"]), "d", 50).unwrap(), 2);
    }

    #[test]
    fn layered_graph_saturates_at_cap() {
        let g = layered(2, 6);
        let mut exhaustive = 0;
        enumerate_paths(&g, "s", "t", &mut vec!["s".to_string()], &mut exhaustive);
        assert_eq!(exhaustive, 64);
        assert_eq!(count_directed_paths(&g, &set(&["s"]), "t", 1000).unwrap(), exhaustive);
        assert_eq!(count_directed_paths(&g, &set(&["s"]), "t", 50).unwrap(), 50);
    }

    #[test]
    fn multiple_sources_count_every_starting_point() {
        let c = graph(&["a", "b", "c"], &[("a", "b"), ("b", "c")]);
        // a->b->c and b->c
        assert_eq!(count_directed_paths(&c, &set(&["a", "b"]), "c", 50).unwrap(), 2);
        assert_eq!(count_directed_paths(&c, &set(&["c"]), "c", 50).unwrap(), 0);
    }

    #[test]
    fn cyclic_region_is_rejected() {
        let g = graph(&["a", "b", "c"], &[("a", "b"), ("b", "a"), ("b", "c")]);
        assert!(matches!(
            count_directed_paths(&g, &set(&["a"]), "c", 50),
            Err(GraphError::CyclicQueryRegion(_))
        ));
    }

    #[test]
    fn topological_order_breaks_ties_lexicographically() {
        let g = graph(&["c", "b", "a", "d"], &[("c", "d"), ("a", "d")]);
        let all = set(&["a", "b", "c", "d"]);
        assert_eq!(topological_order(&g, &all, |_, _| true).unwrap(), vec!["a", "b", "c", "d"]);
        let cyc = graph(&["a", "b"], &[("a", "b"), ("b", "a")]);
        assert_eq!(topological_order(&cyc, &set(&["a", "b"]), |_, _| true).unwrap_err(), set(&["a", "b"]));
        assert!(topological_order(&cyc, &set(&["a", "b"]), |c, _| c != "b").is_ok());
    }
}
