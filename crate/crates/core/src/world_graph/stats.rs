//! Structural statistics: components, degree and world-sharing histograms,
//! bounded simple-cycle counts and articulation ("bridge") nodes.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::{density, WorldGraph};

/// Longest cycle length enumerated unless configured otherwise.
pub const DEFAULT_MAX_CYCLE_LEN: usize = 14;

#[derive(Debug, Clone, Copy)]
pub struct StatsConfig {
    pub max_cycle_len: usize,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self { max_cycle_len: DEFAULT_MAX_CYCLE_LEN }
    }
}

/// Histograms map a size (or degree, or count) to its number of occurrences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub node_count: usize,
    pub edge_count: usize,
    pub density: f64,
    pub world_count: usize,
    pub weakly_connected_components: BTreeMap<usize, usize>,
    pub largest_weak_component: usize,
    pub strongly_connected_components: BTreeMap<usize, usize>,
    pub in_degree: BTreeMap<usize, usize>,
    pub out_degree: BTreeMap<usize, usize>,
    pub max_cycle_len: usize,
    pub cycle_count_by_length: BTreeMap<usize, u64>,
    pub world_count_per_node: BTreeMap<usize, usize>,
    pub bridge_nodes: Vec<String>,
}

struct Indexed<'a> {
    ids: Vec<&'a str>,
    out: Vec<Vec<usize>>,
    inn: Vec<Vec<usize>>,
}

impl<'a> Indexed<'a> {
    fn new(graph: &'a WorldGraph) -> Self {
        let ids: Vec<&str> = graph.node_ids().collect();
        let pos: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let mut out = vec![Vec::new(); ids.len()];
        let mut inn = vec![Vec::new(); ids.len()];
        for rel in graph.edges() {
            let (c, e) = (pos[rel.cause.as_str()], pos[rel.effect.as_str()]);
            out[c].push(e);
            inn[e].push(c);
        }
        Self { ids, out, inn }
    }

    fn undirected(&self) -> Vec<Vec<usize>> {
        let mut adj: Vec<Vec<usize>> = (0..self.ids.len())
            .map(|v| self.out[v].iter().chain(&self.inn[v]).copied().collect())
            .collect();
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }
}

pub fn graph_stats(graph: &WorldGraph, config: StatsConfig) -> StatsReport {
    let g = Indexed::new(graph);
    let n = g.ids.len();
    let undirected = g.undirected();

    let weak = weak_components(&undirected);
    let strong = strong_components(&g.out);

    let mut in_degree = BTreeMap::new();
    let mut out_degree = BTreeMap::new();
    for v in 0..n {
        *in_degree.entry(g.inn[v].len()).or_insert(0) += 1;
        *out_degree.entry(g.out[v].len()).or_insert(0) += 1;
    }

    let mut world_count_per_node = BTreeMap::new();
    for node in graph.nodes() {
        *world_count_per_node.entry(node.worlds.len()).or_insert(0) += 1;
    }

    let mut cycle_count_by_length = BTreeMap::new();
    for comp in &strong {
        if comp.len() > 1 {
            count_cycles(&g.out, comp, config.max_cycle_len, &mut cycle_count_by_length);
        }
    }

    let bridge_nodes = articulation_points(&undirected)
        .into_iter()
        .map(|v| g.ids[v].to_string())
        .collect();

    StatsReport {
        node_count: n,
        edge_count: graph.edge_count(),
        density: density(n, graph.edge_count()),
        world_count: graph.worlds().len(),
        largest_weak_component: weak.iter().copied().max().unwrap_or(0),
        weakly_connected_components: histogram(&weak),
        strongly_connected_components: histogram(&strong.iter().map(Vec::len).collect::<Vec<_>>()),
        in_degree,
        out_degree,
        max_cycle_len: config.max_cycle_len,
        cycle_count_by_length,
        world_count_per_node,
        bridge_nodes,
    }
}

fn histogram(sizes: &[usize]) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for s in sizes {
        *h.entry(*s).or_insert(0) += 1;
    }
    h
}

/// Component sizes of an undirected adjacency list.
fn weak_components(adj: &[Vec<usize>]) -> Vec<usize> {
    let mut seen = vec![false; adj.len()];
    let mut sizes = Vec::new();
    for start in 0..adj.len() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut size = 0;
        while let Some(v) = queue.pop_front() {
            size += 1;
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        sizes.push(size);
    }
    sizes
}

/// Iterative Tarjan; each component is returned with its members sorted.
fn strong_components(out: &[Vec<usize>]) -> Vec<Vec<usize>> {
    const UNSEEN: usize = usize::MAX;
    let n = out.len();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut next = 0;
    let mut comps = Vec::new();

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut edge)) = call.last_mut() {
            if *edge < out[v].len() {
                let w = out[v][*edge];
                *edge += 1;
                if index[w] == UNSEEN {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    comps.push(comp);
                }
            }
        }
    }
    comps
}

/// Counts simple cycles of length ≤ `max_len` inside one strongly connected
/// component. Each cycle is counted once, rooted at its smallest member.
fn count_cycles(out: &[Vec<usize>], comp: &[usize], max_len: usize, counts: &mut BTreeMap<usize, u64>) {
    let n = out.len();
    let mut in_comp = vec![false; n];
    for &v in comp {
        in_comp[v] = true;
    }

    for &start in comp {
        // Nodes usable in cycles rooted at `start`.
        let allowed = |v: usize| in_comp[v] && v >= start;

        // Shortest distance from each allowed node back to `start`, used to prune.
        let mut back = vec![usize::MAX; n];
        let mut rev: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &v in comp {
            if allowed(v) {
                for &w in &out[v] {
                    if allowed(w) {
                        rev[w].push(v);
                    }
                }
            }
        }
        back[start] = 0;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &u in &rev[v] {
                if back[u] == usize::MAX {
                    back[u] = back[v] + 1;
                    queue.push_back(u);
                }
            }
        }

        let mut on_path = vec![false; n];
        on_path[start] = true;
        // (node, next edge index, path length in edges so far)
        let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
        while !stack.is_empty() {
            let depth = stack.len() - 1;
            let (v, edge) = stack[depth];
            if edge >= out[v].len() {
                on_path[v] = false;
                stack.pop();
                continue;
            }
            let w = out[v][edge];
            stack[depth].1 += 1;
            if !allowed(w) {
                continue;
            }
            if w == start {
                if depth < max_len {
                    *counts.entry(depth + 1).or_insert(0) += 1;
                }
                continue;
            }
            if on_path[w] || back[w] == usize::MAX || depth + 1 + back[w] > max_len {
                continue;
            }
            on_path[w] = true;
            stack.push((w, 0));
        }
        on_path[start] = false;
    }
}

/// Articulation points of an undirected graph (iterative Hopcroft–Tarjan).
fn articulation_points(adj: &[Vec<usize>]) -> Vec<usize> {
    const UNSEEN: usize = usize::MAX;
    let n = adj.len();
    let mut disc = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut is_cut = vec![false; n];
    let mut time = 0;

    for root in 0..n {
        if disc[root] != UNSEEN {
            continue;
        }
        disc[root] = time;
        low[root] = time;
        time += 1;
        let mut root_children = 0;
        // (node, parent, next neighbour index)
        let mut stack: Vec<(usize, usize, usize)> = vec![(root, UNSEEN, 0)];
        while let Some(&mut (v, parent, ref mut next)) = stack.last_mut() {
            if *next < adj[v].len() {
                let w = adj[v][*next];
                *next += 1;
                if w == parent {
                    continue;
                }
                if disc[w] == UNSEEN {
                    disc[w] = time;
                    low[w] = time;
                    time += 1;
                    if v == root {
                        root_children += 1;
                    }
                    stack.push((w, v, 0));
                } else {
                    low[v] = low[v].min(disc[w]);
                }
            } else {
                stack.pop();
                if let Some(&(p, _, _)) = stack.last() {
                    low[p] = low[p].min(low[v]);
                    if p != root && low[v] >= disc[p] {
                        is_cut[p] = true;
                    }
                }
            }
        }
        if root_children > 1 {
            is_cut[root] = true;
        }
    }
    (0..n).filter(|v| is_cut[*v]).collect()
}
