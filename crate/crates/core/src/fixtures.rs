//! Small reference models and a seeded multi-world graph for tests, demos
//! and the `ctg` CLI.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scm::{add_scm_world, random_scm, scm_world_graph, Mechanism, RandomScmConfig, ScmBuilder, ScmInstance, Value};
use crate::world_graph::WorldGraph;

/// `X = V`, `Z = U`, `Y = X xor Z` over binary background factors `U`, `V`.
pub fn fig1_scm() -> ScmInstance {
    ScmBuilder::new()
        .exogenous("u", [0, 1])
        .exogenous("v", [0, 1])
        .mechanism("x", Mechanism::expr("v").expect("valid"))
        .mechanism("z", Mechanism::expr("u").expect("valid"))
        .mechanism("y", Mechanism::expr("x ^ z").expect("valid"))
        .build()
        .expect("valid model")
}

/// [`fig1_scm`] as a graph with two worlds where `u`, `v` stay unrecorded:
/// `world_1` has `x=1, z=1, y=0`, `world_2` has `x=0, z=1, y=1`.
pub fn fig1_graph() -> WorldGraph {
    let scm = fig1_scm();
    let mut g = scm_world_graph(&scm).expect("slug ids");
    let shown: BTreeSet<String> = ["x", "y", "z"].iter().map(|s| s.to_string()).collect();
    for (world, u, v) in [("world_1", 1, 1), ("world_2", 1, 0)] {
        let exo: BTreeMap<String, Value> = [("u".to_string(), u), ("v".to_string(), v)].into();
        add_scm_world(&mut g, &scm, world, &exo, &shown).expect("complete assignment");
    }
    g
}

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub n_nodes: usize,
    pub n_worlds: usize,
    /// Chance that a node's value is recorded in a given world.
    pub observed_fraction: f64,
    pub max_parents: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self { n_nodes: 60, n_worlds: 12, observed_fraction: 0.7, max_parents: 2, seed: 7 }
    }
}

/// A random acyclic model mirrored into a graph with `n_worlds` worlds, each
/// a random background assignment with a random subset of values recorded.
pub fn synthetic_world_graph(config: &SyntheticConfig) -> (WorldGraph, ScmInstance) {
    let scm = random_scm(&RandomScmConfig {
        n_nodes: config.n_nodes,
        max_parents: config.max_parents,
        domain_sizes: vec![2, 3],
        max_exogenous: Some((config.n_nodes / 5).max(1)),
        random_priors: false,
        seed: config.seed,
    });
    let mut g = scm_world_graph(&scm).expect("generated ids are slugs");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
    for w in 0..config.n_worlds {
        let exo: BTreeMap<String, Value> = scm
            .exogenous_ids()
            .into_iter()
            .map(|id| {
                let dom = scm.domain(&id).expect("known node");
                let v = dom[rng.random_range(0..dom.len())];
                (id, v)
            })
            .collect();
        let shown: BTreeSet<String> =
            scm.nodes().keys().filter(|_| rng.random_bool(config.observed_fraction)).cloned().collect();
        add_scm_world(&mut g, &scm, &format!("world_{w}"), &exo, &shown).expect("complete assignment");
    }
    (g, scm)
}
