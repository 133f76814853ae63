//! Balanced, seeded generation of query datasets.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tracing::debug;

use super::{counterfactual_query, k_match, minimal_blanket, observation_query, BlanketError, Query, QueryKind};
use crate::world_graph::{topological_order, WorldGraph};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_samples: usize,
    pub k: usize,
    /// Queries with at least this many blanket-to-target paths are rejected.
    pub path_cap: u64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { n_samples: 400, k: 1, path_cap: 50, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetOutcome {
    pub queries: Vec<Query>,
    /// Non-empty when the graph could not supply the requested material.
    pub warnings: Vec<String>,
    pub observation_candidates: usize,
    pub counterfactual_candidates: usize,
}

impl DatasetOutcome {
    /// One JSON object per line, each terminated by a newline.
    pub fn to_jsonl(&self) -> String {
        self.queries
            .iter()
            .map(|q| serde_json::to_string(q).expect("query serializes") + "\n")
            .collect()
    }
}

/// Picks `quota` candidates in shuffled order, first allowing at most
/// `ceil(quota / distinct targets)` per target, then filling from the rest.
fn balance(mut cands: Vec<Query>, quota: usize, rng: &mut ChaCha8Rng) -> Vec<Query> {
    cands.shuffle(rng);
    let targets: BTreeSet<&str> = cands.iter().map(|q| q.target.as_str()).collect();
    if targets.is_empty() || quota == 0 {
        return Vec::new();
    }
    let cap = quota.div_ceil(targets.len());
    let mut per_target: BTreeMap<String, usize> = BTreeMap::new();
    let mut taken = vec![false; cands.len()];
    let mut picked = Vec::new();
    for (i, q) in cands.iter().enumerate() {
        if picked.len() == quota {
            break;
        }
        let c = per_target.entry(q.target.clone()).or_default();
        if *c < cap {
            *c += 1;
            taken[i] = true;
            picked.push(i);
        }
    }
    for i in 0..cands.len() {
        if picked.len() == quota {
            break;
        }
        if !taken[i] {
            taken[i] = true;
            picked.push(i);
        }
    }
    let mut slots: Vec<Option<Query>> = cands.into_iter().map(Some).collect();
    picked.into_iter().map(|i| slots[i].take().expect("picked once")).collect()
}

/// Generates `n_samples` queries, half observational (rounded up) and half
/// counterfactual. A graph that cannot supply enough material yields a
/// partial set and a warning.
pub fn generate_dataset(graph: &WorldGraph, config: &DatasetConfig) -> Result<DatasetOutcome, BlanketError> {
    let mut ancestors: BTreeMap<String, Option<BTreeSet<String>>> = BTreeMap::new();
    let mut usable_ancestors = |t: &str| -> Result<Option<BTreeSet<String>>, BlanketError> {
        if let Some(a) = ancestors.get(t) {
            return Ok(a.clone());
        }
        let anc = graph.ancestors(t)?;
        let mut region = anc.clone();
        region.insert(t.to_string());
        let usable = if anc.is_empty() {
            None
        } else if topological_order(graph, &region, |_, _| true).is_err() {
            debug!(target_node = t, "skipping target with a cyclic ancestor region");
            None
        } else {
            Some(anc)
        };
        ancestors.insert(t.to_string(), usable.clone());
        Ok(usable)
    };

    let worlds: Vec<String> = graph.worlds().keys().cloned().collect();
    let world_values: BTreeMap<&str, BTreeMap<&str, &str>> =
        worlds.iter().map(|w| (w.as_str(), graph.world_values(w))).collect();

    let mut observations = Vec::new();
    for w in &worlds {
        let values = &world_values[w.as_str()];
        for t in values.keys() {
            let Some(anc) = usable_ancestors(t)? else { continue };
            let available: BTreeSet<String> = values.keys().filter(|id| anc.contains(**id)).map(|id| id.to_string()).collect();
            let Ok(blanket) = minimal_blanket(graph, t, &available) else { continue };
            let q = observation_query(graph, w, t, &blanket.members, config.path_cap)?;
            if q.path_count < config.path_cap {
                observations.push(q);
            }
        }
    }

    let mut counterfactuals = Vec::new();
    for wf in &worlds {
        for wc in &worlds {
            if wf == wc {
                continue;
            }
            let fv = &world_values[wf.as_str()];
            let cv = &world_values[wc.as_str()];
            for t in fv.keys().filter(|t| cv.contains_key(**t)) {
                if usable_ancestors(t)?.is_none() {
                    continue;
                }
                let proposals = match k_match(graph, wf, wc, t, config.k) {
                    Ok(p) => p,
                    Err(_) => continue,
                };
                for p in proposals {
                    let q = counterfactual_query(graph, &p, config.path_cap)?;
                    if q.path_count < config.path_cap {
                        counterfactuals.push(q);
                    }
                }
            }
        }
    }

    let obs_quota = config.n_samples.div_ceil(2);
    let cf_quota = config.n_samples - obs_quota;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let obs_candidates = observations.len();
    let cf_candidates = counterfactuals.len();
    let mut queries = balance(observations, obs_quota, &mut rng);
    queries.extend(balance(counterfactuals, cf_quota, &mut rng));

    let mut warnings = Vec::new();
    for (kind, quota) in [(QueryKind::Observation, obs_quota), (QueryKind::Counterfactual, cf_quota)] {
        let got = queries.iter().filter(|q| q.kind == kind).count();
        if got < quota {
            warnings.push(format!(
                "insufficient material: {got} of {quota} {} queries generated",
                serde_json::to_value(kind).expect("kind serializes").as_str().unwrap_or_default()
            ));
        }
    }
    for (i, q) in queries.iter_mut().enumerate() {
        q.id = format!("q-{i:05}");
    }
    Ok(DatasetOutcome { queries, warnings, observation_candidates: obs_candidates, counterfactual_candidates: cf_candidates })
}
