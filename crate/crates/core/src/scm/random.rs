//! Seeded random SCM generator used by property tests and fixtures.

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Mechanism, ScmBuilder, ScmInstance, Value};

#[derive(Debug, Clone)]
pub struct RandomScmConfig {
    pub n_nodes: usize,
    pub max_parents: usize,
    /// Candidate domain sizes; each node draws one uniformly. Domains are `0..size`.
    pub domain_sizes: Vec<usize>,
    /// Upper bound on the number of exogenous roots (the first node is always one).
    pub max_exogenous: Option<usize>,
    /// Draw prior weights in `1..=4` instead of a uniform prior.
    pub random_priors: bool,
    pub seed: u64,
}

impl Default for RandomScmConfig {
    fn default() -> Self {
        Self { n_nodes: 6, max_parents: 3, domain_sizes: vec![2], max_exogenous: None, random_priors: false, seed: 0 }
    }
}

/// Node ids are `v00`, `v01`, ...; parents are drawn from nodes earlier in a
/// shuffled order, so the result is acyclic by construction.
pub fn random_scm(config: &RandomScmConfig) -> ScmInstance {
    assert!(config.n_nodes >= 1, "n_nodes must be at least 1");
    assert!(config.domain_sizes.iter().all(|d| *d >= 1), "domain sizes must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<String> = (0..config.n_nodes).map(|i| format!("v{i:02}")).collect();
    order.shuffle(&mut rng);
    let sizes = if config.domain_sizes.is_empty() { vec![2] } else { config.domain_sizes.clone() };

    let mut builder = ScmBuilder::new();
    let mut size_of: Vec<usize> = Vec::with_capacity(order.len());
    let mut exo_count = 0;
    for i in 0..order.len() {
        let d = sizes[rng.random_range(0..sizes.len())];
        size_of.push(d);
        let k_max = config.max_parents.min(i);
        let must_have_parent = config.max_exogenous.is_some_and(|m| exo_count >= m.max(1));
        let k_min = usize::from(must_have_parent && i > 0);
        let k = if k_max < k_min { k_min } else { rng.random_range(k_min..=k_max) };
        let domain: Vec<Value> = (0..d as Value).collect();
        if k == 0 {
            exo_count += 1;
            builder = if config.random_priors {
                let prior = (0..d).map(|_| rng.random_range(1..=4u64)).collect();
                builder.exogenous_weighted(&order[i], domain, prior)
            } else {
                builder.exogenous(&order[i], domain)
            };
            continue;
        }
        let mut picked: Vec<usize> = sample(&mut rng, i, k).into_vec();
        picked.sort_unstable();
        let parents: Vec<&str> = picked.iter().map(|&j| order[j].as_str()).collect();
        let radix: Vec<usize> = picked.iter().map(|&j| size_of[j]).collect();
        let combos: usize = radix.iter().product();
        let mut rows = Vec::with_capacity(combos);
        let mut digits = vec![0usize; radix.len()];
        for _ in 0..combos {
            rows.push((digits.iter().map(|&x| x as Value).collect(), rng.random_range(0..d as Value)));
            for j in (0..digits.len()).rev() {
                digits[j] += 1;
                if digits[j] < radix[j] {
                    break;
                }
                digits[j] = 0;
            }
        }
        let mech = Mechanism::table(&parents, rows).expect("generated table is well formed");
        builder = builder.mechanism_with_domain(&order[i], mech, domain);
    }
    builder.build().expect("generated SCM is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_given_seed() {
        let cfg = RandomScmConfig { n_nodes: 10, seed: 7, ..Default::default() };
        assert_eq!(random_scm(&cfg), random_scm(&cfg));
        let other = RandomScmConfig { seed: 8, ..cfg.clone() };
        assert_ne!(random_scm(&cfg).edges(), random_scm(&other).edges());
    }

    #[test]
    fn single_node_is_exogenous() {
        let scm = random_scm(&RandomScmConfig { n_nodes: 1, ..Default::default() });
        assert_eq!(scm.exogenous_ids(), ["v00"]);
    }

    #[test]
    fn respects_structural_limits() {
        for seed in 0..50 {
            let cfg = RandomScmConfig {
                n_nodes: 10,
                max_parents: 3,
                domain_sizes: vec![2, 3],
                max_exogenous: Some(3),
                random_priors: true,
                seed,
            };
            let scm = random_scm(&cfg);
            assert_eq!(scm.len(), 10);
            assert!(scm.exogenous_ids().len() <= 3);
            for id in scm.nodes().keys() {
                assert!(scm.parents(id).len() <= 3);
                let d = scm.domain(id).unwrap();
                assert!(d == [0, 1] || d == [0, 1, 2]);
            }
            // every exogenous assignment evaluates to in-domain values
            let ab = scm.abduce(&Default::default()).unwrap();
            assert_eq!(ab.len() as u128, scm.state_space());
        }
    }
}
