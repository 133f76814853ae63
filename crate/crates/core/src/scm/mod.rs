//! Finite deterministic structural causal models.
//!
//! Every endogenous node carries a total mechanism over its parents' finite
//! domains; exogenous roots carry integer prior weights. Evidence is handled
//! by exhaustive enumeration of the exogenous product space with exact
//! rational arithmetic, which makes [`ScmInstance::counterfactual`] an oracle
//! for the rest of the crate.

mod bridge;
pub mod expr;
mod overlay;
mod random;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, Zero};
use thiserror::Error;

pub use bridge::{add_scm_world, parse_value, scm_world_graph};
pub use expr::{Expr, ExprError};
pub use overlay::{ExogenousSpec, MechanismSpec, ScmOverlay};
pub use random::{random_scm, RandomScmConfig};

pub type Value = i64;

/// Default ceiling on the number of exogenous states enumerated.
pub const DEFAULT_STATE_CAP: u64 = 1 << 20;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ScmError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("no value supplied for exogenous node `{0}`")]
    MissingExogenous(String),
    #[error("value {value} is outside the domain of `{node}`")]
    DomainViolation { node: String, value: Value },
    #[error("mechanisms form a cycle through {0:?}")]
    Cyclic(Vec<String>),
    #[error("invalid mechanism for `{node}`: {reason}")]
    InvalidMechanism { node: String, reason: String },
    #[error("invalid exogenous node `{node}`: {reason}")]
    InvalidExogenous { node: String, reason: String },
    #[error("exogenous state space of {size} exceeds the cap of {cap}")]
    StateSpaceTooLarge { size: u128, cap: u64 },
    #[error("evidence is inconsistent with every exogenous assignment")]
    InfeasibleEvidence,
    #[error("overlay format: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MechanismBody {
    /// Keyed by parent values in the (sorted) order of [`Mechanism::parents`].
    Table(BTreeMap<Vec<Value>, Value>),
    Expr { source: String, expr: Expr },
    Constant(Value),
}

/// A node's structural function `V ← f(pa(V))`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mechanism {
    parents: Vec<String>,
    body: MechanismBody,
}

impl Mechanism {
    pub fn constant(value: Value) -> Self {
        Self { parents: Vec::new(), body: MechanismBody::Constant(value) }
    }

    /// Builds a table mechanism. Row keys follow the order of `parents` as
    /// given; they are permuted internally into sorted-parent order.
    pub fn table(parents: &[&str], rows: impl IntoIterator<Item = (Vec<Value>, Value)>) -> Result<Self, String> {
        let mut order: Vec<usize> = (0..parents.len()).collect();
        order.sort_by_key(|&i| parents[i]);
        let sorted: Vec<String> = order.iter().map(|&i| parents[i].to_string()).collect();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err("duplicate parent".into());
        }
        let mut table = BTreeMap::new();
        for (key, out) in rows {
            if key.len() != parents.len() {
                return Err(format!("row {key:?} has {} values for {} parents", key.len(), parents.len()));
            }
            let permuted: Vec<Value> = order.iter().map(|&i| key[i]).collect();
            if table.insert(permuted, out).is_some() {
                return Err(format!("duplicate row {key:?}"));
            }
        }
        Ok(Self { parents: sorted, body: MechanismBody::Table(table) })
    }

    /// Parses an expression mechanism. Parents are exactly the identifiers the
    /// expression references.
    pub fn expr(source: &str) -> Result<Self, ExprError> {
        let expr = Expr::parse(source)?;
        Ok(Self {
            parents: expr.variables().into_iter().collect(),
            body: MechanismBody::Expr { source: source.to_string(), expr },
        })
    }

    /// Parents in sorted id order.
    pub fn parents(&self) -> &[String] {
        &self.parents
    }

    pub fn body(&self) -> &MechanismBody {
        &self.body
    }

    /// Human-readable provenance text for the mechanism.
    pub fn describe(&self) -> String {
        match &self.body {
            MechanismBody::Constant(v) => format!("constant {v}"),
            MechanismBody::Expr { source, .. } => source.clone(),
            MechanismBody::Table(rows) => format!("table over ({}) with {} rows", self.parents.join(", "), rows.len()),
        }
    }

    /// Evaluates with parent values in [`Mechanism::parents`] order.
    pub fn apply(&self, parent_values: &[Value]) -> Result<Value, String> {
        if parent_values.len() != self.parents.len() {
            return Err(format!("expected {} parent values, got {}", self.parents.len(), parent_values.len()));
        }
        match &self.body {
            MechanismBody::Constant(v) => Ok(*v),
            MechanismBody::Table(rows) => {
                rows.get(parent_values).copied().ok_or_else(|| format!("no table row for {parent_values:?}"))
            }
            MechanismBody::Expr { expr, .. } => expr
                .eval(&|name| self.parents.iter().position(|p| p == name).map(|i| parent_values[i]))
                .map_err(|e| e.to_string()),
        }
    }

    /// Evaluates against a full assignment map.
    pub fn apply_map(&self, values: &BTreeMap<String, Value>) -> Result<Value, String> {
        let args = self
            .parents
            .iter()
            .map(|p| values.get(p).copied().ok_or_else(|| format!("missing parent `{p}`")))
            .collect::<Result<Vec<_>, _>>()?;
        self.apply(&args)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    /// Root with one non-negative weight per domain value.
    Exogenous { prior: Vec<u64> },
    Endogenous(Mechanism),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScmNode {
    /// Sorted, deduplicated finite domain.
    pub domain: Vec<Value>,
    pub kind: NodeKind,
}

/// Incremental constructor for [`ScmInstance`].
#[derive(Debug, Clone, Default)]
pub struct ScmBuilder {
    exogenous: BTreeMap<String, (Vec<Value>, Option<Vec<u64>>)>,
    mechanisms: BTreeMap<String, (Mechanism, Option<Vec<Value>>)>,
}

impl ScmBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Exogenous root with a uniform prior.
    pub fn exogenous(mut self, id: &str, domain: impl IntoIterator<Item = Value>) -> Self {
        self.exogenous.insert(id.to_string(), (domain.into_iter().collect(), None));
        self
    }

    /// Exogenous root with explicit weights, aligned with the domain as given.
    pub fn exogenous_weighted(mut self, id: &str, domain: Vec<Value>, prior: Vec<u64>) -> Self {
        self.exogenous.insert(id.to_string(), (domain, Some(prior)));
        self
    }

    /// Endogenous node whose domain is the image of its mechanism.
    pub fn mechanism(mut self, id: &str, mechanism: Mechanism) -> Self {
        self.mechanisms.insert(id.to_string(), (mechanism, None));
        self
    }

    /// Endogenous node with an explicit domain (must contain the image).
    pub fn mechanism_with_domain(mut self, id: &str, mechanism: Mechanism, domain: Vec<Value>) -> Self {
        self.mechanisms.insert(id.to_string(), (mechanism, Some(domain)));
        self
    }

    pub fn build(self) -> Result<ScmInstance, ScmError> {
        let mut nodes: BTreeMap<String, (Option<Vec<Value>>, NodeKind)> = BTreeMap::new();
        for (id, (domain, prior)) in self.exogenous {
            if domain.is_empty() {
                return Err(ScmError::InvalidExogenous { node: id, reason: "empty domain".into() });
            }
            let prior = prior.unwrap_or_else(|| vec![1; domain.len()]);
            if prior.len() != domain.len() {
                return Err(ScmError::InvalidExogenous { node: id, reason: "prior length differs from domain".into() });
            }
            if prior.iter().all(|w| *w == 0) {
                return Err(ScmError::InvalidExogenous { node: id, reason: "prior weights are all zero".into() });
            }
            let mut pairs: Vec<(Value, u64)> = domain.into_iter().zip(prior).collect();
            pairs.sort();
            if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(ScmError::InvalidExogenous { node: id, reason: "duplicate domain value".into() });
            }
            let (domain, prior): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            nodes.insert(id, (Some(domain), NodeKind::Exogenous { prior }));
        }
        for (id, (mech, domain)) in self.mechanisms {
            if nodes.contains_key(&id) {
                return Err(ScmError::InvalidMechanism { node: id, reason: "node is also exogenous".into() });
            }
            nodes.insert(id, (domain, NodeKind::Endogenous(mech)));
        }
        ScmInstance::from_parts(nodes, DEFAULT_STATE_CAP)
    }
}

#[derive(Debug, Clone)]
struct CompiledMech {
    parents: Vec<usize>,
    /// Mixed-radix strides over parent domain indices.
    strides: Vec<usize>,
    /// Output domain index per parent index combination.
    table: Vec<usize>,
}

/// Dense, index-based form used by evaluation and enumeration.
#[derive(Debug, Clone)]
struct Compiled {
    order: Vec<String>,
    index: BTreeMap<String, usize>,
    domains: Vec<Vec<Value>>,
    /// Topological positions of exogenous nodes, in id order.
    exo: Vec<usize>,
    exo_slot: Vec<Option<usize>>,
    priors: Vec<Vec<BigUint>>,
    mechs: Vec<Option<CompiledMech>>,
}

/// An acyclic SCM over finite domains.
#[derive(Debug, Clone)]
pub struct ScmInstance {
    nodes: BTreeMap<String, ScmNode>,
    state_cap: u64,
    c: Compiled,
}

impl PartialEq for ScmInstance {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes
    }
}

/// An exogenous assignment consistent with some evidence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Abduction {
    pub assignment: BTreeMap<String, Value>,
    /// Posterior weight; all weights of one abduction sum to one.
    pub weight: BigRational,
}

/// Exact distribution over a node's values.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Distribution(pub BTreeMap<Value, BigRational>);

impl Distribution {
    pub fn prob(&self, value: Value) -> BigRational {
        self.0.get(&value).cloned().unwrap_or_else(BigRational::zero)
    }

    /// The value with probability one, if the distribution is a point mass.
    pub fn point(&self) -> Option<Value> {
        match self.0.iter().next() {
            Some((v, p)) if self.0.len() == 1 && p.is_one() => Some(*v),
            _ => None,
        }
    }

    /// Most probable value, smallest value on ties.
    pub fn mode(&self) -> Option<Value> {
        self.0.iter().fold(None::<(Value, &BigRational)>, |best, (v, p)| match best {
            Some((_, bp)) if bp >= p => best,
            _ => Some((*v, p)),
        })
        .map(|(v, _)| v)
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(v, p)| format!("{v}: {p}")).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// Factual and counterfactual copies of one SCM sharing their exogenous nodes.
#[derive(Debug, Clone)]
pub struct TwinGraph {
    pub factual: ScmInstance,
    pub counterfactual: ScmInstance,
    pub shared_exogenous: BTreeSet<String>,
    pub interventions: BTreeMap<String, Value>,
}

fn dedup_sorted(mut v: Vec<Value>) -> Vec<Value> {
    v.sort_unstable();
    v.dedup();
    v
}

impl ScmInstance {
    fn from_parts(raw: BTreeMap<String, (Option<Vec<Value>>, NodeKind)>, state_cap: u64) -> Result<Self, ScmError> {
        // Kahn over mechanism parents, smallest id first.
        let mut indeg: BTreeMap<&str, usize> = BTreeMap::new();
        let mut kids: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (id, (_, kind)) in &raw {
            indeg.entry(id).or_insert(0);
            if let NodeKind::Endogenous(m) = kind {
                for p in &m.parents {
                    if !raw.contains_key(p) {
                        return Err(ScmError::InvalidMechanism {
                            node: id.clone(),
                            reason: format!("parent `{p}` is not a node"),
                        });
                    }
                    if p == id {
                        return Err(ScmError::Cyclic(vec![id.clone()]));
                    }
                    *indeg.entry(id).or_insert(0) += 1;
                    kids.entry(p.as_str()).or_default().push(id);
                }
            }
        }
        let mut ready: BTreeSet<&str> = indeg.iter().filter(|(_, d)| **d == 0).map(|(n, _)| *n).collect();
        let mut order: Vec<String> = Vec::with_capacity(raw.len());
        while let Some(n) = ready.pop_first() {
            order.push(n.to_string());
            for k in kids.get(n).into_iter().flatten() {
                let d = indeg.get_mut(k).expect("known node");
                *d -= 1;
                if *d == 0 {
                    ready.insert(k);
                }
            }
        }
        if order.len() != raw.len() {
            let done: BTreeSet<&String> = order.iter().collect();
            return Err(ScmError::Cyclic(raw.keys().filter(|k| !done.contains(k)).cloned().collect()));
        }

        let index: BTreeMap<String, usize> = order.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        let mut domains: Vec<Vec<Value>> = vec![Vec::new(); order.len()];
        let mut mechs: Vec<Option<CompiledMech>> = vec![None; order.len()];
        let mut nodes = BTreeMap::new();
        for (pos, id) in order.iter().enumerate() {
            let (declared, kind) = &raw[id];
            match kind {
                NodeKind::Exogenous { .. } => {
                    domains[pos] = declared.clone().expect("exogenous domain present");
                }
                NodeKind::Endogenous(m) => {
                    let parents: Vec<usize> = m.parents.iter().map(|p| index[p]).collect();
                    let radix: Vec<usize> = parents.iter().map(|&p| domains[p].len()).collect();
                    let mut strides = vec![1usize; radix.len()];
                    for i in (0..radix.len().saturating_sub(1)).rev() {
                        strides[i] = strides[i + 1] * radix[i + 1];
                    }
                    let total: usize = radix.iter().product();
                    let mut outputs = Vec::with_capacity(total);
                    let mut digits = vec![0usize; radix.len()];
                    for _ in 0..total {
                        let args: Vec<Value> = digits.iter().zip(&parents).map(|(&d, &p)| domains[p][d]).collect();
                        let out = m.apply(&args).map_err(|reason| ScmError::InvalidMechanism {
                            node: id.clone(),
                            reason,
                        })?;
                        outputs.push(out);
                        for i in (0..digits.len()).rev() {
                            digits[i] += 1;
                            if digits[i] < radix[i] {
                                break;
                            }
                            digits[i] = 0;
                        }
                    }
                    let domain = match declared {
                        Some(d) => dedup_sorted(d.clone()),
                        None => dedup_sorted(outputs.clone()),
                    };
                    if domain.is_empty() {
                        return Err(ScmError::InvalidMechanism { node: id.clone(), reason: "empty domain".into() });
                    }
                    let table = outputs
                        .iter()
                        .map(|o| {
                            domain.binary_search(o).map_err(|_| ScmError::InvalidMechanism {
                                node: id.clone(),
                                reason: format!("output {o} is outside the declared domain"),
                            })
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    domains[pos] = domain;
                    mechs[pos] = Some(CompiledMech { parents, strides, table });
                }
            }
            nodes.insert(id.clone(), ScmNode { domain: domains[pos].clone(), kind: kind.clone() });
        }

        let mut exo: Vec<usize> = Vec::new();
        let mut priors = Vec::new();
        let mut exo_slot = vec![None; order.len()];
        for (id, node) in &nodes {
            if let NodeKind::Exogenous { prior } = &node.kind {
                exo_slot[index[id]] = Some(exo.len());
                exo.push(index[id]);
                priors.push(prior.iter().map(|w| BigUint::from(*w)).collect());
            }
        }
        Ok(Self { nodes, state_cap, c: Compiled { order, index, domains, exo, exo_slot, priors, mechs } })
    }

    fn rebuild(nodes: BTreeMap<String, ScmNode>, state_cap: u64) -> Result<Self, ScmError> {
        let raw = nodes.into_iter().map(|(id, n)| (id, (Some(n.domain), n.kind))).collect();
        Self::from_parts(raw, state_cap)
    }

    pub fn with_state_cap(mut self, cap: u64) -> Self {
        self.state_cap = cap;
        self
    }

    pub fn state_cap(&self) -> u64 {
        self.state_cap
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &BTreeMap<String, ScmNode> {
        &self.nodes
    }

    pub fn node(&self, id: &str) -> Option<&ScmNode> {
        self.nodes.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    /// Node ids in topological order (smallest id first among ready nodes).
    pub fn topological_order(&self) -> &[String] {
        &self.c.order
    }

    pub fn domain(&self, id: &str) -> Option<&[Value]> {
        self.nodes.get(id).map(|n| n.domain.as_slice())
    }

    pub fn is_exogenous(&self, id: &str) -> bool {
        matches!(self.nodes.get(id), Some(ScmNode { kind: NodeKind::Exogenous { .. }, .. }))
    }

    pub fn exogenous_ids(&self) -> Vec<String> {
        self.c.exo.iter().map(|&p| self.c.order[p].clone()).collect()
    }

    pub fn mechanism(&self, id: &str) -> Option<&Mechanism> {
        match &self.nodes.get(id)?.kind {
            NodeKind::Endogenous(m) => Some(m),
            NodeKind::Exogenous { .. } => None,
        }
    }

    pub fn parents(&self, id: &str) -> &[String] {
        self.mechanism(id).map(Mechanism::parents).unwrap_or(&[])
    }

    /// All (parent, child) pairs, sorted.
    pub fn edges(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = self
            .nodes.keys().flat_map(|id| self.parents(id).iter().map(move |p| (p.clone(), id.clone())))
            .collect();
        out.sort();
        out
    }

    /// Size of the exogenous product space (saturating).
    pub fn state_space(&self) -> u128 {
        self.c
            .exo
            .iter()
            .fold(1u128, |acc, &p| acc.saturating_mul(self.c.domains[p].len() as u128))
    }

    fn check_value(&self, id: &str, value: Value) -> Result<usize, ScmError> {
        let pos = *self.c.index.get(id).ok_or_else(|| ScmError::UnknownNode(id.to_string()))?;
        self.c.domains[pos]
            .binary_search(&value)
            .map_err(|_| ScmError::DomainViolation { node: id.to_string(), value })
    }

    /// Fills `out` with domain indices of every node, given exogenous domain
    /// indices in exogenous-id order.
    fn eval_indices(&self, exo_idx: &[usize], out: &mut [usize]) {
        for pos in 0..self.c.order.len() {
            out[pos] = match (&self.c.mechs[pos], self.c.exo_slot[pos]) {
                (_, Some(slot)) => exo_idx[slot],
                (Some(m), None) => {
                    let mut key = 0;
                    for (p, s) in m.parents.iter().zip(&m.strides) {
                        key += out[*p] * s;
                    }
                    m.table[key]
                }
                (None, None) => unreachable!("endogenous node without mechanism"),
            };
        }
    }

    fn decode(&self, idx: &[usize]) -> BTreeMap<String, Value> {
        self.c.order.iter().enumerate().map(|(p, id)| (id.clone(), self.c.domains[p][idx[p]])).collect()
    }

    /// Computes every node from a full exogenous assignment.
    pub fn evaluate(&self, exogenous: &BTreeMap<String, Value>) -> Result<BTreeMap<String, Value>, ScmError> {
        for id in exogenous.keys() {
            if !self.contains(id) {
                return Err(ScmError::UnknownNode(id.clone()));
            }
        }
        let mut exo_idx = Vec::with_capacity(self.c.exo.len());
        for &p in &self.c.exo {
            let id = &self.c.order[p];
            let v = *exogenous.get(id).ok_or_else(|| ScmError::MissingExogenous(id.clone()))?;
            exo_idx.push(self.check_value(id, v)?);
        }
        let mut out = vec![0; self.c.order.len()];
        self.eval_indices(&exo_idx, &mut out);
        Ok(self.decode(&out))
    }

    /// Replaces each intervened node's mechanism with a parentless constant.
    pub fn intervene(&self, assignments: &BTreeMap<String, Value>) -> Result<ScmInstance, ScmError> {
        let mut nodes = self.nodes.clone();
        for (id, v) in assignments {
            self.check_value(id, *v)?;
            let node = nodes.get_mut(id).expect("checked");
            node.kind = NodeKind::Endogenous(Mechanism::constant(*v));
        }
        Self::rebuild(nodes, self.state_cap)
    }

    pub fn build_twin(&self, interventions: &BTreeMap<String, Value>) -> Result<TwinGraph, ScmError> {
        let counterfactual = self.intervene(interventions)?;
        Ok(TwinGraph {
            factual: self.clone(),
            shared_exogenous: counterfactual.exogenous_ids().into_iter().collect(),
            counterfactual,
            interventions: interventions.clone(),
        })
    }

    /// Exogenous assignments (as domain indices) consistent with `evidence`,
    /// with their unnormalized prior weights. Zero-weight states are dropped.
    fn consistent(&self, evidence: &BTreeMap<String, Value>) -> Result<Vec<(Vec<usize>, BigUint)>, ScmError> {
        let mut checks = Vec::with_capacity(evidence.len());
        let mut feasible = true;
        for (id, v) in evidence {
            match self.check_value(id, *v) {
                Ok(i) => checks.push((self.c.index[id], i)),
                Err(ScmError::DomainViolation { .. }) => feasible = false,
                Err(e) => return Err(e),
            }
        }
        let size = self.state_space();
        if size > u128::from(self.state_cap) {
            return Err(ScmError::StateSpaceTooLarge { size, cap: self.state_cap });
        }
        if !feasible {
            return Ok(Vec::new());
        }
        let radix: Vec<usize> = self.c.exo.iter().map(|&p| self.c.domains[p].len()).collect();
        let mut digits = vec![0usize; radix.len()];
        let mut vals = vec![0usize; self.c.order.len()];
        let mut out = Vec::new();
        for _ in 0..size {
            self.eval_indices(&digits, &mut vals);
            if checks.iter().all(|&(p, i)| vals[p] == i) {
                let w = digits
                    .iter()
                    .enumerate()
                    .fold(BigUint::one(), |acc, (slot, &d)| acc * &self.c.priors[slot][d]);
                if !w.is_zero() {
                    out.push((digits.clone(), w));
                }
            }
            for i in (0..digits.len()).rev() {
                digits[i] += 1;
                if digits[i] < radix[i] {
                    break;
                }
                digits[i] = 0;
            }
        }
        Ok(out)
    }

    /// All exogenous assignments consistent with `evidence`, weighted by the
    /// normalized prior. Empty when the evidence is infeasible.
    pub fn abduce(&self, evidence: &BTreeMap<String, Value>) -> Result<Vec<Abduction>, ScmError> {
        let states = self.consistent(evidence)?;
        let total: BigUint = states.iter().map(|(_, w)| w).sum();
        let ids = self.exogenous_ids();
        Ok(states
            .into_iter()
            .map(|(digits, w)| Abduction {
                assignment: ids
                    .iter()
                    .zip(&digits)
                    .map(|(id, &d)| (id.clone(), self.c.domains[self.c.index[id]][d]))
                    .collect(),
                weight: BigRational::new(w.into(), total.clone().into()),
            })
            .collect())
    }

    /// `Σ_u P(target | do(interventions), u) · P(u | evidence)`.
    pub fn counterfactual(
        &self,
        evidence: &BTreeMap<String, Value>,
        interventions: &BTreeMap<String, Value>,
        target: &str,
    ) -> Result<Distribution, ScmError> {
        if !self.contains(target) {
            return Err(ScmError::UnknownNode(target.to_string()));
        }
        let states = self.consistent(evidence)?;
        if states.is_empty() {
            return Err(ScmError::InfeasibleEvidence);
        }
        let cf = self.intervene(interventions)?;
        // cf exogenous slots map back into factual slots (intervened roots drop out)
        let back: Vec<usize> = cf.c.exo.iter().map(|&p| self.c.exo_slot[self.c.index[&cf.c.order[p]]].expect("shared")).collect();
        let tpos = cf.c.index[target];
        let mut acc: BTreeMap<usize, BigUint> = BTreeMap::new();
        let mut total = BigUint::zero();
        let mut cf_exo = vec![0usize; back.len()];
        let mut vals = vec![0usize; cf.c.order.len()];
        for (digits, w) in states {
            for (slot, &f) in back.iter().enumerate() {
                cf_exo[slot] = digits[f];
            }
            cf.eval_indices(&cf_exo, &mut vals);
            total += &w;
            *acc.entry(vals[tpos]).or_insert_with(BigUint::zero) += w;
        }
        let total = num_bigint::BigInt::from(total);
        Ok(Distribution(
            acc.into_iter()
                .map(|(i, w)| (cf.c.domains[tpos][i], BigRational::new(w.into(), total.clone())))
                .collect(),
        ))
    }

    /// `P(target | evidence)` without interventions.
    pub fn conditional(&self, evidence: &BTreeMap<String, Value>, target: &str) -> Result<Distribution, ScmError> {
        self.counterfactual(evidence, &BTreeMap::new(), target)
    }
}
