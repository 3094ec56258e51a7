//! Ant colony optimization over assignment plans.
//!
//! Ants rerun the chain propagation of the constraint network, but each node
//! samples its machine and a deliberate start delay (up to the forecast depth)
//! from pheromone and a heuristic instead of taking the earliest slot. Within-
//! group step orders are screened exhaustively with greedy constructions
//! before the colony starts; the best orders per type become pheromone-weighted
//! options for every piece.

mod construct;
mod optimize;
mod sweep;

pub use construct::{construct_greedy, construct_solution, AcoChooser, Construction};
pub use optimize::{aco_optimize, aco_optimize_with, evaporate_and_deposit, AcoResult, Seed};
pub use sweep::{exhaustive_best, sweep_jumps, sweep_jumps_over, Depth, SweepRow};

use std::collections::{BTreeMap, BTreeSet};

use itertools::Itertools;
use thiserror::Error;

use crate::csp::{CspError, NodeId};
use crate::model::{MachineId, PieceId, Plan, StepId, WorkpieceType};

/// Largest order group that is still permuted exhaustively (8! orders).
pub const MAX_GROUP: usize = 8;

/// Number of order combinations screened before sampling takes over.
pub const SCREEN_LIMIT: usize = 2880;

#[derive(Debug, Error)]
pub enum AcoError {
    #[error(
        "GroupTooLarge: group {group} of type `{type_id}` has {size} steps (limit {MAX_GROUP})"
    )]
    GroupTooLarge {
        type_id: String,
        group: u32,
        size: usize,
    },
    #[error("Infeasible: no plan satisfies the objective")]
    Infeasible,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Csp(#[from] CspError),
}

impl AcoError {
    pub fn name(&self) -> &'static str {
        match self {
            AcoError::GroupTooLarge { .. } => "GroupTooLarge",
            AcoError::Infeasible => "Infeasible",
            AcoError::InvalidParams(_) => "InvalidParams",
            AcoError::Csp(e) => e.name(),
        }
    }
}

/// A local decision of one node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DecisionKey {
    pub node: NodeId,
    pub machine: MachineId,
    pub delay: u32,
}

/// Anything pheromone can be laid on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TrailKey {
    Decision(DecisionKey),
    /// Index into the screened orders of the piece's type.
    Order(PieceId, usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    MinMakespan,
    MinCost,
    MinCostAtLength(u32),
}

impl Objective {
    /// Objective value, or `None` when the plan is discarded.
    pub fn value(&self, plan: &Plan) -> Option<f64> {
        match *self {
            Objective::MinMakespan => Some(plan.makespan as f64),
            Objective::MinCost => Some(plan.cost),
            Objective::MinCostAtLength(l) => (plan.makespan <= l).then_some(plan.cost),
        }
    }
}

/// Which nodes may delay their start.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForecastScope {
    All,
    /// Only the first piece in serial order.
    FirstPiece,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AcoParams {
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
    /// Deposit scale; `None` takes the objective of the first greedy plan.
    pub q: Option<f64>,
    pub tau0: f64,
    pub tau_min: f64,
    pub ants: usize,
    pub iterations: usize,
    pub forecast: u32,
    pub scope: ForecastScope,
    pub pool: usize,
    pub seed: u64,
    /// Upper bound on total jumps; plans above it are never built.
    pub jump_budget: Option<u32>,
    /// Orders kept per type after screening.
    pub orders_per_type: usize,
}

impl Default for AcoParams {
    fn default() -> Self {
        AcoParams {
            alpha: 1.0,
            beta: 2.0,
            rho: 0.1,
            q: None,
            tau0: 1.0,
            tau_min: 0.01,
            ants: 20,
            iterations: 200,
            forecast: 0,
            scope: ForecastScope::All,
            pool: 10,
            seed: 0,
            jump_budget: None,
            orders_per_type: 8,
        }
    }
}

impl AcoParams {
    pub fn validate(&self) -> Result<(), AcoError> {
        let bad = |m: &str| Err(AcoError::InvalidParams(m.to_string()));
        if !(self.rho >= 0.0 && self.rho < 1.0) {
            return bad("rho must lie in [0, 1)");
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return bad("alpha and beta must be non-negative");
        }
        if !(self.tau_min > 0.0 && self.tau0 >= self.tau_min) {
            return bad("need 0 < tau_min <= tau0");
        }
        if self.q.is_some_and(|q| q.is_nan() || q <= 0.0) {
            return bad("Q must be positive");
        }
        if self.pool == 0 || self.orders_per_type == 0 {
            return bad("pool and orders per type must be positive");
        }
        Ok(())
    }

    /// Forecast depth in force at `node` given the first piece in serial order.
    pub fn depth_for(&self, node: NodeId, first: Option<PieceId>) -> u32 {
        match self.scope {
            ForecastScope::All => self.forecast,
            ForecastScope::FirstPiece if Some(node.piece) == first => self.forecast,
            ForecastScope::FirstPiece => 0,
        }
    }
}

/// Every step order that keeps group precedence, permuting within groups.
pub fn enumerate_group_orders(ty: &WorkpieceType) -> Result<Vec<Vec<StepId>>, AcoError> {
    let groups = ty.groups();
    if let Some(g) = groups.iter().find(|g| g.len() > MAX_GROUP) {
        return Err(AcoError::GroupTooLarge {
            type_id: ty.id.clone(),
            group: g[0].group,
            size: g.len(),
        });
    }
    let per_group: Vec<Vec<Vec<StepId>>> = groups
        .iter()
        .map(|g| {
            let ids: Vec<StepId> = g.iter().map(|s| s.id).collect();
            ids.iter().copied().permutations(ids.len()).collect()
        })
        .collect();
    if per_group.is_empty() {
        return Ok(vec![Vec::new()]);
    }
    let orders: Vec<Vec<StepId>> = per_group
        .into_iter()
        .multi_cartesian_product()
        .map(|parts| parts.concat())
        .collect();
    let mut seen = BTreeSet::new();
    Ok(orders
        .into_iter()
        .filter(|o| seen.insert(o.clone()))
        .collect())
}

/// `p_i = τ_i^α η_i^β / Σ_j τ_j^α η_j^β`.
///
/// Weights are rescaled by their maximum before normalizing so that very
/// large or small pheromone values do not overflow.
pub fn decision_probabilities(
    candidates: &[DecisionKey],
    store: &PheromoneStore,
    params: &AcoParams,
    heuristic: impl Fn(&DecisionKey) -> f64,
) -> Vec<f64> {
    let logs: Vec<f64> = candidates
        .iter()
        .map(|k| {
            let tau = store.get(&TrailKey::Decision(*k));
            params.alpha * tau.ln() + params.beta * heuristic(k).ln()
        })
        .collect();
    normalize_logs(&logs)
}

pub(crate) fn normalize_logs(logs: &[f64]) -> Vec<f64> {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if logs.is_empty() {
        return Vec::new();
    }
    if !max.is_finite() {
        return vec![1.0 / logs.len() as f64; logs.len()];
    }
    let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut p: Vec<f64> = w.iter().map(|x| x / total).collect();
    // push the rounding residue onto the largest entry
    let residue = 1.0 - p.iter().sum::<f64>();
    if let Some(i) = p
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
    {
        p[i] += residue;
    }
    p
}

/// Pheromone per trail key. Keys never touched share one default value,
/// which evaporates like every stored key.
#[derive(Clone, Debug, PartialEq)]
pub struct PheromoneStore {
    tau: BTreeMap<TrailKey, f64>,
    default: f64,
    tau_min: f64,
}

impl PheromoneStore {
    pub fn new(tau0: f64, tau_min: f64) -> Self {
        PheromoneStore {
            tau: BTreeMap::new(),
            default: tau0,
            tau_min,
        }
    }

    pub fn get(&self, key: &TrailKey) -> f64 {
        self.tau.get(key).copied().unwrap_or(self.default)
    }

    pub fn set(&mut self, key: TrailKey, value: f64) {
        self.tau.insert(key, value.max(self.tau_min));
    }

    pub fn evaporate(&mut self, rho: f64) {
        let keep = 1.0 - rho;
        let floor = self.tau_min;
        self.default = (self.default * keep).max(floor);
        for v in self.tau.values_mut() {
            *v = (*v * keep).max(floor);
        }
    }

    pub fn deposit(&mut self, key: TrailKey, amount: f64) {
        let v = self.get(&key) + amount;
        self.tau.insert(key, v);
    }

    /// Smallest and largest value over stored keys and the default.
    pub fn bounds(&self) -> (f64, f64) {
        self.tau
            .values()
            .fold((self.default, self.default), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }
}

/// One pooled plan together with what it takes to rebuild it.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolEntry {
    pub value: f64,
    pub plan: Plan,
    pub orders: BTreeMap<PieceId, usize>,
    pub decisions: BTreeMap<NodeId, DecisionKey>,
}

impl PoolEntry {
    /// Per-piece sub-plans, used to bias construction.
    pub fn segment(&self, piece: PieceId) -> Vec<DecisionKey> {
        self.decisions
            .values()
            .filter(|k| k.node.piece == piece)
            .copied()
            .collect()
    }

    pub fn keys(&self) -> impl Iterator<Item = TrailKey> + '_ {
        self.decisions
            .values()
            .map(|k| TrailKey::Decision(*k))
            .chain(self.orders.iter().map(|(p, i)| TrailKey::Order(*p, *i)))
    }
}

/// Best `capacity` distinct plans, best first.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizationPool {
    capacity: usize,
    entries: Vec<PoolEntry>,
}

impl OptimizationPool {
    pub fn new(capacity: usize) -> Self {
        OptimizationPool {
            capacity: capacity.max(1),
            entries: Vec::new(),
        }
    }

    /// Inserts unless an equal placement set is already pooled; returns
    /// whether the pool changed.
    pub fn insert(&mut self, entry: PoolEntry) -> bool {
        if self
            .entries
            .iter()
            .any(|e| e.plan.placements == entry.plan.placements)
        {
            return false;
        }
        let idx = self
            .entries
            .partition_point(|e| e.value.total_cmp(&entry.value).is_le());
        if idx >= self.capacity {
            return false;
        }
        self.entries.insert(idx, entry);
        self.entries.truncate(self.capacity);
        true
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn best(&self) -> Option<&PoolEntry> {
        self.entries.first()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use crate::model::{Placement, StepSpec};

    fn key(m: u32, delay: u32) -> DecisionKey {
        DecisionKey {
            node: NodeId::new(PieceId(1), StepId(1)),
            machine: MachineId(m),
            delay,
        }
    }

    #[test]
    fn table_orders_count() {
        let orders = enumerate_group_orders(&table_a().types["A"]).unwrap();
        assert_eq!(orders.len(), 2880);
        let distinct: BTreeSet<_> = orders.iter().collect();
        assert_eq!(distinct.len(), 2880);
        let ty = &table_a().types["A"];
        for o in &orders {
            crate::csp::check_order(ty, o).unwrap();
        }
    }

    #[test]
    fn singleton_groups_have_one_order() {
        assert_eq!(enumerate_group_orders(&fig6().types["F"]).unwrap().len(), 1);
    }

    #[test]
    fn oversized_group_is_refused() {
        let ty = WorkpieceType {
            id: "W".into(),
            steps: (1..=9)
                .map(|i| StepSpec {
                    id: StepId(i),
                    group: 1,
                    durations: [(MachineId(1), 1)].into_iter().collect(),
                })
                .collect(),
        };
        assert!(matches!(
            enumerate_group_orders(&ty),
            Err(AcoError::GroupTooLarge { size: 9, .. })
        ));
    }

    #[test]
    fn probability_examples() {
        let store = PheromoneStore::new(1.0, 0.01);
        let params = AcoParams::default();
        assert_eq!(
            decision_probabilities(&[key(1, 0)], &store, &params, |_| 1.0),
            vec![1.0]
        );

        let cands = [key(1, 0), key(2, 0), key(3, 0)];
        let p = decision_probabilities(&cands, &store, &params, |_| 0.5);
        for x in &p {
            assert!((x - 1.0 / 3.0).abs() < 1e-12);
        }

        let mut store = PheromoneStore::new(1.0, 0.01);
        store.set(TrailKey::Decision(cands[0]), 2.0);
        let p = decision_probabilities(&cands, &store, &params, |_| 1.0);
        let want = [0.5, 0.25, 0.25];
        for (a, b) in p.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn evaporation_arithmetic() {
        let mut store = PheromoneStore::new(1.0, 0.01);
        let k = TrailKey::Decision(key(1, 0));
        store.set(k, 1.0);
        store.evaporate(0.1);
        assert!((store.get(&k) - 0.9).abs() < 1e-15);
        assert!((store.get(&TrailKey::Order(PieceId(1), 0)) - 0.9).abs() < 1e-15);
        store.evaporate(0.0);
        assert!((store.get(&k) - 0.9).abs() < 1e-15);
        for _ in 0..1000 {
            store.evaporate(0.5);
        }
        assert_eq!(store.bounds(), (0.01, 0.01));
    }

    fn entry(value: f64, start: u32) -> PoolEntry {
        PoolEntry {
            value,
            plan: Plan {
                placements: vec![Placement {
                    piece: PieceId(1),
                    step: StepId(1),
                    machine: MachineId(1),
                    start,
                    finish: start + 1,
                }],
                makespan: start + 1,
                jumps: 0,
                cost: 1.0,
            },
            orders: BTreeMap::new(),
            decisions: BTreeMap::new(),
        }
    }

    #[test]
    fn pool_keeps_best_distinct() {
        let mut pool = OptimizationPool::new(2);
        assert!(pool.insert(entry(5.0, 4)));
        assert!(pool.insert(entry(3.0, 2)));
        assert!(!pool.insert(entry(3.0, 2)));
        assert!(!pool.insert(entry(9.0, 8)));
        assert!(pool.insert(entry(1.0, 0)));
        let values: Vec<f64> = pool.entries().iter().map(|e| e.value).collect();
        assert_eq!(values, vec![1.0, 3.0]);
    }
}
