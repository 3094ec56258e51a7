use std::collections::BTreeMap;

use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::csp::{solve_csp, NodeId, SolveOptions};
use crate::model::{PieceId, Plan, ProblemInstance, StepId};

use super::construct::{construct_greedy, construct_with, sample, AcoChooser, Construction};
use super::{
    enumerate_group_orders, normalize_logs, AcoError, AcoParams, DecisionKey, Objective,
    OptimizationPool, PheromoneStore, PoolEntry, TrailKey, SCREEN_LIMIT,
};

/// A known plan handed to a run as a starting point.
#[derive(Clone, Debug, PartialEq)]
pub struct Seed {
    pub plan: Plan,
    pub orders: BTreeMap<PieceId, Vec<StepId>>,
    pub decisions: BTreeMap<NodeId, DecisionKey>,
}

#[derive(Clone, Debug)]
pub struct AcoResult {
    pub best: Plan,
    pub value: f64,
    pub orders: BTreeMap<PieceId, Vec<StepId>>,
    pub decisions: BTreeMap<NodeId, DecisionKey>,
    pub pool: OptimizationPool,
    /// Global best objective after each iteration.
    pub history: Vec<f64>,
    pub store: PheromoneStore,
    /// Smallest and largest pheromone value after each update.
    pub tau_bounds: Vec<(f64, f64)>,
    /// Deposit scale in force.
    pub q: f64,
}

impl AcoResult {
    pub fn seed(&self) -> Seed {
        Seed {
            plan: self.best.clone(),
            orders: self.orders.clone(),
            decisions: self.decisions.clone(),
        }
    }
}

/// Screened step orders per workpiece type.
#[derive(Clone, Debug, Default)]
struct Menu {
    orders: BTreeMap<String, Vec<Vec<StepId>>>,
}

impl Menu {
    fn resolve(
        &self,
        instance: &ProblemInstance,
        choice: &BTreeMap<PieceId, usize>,
    ) -> BTreeMap<PieceId, Vec<StepId>> {
        instance
            .pieces
            .iter()
            .map(|p| {
                let list = &self.orders[&p.type_id];
                (p.id, list[choice.get(&p.id).copied().unwrap_or(0)].clone())
            })
            .collect()
    }

    fn index_of(&mut self, type_id: &str, order: &[StepId]) -> usize {
        let list = self.orders.entry(type_id.to_string()).or_default();
        match list.iter().position(|o| o == order) {
            Some(i) => i,
            None => {
                list.push(order.to_vec());
                list.len() - 1
            }
        }
    }
}

/// splitmix64 finalizer over the run seed, iteration and ant index.
fn mix(seed: u64, iteration: u64, ant: u64) -> u64 {
    let mut z = seed
        ^ iteration.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ ant.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(feature = "parallel")]
fn par_map<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, F: Fn(usize) -> T>(n: usize, f: F) -> Vec<T> {
    (0..n).map(f).collect()
}

fn score(objective: &Objective, params: &AcoParams, plan: &Plan) -> Option<f64> {
    if params.jump_budget.is_some_and(|j| plan.jumps > j) {
        return None;
    }
    objective.value(plan)
}

fn entry_from(
    c: Construction,
    choice: BTreeMap<PieceId, usize>,
    objective: &Objective,
    params: &AcoParams,
) -> Option<PoolEntry> {
    let value = score(objective, params, &c.plan)?;
    Some(PoolEntry {
        value,
        plan: c.plan,
        orders: choice,
        decisions: c.decisions,
    })
}

/// Greedy evaluation of order combinations; keeps the best orders per type
/// (the listed order always stays, first) and returns the best constructions.
fn screen(
    instance: &ProblemInstance,
    objective: &Objective,
    params: &AcoParams,
) -> Result<(Menu, Vec<PoolEntry>), AcoError> {
    let mut types: Vec<&str> = instance.pieces.iter().map(|p| p.type_id.as_str()).collect();
    types.sort_unstable();
    types.dedup();
    let mut all: Vec<Vec<Vec<StepId>>> = Vec::with_capacity(types.len());
    for t in &types {
        all.push(enumerate_group_orders(&instance.types[*t])?);
    }
    let total = all
        .iter()
        .map(Vec::len)
        .try_fold(1usize, |acc, n| acc.checked_mul(n));
    let combos: Vec<Vec<usize>> = match total {
        Some(n) if n <= SCREEN_LIMIT => all
            .iter()
            .map(|l| 0..l.len())
            .multi_cartesian_product()
            .collect(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(params.seed, u64::MAX, 0));
            let mut v = vec![vec![0; all.len()]];
            while v.len() < SCREEN_LIMIT {
                v.push(all.iter().map(|l| rng.random_range(0..l.len())).collect());
            }
            v.sort();
            v.dedup();
            v
        }
    };
    let combos = if types.is_empty() {
        vec![vec![]]
    } else {
        combos
    };

    let type_pos: BTreeMap<&str, usize> = types.iter().enumerate().map(|(i, t)| (*t, i)).collect();
    let evaluated: Vec<Option<PoolEntry>> = par_map(combos.len(), |ci| {
        let combo = &combos[ci];
        let orders: BTreeMap<PieceId, Vec<StepId>> = instance
            .pieces
            .iter()
            .map(|p| {
                (
                    p.id,
                    all[type_pos[p.type_id.as_str()]][combo[type_pos[p.type_id.as_str()]]].clone(),
                )
            })
            .collect();
        let c = construct_greedy(instance, &orders, params).ok()?;
        let choice = instance
            .pieces
            .iter()
            .map(|p| (p.id, combo[type_pos[p.type_id.as_str()]]))
            .collect();
        entry_from(c, choice, objective, params)
    });

    // best score per (type, order index)
    let mut best: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); types.len()];
    for (combo, e) in combos.iter().zip(&evaluated) {
        let v = e.as_ref().map_or(f64::INFINITY, |e| e.value);
        for (t, &idx) in combo.iter().enumerate() {
            let slot = best[t].entry(idx).or_insert(f64::INFINITY);
            *slot = slot.min(v);
        }
    }
    let mut menu = Menu::default();
    let mut remap: Vec<BTreeMap<usize, usize>> = Vec::with_capacity(types.len());
    for (t, ty) in types.iter().enumerate() {
        let mut ranked: Vec<(usize, f64)> = best[t]
            .iter()
            .filter(|(i, _)| **i != 0)
            .map(|(i, v)| (*i, *v))
            .collect();
        ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let keep: Vec<usize> = std::iter::once(0)
            .chain(ranked.into_iter().map(|r| r.0))
            .take(params.orders_per_type)
            .collect();
        remap.push(
            keep.iter()
                .enumerate()
                .map(|(new, old)| (*old, new))
                .collect(),
        );
        menu.orders.insert(
            ty.to_string(),
            keep.iter().map(|&i| all[t][i].clone()).collect(),
        );
    }

    let mut entries: Vec<PoolEntry> = evaluated.into_iter().flatten().collect();
    entries.sort_by(|a, b| a.value.total_cmp(&b.value));
    let mut kept = Vec::new();
    for mut e in entries {
        let mapped: Option<BTreeMap<PieceId, usize>> = e
            .orders
            .iter()
            .map(|(p, i)| {
                let t = type_pos[instance.piece(*p).expect("piece").type_id.as_str()];
                remap[t].get(i).map(|n| (*p, *n))
            })
            .collect();
        if let Some(m) = mapped {
            e.orders = m;
            kept.push(e);
            if kept.len() >= params.pool {
                break;
            }
        }
    }
    Ok((menu, kept))
}

/// Evaporates all trails, then lays `Q / value` once on every key used by
/// the iteration best or the global best (the smaller value when both use it).
pub fn evaporate_and_deposit(
    store: &mut PheromoneStore,
    pool: &OptimizationPool,
    iteration_best: Option<&PoolEntry>,
    params: &AcoParams,
    q: f64,
) {
    store.evaporate(params.rho);
    let mut amounts: BTreeMap<TrailKey, f64> = BTreeMap::new();
    for e in iteration_best.into_iter().chain(pool.best()) {
        for k in e.keys() {
            let v = amounts.entry(k).or_insert(f64::INFINITY);
            *v = v.min(e.value);
        }
    }
    for (k, v) in amounts {
        store.deposit(k, q / v.max(1e-9));
    }
}

fn sample_orders<R: Rng>(
    instance: &ProblemInstance,
    menu: &Menu,
    store: &PheromoneStore,
    params: &AcoParams,
    rng: &mut R,
) -> BTreeMap<PieceId, usize> {
    instance
        .pieces
        .iter()
        .map(|p| {
            let n = menu.orders[&p.type_id].len();
            if n == 1 {
                return (p.id, 0);
            }
            let logs: Vec<f64> = (0..n)
                .map(|i| params.alpha * store.get(&TrailKey::Order(p.id, i)).ln())
                .collect();
            (p.id, sample(&normalize_logs(&logs), rng))
        })
        .collect()
}

/// Colony search with default settings for seeds.
pub fn aco_optimize(
    instance: &ProblemInstance,
    objective: Objective,
    params: &AcoParams,
) -> Result<AcoResult, AcoError> {
    aco_optimize_with(instance, objective, params, &[])
}

/// Colony search that also starts from known plans.
///
/// Seeds must already satisfy the run's constraints; they enter the pool
/// directly and their decisions are replayed by the seeded ants.
pub fn aco_optimize_with(
    instance: &ProblemInstance,
    objective: Objective,
    params: &AcoParams,
    seeds: &[Seed],
) -> Result<AcoResult, AcoError> {
    params.validate()?;
    let greedy = solve_csp(
        instance,
        &SolveOptions {
            jump_budget: params.jump_budget,
            ..SolveOptions::default()
        },
    )
    .ok()
    .map(|s| s.plan);
    let greedy_value = greedy.as_ref().and_then(|p| score(&objective, params, p));

    let mut pool = OptimizationPool::new(params.pool);
    let mut store = PheromoneStore::new(params.tau0, params.tau_min);

    if params.iterations == 0 {
        let (plan, value) = match (greedy, greedy_value) {
            (Some(p), Some(v)) => (p, v),
            _ => return Err(AcoError::Infeasible),
        };
        let decisions = construct_greedy(instance, &BTreeMap::new(), params)?.decisions;
        let orders = instance
            .pieces
            .iter()
            .map(|p| (p.id, instance.type_of(p).default_order()))
            .collect();
        return Ok(AcoResult {
            best: plan,
            value,
            orders,
            decisions,
            pool,
            history: Vec::new(),
            store,
            tau_bounds: Vec::new(),
            q: params.q.unwrap_or(value.max(1e-9)),
        });
    }

    let (mut menu, screened) = screen(instance, &objective, params)?;
    let q = params
        .q
        .or(greedy_value)
        .or(screened.first().map(|e| e.value))
        .unwrap_or(1.0)
        .max(1e-9);
    for e in screened {
        pool.insert(e);
    }
    for s in seeds {
        let Some(value) = score(&objective, params, &s.plan) else {
            continue;
        };
        let orders = s
            .orders
            .iter()
            .filter_map(|(p, o)| {
                let piece = instance.piece(*p)?;
                Some((*p, menu.index_of(&piece.type_id, o)))
            })
            .collect();
        pool.insert(PoolEntry {
            value,
            plan: s.plan.clone(),
            orders,
            decisions: s.decisions.clone(),
        });
    }

    let first = instance.serial_order().first().map(|p| p.id);
    let mut history = Vec::with_capacity(params.iterations);
    let mut tau_bounds = Vec::with_capacity(params.iterations);
    for it in 0..params.iterations {
        let seeded = pool.len().min(params.ants / 4);
        let ants: Vec<Option<PoolEntry>> = par_map(params.ants, |a| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(params.seed, it as u64, a as u64));
            let (choice, replay, mutate) = if a < seeded {
                let e = &pool.entries()[a];
                let nodes: Vec<NodeId> = e.decisions.keys().copied().collect();
                let mutate = (!nodes.is_empty()).then(|| nodes[rng.random_range(0..nodes.len())]);
                (e.orders.clone(), e.decisions.clone(), mutate)
            } else {
                (
                    sample_orders(instance, &menu, &store, params, &mut rng),
                    BTreeMap::new(),
                    None,
                )
            };
            let orders = menu.resolve(instance, &choice);
            let mut chooser = AcoChooser {
                store: &store,
                params,
                rng: &mut rng,
                first,
                replay,
                mutate,
            };
            let c = construct_with(instance, &orders, params, &mut chooser).ok()?;
            entry_from(c, choice, &objective, params)
        });

        let mut iteration_best: Option<PoolEntry> = None;
        for e in ants.into_iter().flatten() {
            if iteration_best.as_ref().is_none_or(|b| e.value < b.value) {
                iteration_best = Some(e.clone());
            }
            pool.insert(e);
        }
        evaporate_and_deposit(&mut store, &pool, iteration_best.as_ref(), params, q);
        tau_bounds.push(store.bounds());
        history.push(pool.best().map_or(f64::INFINITY, |e| e.value));
    }

    let best = pool.best().cloned().ok_or(AcoError::Infeasible)?;
    Ok(AcoResult {
        orders: menu.resolve(instance, &best.orders),
        best: best.plan,
        value: best.value,
        decisions: best.decisions,
        pool,
        history,
        store,
        tau_bounds,
        q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::check_feasibility;
    use crate::model::fixtures::*;

    fn quick(iterations: usize, forecast: u32) -> AcoParams {
        AcoParams {
            iterations,
            forecast,
            ants: 10,
            ..AcoParams::default()
        }
    }

    #[test]
    fn single_table_piece_reaches_eighteen() {
        let r = aco_optimize(&table_a(), Objective::MinMakespan, &quick(5, 2)).unwrap();
        assert_eq!(r.value, 18.0);
        assert_eq!(check_feasibility(&r.best, &table_a()), vec![]);
    }

    #[test]
    fn zero_iterations_is_greedy() {
        let inst = table_a3();
        let r = aco_optimize(&inst, Objective::MinMakespan, &quick(0, 2)).unwrap();
        let g = solve_csp(&inst, &SolveOptions::default()).unwrap();
        assert_eq!(r.best, g.plan);
        assert!(r.history.is_empty());
    }

    #[test]
    fn fig6_optimum() {
        let inst = fig6();
        let r = aco_optimize(&inst, Objective::MinMakespan, &quick(50, 2)).unwrap();
        assert_eq!(r.best.makespan, 6);
        assert_eq!(check_feasibility(&r.best, &inst), vec![]);
    }

    #[test]
    fn history_is_monotone_and_pool_sorted() {
        let inst = table_a3();
        let r = aco_optimize(&inst, Objective::MinCost, &quick(20, 1)).unwrap();
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
        let v: Vec<f64> = r.pool.entries().iter().map(|e| e.value).collect();
        assert!(v.windows(2).all(|w| w[0] <= w[1]));
        assert!(r.pool.len() <= r.pool.capacity());
        let bound = 1.0 + 20.0 * r.q / r.value;
        for (lo, hi) in &r.tau_bounds {
            assert!(*lo >= 0.01 && *hi <= bound + 1e-9);
        }
    }

    #[test]
    fn length_cap_discards_long_plans() {
        let inst = fig6();
        let r = aco_optimize(&inst, Objective::MinCostAtLength(7), &quick(10, 1)).unwrap();
        assert!(r.best.makespan <= 7);
        assert!(matches!(
            aco_optimize(&inst, Objective::MinCostAtLength(3), &quick(3, 1)),
            Err(AcoError::Infeasible)
        ));
    }

    #[test]
    fn deposit_arithmetic() {
        let mut store = PheromoneStore::new(1.0, 0.01);
        let mut pool = OptimizationPool::new(3);
        let key = DecisionKey {
            node: NodeId::new(PieceId(1), StepId(1)),
            machine: crate::model::MachineId(1),
            delay: 0,
        };
        let e = PoolEntry {
            value: 43.0,
            plan: Plan::empty(),
            orders: BTreeMap::new(),
            decisions: [(key.node, key)].into_iter().collect(),
        };
        pool.insert(e.clone());
        let params = AcoParams {
            rho: 0.0,
            ..AcoParams::default()
        };
        evaporate_and_deposit(&mut store, &pool, Some(&e), &params, 43.0);
        assert!((store.get(&TrailKey::Decision(key)) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_result() {
        let inst = table_a3();
        let a = aco_optimize(&inst, Objective::MinMakespan, &quick(5, 2)).unwrap();
        let b = aco_optimize(&inst, Objective::MinMakespan, &quick(5, 2)).unwrap();
        assert_eq!(a.best, b.best);
        assert_eq!(a.history, b.history);
    }
}
