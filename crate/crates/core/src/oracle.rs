//! Exhaustive branch-and-bound reference solver for small instances.
//!
//! The search places working steps one at a time in non-decreasing start
//! order. Any feasible plan can be listed that way, and re-placing its steps
//! in that order at their earliest admissible start never moves a step later,
//! so for makespan it suffices to try the earliest start of every
//! (step, machine) choice. Cost objectives also pay for waiting, which the
//! left shift can increase, so there every admissible start is tried.

use std::collections::HashMap;

use thiserror::Error;

use crate::aco::Objective;
use crate::model::{earliest_up as up_from, MachineId, Placement, Plan, ProblemInstance, StepId};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleLimits {
    pub max_pieces: usize,
    pub max_steps: usize,
    pub max_machines: usize,
    pub max_horizon: u32,
    pub max_states: u64,
}

impl Default for OracleLimits {
    fn default() -> Self {
        Self {
            max_pieces: 3,
            max_steps: 4,
            max_machines: 3,
            max_horizon: 24,
            max_states: 10_000_000,
        }
    }
}

impl OracleLimits {
    /// Describes the first limit `instance` breaks, if any.
    pub fn check(&self, instance: &ProblemInstance) -> Result<(), OracleError> {
        let too = |what: String| Err(OracleError::LimitExceeded(what));
        if instance.pieces.len() > self.max_pieces {
            return too(format!(
                "{} pieces > {}",
                instance.pieces.len(),
                self.max_pieces
            ));
        }
        if instance.machines.len() > self.max_machines {
            return too(format!(
                "{} machines > {}",
                instance.machines.len(),
                self.max_machines
            ));
        }
        for p in &instance.pieces {
            let steps = instance.type_of(p).steps.len();
            if steps > self.max_steps {
                return too(format!("{} has {steps} steps > {}", p.id, self.max_steps));
            }
        }
        let horizon = instance
            .horizon_hint
            .unwrap_or_else(|| instance.default_horizon());
        if horizon > self.max_horizon {
            return too(format!("horizon {horizon} > {}", self.max_horizon));
        }
        Ok(())
    }
}

/// Order in which the candidates of one search node are tried.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CandidateOrder {
    #[default]
    Forward,
    Reverse,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    pub plan: Plan,
    pub value: f64,
    pub states: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("LimitExceeded: {0}")]
    LimitExceeded(String),
    #[error("Infeasible: no plan satisfies the objective")]
    Infeasible,
}

/// Provably optimal plan for `objective`.
///
/// Among equally good plans the first one found wins.
pub fn brute_force(
    instance: &ProblemInstance,
    objective: Objective,
    limits: &OracleLimits,
) -> Result<OracleResult, OracleError> {
    brute_force_ordered(instance, objective, limits, CandidateOrder::Forward)
}

pub fn brute_force_ordered(
    instance: &ProblemInstance,
    objective: Objective,
    limits: &OracleLimits,
    order: CandidateOrder,
) -> Result<OracleResult, OracleError> {
    limits.check(instance)?;
    let mut search = Search::new(instance, objective, limits.max_states, order);
    search.dfs()?;
    let states = search.states;
    match search.best {
        Some((value, plan)) => Ok(OracleResult {
            plan,
            value,
            states,
        }),
        None => Err(OracleError::Infeasible),
    }
}

struct Op {
    piece: usize,
    step: StepId,
    group: u32,
    /// (machine index, duration)
    choices: Vec<(usize, u32)>,
    /// Same step of same-type pieces with a smaller priority value.
    before: Vec<usize>,
    min_len: u32,
    min_cost: f64,
}

struct Search<'a> {
    instance: &'a ProblemInstance,
    objective: Objective,
    order: CandidateOrder,
    max_states: u64,
    states: u64,
    ops: Vec<Op>,
    machines: Vec<MachineId>,
    rates: Vec<f64>,
    /// Start and op index of the latest placement. Later placements start
    /// later, or at the same slot with a larger op index.
    last: Option<(u32, usize)>,
    placed: Vec<Option<Placement>>,
    piece_ready: Vec<u32>,
    piece_machine: Vec<Option<usize>>,
    piece_left: Vec<u32>,
    machine_free: Vec<u32>,
    /// Remaining work of ops that only one machine can do, per machine.
    only_left: Vec<u32>,
    left_work: u32,
    left_cost: f64,
    makespan: u32,
    cost: f64,
    grid: u32,
    best: Option<(f64, Plan)>,
    /// Best partial value seen per search state.
    seen: HashMap<Vec<u32>, f64>,
    /// Ops some other op must follow under the priority rule.
    leaders: Vec<usize>,
}

impl<'a> Search<'a> {
    fn new(
        instance: &'a ProblemInstance,
        objective: Objective,
        max_states: u64,
        order: CandidateOrder,
    ) -> Self {
        let machines = instance.machines.clone();
        let rates: Vec<f64> = machines.iter().map(|&m| instance.cost.rate(m)).collect();
        let mut ops: Vec<Op> = Vec::new();
        for (pi, piece) in instance.pieces.iter().enumerate() {
            for spec in &instance.type_of(piece).steps {
                let choices: Vec<(usize, u32)> = machines
                    .iter()
                    .enumerate()
                    .filter_map(|(k, &m)| spec.duration_on(m).map(|d| (k, d)))
                    .collect();
                let min_len = choices.iter().map(|c| c.1).min().unwrap_or(0);
                let min_cost = choices
                    .iter()
                    .map(|&(k, d)| d as f64 * rates[k])
                    .fold(f64::INFINITY, f64::min);
                ops.push(Op {
                    piece: pi,
                    step: spec.id,
                    group: spec.group,
                    choices,
                    before: Vec::new(),
                    min_len,
                    min_cost,
                });
            }
        }
        for a in 0..ops.len() {
            let pa = &instance.pieces[ops[a].piece];
            let before: Vec<usize> = (0..ops.len())
                .filter(|&b| {
                    let pb = &instance.pieces[ops[b].piece];
                    ops[b].step == ops[a].step
                        && pb.type_id == pa.type_id
                        && pb.priority < pa.priority
                })
                .collect();
            ops[a].before = before;
        }
        let mut leaders: Vec<usize> = ops.iter().flat_map(|o| o.before.iter().copied()).collect();
        leaders.sort_unstable();
        leaders.dedup();
        let mut only_left = vec![0; machines.len()];
        for op in &ops {
            if let [(k, d)] = op.choices[..] {
                only_left[k] += d;
            }
        }
        let mut piece_left = vec![0; instance.pieces.len()];
        for op in &ops {
            piece_left[op.piece] += op.min_len;
        }
        let left_work = ops.iter().map(|o| o.min_len).sum();
        let left_cost = ops.iter().map(|o| o.min_cost).sum();
        let serial: u32 = instance
            .pieces
            .iter()
            .map(|p| instance.type_of(p).total_work())
            .sum::<u32>()
            + instance.down.iter().filter_map(|d| d.to).max().unwrap_or(0);
        let grid = match objective {
            Objective::MinCostAtLength(l) => l,
            _ => serial,
        };
        Search {
            instance,
            objective,
            order,
            max_states,
            states: 0,
            placed: vec![None; ops.len()],
            ops,
            rates,
            last: None,
            piece_ready: vec![0; instance.pieces.len()],
            piece_machine: vec![None; instance.pieces.len()],
            piece_left,
            machine_free: vec![0; machines.len()],
            machines,
            only_left,
            left_work,
            left_cost,
            makespan: 0,
            cost: 0.0,
            grid,
            best: None,
            seen: HashMap::new(),
            leaders,
        }
    }

    fn bound(&self) -> f64 {
        match self.objective {
            Objective::MinMakespan => {
                if self.left_work == 0 {
                    return self.makespan as f64;
                }
                // no further placement starts before `floor`
                let floor = self.last.map_or(0, |(s, _)| s);
                let mut lb = self.makespan;
                for (p, &left) in self.piece_left.iter().enumerate() {
                    if left > 0 {
                        lb = lb.max(self.piece_ready[p].max(floor) + left);
                    }
                }
                let mut used = 0;
                for (k, &free) in self.machine_free.iter().enumerate() {
                    let from = free.max(floor);
                    used += from;
                    if self.only_left[k] > 0 {
                        lb = lb.max(from + self.only_left[k]);
                    }
                }
                let nm = self.machines.len().max(1) as u32;
                lb = lb.max((used + self.left_work).div_ceil(nm));
                lb as f64
            }
            Objective::MinCost | Objective::MinCostAtLength(_) => self.cost + self.left_cost,
        }
    }

    fn ready(&self, i: usize) -> bool {
        let op = &self.ops[i];
        self.placed[i].is_none()
            && !self
                .ops
                .iter()
                .enumerate()
                .any(|(j, o)| o.piece == op.piece && o.group < op.group && self.placed[j].is_none())
            && op.before.iter().all(|&b| self.placed[b].is_some())
    }

    /// (op, machine index, start) choices at the current node.
    fn candidates(&self) -> Vec<(usize, usize, u32)> {
        let mut out = Vec::new();
        for i in (0..self.ops.len()).filter(|&i| self.ready(i)) {
            let op = &self.ops[i];
            let mut lb = match self.last {
                None => 0,
                Some((s, j)) if i > j => s,
                Some((s, _)) => s + 1,
            };
            lb = lb.max(self.piece_ready[op.piece]);
            for &b in &op.before {
                if let Some(p) = self.placed[b] {
                    lb = lb.max(p.start + 1);
                }
            }
            for &(k, d) in &op.choices {
                let m = self.machines[k];
                let from = lb.max(self.machine_free[k]);
                let first = up_from(self.instance, m, from, d);
                match self.objective {
                    Objective::MinMakespan => out.push((i, k, first)),
                    _ => {
                        let mut s = first;
                        while s.saturating_add(d) <= self.grid {
                            out.push((i, k, s));
                            s = up_from(self.instance, m, s + 1, d);
                        }
                    }
                }
            }
        }
        if self.order == CandidateOrder::Reverse {
            out.reverse();
        }
        out
    }

    fn dfs(&mut self) -> Result<(), OracleError> {
        self.states += 1;
        if self.states > self.max_states {
            return Err(OracleError::LimitExceeded(format!(
                "more than {} states expanded",
                self.max_states
            )));
        }
        if self.left_work == 0 && self.placed.iter().all(Option::is_some) {
            self.record();
            return Ok(());
        }
        if let Some((best, _)) = &self.best {
            if self.bound() >= best - 1e-9 {
                return Ok(());
            }
        }
        if self.dominated() {
            return Ok(());
        }
        for (i, k, s) in self.candidates() {
            let saved = self.place(i, k, s);
            if let Objective::MinCostAtLength(l) = self.objective {
                if self.makespan > l {
                    self.unplace(i, saved);
                    continue;
                }
            }
            let result = self.dfs();
            self.unplace(i, saved);
            result?;
        }
        Ok(())
    }

    /// True when the same state was reached before with a value no worse.
    fn dominated(&mut self) -> bool {
        const MEMO_CAP: usize = 4_000_000;
        let value = match self.objective {
            Objective::MinMakespan => self.makespan as f64,
            _ => self.cost,
        };
        let mut key: Vec<u32> = Vec::with_capacity(self.ops.len() / 32 + 16);
        for chunk in self.placed.chunks(32) {
            let bits = chunk
                .iter()
                .enumerate()
                .fold(0u32, |acc, (b, p)| acc | (u32::from(p.is_some()) << b));
            key.push(bits);
        }
        let (s, j) = self.last.map_or((0, u32::MAX), |(s, j)| (s, j as u32));
        key.extend([s, j]);
        key.extend(&self.piece_ready);
        key.extend(&self.machine_free);
        for &l in &self.leaders {
            key.push(self.placed[l].map_or(u32::MAX, |p| p.start));
        }
        if self.objective != Objective::MinMakespan {
            key.extend(
                self.piece_machine
                    .iter()
                    .map(|m| m.map_or(u32::MAX, |k| k as u32)),
            );
        }
        match self.seen.get_mut(&key) {
            Some(v) if *v <= value + 1e-12 => true,
            Some(v) => {
                *v = value;
                false
            }
            None => {
                if self.seen.len() < MEMO_CAP {
                    self.seen.insert(key, value);
                }
                false
            }
        }
    }

    fn record(&mut self) {
        let placements: Vec<Placement> = self.placed.iter().flatten().copied().collect();
        let plan = Plan::new(placements, self.instance);
        if let Some(v) = self.objective.value(&plan) {
            if self.best.as_ref().is_none_or(|(b, _)| v < b - 1e-9) {
                self.best = Some((v, plan));
            }
        }
    }

    fn place(&mut self, i: usize, k: usize, start: u32) -> Saved {
        let op = &self.ops[i];
        let d = op
            .choices
            .iter()
            .find(|c| c.0 == k)
            .map(|c| c.1)
            .unwrap_or(0);
        let p = op.piece;
        let saved = Saved {
            last: self.last,
            piece_ready: self.piece_ready[p],
            piece_machine: self.piece_machine[p],
            machine_free: self.machine_free[k],
            makespan: self.makespan,
            cost: self.cost,
        };
        let machine = self.machines[k];
        let mut cost = d as f64 * self.rates[k];
        if let Some(prev) = self.piece_machine[p] {
            if prev != k {
                cost += self.instance.cost.jump_cost;
            }
            let ready = up_from(self.instance, machine, self.piece_ready[p], d);
            cost += self.instance.cost.storage_cost * start.saturating_sub(ready) as f64;
        }
        self.placed[i] = Some(Placement {
            piece: self.instance.pieces[p].id,
            step: op.step,
            machine,
            start,
            finish: start + d,
        });
        self.last = Some((start, i));
        self.piece_ready[p] = start + d;
        self.piece_machine[p] = Some(k);
        self.piece_left[p] -= op.min_len;
        self.machine_free[k] = start + d;
        if let [(k, d)] = op.choices[..] {
            self.only_left[k] -= d;
        }
        self.left_work -= op.min_len;
        self.left_cost -= op.min_cost;
        self.makespan = self.makespan.max(start + d);
        self.cost += cost;
        saved
    }

    fn unplace(&mut self, i: usize, saved: Saved) {
        let op = &self.ops[i];
        let p = op.piece;
        let placement = self.placed[i].take().expect("placed");
        let k = self
            .machines
            .iter()
            .position(|&m| m == placement.machine)
            .expect("known machine");
        self.last = saved.last;
        self.piece_ready[p] = saved.piece_ready;
        self.piece_machine[p] = saved.piece_machine;
        self.piece_left[p] += op.min_len;
        self.machine_free[k] = saved.machine_free;
        if let [(k, d)] = op.choices[..] {
            self.only_left[k] += d;
        }
        self.left_work += op.min_len;
        self.left_cost += op.min_cost;
        self.makespan = saved.makespan;
        self.cost = saved.cost;
    }
}

struct Saved {
    last: Option<(u32, usize)>,
    piece_ready: u32,
    piece_machine: Option<usize>,
    machine_free: u32,
    makespan: u32,
    cost: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use crate::model::{check_feasibility, parse_problem};

    #[test]
    fn fig6_makespan_is_six() {
        let inst = fig6();
        let r = brute_force(&inst, Objective::MinMakespan, &OracleLimits::default()).unwrap();
        assert_eq!(r.value, 6.0);
        assert_eq!(r.plan.makespan, 6);
        assert_eq!(check_feasibility(&r.plan, &inst), vec![]);
        let rev = brute_force_ordered(
            &inst,
            Objective::MinMakespan,
            &OracleLimits::default(),
            CandidateOrder::Reverse,
        )
        .unwrap();
        assert_eq!(rev.value, 6.0);
    }

    #[test]
    fn single_step_single_machine() {
        let inst = parse_problem(
            "machines = [1]\n[[types.X]]\nid = 1\ngroup = 1\ndurations = { 1 = 3 }\n\
             [[pieces]]\nid = 1\ntype = \"X\"\npriority = 1\n",
        )
        .unwrap();
        let r = brute_force(&inst, Objective::MinMakespan, &OracleLimits::default()).unwrap();
        assert_eq!(r.value, 3.0);
        assert_eq!(r.plan.placements[0].start, 0);
    }

    #[test]
    fn table_a_single_piece_needs_wider_limits() {
        let inst = table_a().with_piece_spec("A=1").unwrap();
        assert!(matches!(
            brute_force(&inst, Objective::MinMakespan, &OracleLimits::default()),
            Err(OracleError::LimitExceeded(_))
        ));
        let limits = OracleLimits {
            max_steps: 11,
            max_horizon: 40,
            ..OracleLimits::default()
        };
        let r = brute_force(&inst, Objective::MinMakespan, &limits).unwrap();
        assert_eq!(r.value, 18.0);
        assert_eq!(check_feasibility(&r.plan, &inst), vec![]);
    }

    #[test]
    fn cost_objectives() {
        let mut inst = fig6();
        inst.pieces.truncate(2);
        let limits = OracleLimits::default();
        let r = brute_force(&inst, Objective::MinCost, &limits).unwrap();
        // 2 × (1 + 2 + 1) processing, no jumps, no waiting
        assert!((r.value - 8.0).abs() < 1e-9, "{}", r.value);
        assert_eq!(r.plan.jumps, 0);
        assert_eq!(
            brute_force(&inst, Objective::MinCostAtLength(3), &limits),
            Err(OracleError::Infeasible)
        );
        let r = brute_force(&inst, Objective::MinCostAtLength(5), &limits).unwrap();
        assert!(r.plan.makespan <= 5);
        assert_eq!(check_feasibility(&r.plan, &inst), vec![]);
    }

    #[test]
    fn state_limit() {
        let limits = OracleLimits {
            max_states: 5,
            ..OracleLimits::default()
        };
        assert!(matches!(
            brute_force(&fig6(), Objective::MinMakespan, &limits),
            Err(OracleError::LimitExceeded(_))
        ));
    }

    #[test]
    fn empty_instance() {
        let mut inst = fig6();
        inst.pieces.clear();
        let r = brute_force(&inst, Objective::MinMakespan, &OracleLimits::default()).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.plan.placements.is_empty());
    }
}
