use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::csp::{
    build_network_with, default_fuel, drive, Candidate, ChoiceContext, Chooser, NodeId,
};
use crate::model::{min_jumps, PieceId, Plan, ProblemInstance, StepId};

use super::{aco_optimize_with, AcoError, AcoParams, ForecastScope, Objective, Seed};

/// A forecasting level of the sweep: 0 is none, 1 is one slot for the first
/// piece only, `d >= 2` is `d` slots for every piece.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Depth(pub u32);

impl Depth {
    pub fn forecast(self) -> (u32, ForecastScope) {
        match self.0 {
            0 => (0, ForecastScope::All),
            1 => (1, ForecastScope::FirstPiece),
            d => (d, ForecastScope::All),
        }
    }

    /// True when every decision allowed at `self` is allowed at `other`.
    pub fn within(self, other: Depth) -> bool {
        let (f, s) = self.forecast();
        let (g, t) = other.forecast();
        f == 0 || (f <= g && (t == ForecastScope::All || s == ForecastScope::FirstPiece))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub depth: u32,
    pub jumps: u32,
    pub length: Option<u32>,
    pub cost: Option<f64>,
}

impl SweepRow {
    pub fn feasible(&self) -> bool {
        self.length.is_some()
    }

    pub fn csv_header() -> &'static str {
        "depth,jumps,length,cost,feasible"
    }

    pub fn csv_line(&self) -> String {
        let mut s = format!("{},{},", self.depth, self.jumps);
        if let Some(l) = self.length {
            let _ = write!(s, "{l}");
        }
        s.push(',');
        if let Some(c) = self.cost {
            let _ = write!(s, "{c:.3}");
        }
        let _ = write!(s, ",{}", self.feasible());
        s
    }
}

/// Jump budgets from the summed per-piece minimum up to four more.
pub fn sweep_jumps(
    instance: &ProblemInstance,
    depths: &[u32],
    params: &AcoParams,
) -> Result<Vec<SweepRow>, AcoError> {
    let base: u32 = instance
        .pieces
        .iter()
        .map(|p| min_jumps(instance.type_of(p)))
        .sum();
    let budgets: Vec<u32> = (base..=base + 4).collect();
    sweep_jumps_over(instance, depths, &budgets, params)
}

/// Best makespan for every (depth, jump budget) pair.
///
/// Runs go by ascending budget and depth; each run starts from the best plans
/// of the runs whose decision space it contains, so a larger budget or a
/// deeper forecast never reports a longer plan.
pub fn sweep_jumps_over(
    instance: &ProblemInstance,
    depths: &[u32],
    budgets: &[u32],
    params: &AcoParams,
) -> Result<Vec<SweepRow>, AcoError> {
    let mut depths: Vec<Depth> = depths.iter().map(|d| Depth(*d)).collect();
    depths.sort();
    depths.dedup();
    let mut budgets = budgets.to_vec();
    budgets.sort_unstable();
    budgets.dedup();

    let mut done: BTreeMap<(Depth, u32), Option<Seed>> = BTreeMap::new();
    for &j in &budgets {
        for &d in &depths {
            let seeds: Vec<Seed> = done
                .iter()
                .filter(|((d2, j2), _)| d2.within(d) && *j2 <= j)
                .filter_map(|(_, s)| s.clone())
                .collect();
            let (forecast, scope) = d.forecast();
            let run = AcoParams {
                forecast,
                scope,
                jump_budget: Some(j),
                ..params.clone()
            };
            let seed = match aco_optimize_with(instance, Objective::MinMakespan, &run, &seeds) {
                Ok(r) => Some(r.seed()),
                Err(AcoError::Infeasible) => None,
                Err(e) => return Err(e),
            };
            done.insert((d, j), seed);
        }
    }
    Ok(done
        .into_iter()
        .map(|((d, j), s)| SweepRow {
            depth: d.0,
            jumps: j,
            length: s.as_ref().map(|s| s.plan.makespan),
            cost: s.as_ref().map(|s| s.plan.cost),
        })
        .collect())
}

/// Replays a fixed prefix of choice indices, then takes index 0, recording
/// the window size at every call.
struct Script<'a> {
    prefix: &'a [usize],
    taken: Vec<(usize, usize)>,
    params: &'a AcoParams,
    first: Option<PieceId>,
}

impl Chooser for Script<'_> {
    fn forecast(&self, node: NodeId) -> u32 {
        self.params.depth_for(node, self.first)
    }

    fn choose(&mut self, _ctx: &ChoiceContext, window: &[Candidate]) -> usize {
        let i = self.taken.len();
        let pick = self
            .prefix
            .get(i)
            .copied()
            .unwrap_or(0)
            .min(window.len() - 1);
        self.taken.push((pick, window.len()));
        pick
    }
}

/// Best objective over every decision sequence the construction can take
/// for fixed step orders; refuses when more than `limit` runs are needed.
pub fn exhaustive_best(
    instance: &ProblemInstance,
    orders: &BTreeMap<PieceId, Vec<StepId>>,
    objective: Objective,
    params: &AcoParams,
    limit: usize,
) -> Result<Option<(f64, Plan)>, AcoError> {
    let first = instance.serial_order().first().map(|p| p.id);
    let mut prefix: Vec<usize> = Vec::new();
    let mut best: Option<(f64, Plan)> = None;
    let mut runs = 0usize;
    loop {
        runs += 1;
        if runs > limit {
            return Err(AcoError::InvalidParams(format!(
                "decision space exceeds {limit} constructions"
            )));
        }
        let mut script = Script {
            prefix: &prefix,
            taken: Vec::new(),
            params,
            first,
        };
        let mut net = build_network_with(instance, orders, None)?;
        net.set_jump_budget(params.jump_budget);
        let fuel = 4 * default_fuel(net.nodes.len());
        if let Ok((_, plan, _)) = drive(net, &mut script, Some(fuel)) {
            if let Some(v) = objective.value(&plan) {
                if best.as_ref().is_none_or(|(b, _)| v < *b) {
                    best = Some((v, plan));
                }
            }
        }
        let taken = script.taken;
        match taken.iter().rposition(|(c, n)| c + 1 < *n) {
            Some(i) => {
                prefix = taken[..i].iter().map(|t| t.0).collect();
                prefix.push(taken[i].0 + 1);
            }
            None => return Ok(best),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;

    #[test]
    fn depth_containment() {
        assert!(Depth(0).within(Depth(1)));
        assert!(Depth(1).within(Depth(2)));
        assert!(Depth(0).within(Depth(2)));
        assert!(!Depth(2).within(Depth(1)));
        assert!(!Depth(2).within(Depth(0)));
    }

    #[test]
    fn csv_rows() {
        let r = SweepRow {
            depth: 0,
            jumps: 5,
            length: None,
            cost: None,
        };
        assert_eq!(r.csv_line(), "0,5,,,false");
        let r = SweepRow {
            depth: 2,
            jumps: 7,
            length: Some(43),
            cost: Some(51.25),
        };
        assert_eq!(r.csv_line(), "2,7,43,51.250,true");
    }

    #[test]
    fn budget_below_minimum_is_infeasible() {
        let inst = table_a();
        let params = AcoParams {
            iterations: 2,
            ants: 4,
            ..AcoParams::default()
        };
        let rows = sweep_jumps_over(&inst, &[0], &[1, 2], &params).unwrap();
        assert!(!rows[0].feasible());
        assert_eq!(rows[1].length, Some(18));
    }

    fn dominance(pieces: usize, max_f: u32) {
        let mut inst = fig6();
        inst.pieces.truncate(pieces);
        // room enough that no enlargement pass repeats the choices
        inst.horizon_hint = Some(30);
        let mut best = Vec::new();
        for f in 0..=max_f {
            let params = AcoParams {
                forecast: f,
                ..AcoParams::default()
            };
            let (v, _) = exhaustive_best(
                &inst,
                &BTreeMap::new(),
                Objective::MinCost,
                &params,
                200_000,
            )
            .unwrap()
            .unwrap();
            best.push(v);
        }
        assert!(best.windows(2).all(|w| w[1] <= w[0]), "{best:?}");
    }

    #[test]
    fn deeper_forecast_never_worsens_exhaustive_best() {
        dominance(1, 2);
        dominance(2, 1);
    }

    #[test]
    fn exhaustive_search_is_guarded() {
        let params = AcoParams {
            forecast: 2,
            ..AcoParams::default()
        };
        assert!(matches!(
            exhaustive_best(
                &fig6(),
                &BTreeMap::new(),
                Objective::MinMakespan,
                &params,
                50
            ),
            Err(AcoError::InvalidParams(_))
        ));
    }
}
