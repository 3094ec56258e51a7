use std::collections::BTreeMap;

use rand::Rng;

use crate::csp::{
    build_network_with, default_fuel, drive, Candidate, ChoiceContext, Chooser, CspError, Greedy,
    NodeId,
};
use crate::model::{PieceId, Plan, ProblemInstance, StepId};

use super::{decision_probabilities, AcoParams, DecisionKey, PheromoneStore};

/// A constructed plan and the decisions that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Construction {
    pub plan: Plan,
    pub decisions: BTreeMap<NodeId, DecisionKey>,
}

/// Samples (machine, delay) decisions from pheromone and heuristic.
///
/// Nodes listed in `replay` repeat their recorded decision when it is still
/// in the window; `mutate` names one node that samples regardless.
pub struct AcoChooser<'a, R: Rng> {
    pub store: &'a PheromoneStore,
    pub params: &'a AcoParams,
    pub rng: &'a mut R,
    pub first: Option<PieceId>,
    pub replay: BTreeMap<NodeId, DecisionKey>,
    pub mutate: Option<NodeId>,
}

impl<R: Rng> AcoChooser<'_, R> {
    fn keys(ctx: &ChoiceContext, window: &[Candidate]) -> Vec<DecisionKey> {
        let base = window[0].start;
        window
            .iter()
            .map(|c| DecisionKey {
                node: ctx.node,
                machine: c.machine,
                delay: c.start - base,
            })
            .collect()
    }
}

impl<R: Rng> Chooser for AcoChooser<'_, R> {
    fn forecast(&self, node: NodeId) -> u32 {
        self.params.depth_for(node, self.first)
    }

    fn choose(&mut self, ctx: &ChoiceContext, window: &[Candidate]) -> usize {
        let keys = Self::keys(ctx, window);
        if self.mutate != Some(ctx.node) {
            if let Some(want) = self.replay.get(&ctx.node) {
                if let Some(i) = keys.iter().position(|k| k == want) {
                    return i;
                }
            }
        }
        if keys.len() == 1 {
            return 0;
        }
        let prev = ctx.previous_machine;
        let p = decision_probabilities(&keys, self.store, self.params, |k| {
            let jump = prev.is_some_and(|m| m != k.machine);
            1.0 / (1.0 + k.delay as f64 + f64::from(u8::from(jump)))
        });
        sample(&p, self.rng)
    }
}

/// Index drawn from a probability vector.
pub(crate) fn sample<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let mut u: f64 = rng.random();
    for (i, &x) in p.iter().enumerate() {
        if u < x {
            return i;
        }
        u -= x;
    }
    p.len() - 1
}

pub(crate) fn construct_with(
    instance: &ProblemInstance,
    orders: &BTreeMap<PieceId, Vec<StepId>>,
    params: &AcoParams,
    chooser: &mut dyn Chooser,
) -> Result<Construction, CspError> {
    let mut net = build_network_with(instance, orders, None)?;
    net.set_jump_budget(params.jump_budget);
    let fuel = 4 * default_fuel(net.nodes.len());
    let (net, plan, _) = drive(net, chooser, Some(fuel))?;
    let decisions = net
        .decisions()
        .into_iter()
        .map(|(node, d)| {
            (
                node,
                DecisionKey {
                    node,
                    machine: d.machine,
                    delay: d.delay,
                },
            )
        })
        .collect();
    Ok(Construction { plan, decisions })
}

/// One ant: chain propagation with sampled decisions for the given orders.
pub fn construct_solution<R: Rng>(
    instance: &ProblemInstance,
    orders: &BTreeMap<PieceId, Vec<StepId>>,
    store: &PheromoneStore,
    params: &AcoParams,
    rng: &mut R,
) -> Result<Construction, CspError> {
    let first = instance.serial_order().first().map(|p| p.id);
    let mut chooser = AcoChooser {
        store,
        params,
        rng,
        first,
        replay: BTreeMap::new(),
        mutate: None,
    };
    construct_with(instance, orders, params, &mut chooser)
}

/// The same construction with earliest-start, lowest-machine choices.
pub fn construct_greedy(
    instance: &ProblemInstance,
    orders: &BTreeMap<PieceId, Vec<StepId>>,
    params: &AcoParams,
) -> Result<Construction, CspError> {
    construct_with(instance, orders, params, &mut Greedy)
}
