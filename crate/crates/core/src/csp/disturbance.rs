//! Disturbances absorbed by re-parameterizing the constraint network.
//!
//! Placements untouched by an event are pinned; only the affected nodes and
//! the rest of their chains are released and propagated again.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Deserialize;

use crate::model::{
    revalidate, syntax_error, DownInterval, Issue, MachineId, ParseError, Piece, PieceId, Plan,
    ProblemInstance, StepId,
};
use crate::protocol::Trace;

use super::{build_network_with, drive, ConstraintNetwork, CspError, Greedy, NodeId, NodeStatus};

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Disturbance {
    MachineDown {
        machine: u32,
        from: u32,
        #[serde(default)]
        to: Option<u32>,
    },
    CapabilityChange {
        #[serde(rename = "type")]
        type_id: String,
        step: u32,
        machine: u32,
        duration: u32,
    },
    NewPiece {
        id: u32,
        #[serde(rename = "type")]
        type_id: String,
        priority: u32,
    },
}

impl fmt::Display for Disturbance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Disturbance::MachineDown { machine, from, to } => match to {
                Some(to) => write!(f, "machine_down M{machine} [{from},{to})"),
                None => write!(f, "machine_down M{machine} [{from},∞)"),
            },
            Disturbance::CapabilityChange {
                type_id,
                step,
                machine,
                duration,
            } => write!(
                f,
                "capability_change {type_id}.WS{step} M{machine} = {duration}"
            ),
            Disturbance::NewPiece {
                id,
                type_id,
                priority,
            } => write!(f, "new_piece P{id} type {type_id} priority {priority}"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub events: Vec<Disturbance>,
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ParseError> {
    toml::from_str(text).map_err(|e| syntax_error(text, &e))
}

#[derive(Clone, Debug)]
pub struct DisturbanceReport {
    pub event: Disturbance,
    /// Nodes released for re-propagation, in id order.
    pub invalidated: Vec<NodeId>,
    pub before: Plan,
    pub after: Plan,
    pub trace: Trace,
}

/// Keeps an instance and its current plan and applies events one by one.
#[derive(Clone, Debug)]
pub struct Replanner {
    pub instance: ProblemInstance,
    pub plan: Plan,
}

fn semantic(path: &str, message: &str) -> CspError {
    CspError::Semantic(ParseError::Semantic(vec![Issue {
        path: path.to_string(),
        message: message.to_string(),
    }]))
}

impl Replanner {
    pub fn new(instance: ProblemInstance, plan: Plan) -> Self {
        Replanner { instance, plan }
    }

    /// Applies one event and re-propagates the affected part of the plan.
    pub fn apply(&mut self, event: &Disturbance) -> Result<DisturbanceReport, CspError> {
        let (instance, affected) = self.parameterize(event)?;
        let before = self.plan.clone();

        // release affected nodes and everything after them in their piece
        let mut released: BTreeSet<NodeId> = BTreeSet::new();
        for piece in &instance.pieces {
            let seq = before.piece_placements(piece.id);
            if let Some(i) = seq
                .iter()
                .position(|p| affected.contains(&NodeId::new(p.piece, p.step)))
            {
                released.extend(seq[i..].iter().map(|p| NodeId::new(p.piece, p.step)));
            }
        }

        let orders: BTreeMap<PieceId, Vec<StepId>> = instance
            .pieces
            .iter()
            .filter_map(|piece| {
                let seq = before.piece_placements(piece.id);
                (!seq.is_empty()).then(|| (piece.id, seq.iter().map(|p| p.step).collect()))
            })
            .collect();
        let horizon = instance.default_horizon().max(before.makespan).max(1);
        let mut net = build_network_with(&instance, &orders, Some(horizon))?;
        for p in &before.placements {
            let id = NodeId::new(p.piece, p.step);
            if !released.contains(&id) {
                pin(&mut net, id, *p);
            }
        }
        let (_, after, trace) = drive(net, &mut Greedy, None)?;
        self.instance = instance;
        self.plan = after.clone();
        Ok(DisturbanceReport {
            event: event.clone(),
            invalidated: released.into_iter().collect(),
            before,
            after,
            trace,
        })
    }

    /// Updated instance plus the nodes whose placement the event invalidates.
    fn parameterize(
        &self,
        event: &Disturbance,
    ) -> Result<(ProblemInstance, BTreeSet<NodeId>), CspError> {
        let mut inst = self.instance.clone();
        let mut affected = BTreeSet::new();
        match event {
            Disturbance::MachineDown { machine, from, to } => {
                let machine = MachineId(*machine);
                if !inst.machines.contains(&machine) {
                    return Err(CspError::UnknownMachine(machine));
                }
                if to.is_some_and(|t| t <= *from) {
                    return Err(semantic("events.to", "must be greater than `from`"));
                }
                let d = DownInterval {
                    machine,
                    from: *from,
                    to: *to,
                };
                inst.down.push(d);
                affected.extend(
                    self.plan
                        .placements
                        .iter()
                        .filter(|p| p.machine == machine && d.overlaps(p.start, p.finish))
                        .map(|p| NodeId::new(p.piece, p.step)),
                );
            }
            Disturbance::CapabilityChange {
                type_id,
                step,
                machine,
                duration,
            } => {
                let machine = MachineId(*machine);
                if !inst.machines.contains(&machine) {
                    return Err(CspError::UnknownMachine(machine));
                }
                let ty = inst
                    .types
                    .get_mut(type_id)
                    .ok_or_else(|| CspError::UnknownType(type_id.clone()))?;
                let spec = ty
                    .steps
                    .iter_mut()
                    .find(|s| s.id == StepId(*step))
                    .ok_or_else(|| semantic("events.step", "no such step in the type"))?;
                let old = spec.duration_on(machine);
                if *duration == 0 {
                    spec.durations.remove(&machine);
                } else {
                    spec.durations.insert(machine, *duration);
                }
                inst = revalidate(&inst)?;
                if old != (*duration > 0).then_some(*duration) {
                    let pieces: BTreeSet<PieceId> = inst
                        .pieces
                        .iter()
                        .filter(|p| &p.type_id == type_id)
                        .map(|p| p.id)
                        .collect();
                    affected.extend(
                        self.plan
                            .placements
                            .iter()
                            .filter(|p| {
                                pieces.contains(&p.piece)
                                    && p.step == StepId(*step)
                                    && p.machine == machine
                            })
                            .map(|p| NodeId::new(p.piece, p.step)),
                    );
                }
            }
            Disturbance::NewPiece {
                id,
                type_id,
                priority,
            } => {
                if !inst.types.contains_key(type_id) {
                    return Err(CspError::UnknownType(type_id.clone()));
                }
                inst.pieces.push(Piece {
                    id: PieceId(*id),
                    type_id: type_id.clone(),
                    priority: *priority,
                });
                inst = revalidate(&inst)?;
            }
        }
        Ok((inst, affected))
    }
}

/// Fixes a node to a placement taken from an earlier plan.
fn pin(net: &mut ConstraintNetwork, id: NodeId, p: crate::model::Placement) {
    net.calendar.reserve(p.machine, p.start, p.finish, id);
    let horizon = net.horizon;
    let node = net.nodes.get_mut(&id).expect("node of the plan");
    node.placement = Some(p);
    node.decision = Some(super::Decision {
        machine: p.machine,
        delay: 0,
    });
    node.status = NodeStatus::Placed;
    node.pinned = true;
    node.domain.hi = node.domain.hi.max(horizon);
}

/// One-shot form of [`Replanner::apply`].
pub fn apply_disturbance(
    instance: &ProblemInstance,
    plan: &Plan,
    event: &Disturbance,
) -> Result<(ProblemInstance, DisturbanceReport), CspError> {
    let mut r = Replanner::new(instance.clone(), plan.clone());
    let report = r.apply(event)?;
    Ok((r.instance, report))
}
