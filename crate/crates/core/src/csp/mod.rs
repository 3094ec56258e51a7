//! Constraint network of working-step agents.
//!
//! Every (piece, working step) pair is a node. Nodes of one piece form a
//! chain in technological order; a node receives its predecessor's finish,
//! looks for the earliest start that fits a capable free machine, reserves it
//! and passes its own finish on. When no start fits, it asks the predecessor
//! for another finish. Cross-chain constraints (machine exclusivity and
//! priority order) are checked globally afterwards, and empty value sets
//! trigger domain enlargement.

mod calendar;
mod disturbance;
mod network;
mod solve;

pub use calendar::{MachineCalendar, Reservation};
pub use disturbance::{
    apply_disturbance, parse_scenario, Disturbance, DisturbanceReport, Replanner, Scenario,
};
#[cfg(test)]
pub(crate) use network::check_order;
pub use network::{
    build_network, build_network_with, enlarge_domains, global_check, local_propagate, Chain,
    Conflict, ConflictKind, ConstraintNetwork, GlobalOutcome, LocalOutcome, MAX_ENLARGEMENTS,
};
pub use solve::{default_fuel, drive, solve_csp, CspExecutor, Solution, SolveOptions};

use std::fmt;

use thiserror::Error;

use crate::model::{MachineId, ParseError, PieceId, StepId, StepSpec};
use crate::protocol::ProtocolError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId {
    pub piece: PieceId,
    pub step: StepId,
}

impl NodeId {
    pub fn new(piece: PieceId, step: StepId) -> Self {
        NodeId { piece, step }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.piece, self.step)
    }
}

/// Candidate start slots `[lo, hi)`. Empty when `lo >= hi`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Domain {
    pub lo: u32,
    pub hi: u32,
}

impl Domain {
    pub fn new(lo: u32, hi: u32) -> Self {
        Domain { lo, hi }
    }

    pub fn is_empty(&self) -> bool {
        self.lo >= self.hi
    }

    pub fn len(&self) -> u32 {
        self.hi.saturating_sub(self.lo)
    }

    pub fn contains(&self, v: u32) -> bool {
        self.lo <= v && v < self.hi
    }

    pub fn values(&self) -> std::ops::Range<u32> {
        self.lo..self.hi.max(self.lo)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeStatus {
    Idle,
    /// Holds a locally consistent placement not yet confirmed globally.
    Propagated,
    /// Demoted by the global check; waits for re-propagation.
    Conflicted,
    Placed,
}

/// A local decision: machine and the forecasting delay beyond the earliest start.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Decision {
    pub machine: MachineId,
    pub delay: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeState {
    pub id: NodeId,
    pub spec: StepSpec,
    pub type_id: String,
    pub priority: u32,
    pub predecessor: Option<NodeId>,
    pub successor: Option<NodeId>,
    pub domain: Domain,
    pub placement: Option<crate::model::Placement>,
    pub decision: Option<Decision>,
    pub status: NodeStatus,
    /// Lexicographic lower bound `(start, machine)` for the next choice.
    pub(crate) cursor: Option<(u32, u32)>,
    /// RequestAlternative messages sent in the current pass.
    pub(crate) requests: u32,
    /// Kept from an earlier plan; never moved unless demoted.
    pub pinned: bool,
}

/// A feasible (start, machine) position for a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Candidate {
    pub start: u32,
    pub machine: MachineId,
    pub duration: u32,
}

/// Local view handed to a [`Chooser`].
#[derive(Clone, Copy, Debug)]
pub struct ChoiceContext {
    pub node: NodeId,
    pub position: usize,
    pub previous_machine: Option<MachineId>,
}

/// Picks one candidate out of a node's window.
///
/// The window holds every feasible candidate whose start lies within
/// `forecast(node)` slots of the earliest one, sorted by (start, machine).
pub trait Chooser {
    fn forecast(&self, _node: NodeId) -> u32 {
        0
    }

    fn choose(&mut self, ctx: &ChoiceContext, window: &[Candidate]) -> usize;
}

/// Earliest start, then lowest machine id.
#[derive(Clone, Copy, Debug, Default)]
pub struct Greedy;

impl Chooser for Greedy {
    fn choose(&mut self, _ctx: &ChoiceContext, _window: &[Candidate]) -> usize {
        0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Endpoint {
    Node(NodeId),
    Controller,
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Node(n) => n.fmt(f),
            Endpoint::Controller => f.write_str("ctl"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MessageKind {
    Propagate(Vec<u32>),
    RequestAlternative,
    GlobalCheck,
    Enlarge(u32),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PropagationMessage {
    pub kind: MessageKind,
    pub sender: Endpoint,
    pub receiver: Endpoint,
}

impl fmt::Display for PropagationMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (name, payload) = match &self.kind {
            MessageKind::Propagate(set) => {
                let vals: Vec<String> = set.iter().map(u32::to_string).collect();
                ("Propagate", format!("{{{}}}", vals.join(",")))
            }
            MessageKind::RequestAlternative => ("RequestAlternative", "-".to_string()),
            MessageKind::GlobalCheck => ("GlobalCheck", "-".to_string()),
            MessageKind::Enlarge(h) => ("Enlarge", format!("horizon={h}")),
        };
        write!(f, "MSG {name} {}→{} {payload}", self.sender, self.receiver)
    }
}

#[derive(Debug, Error)]
pub enum CspError {
    #[error("HorizonExhausted: no plan within horizon {horizon} after {attempts} enlargements")]
    HorizonExhausted { horizon: u32, attempts: u32 },
    #[error("UnknownMachine: {0}")]
    UnknownMachine(MachineId),
    #[error("UnknownType: `{0}`")]
    UnknownType(String),
    #[error("UnknownPiece: {0}")]
    UnknownPiece(PieceId),
    #[error("invalid step order for {piece}: {reason}")]
    InvalidOrder { piece: PieceId, reason: String },
    #[error(transparent)]
    Semantic(#[from] ParseError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("protocol halted in {0:?} without a consistent plan")]
    Stalled(Vec<String>),
}

impl CspError {
    /// Variant name as printed on the command line.
    pub fn name(&self) -> &'static str {
        match self {
            CspError::HorizonExhausted { .. } => "HorizonExhausted",
            CspError::UnknownMachine(_) => "UnknownMachine",
            CspError::UnknownType(_) => "UnknownType",
            CspError::UnknownPiece(_) => "UnknownPiece",
            CspError::InvalidOrder { .. } => "InvalidOrder",
            CspError::Semantic(ParseError::Syntax { .. }) => "SyntaxError",
            CspError::Semantic(_) => "SemanticError",
            CspError::Protocol(_) => "ProtocolError",
            CspError::Stalled(_) => "Stalled",
        }
    }
}
