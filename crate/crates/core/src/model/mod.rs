//! Domain types for the assignment problem: machines, workpiece technologies,
//! pieces, plans and the metrics computed over them.

mod document;
mod feasibility;
mod metrics;

pub use document::{parse_plan, parse_problem, Issue, ParseError};
pub(crate) use document::{revalidate, syntax_error};
pub use feasibility::{check_feasibility, Violation};
pub(crate) use metrics::earliest_up;
pub use metrics::{compute_cost, count_jumps, min_jumps, piece_lower_bound};

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Identifier of a machine (`M_k`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MachineId(pub u32);

/// Identifier of a piece (`P_n`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PieceId(pub u32);

/// Identifier of a working step within its workpiece type (`WS_j`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StepId(pub u32);

impl fmt::Display for MachineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "M{}", self.0)
    }
}

impl fmt::Display for PieceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.0)
    }
}

impl fmt::Display for StepId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "WS{}", self.0)
    }
}

/// One row of a technological table.
///
/// A duration of zero marks the machine as incapable of the step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepSpec {
    pub id: StepId,
    pub group: u32,
    pub durations: BTreeMap<MachineId, u32>,
}

impl StepSpec {
    /// Processing length on `machine`, or `None` when the machine cannot do the step.
    pub fn duration_on(&self, machine: MachineId) -> Option<u32> {
        self.durations.get(&machine).copied().filter(|&d| d > 0)
    }

    pub fn capable_machines(&self) -> impl Iterator<Item = (MachineId, u32)> + '_ {
        self.durations
            .iter()
            .filter(|(_, &d)| d > 0)
            .map(|(&m, &d)| (m, d))
    }

    pub fn is_capable(&self, machine: MachineId) -> bool {
        self.duration_on(machine).is_some()
    }

    pub fn min_duration(&self) -> u32 {
        self.capable_machines().map(|(_, d)| d).min().unwrap_or(0)
    }

    pub fn max_duration(&self) -> u32 {
        self.capable_machines().map(|(_, d)| d).max().unwrap_or(0)
    }
}

/// The technology of one workpiece type: its working steps in table order.
#[derive(Clone, Debug, PartialEq)]
pub struct WorkpieceType {
    pub id: String,
    pub steps: Vec<StepSpec>,
}

impl WorkpieceType {
    pub fn step(&self, id: StepId) -> Option<&StepSpec> {
        self.steps.iter().find(|s| s.id == id)
    }

    /// Steps partitioned by order group, groups ascending, table order within a group.
    pub fn groups(&self) -> Vec<Vec<&StepSpec>> {
        let mut groups: BTreeMap<u32, Vec<&StepSpec>> = BTreeMap::new();
        for step in &self.steps {
            groups.entry(step.group).or_default().push(step);
        }
        groups.into_values().collect()
    }

    /// Step ids in table order.
    pub fn default_order(&self) -> Vec<StepId> {
        self.steps.iter().map(|s| s.id).collect()
    }

    /// Σ of the longest capable duration of every step.
    pub fn total_work(&self) -> u32 {
        self.steps.iter().map(StepSpec::max_duration).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Piece {
    pub id: PieceId,
    pub type_id: String,
    /// Smaller values are manufactured earlier.
    pub priority: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostModel {
    /// Cost per processing slot; machines missing from the map cost 1.
    pub machine_rate: BTreeMap<MachineId, f64>,
    pub jump_cost: f64,
    pub storage_cost: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            machine_rate: BTreeMap::new(),
            jump_cost: 1.0,
            storage_cost: 0.1,
        }
    }
}

impl CostModel {
    pub fn rate(&self, machine: MachineId) -> f64 {
        self.machine_rate.get(&machine).copied().unwrap_or(1.0)
    }

    /// A model with every term set to zero.
    pub fn zero(machines: &[MachineId]) -> Self {
        Self {
            machine_rate: machines.iter().map(|&m| (m, 0.0)).collect(),
            jump_cost: 0.0,
            storage_cost: 0.0,
        }
    }
}

/// A machine is unavailable during `[from, to)`; `to = None` means for good.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DownInterval {
    pub machine: MachineId,
    pub from: u32,
    pub to: Option<u32>,
}

impl DownInterval {
    pub fn end(&self) -> u32 {
        self.to.unwrap_or(u32::MAX)
    }

    pub fn overlaps(&self, start: u32, finish: u32) -> bool {
        start < self.end() && self.from < finish
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemInstance {
    pub machines: Vec<MachineId>,
    pub types: BTreeMap<String, WorkpieceType>,
    pub pieces: Vec<Piece>,
    pub cost: CostModel,
    pub horizon_hint: Option<u32>,
    /// When set, every capable machine of a step must share one duration.
    pub homogeneous: bool,
    pub down: Vec<DownInterval>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("piece {0} is not part of the instance")]
    UnknownPiece(PieceId),
    #[error("plan is missing steps of piece {piece}: {missing:?}")]
    MissingSteps {
        piece: PieceId,
        missing: Vec<StepId>,
    },
    #[error("unknown workpiece type `{0}`")]
    UnknownType(String),
    #[error("malformed piece spec `{0}` (expected TYPE=COUNT[,TYPE=COUNT...])")]
    PieceSpec(String),
}

impl ProblemInstance {
    pub fn piece(&self, id: PieceId) -> Option<&Piece> {
        self.pieces.iter().find(|p| p.id == id)
    }

    pub fn type_of(&self, piece: &Piece) -> &WorkpieceType {
        &self.types[&piece.type_id]
    }

    pub fn step_of(&self, piece: PieceId, step: StepId) -> Option<&StepSpec> {
        let piece = self.piece(piece)?;
        self.types.get(&piece.type_id)?.step(step)
    }

    pub fn node_count(&self) -> usize {
        self.pieces
            .iter()
            .map(|p| self.types.get(&p.type_id).map_or(0, |t| t.steps.len()))
            .sum()
    }

    /// Pieces in the reference serial order: priority, then id.
    pub fn serial_order(&self) -> Vec<&Piece> {
        let mut pieces: Vec<&Piece> = self.pieces.iter().collect();
        pieces.sort_by_key(|p| (p.priority, p.id));
        pieces
    }

    /// Initial value area for start positions when no hint is given:
    /// the largest per-piece work content times the piece count over the
    /// machine count, doubled.
    pub fn default_horizon(&self) -> u32 {
        let per_piece = self
            .pieces
            .iter()
            .map(|p| self.type_of(p).total_work())
            .max()
            .unwrap_or(0) as u64;
        let machines = self.machines.len().max(1) as u64;
        let base = (per_piece * self.pieces.len() as u64).div_ceil(machines);
        (base * 2).clamp(1, u32::MAX as u64) as u32
    }

    /// Replaces the piece list with generated pieces, e.g. `A=3,B=1`.
    ///
    /// Ids run from 1 in spec order; priorities count from 1 within each type.
    pub fn with_piece_spec(&self, spec: &str) -> Result<ProblemInstance, ModelError> {
        let mut pieces = Vec::new();
        let mut next_id = 1;
        for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (ty, count) = part
                .split_once('=')
                .ok_or_else(|| ModelError::PieceSpec(spec.to_string()))?;
            let count: u32 = count
                .trim()
                .parse()
                .map_err(|_| ModelError::PieceSpec(spec.to_string()))?;
            let ty = ty.trim();
            if !self.types.contains_key(ty) {
                return Err(ModelError::UnknownType(ty.to_string()));
            }
            for priority in 1..=count {
                pieces.push(Piece {
                    id: PieceId(next_id),
                    type_id: ty.to_string(),
                    priority,
                });
                next_id += 1;
            }
        }
        Ok(ProblemInstance {
            pieces,
            ..self.clone()
        })
    }
}

/// One working step of one piece placed on a machine over `[start, finish)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Placement {
    pub piece: PieceId,
    pub step: StepId,
    pub machine: MachineId,
    pub start: u32,
    pub finish: u32,
}

impl Placement {
    pub fn length(&self) -> u32 {
        self.finish - self.start
    }

    pub fn overlaps(&self, other: &Placement) -> bool {
        self.start < other.finish && other.start < self.finish
    }
}

/// A set of placements plus the metrics derived from them.
#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    pub placements: Vec<Placement>,
    pub makespan: u32,
    pub jumps: u32,
    pub cost: f64,
}

impl Plan {
    pub fn empty() -> Self {
        Self {
            placements: Vec::new(),
            makespan: 0,
            jumps: 0,
            cost: 0.0,
        }
    }

    /// Builds a plan and recomputes its metrics against `instance`.
    pub fn new(mut placements: Vec<Placement>, instance: &ProblemInstance) -> Self {
        sort_canonical(&mut placements);
        let mut plan = Plan {
            placements,
            ..Plan::empty()
        };
        plan.refresh_metrics(instance);
        plan
    }

    pub fn refresh_metrics(&mut self, instance: &ProblemInstance) {
        sort_canonical(&mut self.placements);
        self.makespan = self.placements.iter().map(|p| p.finish).max().unwrap_or(0);
        self.jumps = metrics::total_jumps(&self.placements);
        self.cost = compute_cost(self, &instance.cost, instance);
    }

    /// Placements of one piece in start order.
    pub fn piece_placements(&self, piece: PieceId) -> Vec<Placement> {
        let mut v: Vec<Placement> = self
            .placements
            .iter()
            .filter(|p| p.piece == piece)
            .copied()
            .collect();
        v.sort_by_key(|p| (p.start, p.step));
        v
    }

    pub fn placement(&self, piece: PieceId, step: StepId) -> Option<&Placement> {
        self.placements
            .iter()
            .find(|p| p.piece == piece && p.step == step)
    }

    pub fn to_document(&self) -> String {
        document::plan_to_document(self)
    }
}

/// Pieces ascending, each piece's steps in start order.
fn sort_canonical(placements: &mut [Placement]) {
    placements.sort_by_key(|p| (p.piece, p.start, p.step, p.machine));
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub const TABLE_A: &str = include_str!("../../../../fixtures/tableA.problem");
    pub const TABLE_A3: &str = include_str!("../../../../fixtures/tableA3.problem");
    pub const FIG6: &str = include_str!("../../../../fixtures/fig6.problem");

    pub fn table_a() -> ProblemInstance {
        parse_problem(TABLE_A).unwrap()
    }

    pub fn table_a3() -> ProblemInstance {
        parse_problem(TABLE_A3).unwrap()
    }

    pub fn fig6() -> ProblemInstance {
        parse_problem(FIG6).unwrap()
    }

    pub fn place(piece: u32, step: u32, machine: u32, start: u32, len: u32) -> Placement {
        Placement {
            piece: PieceId(piece),
            step: StepId(step),
            machine: MachineId(machine),
            start,
            finish: start + len,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn default_horizon_for_single_table_piece() {
        // 18 slots of work, one piece, three machines, doubled
        assert_eq!(table_a().default_horizon(), 12);
    }

    #[test]
    fn piece_spec_generates_sequential_ids() {
        let inst = table_a().with_piece_spec("A=3").unwrap();
        let ids: Vec<_> = inst.pieces.iter().map(|p| (p.id.0, p.priority)).collect();
        assert_eq!(ids, vec![(1, 1), (2, 2), (3, 3)]);
        assert!(matches!(
            table_a().with_piece_spec("Z=1"),
            Err(ModelError::UnknownType(_))
        ));
        assert!(table_a().with_piece_spec("A").is_err());
    }

    #[test]
    fn groups_follow_order_column() {
        let a = table_a();
        let sizes: Vec<usize> = a.types["A"].groups().iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![1, 5, 1, 4]);
    }
}
