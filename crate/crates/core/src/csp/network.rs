use std::collections::{BTreeMap, BTreeSet};

use crate::model::{MachineId, PieceId, Placement, Plan, ProblemInstance, StepId};

use super::calendar::MachineCalendar;
use super::{
    Candidate, ChoiceContext, Chooser, CspError, Decision, Domain, Endpoint, MessageKind, NodeId,
    NodeState, NodeStatus, PropagationMessage,
};

/// Enlargements allowed before the network gives up.
pub const MAX_ENLARGEMENTS: u32 = 10;

const INF: u32 = u32::MAX / 4;

/// The nodes of one piece in processing order.
#[derive(Clone, Debug, PartialEq)]
pub struct Chain {
    pub piece: PieceId,
    pub nodes: Vec<NodeId>,
    /// `future[i][k]`: fewest jumps over positions `i..` when position `i`
    /// runs on machine index `k`.
    future: Vec<Vec<u32>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintNetwork {
    pub instance: ProblemInstance,
    pub nodes: BTreeMap<NodeId, NodeState>,
    /// Chains in the reference serial order (priority, then piece id).
    pub chains: Vec<Chain>,
    pub calendar: MachineCalendar,
    pub horizon: u32,
    /// Enlargements performed so far.
    pub attempts: u32,
    /// Upper bound on the total number of jumps over all pieces.
    pub jump_budget: Option<u32>,
    log: Option<Vec<PropagationMessage>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LocalOutcome {
    AllPropagated,
    EmptyAt(Vec<NodeId>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConflictKind {
    Priority,
    MachineOverlap(MachineId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conflict {
    pub kind: ConflictKind,
    pub kept: NodeId,
    pub demoted: NodeId,
}

#[derive(Clone, Debug, PartialEq)]
pub enum GlobalOutcome {
    Consistent(Plan),
    Conflicts {
        conflicts: Vec<Conflict>,
        /// Demoted nodes whose value set became empty.
        emptied: Vec<NodeId>,
    },
}

/// Staged construction used by the parameterization roles: count the nodes,
/// create them, then connect them one at a time.
#[derive(Debug)]
pub(crate) struct NetworkBuilder {
    instance: ProblemInstance,
    orders: BTreeMap<PieceId, Vec<StepId>>,
    horizon: u32,
    pending: Vec<(PieceId, StepId)>,
    nodes: BTreeMap<NodeId, NodeState>,
    chains: Vec<Chain>,
    connected: usize,
}

impl NetworkBuilder {
    pub(crate) fn new(
        instance: &ProblemInstance,
        orders: &BTreeMap<PieceId, Vec<StepId>>,
        horizon: Option<u32>,
    ) -> Result<Self, CspError> {
        let mut resolved = BTreeMap::new();
        for piece in &instance.pieces {
            let ty = instance
                .types
                .get(&piece.type_id)
                .ok_or_else(|| CspError::UnknownType(piece.type_id.clone()))?;
            let order = match orders.get(&piece.id) {
                Some(o) => {
                    check_order(ty, o).map_err(|reason| CspError::InvalidOrder {
                        piece: piece.id,
                        reason,
                    })?;
                    o.clone()
                }
                None => ty.default_order(),
            };
            resolved.insert(piece.id, order);
        }
        if let Some(&p) = orders.keys().find(|p| instance.piece(**p).is_none()) {
            return Err(CspError::UnknownPiece(p));
        }
        Ok(NetworkBuilder {
            instance: instance.clone(),
            orders: resolved,
            horizon: horizon
                .or(instance.horizon_hint)
                .unwrap_or_else(|| instance.default_horizon())
                .max(1),
            pending: Vec::new(),
            nodes: BTreeMap::new(),
            chains: Vec::new(),
            connected: 0,
        })
    }

    /// Node count and processing sequence.
    pub(crate) fn count(&mut self) -> usize {
        self.pending = self
            .instance
            .serial_order()
            .into_iter()
            .flat_map(|p| self.orders[&p.id].iter().map(move |&s| (p.id, s)))
            .collect();
        self.pending.len()
    }

    /// Creates unlinked nodes with full domains.
    pub(crate) fn init_nodes(&mut self) {
        for &(piece, step) in &self.pending {
            let p = self.instance.piece(piece).expect("validated piece");
            let spec = self
                .instance
                .step_of(piece, step)
                .expect("validated step")
                .clone();
            let id = NodeId::new(piece, step);
            self.nodes.insert(
                id,
                NodeState {
                    id,
                    spec,
                    type_id: p.type_id.clone(),
                    priority: p.priority,
                    predecessor: None,
                    successor: None,
                    domain: Domain::new(0, self.horizon),
                    placement: None,
                    decision: None,
                    status: NodeStatus::Idle,
                    cursor: None,
                    requests: 0,
                    pinned: false,
                },
            );
        }
    }

    /// Links the next node to its chain; returns how many remain.
    pub(crate) fn connect_next(&mut self) -> usize {
        if let Some(&(piece, step)) = self.pending.get(self.connected) {
            let id = NodeId::new(piece, step);
            match self.chains.last_mut() {
                Some(chain) if chain.piece == piece => {
                    let prev = *chain.nodes.last().expect("non-empty chain");
                    chain.nodes.push(id);
                    self.nodes.get_mut(&prev).expect("node").successor = Some(id);
                    self.nodes.get_mut(&id).expect("node").predecessor = Some(prev);
                }
                _ => self.chains.push(Chain {
                    piece,
                    nodes: vec![id],
                    future: Vec::new(),
                }),
            }
            self.connected += 1;
        }
        self.pending.len() - self.connected
    }

    pub(crate) fn finish(mut self) -> ConstraintNetwork {
        while self.connect_next() > 0 {}
        let mut net = ConstraintNetwork {
            calendar: MachineCalendar::new(&self.instance.machines, &self.instance.down),
            instance: self.instance,
            nodes: self.nodes,
            chains: self.chains,
            horizon: self.horizon,
            attempts: 0,
            jump_budget: None,
            log: None,
        };
        for i in 0..net.chains.len() {
            net.chains[i].future = net.future_table(&net.chains[i].nodes);
        }
        net
    }
}

/// A step order is valid when it is a permutation of the type's steps that
/// never returns to an earlier group.
pub(crate) fn check_order(
    ty: &crate::model::WorkpieceType,
    order: &[StepId],
) -> Result<(), String> {
    let expected: BTreeSet<StepId> = ty.steps.iter().map(|s| s.id).collect();
    let given: BTreeSet<StepId> = order.iter().copied().collect();
    if given.len() != order.len() || given != expected {
        return Err(format!("not a permutation of the steps of type {}", ty.id));
    }
    let groups: Vec<u32> = order
        .iter()
        .map(|s| ty.step(*s).expect("checked").group)
        .collect();
    if groups.windows(2).any(|w| w[0] > w[1]) {
        return Err("group precedence violated".into());
    }
    Ok(())
}

/// One node per (piece, step), chained in group order as listed.
pub fn build_network(instance: &ProblemInstance) -> ConstraintNetwork {
    build_network_with(instance, &BTreeMap::new(), None).expect("default orders are valid")
}

/// Like [`build_network`] with explicit per-piece step orders and horizon.
pub fn build_network_with(
    instance: &ProblemInstance,
    orders: &BTreeMap<PieceId, Vec<StepId>>,
    horizon: Option<u32>,
) -> Result<ConstraintNetwork, CspError> {
    let mut b = NetworkBuilder::new(instance, orders, horizon)?;
    b.count();
    b.init_nodes();
    Ok(b.finish())
}

impl ConstraintNetwork {
    pub fn node(&self, id: NodeId) -> &NodeState {
        &self.nodes[&id]
    }

    pub fn set_logging(&mut self, on: bool) {
        self.log = on.then(Vec::new);
    }

    pub fn take_messages(&mut self) -> Vec<PropagationMessage> {
        self.log.as_mut().map(std::mem::take).unwrap_or_default()
    }

    fn send(&mut self, kind: MessageKind, sender: Endpoint, receiver: Endpoint) {
        if let Some(log) = &mut self.log {
            log.push(PropagationMessage {
                kind,
                sender,
                receiver,
            });
        }
    }

    fn machine_index(&self, m: MachineId) -> usize {
        self.instance
            .machines
            .binary_search(&m)
            .expect("machine of the instance")
    }

    fn future_table(&self, nodes: &[NodeId]) -> Vec<Vec<u32>> {
        let nm = self.instance.machines.len();
        let mut table = vec![vec![INF; nm]; nodes.len() + 1];
        table[nodes.len()] = vec![0; nm];
        for i in (0..nodes.len()).rev() {
            let spec = &self.nodes[&nodes[i]].spec;
            for (k, &m) in self.instance.machines.iter().enumerate() {
                if !spec.is_capable(m) {
                    continue;
                }
                table[i][k] = if i + 1 == nodes.len() {
                    0
                } else {
                    (0..nm)
                        .map(|k2| table[i + 1][k2].saturating_add(u32::from(k != k2)))
                        .min()
                        .unwrap_or(INF)
                };
            }
        }
        table
    }

    /// Length of the placed prefix of a chain.
    fn placed_prefix(&self, chain: usize) -> usize {
        self.chains[chain]
            .nodes
            .iter()
            .take_while(|id| self.nodes[id].placement.is_some())
            .count()
    }

    fn prefix_jumps(&self, chain: usize, len: usize) -> u32 {
        self.chains[chain].nodes[..len]
            .windows(2)
            .filter(|w| {
                self.nodes[&w[0]].placement.map(|p| p.machine)
                    != self.nodes[&w[1]].placement.map(|p| p.machine)
            })
            .count() as u32
    }

    /// Fewest jumps chain `c` can still end up with given its placed prefix.
    fn chain_min_jumps(&self, c: usize) -> u32 {
        let len = self.placed_prefix(c);
        let chain = &self.chains[c];
        let done = self.prefix_jumps(c, len);
        if len == chain.nodes.len() {
            return done;
        }
        let last = len
            .checked_sub(1)
            .and_then(|i| self.nodes[&chain.nodes[i]].placement)
            .map(|p| self.machine_index(p.machine));
        let rest = (0..self.instance.machines.len())
            .map(|k| chain.future[len][k].saturating_add(last.map_or(0, |l| u32::from(l != k))))
            .min()
            .unwrap_or(INF);
        done.saturating_add(rest)
    }

    /// Jumps the other chains need at least; used by the budget filter.
    fn others_min_jumps(&self, chain: usize) -> u32 {
        (0..self.chains.len())
            .filter(|&c| c != chain)
            .map(|c| self.chain_min_jumps(c))
            .fold(0u32, u32::saturating_add)
    }

    /// Sets a total jump budget; `None` removes it.
    pub fn set_jump_budget(&mut self, budget: Option<u32>) {
        self.jump_budget = budget;
    }

    /// Resets per-pass backtracking state at the start of a propagation pass.
    pub(crate) fn begin_pass(&mut self) {
        for node in self.nodes.values_mut() {
            node.requests = 0;
            if node.placement.is_none() {
                node.cursor = None;
            }
        }
        for c in 0..self.chains.len() {
            let len = self.placed_prefix(c);
            if let Some(&id) = self.chains[c].nodes.get(len) {
                let ready = self.ready_time(c, len);
                let sender = match len {
                    0 => Endpoint::Controller,
                    _ => Endpoint::Node(self.chains[c].nodes[len - 1]),
                };
                self.send(
                    MessageKind::Propagate(vec![ready]),
                    sender,
                    Endpoint::Node(id),
                );
            }
        }
    }

    fn ready_time(&self, chain: usize, pos: usize) -> u32 {
        match pos {
            0 => 0,
            _ => {
                self.nodes[&self.chains[chain].nodes[pos - 1]]
                    .placement
                    .expect("placed prefix")
                    .finish
            }
        }
    }

    /// Feasible window of a node at `pos` of `chain`, sorted by (start, machine).
    fn window(&self, chain: usize, pos: usize, forecast: u32) -> Vec<Candidate> {
        let id = self.chains[chain].nodes[pos];
        let node = &self.nodes[&id];
        if node.domain.is_empty() {
            return Vec::new();
        }
        let ready = self.ready_time(chain, pos).max(node.domain.lo);
        let prev_machine = pos
            .checked_sub(1)
            .and_then(|i| self.nodes[&self.chains[chain].nodes[i]].placement)
            .map(|p| self.machine_index(p.machine));
        let allowance = self.jump_budget.map(|budget| {
            let used = self.prefix_jumps(chain, pos);
            budget as i64 - self.others_min_jumps(chain) as i64 - used as i64
        });
        let mut firsts = Vec::new();
        for (m, d) in node.spec.capable_machines() {
            let Ok(k) = self.instance.machines.binary_search(&m) else {
                continue;
            };
            if let Some(allow) = allowance {
                let need = self.chains[chain].future[pos][k] as i64
                    + prev_machine.map_or(0, |p| i64::from(p != k));
                if need > allow {
                    continue;
                }
            }
            let mut from = ready;
            if let Some((cs, cm)) = node.cursor {
                from = from.max(if m.0 >= cm { cs } else { cs + 1 });
            }
            if from >= node.domain.hi {
                continue;
            }
            let limit = self.horizon.min(node.domain.hi.saturating_add(d - 1));
            if let Some(t) = self.calendar.earliest_free(m, from, d, limit) {
                firsts.push((t, m, d));
            }
        }
        let Some(earliest) = firsts.iter().map(|f| f.0).min() else {
            return Vec::new();
        };
        let last = earliest.saturating_add(forecast);
        let mut out = Vec::new();
        for (t, m, d) in firsts {
            let mut s = t;
            while s <= last && s < node.domain.hi && s + d <= self.horizon {
                if s == t || self.calendar.is_free(m, s, d) {
                    out.push(Candidate {
                        start: s,
                        machine: m,
                        duration: d,
                    });
                }
                s += 1;
            }
        }
        out.sort();
        out
    }

    fn place(&mut self, chain: usize, pos: usize, c: Candidate, delay: u32) {
        let id = self.chains[chain].nodes[pos];
        let placement = Placement {
            piece: id.piece,
            step: id.step,
            machine: c.machine,
            start: c.start,
            finish: c.start + c.duration,
        };
        self.calendar
            .reserve(c.machine, placement.start, placement.finish, id);
        let node = self.nodes.get_mut(&id).expect("node");
        node.placement = Some(placement);
        node.decision = Some(Decision {
            machine: c.machine,
            delay,
        });
        node.status = NodeStatus::Propagated;
        node.cursor = Some((c.start, c.machine.0));
        if let Some(next) = node.successor {
            self.nodes.get_mut(&next).expect("node").cursor = None;
            self.send(
                MessageKind::Propagate(vec![placement.finish]),
                Endpoint::Node(id),
                Endpoint::Node(next),
            );
        }
    }

    /// Releases a node's reservation and clears its placement.
    fn unplace(&mut self, id: NodeId) {
        let node = self.nodes.get_mut(&id).expect("node");
        if let Some(p) = node.placement.take() {
            self.calendar.release(p.machine, id);
        }
        node.decision = None;
        if node.status != NodeStatus::Conflicted {
            node.status = NodeStatus::Idle;
        }
    }

    /// Runs chain propagation over one chain starting at its first unplaced node.
    fn propagate_chain(&mut self, chain: usize, chooser: &mut dyn Chooser) -> Option<NodeId> {
        let len = self.chains[chain].nodes.len();
        let mut pos = self.placed_prefix(chain);
        while pos < len {
            let id = self.chains[chain].nodes[pos];
            let window = self.window(chain, pos, chooser.forecast(id));
            if let Some(first) = window.first().copied() {
                let ctx = ChoiceContext {
                    node: id,
                    position: pos,
                    previous_machine: pos
                        .checked_sub(1)
                        .and_then(|i| self.nodes[&self.chains[chain].nodes[i]].placement)
                        .map(|p| p.machine),
                };
                let idx = chooser.choose(&ctx, &window).min(window.len() - 1);
                let chosen = window[idx];
                self.place(chain, pos, chosen, chosen.start - first.start);
                pos += 1;
                continue;
            }
            // no position fits: ask the predecessor for another finish
            let node = &self.nodes[&id];
            let pred = node.predecessor;
            let exhausted = node.requests >= node.domain.len();
            match pred {
                Some(p) if !exhausted && !self.nodes[&p].pinned => {
                    self.nodes.get_mut(&id).expect("node").requests += 1;
                    self.send(
                        MessageKind::RequestAlternative,
                        Endpoint::Node(id),
                        Endpoint::Node(p),
                    );
                    let prev = self.nodes[&p].placement.expect("placed prefix");
                    self.unplace(p);
                    let pn = self.nodes.get_mut(&p).expect("node");
                    pn.cursor = Some((prev.start, prev.machine.0 + 1));
                    self.nodes.get_mut(&id).expect("node").cursor = None;
                    pos -= 1;
                }
                _ => return Some(id),
            }
        }
        if let Some(&last) = self.chains[chain].nodes.last() {
            self.send(
                MessageKind::GlobalCheck,
                Endpoint::Node(last),
                Endpoint::Controller,
            );
        }
        None
    }

    /// Releases a node and everything after it in its chain.
    fn release_from(&mut self, id: NodeId) {
        let mut cur = Some(id);
        while let Some(n) = cur {
            self.unplace(n);
            let node = self.nodes.get_mut(&n).expect("node");
            node.cursor = None;
            if n != id {
                node.pinned = false;
            }
            cur = node.successor;
        }
    }

    /// True when every node holds a placement.
    pub fn is_complete(&self) -> bool {
        self.nodes.values().all(|n| n.placement.is_some())
    }

    /// The plan formed by all current placements.
    pub fn plan(&self) -> Plan {
        Plan::new(
            self.nodes.values().filter_map(|n| n.placement).collect(),
            &self.instance,
        )
    }

    /// Decisions taken by placed nodes.
    pub fn decisions(&self) -> BTreeMap<NodeId, Decision> {
        self.nodes
            .iter()
            .filter_map(|(id, n)| n.decision.map(|d| (*id, d)))
            .collect()
    }

    /// Checks chain links and that the calendar holds exactly the placements
    /// of placed nodes.
    pub fn audit(&self) -> Result<(), String> {
        for chain in &self.chains {
            for (i, id) in chain.nodes.iter().enumerate() {
                let n = self
                    .nodes
                    .get(id)
                    .ok_or_else(|| format!("{id} missing from node map"))?;
                let pred = i.checked_sub(1).map(|j| chain.nodes[j]);
                let succ = chain.nodes.get(i + 1).copied();
                if n.predecessor != pred || n.successor != succ {
                    return Err(format!("{id} has broken chain links"));
                }
                if let (true, Some(here)) = (i > 0, n.placement) {
                    let prev = self.nodes[&chain.nodes[i - 1]].placement;
                    match prev {
                        Some(p) if p.finish <= here.start => {}
                        _ => return Err(format!("{id} placed before its predecessor")),
                    }
                }
            }
        }
        let mut from_nodes: Vec<(MachineId, u32, u32, NodeId)> = self
            .nodes
            .values()
            .filter_map(|n| n.placement.map(|p| (p.machine, p.start, p.finish, n.id)))
            .collect();
        let mut from_cal: Vec<(MachineId, u32, u32, NodeId)> = self
            .calendar
            .all_reservations()
            .map(|(m, r)| (m, r.start, r.finish, r.node))
            .collect();
        from_nodes.sort();
        from_cal.sort();
        if from_nodes != from_cal {
            return Err("calendar differs from node placements".into());
        }
        for m in &self.instance.machines {
            let r = self.calendar.reservations(*m);
            if r.windows(2).any(|w| w[0].finish > w[1].start) {
                return Err(format!("overlapping reservations on {m}"));
            }
        }
        Ok(())
    }
}

/// Chain-by-chain propagation in the reference serial order.
pub fn local_propagate(net: &mut ConstraintNetwork, chooser: &mut dyn Chooser) -> LocalOutcome {
    let mut empty = Vec::new();
    for c in 0..net.chains.len() {
        if let Some(id) = net.propagate_chain(c, chooser) {
            empty.push(id);
        }
    }
    if empty.is_empty() {
        LocalOutcome::AllPropagated
    } else {
        LocalOutcome::EmptyAt(empty)
    }
}

/// Sort key of the node that yields in a conflict: larger is demoted.
fn yield_key(n: &NodeState) -> (u32, PieceId, StepId) {
    (n.priority, n.id.piece, n.id.step)
}

fn priority_audit(group: &[&NodeState]) -> Vec<Conflict> {
    let mut out = Vec::new();
    for (i, a) in group.iter().enumerate() {
        for b in &group[i + 1..] {
            if a.priority == b.priority {
                continue;
            }
            let (hi, lo) = if a.priority < b.priority {
                (a, b)
            } else {
                (b, a)
            };
            let (Some(ph), Some(pl)) = (hi.placement, lo.placement) else {
                continue;
            };
            if ph.start >= pl.start {
                out.push(Conflict {
                    kind: ConflictKind::Priority,
                    kept: hi.id,
                    demoted: lo.id,
                });
            }
        }
    }
    out
}

fn machine_audit(net: &ConstraintNetwork, machine: MachineId) -> Vec<Conflict> {
    let placed: Vec<&NodeState> = net
        .nodes
        .values()
        .filter(|n| n.placement.is_some_and(|p| p.machine == machine))
        .collect();
    let mut out = Vec::new();
    for (i, a) in placed.iter().enumerate() {
        for b in &placed[i + 1..] {
            let (pa, pb) = (
                a.placement.expect("filtered"),
                b.placement.expect("filtered"),
            );
            if pa.overlaps(&pb) {
                let (keep, demote) = if yield_key(a) < yield_key(b) {
                    (a, b)
                } else {
                    (b, a)
                };
                out.push(Conflict {
                    kind: ConflictKind::MachineOverlap(machine),
                    kept: keep.id,
                    demoted: demote.id,
                });
            }
        }
    }
    out
}

#[cfg(feature = "parallel")]
fn run_audits(net: &ConstraintNetwork, groups: &[Vec<&NodeState>]) -> Vec<Conflict> {
    use rayon::prelude::*;
    let mut out: Vec<Conflict> = groups
        .par_iter()
        .flat_map_iter(|g| priority_audit(g))
        .collect();
    out.extend(
        net.instance
            .machines
            .par_iter()
            .flat_map_iter(|&m| machine_audit(net, m))
            .collect::<Vec<_>>(),
    );
    out
}

#[cfg(not(feature = "parallel"))]
fn run_audits(net: &ConstraintNetwork, groups: &[Vec<&NodeState>]) -> Vec<Conflict> {
    let mut out: Vec<Conflict> = groups.iter().flat_map(|g| priority_audit(g)).collect();
    out.extend(
        net.instance
            .machines
            .iter()
            .flat_map(|&m| machine_audit(net, m)),
    );
    out
}

/// Cross-chain check of machine exclusivity and priority order.
///
/// Each conflicting pair demotes the yielding node (larger priority value,
/// then larger piece id, then larger step id): its value set is cut below
/// the kept node's start plus one and it is released together with the rest
/// of its chain.
pub fn global_check(net: &mut ConstraintNetwork) -> GlobalOutcome {
    let mut groups: BTreeMap<(&str, StepId), Vec<&NodeState>> = BTreeMap::new();
    for n in net.nodes.values() {
        groups
            .entry((n.type_id.as_str(), n.id.step))
            .or_default()
            .push(n);
    }
    let groups: Vec<Vec<&NodeState>> = groups.into_values().collect();
    let mut conflicts = run_audits(net, &groups);
    conflicts.sort_by_key(|c| (c.demoted, c.kept));
    conflicts.dedup();

    if conflicts.is_empty() {
        if !net.is_complete() {
            // nothing conflicts but some chain is still open
            let open: Vec<NodeId> = net
                .nodes
                .values()
                .filter(|n| n.placement.is_none())
                .map(|n| n.id)
                .take(1)
                .collect();
            return GlobalOutcome::Conflicts {
                conflicts,
                emptied: open,
            };
        }
        for n in net.nodes.values_mut() {
            n.status = NodeStatus::Placed;
        }
        return GlobalOutcome::Consistent(net.plan());
    }

    // lowest bound per demoted node
    let mut bounds: BTreeMap<NodeId, u32> = BTreeMap::new();
    for c in &conflicts {
        let kept_start = net.nodes[&c.kept].placement.expect("audited").start;
        let b = bounds.entry(c.demoted).or_insert(0);
        *b = (*b).max(kept_start + 1);
    }
    let mut emptied = Vec::new();
    for (id, bound) in bounds {
        net.send(
            MessageKind::GlobalCheck,
            Endpoint::Controller,
            Endpoint::Node(id),
        );
        net.release_from(id);
        let node = net.nodes.get_mut(&id).expect("node");
        node.pinned = false;
        node.status = NodeStatus::Conflicted;
        node.domain.lo = node.domain.lo.max(bound);
        if node.domain.is_empty() {
            emptied.push(id);
        }
    }
    GlobalOutcome::Conflicts { conflicts, emptied }
}

/// Widens value sets after a failure; returns the horizon in force afterwards.
///
/// The first attempt stays local: failed nodes and their chain neighbours get
/// their value sets reopened up to the current horizon and a fresh request
/// budget. Later attempts grow the horizon by half and restart propagation
/// for every node not kept from an earlier plan.
pub fn enlarge_domains(net: &mut ConstraintNetwork, failed: &[NodeId]) -> Result<u32, CspError> {
    if failed.is_empty() {
        return Ok(net.horizon);
    }
    if net.attempts >= MAX_ENLARGEMENTS {
        return Err(CspError::HorizonExhausted {
            horizon: net.horizon,
            attempts: net.attempts,
        });
    }
    net.attempts += 1;
    if net.attempts == 1 {
        let mut touched = BTreeSet::new();
        for id in failed {
            let n = &net.nodes[id];
            touched.insert(*id);
            touched.extend(n.predecessor);
            touched.extend(n.successor);
        }
        for id in touched {
            net.send(
                MessageKind::Enlarge(net.horizon),
                Endpoint::Controller,
                Endpoint::Node(id),
            );
            let n = net.nodes.get_mut(&id).expect("node");
            n.domain.hi = net.horizon;
            n.requests = 0;
        }
        return Ok(net.horizon);
    }
    let grown = (net.horizon as u64 * 3).div_ceil(2).min(u32::MAX as u64) as u32;
    net.horizon = grown.max(net.horizon + 1);
    net.send(
        MessageKind::Enlarge(net.horizon),
        Endpoint::Controller,
        Endpoint::Controller,
    );
    let ids: Vec<NodeId> = net.nodes.keys().copied().collect();
    for id in ids {
        if !net.nodes[&id].pinned {
            net.unplace(id);
        }
        let n = net.nodes.get_mut(&id).expect("node");
        n.domain = Domain::new(0, net.horizon);
        n.cursor = None;
        n.requests = 0;
        if n.status == NodeStatus::Conflicted {
            n.status = NodeStatus::Idle;
        }
    }
    // a kept node whose predecessor was released must follow it again
    for c in 0..net.chains.len() {
        let len = net.placed_prefix(c);
        if let Some(&id) = net.chains[c].nodes.get(len) {
            net.release_from(id);
        }
    }
    Ok(net.horizon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csp::Greedy;
    use crate::model::fixtures::*;
    use crate::model::{check_feasibility, MachineId, Piece, StepSpec, WorkpieceType};

    fn single_step(len: u32, horizon: u32) -> ProblemInstance {
        let mut inst = table_a();
        inst.machines = vec![MachineId(1)];
        inst.homogeneous = false;
        inst.types.clear();
        inst.types.insert(
            "S".into(),
            WorkpieceType {
                id: "S".into(),
                steps: vec![StepSpec {
                    id: StepId(1),
                    group: 1,
                    durations: [(MachineId(1), len)].into_iter().collect(),
                }],
            },
        );
        inst.pieces = vec![Piece {
            id: PieceId(1),
            type_id: "S".into(),
            priority: 1,
        }];
        inst.horizon_hint = Some(horizon);
        inst
    }

    #[test]
    fn node_and_chain_counts() {
        let net = build_network(&table_a());
        assert_eq!(net.nodes.len(), 11);
        assert_eq!(net.chains.len(), 1);
        assert_eq!(net.chains[0].nodes.len(), 11);
        net.audit().unwrap();

        let net = build_network(&fig6());
        assert_eq!(net.nodes.len(), 9);
        assert_eq!(net.chains.len(), 3);

        let mut empty = table_a();
        empty.pieces.clear();
        assert!(build_network(&empty).nodes.is_empty());
    }

    #[test]
    fn invalid_orders_are_rejected() {
        let inst = table_a();
        let mut orders = BTreeMap::new();
        let mut order = inst.types["A"].default_order();
        order.swap(0, 1);
        orders.insert(PieceId(1), order);
        assert!(matches!(
            build_network_with(&inst, &orders, None),
            Err(CspError::InvalidOrder { .. })
        ));
        orders.insert(PieceId(1), vec![StepId(1)]);
        assert!(build_network_with(&inst, &orders, None).is_err());
        let mut swapped = inst.types["A"].default_order();
        swapped.swap(1, 2);
        orders.insert(PieceId(1), swapped);
        assert!(build_network_with(&inst, &orders, None).is_ok());
    }

    #[test]
    fn unconstrained_single_step_starts_at_zero() {
        let inst = single_step(2, 10);
        let mut net = build_network(&inst);
        assert_eq!(
            local_propagate(&mut net, &mut Greedy),
            LocalOutcome::AllPropagated
        );
        let p = net.plan();
        assert_eq!((p.placements[0].start, p.placements[0].finish), (0, 2));
    }

    #[test]
    fn table_piece_fits_exactly_in_eighteen() {
        let inst = table_a();
        let mut net = build_network_with(&inst, &BTreeMap::new(), Some(18)).unwrap();
        assert_eq!(
            local_propagate(&mut net, &mut Greedy),
            LocalOutcome::AllPropagated
        );
        net.audit().unwrap();
        assert_eq!(net.plan().makespan, 18);

        let mut net = build_network_with(&inst, &BTreeMap::new(), Some(17)).unwrap();
        match local_propagate(&mut net, &mut Greedy) {
            LocalOutcome::EmptyAt(v) => assert!(!v.is_empty()),
            other => panic!("expected EmptyAt, got {other:?}"),
        }
        net.audit().unwrap();
    }

    #[test]
    fn backtracking_releases_slots() {
        // two steps; the second only fits if the first moves off machine 1
        let mut inst = single_step(2, 4);
        inst.machines = vec![MachineId(1), MachineId(2)];
        let ty = inst.types.get_mut("S").unwrap();
        ty.steps[0].durations.insert(MachineId(2), 2);
        ty.steps.push(StepSpec {
            id: StepId(2),
            group: 2,
            durations: [(MachineId(1), 2)].into_iter().collect(),
        });
        inst.down.push(crate::model::DownInterval {
            machine: MachineId(1),
            from: 0,
            to: Some(2),
        });
        let mut net = build_network(&inst);
        net.set_logging(true);
        assert_eq!(
            local_propagate(&mut net, &mut Greedy),
            LocalOutcome::AllPropagated
        );
        net.audit().unwrap();
        let plan = net.plan();
        assert_eq!(plan.placements[0].machine, MachineId(2));
        assert_eq!(plan.makespan, 4);

        // a horizon of 3 cannot hold it; the head exhausts
        let mut inst3 = inst.clone();
        inst3.horizon_hint = Some(3);
        let mut net = build_network(&inst3);
        net.set_logging(true);
        let out = local_propagate(&mut net, &mut Greedy);
        assert!(matches!(out, LocalOutcome::EmptyAt(_)));
        let log = net.take_messages();
        assert!(log
            .iter()
            .any(|m| m.kind == MessageKind::RequestAlternative));
        net.audit().unwrap();
        assert!(net.calendar.all_reservations().next().is_none());
    }

    #[test]
    fn single_piece_is_consistent() {
        let mut net = build_network_with(&table_a(), &BTreeMap::new(), Some(18)).unwrap();
        local_propagate(&mut net, &mut Greedy);
        assert!(matches!(
            global_check(&mut net),
            GlobalOutcome::Consistent(_)
        ));
    }

    #[test]
    fn equal_starts_violate_priority() {
        let mut inst = fig6();
        inst.pieces.truncate(2);
        inst.pieces[1].priority = 2;
        let mut net = build_network(&inst);
        // place both heads at slot 0 on different machines by hand
        for (piece, m) in [(1, 1), (2, 2)] {
            let c = net
                .chains
                .iter()
                .position(|c| c.piece == PieceId(piece))
                .unwrap();
            net.place(
                c,
                0,
                Candidate {
                    start: 0,
                    machine: MachineId(m),
                    duration: 1,
                },
                0,
            );
        }
        match global_check(&mut net) {
            GlobalOutcome::Conflicts { conflicts, .. } => {
                assert_eq!(conflicts.len(), 1);
                let c = conflicts[0];
                assert_eq!(c.kind, ConflictKind::Priority);
                assert_eq!(c.demoted, NodeId::new(PieceId(2), StepId(1)));
                let n = net.node(c.demoted);
                assert_eq!(n.status, NodeStatus::Conflicted);
                assert_eq!(n.domain.lo, 1);
                assert!(n.placement.is_none());
            }
            other => panic!("expected conflicts, got {other:?}"),
        }
        net.audit().unwrap();
    }

    #[test]
    fn fig6_decision_b_is_consistent() {
        let inst = fig6();
        let mut net = build_network(&inst);
        let fixed = [
            (1, 1, 1, 0, 1),
            (1, 2, 1, 1, 2),
            (1, 3, 1, 3, 1),
            (2, 1, 2, 0, 1),
            (2, 2, 3, 1, 2),
            (2, 3, 2, 3, 1),
            (3, 1, 3, 0, 1),
            (3, 2, 3, 3, 2),
            (3, 3, 1, 5, 1),
        ];
        for (piece, step, m, start, len) in fixed {
            let c = net
                .chains
                .iter()
                .position(|c| c.piece == PieceId(piece))
                .unwrap();
            net.place(
                c,
                step as usize - 1,
                Candidate {
                    start,
                    machine: MachineId(m),
                    duration: len,
                },
                0,
            );
        }
        match global_check(&mut net) {
            GlobalOutcome::Consistent(plan) => {
                assert_eq!(check_feasibility(&plan, &inst), vec![]);
            }
            other => panic!("expected consistency, got {other:?}"),
        }
    }

    #[test]
    fn enlargement_local_then_global() {
        let mut net = build_network_with(&table_a(), &BTreeMap::new(), Some(12)).unwrap();
        assert_eq!(enlarge_domains(&mut net, &[]).unwrap(), 12);
        assert_eq!(net.attempts, 0);
        let failed = [NodeId::new(PieceId(1), StepId(5))];
        assert_eq!(enlarge_domains(&mut net, &failed).unwrap(), 12);
        assert_eq!(enlarge_domains(&mut net, &failed).unwrap(), 18);
        assert_eq!(enlarge_domains(&mut net, &failed).unwrap(), 27);
        for _ in 3..MAX_ENLARGEMENTS {
            enlarge_domains(&mut net, &failed).unwrap();
        }
        assert!(matches!(
            enlarge_domains(&mut net, &failed),
            Err(CspError::HorizonExhausted { .. })
        ));
    }

    #[test]
    fn jump_budget_filters_machines() {
        let inst = table_a();
        let mut net = build_network_with(&inst, &BTreeMap::new(), Some(40)).unwrap();
        net.set_jump_budget(Some(2));
        assert_eq!(
            local_propagate(&mut net, &mut Greedy),
            LocalOutcome::AllPropagated
        );
        assert_eq!(net.plan().jumps, 2);
        let mut net = build_network_with(&inst, &BTreeMap::new(), Some(40)).unwrap();
        net.set_jump_budget(Some(1));
        assert!(matches!(
            local_propagate(&mut net, &mut Greedy),
            LocalOutcome::EmptyAt(_)
        ));
    }
}
