//! Guarded, payload-carrying Petri nets that sequence the roles of the
//! planning agents.
//!
//! A place is a phase in which one role is active. A transition checks the
//! outcome of that role (and the token payload) and moves the token on. Two
//! nets are bundled: [`parameterization_net`] builds the constraint network
//! and [`propagation_net`] drives local propagation, global checking and
//! domain enlargement.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

/// Named integer parameters carried by a token.
pub type Payload = BTreeMap<String, i64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Role(pub u8);

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "γ{}", self.0)
    }
}

pub const WS_ORDER_INIT: Role = Role(0);
pub const WS_NODE_INIT: Role = Role(1);
pub const CONNECTOR: Role = Role(2);
pub const FIRST_NODE: Role = Role(3);
pub const MIDDLE_NODES: Role = Role(4);
pub const LAST_NODE: Role = Role(5);
pub const GLOBAL_PROPAGATION: Role = Role(6);
pub const ENLARGEMENT: Role = Role(7);

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Token {
    pub payload: Payload,
}

impl Token {
    pub fn get(&self, key: &str) -> Option<i64> {
        self.payload.get(key).copied()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Place {
    pub id: String,
    pub tokens: Vec<Token>,
}

/// A condition over a payload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Cond {
    Absent(String),
    Eq(String, i64),
    Gt(String, i64),
}

impl Cond {
    fn holds(&self, payload: &Payload) -> bool {
        match self {
            Cond::Absent(k) => !payload.contains_key(k),
            Cond::Eq(k, v) => payload.get(k).copied().unwrap_or(0) == *v,
            Cond::Gt(k, v) => payload.get(k).copied().unwrap_or(0) > *v,
        }
    }
}

/// Total predicate over the role outcome and token payloads.
///
/// `requires` is checked against the input token before the role runs;
/// `outcome` and `when` against the role result merged into that token.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Guard {
    pub requires: Vec<Cond>,
    pub outcome: Option<bool>,
    pub when: Vec<Cond>,
}

impl Guard {
    pub fn on_success() -> Self {
        Guard {
            outcome: Some(true),
            ..Guard::default()
        }
    }

    fn pre_holds(&self, token: &Token) -> bool {
        self.requires.iter().all(|c| c.holds(&token.payload))
    }

    fn holds(&self, token: &Token, outcome: &RoleOutcome) -> bool {
        if !self.pre_holds(token) {
            return false;
        }
        if self.outcome.is_some_and(|o| o != outcome.ok) {
            return false;
        }
        let merged = merge(&token.payload, &outcome.payload);
        self.when.iter().all(|c| c.holds(&merged))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transition {
    pub id: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub guard: Guard,
    pub role: Role,
    /// Entries written into the produced token after the role outcome.
    pub effect: Payload,
}

/// What a role reports after one activation.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RoleOutcome {
    pub ok: bool,
    pub payload: Payload,
}

impl RoleOutcome {
    pub fn ok() -> Self {
        RoleOutcome {
            ok: true,
            payload: Payload::new(),
        }
    }

    pub fn fail() -> Self {
        RoleOutcome {
            ok: false,
            payload: Payload::new(),
        }
    }

    pub fn with(mut self, key: &str, value: i64) -> Self {
        self.payload.insert(key.to_string(), value);
        self
    }
}

/// Executes the activity behind a role when its phase holds a token.
pub trait RoleExecutor {
    fn execute(&mut self, role: Role, token: &Token) -> RoleOutcome;
}

impl<F: FnMut(Role, &Token) -> RoleOutcome> RoleExecutor for F {
    fn execute(&mut self, role: Role, token: &Token) -> RoleOutcome {
        self(role, token)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiringRecord {
    pub transition: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub role: Role,
    pub ok: bool,
    pub consumed: Vec<Payload>,
    pub produced: Payload,
}

impl fmt::Display for FiringRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let payload: Vec<String> = self
            .produced
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        write!(
            f,
            "FIRE {} {}->{} role={} outcome={} payload={}",
            self.transition,
            self.inputs.join(","),
            self.outputs.join(","),
            self.role,
            if self.ok { "ok" } else { "fail" },
            payload.join(",")
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    pub firings: Vec<FiringRecord>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.firings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.firings.is_empty()
    }

    pub fn count(&self, transition: &str) -> usize {
        self.firings
            .iter()
            .filter(|f| f.transition == transition)
            .count()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.firings.iter().map(|f| f.transition.as_str()).collect()
    }

    /// One `FIRE` line per firing.
    pub fn dump(&self) -> String {
        self.firings.iter().map(|f| format!("{f}\n")).collect()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("NondeterministicMarking: transitions {0:?} are enabled at once")]
    NondeterministicMarking(Vec<String>),
    #[error("FuelExhausted after {fuel} firings")]
    FuelExhausted { fuel: usize, trace: Trace },
    #[error("payload key `{key}` is not declared by the net")]
    UndeclaredKey { key: String },
    #[error("invalid net: {0}")]
    InvalidNet(String),
    #[error("replay diverged at firing {index}: {reason}")]
    ReplayDiverged { index: usize, reason: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PetriNet {
    pub places: Vec<String>,
    pub transitions: Vec<Transition>,
    pub marking: BTreeMap<String, Vec<Token>>,
    pub keys: BTreeSet<String>,
}

fn merge(base: &Payload, over: &Payload) -> Payload {
    let mut out = base.clone();
    out.extend(over.iter().map(|(k, v)| (k.clone(), *v)));
    out
}

impl PetriNet {
    pub fn new(places: &[&str], keys: &[&str]) -> Self {
        PetriNet {
            places: places.iter().map(|p| p.to_string()).collect(),
            transitions: Vec::new(),
            marking: places.iter().map(|p| (p.to_string(), Vec::new())).collect(),
            keys: keys.iter().map(|k| k.to_string()).collect(),
        }
    }

    pub fn add_transition(
        &mut self,
        id: &str,
        inputs: &[&str],
        outputs: &[&str],
        role: Role,
        guard: Guard,
    ) -> Result<&mut Transition, ProtocolError> {
        if inputs.is_empty() || outputs.is_empty() {
            return Err(ProtocolError::InvalidNet(format!(
                "{id}: inputs and outputs must be non-empty"
            )));
        }
        for p in inputs.iter().chain(outputs) {
            if !self.marking.contains_key(*p) {
                return Err(ProtocolError::InvalidNet(format!(
                    "{id}: unknown place {p}"
                )));
            }
        }
        self.transitions.push(Transition {
            id: id.to_string(),
            inputs: inputs.iter().map(|p| p.to_string()).collect(),
            outputs: outputs.iter().map(|p| p.to_string()).collect(),
            guard,
            role,
            effect: Payload::new(),
        });
        Ok(self.transitions.last_mut().expect("just pushed"))
    }

    pub fn put(&mut self, place: &str, token: Token) -> Result<(), ProtocolError> {
        self.check_keys(&token.payload)?;
        self.marking
            .get_mut(place)
            .ok_or_else(|| ProtocolError::InvalidNet(format!("unknown place {place}")))?
            .push(token);
        Ok(())
    }

    pub fn tokens(&self, place: &str) -> usize {
        self.marking.get(place).map_or(0, Vec::len)
    }

    /// Places currently holding at least one token.
    pub fn marked(&self) -> Vec<&str> {
        self.marking
            .iter()
            .filter(|(_, t)| !t.is_empty())
            .map(|(p, _)| p.as_str())
            .collect()
    }

    pub fn is_one_safe(&self) -> bool {
        self.marking.values().all(|t| t.len() <= 1)
    }

    fn check_keys(&self, payload: &Payload) -> Result<(), ProtocolError> {
        match payload.keys().find(|k| !self.keys.contains(*k)) {
            Some(key) => Err(ProtocolError::UndeclaredKey { key: key.clone() }),
            None => Ok(()),
        }
    }

    fn input_token(&self, t: &Transition) -> Option<&Token> {
        if t.inputs.iter().all(|p| self.tokens(p) > 0) {
            self.marking.get(&t.inputs[0]).and_then(|v| v.first())
        } else {
            None
        }
    }

    /// Roles that must report before the next step: those bound to a
    /// transition whose inputs are marked and whose pre-conditions hold.
    pub fn pending_roles(&self) -> Vec<(Role, Token)> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for t in &self.transitions {
            if let Some(token) = self.input_token(t) {
                if t.guard.pre_holds(token) && seen.insert(t.role) {
                    out.push((t.role, token.clone()));
                }
            }
        }
        out
    }

    /// Number of transitions enabled under the given outcomes.
    pub fn enabled(&self, outcomes: &BTreeMap<Role, RoleOutcome>) -> Vec<usize> {
        self.transitions
            .iter()
            .enumerate()
            .filter(
                |(_, t)| match (self.input_token(t), outcomes.get(&t.role)) {
                    (Some(token), Some(outcome)) => t.guard.holds(token, outcome),
                    _ => false,
                },
            )
            .map(|(i, _)| i)
            .collect()
    }

    fn fire(&mut self, index: usize, outcome: &RoleOutcome) -> Result<FiringRecord, ProtocolError> {
        let t = self.transitions[index].clone();
        let first = self
            .input_token(&t)
            .expect("enabled transition")
            .payload
            .clone();
        let mut produced = merge(&first, &outcome.payload);
        produced.extend(t.effect.iter().map(|(k, v)| (k.clone(), *v)));
        self.check_keys(&produced)?;
        let mut consumed = Vec::with_capacity(t.inputs.len());
        for p in &t.inputs {
            let tokens = self.marking.get_mut(p).expect("validated place");
            consumed.push(tokens.remove(0).payload);
        }
        for p in &t.outputs {
            self.marking
                .get_mut(p)
                .expect("validated place")
                .push(Token {
                    payload: produced.clone(),
                });
        }
        Ok(FiringRecord {
            transition: t.id,
            inputs: t.inputs,
            outputs: t.outputs,
            role: t.role,
            ok: outcome.ok,
            consumed,
            produced,
        })
    }
}

/// Fires the unique enabled transition, or returns `None` when the net halts.
pub fn step(
    net: &mut PetriNet,
    outcomes: &BTreeMap<Role, RoleOutcome>,
) -> Result<Option<FiringRecord>, ProtocolError> {
    let enabled = net.enabled(outcomes);
    match enabled.as_slice() {
        [] => Ok(None),
        [i] => net
            .fire(
                *i,
                outcomes.get(&net.transitions[*i].role).expect("enabled"),
            )
            .map(Some),
        many => Err(ProtocolError::NondeterministicMarking(
            many.iter()
                .map(|&i| net.transitions[i].id.clone())
                .collect(),
        )),
    }
}

/// Steps until the net halts; more than `fuel` firings is an error.
pub fn run(
    net: &mut PetriNet,
    executor: &mut dyn RoleExecutor,
    fuel: usize,
) -> Result<Trace, ProtocolError> {
    let mut trace = Trace::default();
    loop {
        let outcomes: BTreeMap<Role, RoleOutcome> = net
            .pending_roles()
            .into_iter()
            .map(|(role, token)| (role, executor.execute(role, &token)))
            .collect();
        if outcomes.is_empty() {
            return Ok(trace);
        }
        match step(net, &outcomes)? {
            None => return Ok(trace),
            Some(record) => {
                if trace.len() == fuel {
                    return Err(ProtocolError::FuelExhausted { fuel, trace });
                }
                trace.firings.push(record);
            }
        }
    }
}

/// Re-applies a recorded trace to a net in its initial marking.
pub fn replay(net: &PetriNet, trace: &Trace) -> Result<PetriNet, ProtocolError> {
    let mut net = net.clone();
    for (index, rec) in trace.firings.iter().enumerate() {
        let diverged = |reason: String| ProtocolError::ReplayDiverged { index, reason };
        let ti = net
            .transitions
            .iter()
            .position(|t| t.id == rec.transition)
            .ok_or_else(|| diverged(format!("unknown transition {}", rec.transition)))?;
        let token = net
            .input_token(&net.transitions[ti])
            .ok_or_else(|| diverged("inputs not marked".into()))?
            .clone();
        // the outcome payload is what the produced token adds on top of the input
        let effect = &net.transitions[ti].effect;
        let payload: Payload = rec
            .produced
            .iter()
            .filter(|(k, v)| token.payload.get(*k) != Some(v) && !effect.contains_key(*k))
            .map(|(k, v)| (k.clone(), *v))
            .collect();
        let outcome = RoleOutcome {
            ok: rec.ok,
            payload,
        };
        if !net.transitions[ti].guard.holds(&token, &outcome) {
            return Err(diverged(format!(
                "guard of {} does not hold",
                rec.transition
            )));
        }
        let fired = net.fire(ti, &outcome)?;
        if fired.produced != rec.produced {
            return Err(diverged("produced payload differs".into()));
        }
    }
    Ok(net)
}

fn cond_gt(k: &str, v: i64) -> Cond {
    Cond::Gt(k.to_string(), v)
}

fn cond_eq(k: &str, v: i64) -> Cond {
    Cond::Eq(k.to_string(), v)
}

/// Builds the network structure: `p0 -t0-> p1 -t1-> p2`, then the connector
/// loops on `p2` (t2) until no node is left to connect (t3).
///
/// Payload keys: `n` node count, `remaining` nodes still to connect,
/// `connected` links made so far, `done` set once t3 fired.
pub fn parameterization_net() -> PetriNet {
    let mut net = PetriNet::new(
        &["p0", "p1", "p2"],
        &["n", "remaining", "connected", "done"],
    );
    let not_done = || vec![Cond::Absent("done".into())];
    net.add_transition("t0", &["p0"], &["p1"], WS_ORDER_INIT, Guard::on_success())
        .expect("static net");
    net.add_transition("t1", &["p1"], &["p2"], WS_NODE_INIT, Guard::on_success())
        .expect("static net");
    net.add_transition(
        "t2",
        &["p2"],
        &["p2"],
        CONNECTOR,
        Guard {
            requires: not_done(),
            outcome: Some(true),
            when: vec![cond_gt("remaining", 0)],
        },
    )
    .expect("static net");
    net.add_transition(
        "t3",
        &["p2"],
        &["p2"],
        CONNECTOR,
        Guard {
            requires: not_done(),
            outcome: Some(true),
            when: vec![cond_eq("remaining", 0)],
        },
    )
    .expect("static net")
    .effect
    .insert("done".into(), 1);
    net.put("p0", Token::default()).expect("static net");
    net
}

/// Local propagation `p3 -t4-> p4 -t5-> p5 -t7-> p6`; at `p6` the global
/// role either finishes (halt), sends demoted nodes back to `p3` (t6) or,
/// when some node has an empty value set, hands over to enlargement in `p7`
/// (t9), which restarts local propagation (t8).
///
/// Payload keys: `empty` nodes without values, `conflicts` global conflicts,
/// `horizon` current value-area bound, `attempt` enlargements so far.
pub fn propagation_net() -> PetriNet {
    let mut net = PetriNet::new(
        &["p3", "p4", "p5", "p6", "p7"],
        &["empty", "conflicts", "horizon", "attempt"],
    );
    net.add_transition("t4", &["p3"], &["p4"], FIRST_NODE, Guard::on_success())
        .expect("static net");
    net.add_transition("t5", &["p4"], &["p5"], MIDDLE_NODES, Guard::on_success())
        .expect("static net");
    net.add_transition("t7", &["p5"], &["p6"], LAST_NODE, Guard::on_success())
        .expect("static net");
    net.add_transition(
        "t6",
        &["p6"],
        &["p3"],
        GLOBAL_PROPAGATION,
        Guard {
            requires: vec![],
            outcome: Some(false),
            when: vec![cond_eq("empty", 0), cond_gt("conflicts", 0)],
        },
    )
    .expect("static net");
    net.add_transition(
        "t9",
        &["p6"],
        &["p7"],
        GLOBAL_PROPAGATION,
        Guard {
            requires: vec![],
            outcome: None,
            when: vec![cond_gt("empty", 0)],
        },
    )
    .expect("static net");
    net.add_transition("t8", &["p7"], &["p3"], ENLARGEMENT, Guard::on_success())
        .expect("static net");
    net.put("p3", Token::default()).expect("static net");
    net
}

/// Both bundled nets in their initial marking.
pub fn build_primary_nets() -> (PetriNet, PetriNet) {
    (parameterization_net(), propagation_net())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcomes(pairs: &[(Role, RoleOutcome)]) -> BTreeMap<Role, RoleOutcome> {
        pairs.iter().cloned().collect()
    }

    #[test]
    fn bundled_net_shapes() {
        let (param, prop) = build_primary_nets();
        assert_eq!(param.places.len(), 3);
        let ids: BTreeSet<_> = param.transitions.iter().map(|t| t.id.as_str()).collect();
        assert!(["t0", "t1", "t3"].iter().all(|t| ids.contains(t)));
        assert_eq!(prop.places.len(), 5);
        let ids: BTreeSet<_> = prop.transitions.iter().map(|t| t.id.as_str()).collect();
        assert!(ids.contains("t7") && ids.contains("t9"));
        assert_eq!(param.marked(), vec!["p0"]);
        assert_eq!(prop.marked(), vec!["p3"]);
        assert_eq!(param.tokens("p0") + prop.tokens("p3"), 2);
    }

    #[test]
    fn t0_carries_node_count() {
        let mut net = parameterization_net();
        let rec = step(
            &mut net,
            &outcomes(&[(WS_ORDER_INIT, RoleOutcome::ok().with("n", 11))]),
        )
        .unwrap()
        .unwrap();
        assert_eq!(rec.transition, "t0");
        assert_eq!(net.marked(), vec!["p1"]);
        assert_eq!(net.marking["p1"][0].get("n"), Some(11));
        assert_eq!(
            rec.to_string(),
            "FIRE t0 p0->p1 role=γ0 outcome=ok payload=n=11"
        );
    }

    #[test]
    fn empty_marking_halts() {
        let mut net = parameterization_net();
        net.marking.values_mut().for_each(Vec::clear);
        assert_eq!(
            step(&mut net, &outcomes(&[(WS_ORDER_INIT, RoleOutcome::ok())])),
            Ok(None)
        );
    }

    #[test]
    fn empty_value_set_routes_to_enlargement() {
        let mut net = propagation_net();
        net.marking.values_mut().for_each(Vec::clear);
        net.put("p6", Token::default()).unwrap();
        let rec = step(
            &mut net,
            &outcomes(&[(GLOBAL_PROPAGATION, RoleOutcome::fail().with("empty", 2))]),
        )
        .unwrap()
        .unwrap();
        assert_eq!(rec.transition, "t9");
        assert_eq!(net.marked(), vec!["p7"]);
    }

    #[test]
    fn failing_initializer_halts_in_p0() {
        let mut net = parameterization_net();
        let mut exec = |_: Role, _: &Token| RoleOutcome::fail();
        let trace = run(&mut net, &mut exec, 100).unwrap();
        assert!(trace.is_empty());
        assert_eq!(net.marked(), vec!["p0"]);
    }

    #[test]
    fn connector_loops_then_finishes() {
        let mut net = parameterization_net();
        let mut remaining = 4i64;
        let mut exec = |role: Role, _: &Token| match role {
            CONNECTOR => {
                remaining -= 1;
                RoleOutcome::ok().with("remaining", remaining.max(0))
            }
            _ => RoleOutcome::ok().with("n", 4),
        };
        let trace = run(&mut net, &mut exec, 100).unwrap();
        assert_eq!(trace.ids(), vec!["t0", "t1", "t2", "t2", "t2", "t3"]);
        assert_eq!(net.marked(), vec!["p2"]);
        assert_eq!(
            replay(&parameterization_net(), &trace).unwrap().marking,
            net.marking
        );
    }

    #[test]
    fn fuel_bounds_livelock() {
        let mut net = propagation_net();
        // global role always reports empty sets, enlargement always succeeds
        let mut exec = |role: Role, _: &Token| match role {
            GLOBAL_PROPAGATION => RoleOutcome::fail().with("empty", 1),
            _ => RoleOutcome::ok(),
        };
        match run(&mut net, &mut exec, 20) {
            Err(ProtocolError::FuelExhausted { fuel: 20, trace }) => assert_eq!(trace.len(), 20),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn conflicting_guards_are_detected() {
        let mut net = PetriNet::new(&["a", "b"], &[]);
        net.add_transition("x", &["a"], &["b"], Role(0), Guard::on_success())
            .unwrap();
        net.add_transition("y", &["a"], &["b"], Role(0), Guard::default())
            .unwrap();
        net.put("a", Token::default()).unwrap();
        assert!(matches!(
            step(&mut net, &outcomes(&[(Role(0), RoleOutcome::ok())])),
            Err(ProtocolError::NondeterministicMarking(_))
        ));
    }

    #[test]
    fn undeclared_keys_are_rejected() {
        let mut net = parameterization_net();
        let err = step(
            &mut net,
            &outcomes(&[(WS_ORDER_INIT, RoleOutcome::ok().with("bogus", 1))]),
        );
        assert_eq!(
            err,
            Err(ProtocolError::UndeclaredKey {
                key: "bogus".into()
            })
        );
    }

    #[test]
    fn construction_rejects_dangling_arcs() {
        let mut net = PetriNet::new(&["a"], &[]);
        assert!(net
            .add_transition("x", &["a"], &[], Role(0), Guard::default())
            .is_err());
        assert!(net
            .add_transition("x", &["a"], &["zz"], Role(0), Guard::default())
            .is_err());
    }
}
