use std::collections::BTreeMap;

use crate::model::{PieceId, Plan, ProblemInstance, StepId};
use crate::protocol::{
    self, PetriNet, Role, RoleExecutor, RoleOutcome, Token, Trace, CONNECTOR, ENLARGEMENT,
    FIRST_NODE, GLOBAL_PROPAGATION, LAST_NODE, MIDDLE_NODES, WS_NODE_INIT, WS_ORDER_INIT,
};

use super::network::{GlobalOutcome, LocalOutcome, NetworkBuilder};
use super::{
    enlarge_domains, global_check, local_propagate, Chooser, ConstraintNetwork, CspError, Greedy,
    NodeId, PropagationMessage,
};

#[derive(Clone, Debug, Default)]
pub struct SolveOptions {
    /// Initial horizon; falls back to the instance hint, then the default.
    pub horizon: Option<u32>,
    /// Firing limit per net; defaults to [`default_fuel`].
    pub fuel: Option<usize>,
    /// Record propagation messages.
    pub log: bool,
    pub jump_budget: Option<u32>,
    /// Per-piece step orders; missing pieces use the listed order.
    pub orders: BTreeMap<PieceId, Vec<StepId>>,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub plan: Plan,
    pub network: ConstraintNetwork,
    pub parameterization: Trace,
    pub propagation: Trace,
    pub messages: Vec<PropagationMessage>,
}

/// Firing limit for a network of `nodes` nodes.
pub fn default_fuel(nodes: usize) -> usize {
    10 * nodes + 64
}

/// Binds the roles of both nets to a constraint network.
pub struct CspExecutor<'a> {
    builder: Option<NetworkBuilder>,
    pub network: Option<ConstraintNetwork>,
    chooser: &'a mut dyn Chooser,
    failed: Vec<NodeId>,
    plan: Option<Plan>,
    error: Option<CspError>,
}

impl<'a> CspExecutor<'a> {
    fn for_network(network: ConstraintNetwork, chooser: &'a mut dyn Chooser) -> Self {
        CspExecutor {
            builder: None,
            network: Some(network),
            chooser,
            failed: Vec::new(),
            plan: None,
            error: None,
        }
    }

    fn net(&mut self) -> &mut ConstraintNetwork {
        self.network.as_mut().expect("network built")
    }
}

impl RoleExecutor for CspExecutor<'_> {
    fn execute(&mut self, role: Role, token: &Token) -> RoleOutcome {
        match role {
            WS_ORDER_INIT => {
                let n = self.builder.as_mut().expect("builder").count();
                RoleOutcome::ok().with("n", n as i64)
            }
            WS_NODE_INIT => {
                self.builder.as_mut().expect("builder").init_nodes();
                RoleOutcome::ok()
            }
            CONNECTOR => {
                let b = self.builder.as_mut().expect("builder");
                let remaining = b.connect_next();
                let connected = token.get("connected").unwrap_or(0) + 1;
                if remaining == 0 {
                    let b = self.builder.take().expect("builder");
                    self.network = Some(b.finish());
                }
                RoleOutcome::ok()
                    .with("remaining", remaining as i64)
                    .with("connected", connected)
            }
            FIRST_NODE => {
                let net = self.net();
                net.begin_pass();
                let horizon = net.horizon as i64;
                RoleOutcome::ok().with("horizon", horizon)
            }
            MIDDLE_NODES => {
                let net = self.network.as_mut().expect("network built");
                self.failed = match local_propagate(net, self.chooser) {
                    LocalOutcome::AllPropagated => Vec::new(),
                    LocalOutcome::EmptyAt(v) => v,
                };
                RoleOutcome::ok()
            }
            LAST_NODE => RoleOutcome::ok()
                .with("empty", self.failed.len() as i64)
                .with("conflicts", 0),
            GLOBAL_PROPAGATION => {
                if token.get("empty").unwrap_or(0) > 0 {
                    return RoleOutcome::fail();
                }
                match global_check(self.net()) {
                    GlobalOutcome::Consistent(plan) => {
                        self.plan = Some(plan);
                        RoleOutcome::ok().with("conflicts", 0).with("empty", 0)
                    }
                    GlobalOutcome::Conflicts { conflicts, emptied } => {
                        let out = RoleOutcome::fail()
                            .with("conflicts", conflicts.len() as i64)
                            .with("empty", emptied.len() as i64);
                        self.failed = emptied;
                        out
                    }
                }
            }
            ENLARGEMENT => {
                let failed = std::mem::take(&mut self.failed);
                match enlarge_domains(self.net(), &failed) {
                    Ok(h) => {
                        let attempt = self.net().attempts as i64;
                        RoleOutcome::ok()
                            .with("horizon", h as i64)
                            .with("attempt", attempt)
                    }
                    Err(e) => {
                        self.error = Some(e);
                        RoleOutcome::fail()
                    }
                }
            }
            _ => RoleOutcome::fail(),
        }
    }
}

/// Runs the propagation net over a built network until it is consistent.
pub fn drive(
    network: ConstraintNetwork,
    chooser: &mut dyn Chooser,
    fuel: Option<usize>,
) -> Result<(ConstraintNetwork, Plan, Trace), CspError> {
    let fuel = fuel.unwrap_or_else(|| default_fuel(network.nodes.len()));
    let mut exec = CspExecutor::for_network(network, chooser);
    let mut net = protocol::propagation_net();
    let trace = protocol::run(&mut net, &mut exec, fuel)?;
    finish(exec, &net, trace)
}

fn finish(
    exec: CspExecutor<'_>,
    net: &PetriNet,
    trace: Trace,
) -> Result<(ConstraintNetwork, Plan, Trace), CspError> {
    if let Some(e) = exec.error {
        return Err(e);
    }
    match (exec.plan, exec.network) {
        (Some(plan), Some(network)) => Ok((network, plan, trace)),
        _ => Err(CspError::Stalled(
            net.marked().into_iter().map(str::to_string).collect(),
        )),
    }
}

/// Builds the network through the parameterization net, then propagates it
/// with earliest-start, lowest-machine choices.
pub fn solve_csp(instance: &ProblemInstance, options: &SolveOptions) -> Result<Solution, CspError> {
    solve_with(instance, options, &mut Greedy)
}

pub(crate) fn solve_with(
    instance: &ProblemInstance,
    options: &SolveOptions,
    chooser: &mut dyn Chooser,
) -> Result<Solution, CspError> {
    let fuel = options
        .fuel
        .unwrap_or_else(|| default_fuel(instance.node_count()));
    let builder = NetworkBuilder::new(instance, &options.orders, options.horizon)?;
    let mut exec = CspExecutor {
        builder: Some(builder),
        network: None,
        chooser,
        failed: Vec::new(),
        plan: None,
        error: None,
    };
    let (mut param, mut prop) = protocol::build_primary_nets();
    let parameterization = protocol::run(&mut param, &mut exec, fuel)?;
    let net = exec.net();
    net.set_logging(options.log);
    net.set_jump_budget(options.jump_budget);
    let propagation = protocol::run(&mut prop, &mut exec, fuel)?;
    let (mut network, plan, propagation) = finish(exec, &prop, propagation)?;
    let messages = network.take_messages();
    Ok(Solution {
        plan,
        network,
        parameterization,
        propagation,
        messages,
    })
}
