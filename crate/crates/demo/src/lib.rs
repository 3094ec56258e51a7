//! Browser bindings. Each export takes a problem document and returns the
//! resulting plan with its chart; the `run_*` functions underneath are plain
//! Rust so they can be tested off the browser.

use agentplan::aco::{aco_optimize, AcoParams, Objective};
use agentplan::csp::{solve_csp, Disturbance, Replanner, SolveOptions};
use agentplan::model::{parse_problem, Plan, ProblemInstance};
use agentplan::render::gantt_svg;
use agentplan::Error;
use wasm_bindgen::prelude::*;

/// A plan ready for display.
#[wasm_bindgen(getter_with_clone)]
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub makespan: u32,
    pub jumps: u32,
    pub cost: f64,
    pub svg: String,
    /// Plan document text.
    pub document: String,
    /// One line per event for disturbances, empty otherwise.
    pub log: String,
}

fn outcome(plan: &Plan, inst: &ProblemInstance, log: String) -> Outcome {
    Outcome {
        makespan: plan.makespan,
        jumps: plan.jumps,
        cost: plan.cost,
        svg: gantt_svg(plan, &inst.machines),
        document: plan.to_document(),
        log,
    }
}

fn describe(e: Error) -> String {
    let text = e.to_string();
    if text.starts_with(e.name()) {
        text
    } else {
        format!("{}: {text}", e.name())
    }
}

fn load(problem: &str) -> Result<ProblemInstance, String> {
    parse_problem(problem).map_err(|e| describe(e.into()))
}

pub fn run_plan(problem: &str) -> Result<Outcome, String> {
    let inst = load(problem)?;
    let s = solve_csp(&inst, &SolveOptions::default()).map_err(|e| describe(e.into()))?;
    Ok(outcome(&s.plan, &inst, String::new()))
}

pub fn run_optimize(
    problem: &str,
    seed: u64,
    forecast: u32,
    iterations: usize,
) -> Result<Outcome, String> {
    let inst = load(problem)?;
    let params = AcoParams {
        seed,
        forecast,
        iterations,
        ..AcoParams::default()
    };
    let r = aco_optimize(&inst, Objective::MinMakespan, &params).map_err(|e| describe(e.into()))?;
    Ok(outcome(&r.best, &inst, String::new()))
}

/// Plans greedily, then takes `machine` down over `[from, to)` and repairs.
pub fn run_machine_down(problem: &str, machine: u32, from: u32, to: u32) -> Result<Outcome, String> {
    let inst = load(problem)?;
    let s = solve_csp(&inst, &SolveOptions::default()).map_err(|e| describe(e.into()))?;
    let event = Disturbance::MachineDown {
        machine,
        from,
        to: (to > from).then_some(to),
    };
    let mut r = Replanner::new(inst, s.plan);
    let report = r.apply(&event).map_err(|e| describe(e.into()))?;
    let log = format!(
        "event {event}: invalidated {}, makespan {} -> {}",
        report.invalidated.len(),
        report.before.makespan,
        report.after.makespan
    );
    Ok(outcome(&report.after, &r.instance, log))
}

#[wasm_bindgen]
pub fn plan(problem: &str) -> Result<Outcome, JsError> {
    run_plan(problem).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn optimize(problem: &str, seed: u32, forecast: u32, iterations: u32) -> Result<Outcome, JsError> {
    run_optimize(problem, seed as u64, forecast, iterations as usize).map_err(|e| JsError::new(&e))
}

/// `to = 0` keeps the machine down for good.
#[wasm_bindgen]
pub fn machine_down(problem: &str, machine: u32, from: u32, to: u32) -> Result<Outcome, JsError> {
    run_machine_down(problem, machine, from, to).map_err(|e| JsError::new(&e))
}
