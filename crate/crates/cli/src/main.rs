//! `agentplan`: plan, optimize and verify manufacturing assignments.
//!
//! Exit codes: 0 success, 1 no feasible plan, 2 invalid input.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use agentplan::aco::{aco_optimize, sweep_jumps, AcoParams, Objective, SweepRow};
use agentplan::csp::{parse_scenario, solve_csp, CspError, Replanner, SolveOptions};
use agentplan::model::{check_feasibility, parse_plan, parse_problem, Plan, ProblemInstance};
use agentplan::oracle::{brute_force, OracleLimits};
use agentplan::render::{gantt_svg, gantt_text};
use agentplan::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "agentplan", version, about = "Agent-based manufacturing assignment planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a problem document, and optionally a plan against it.
    Validate {
        problem: PathBuf,
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Greedy plan from the constraint network.
    Plan {
        problem: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Ant colony optimization over machine choices, delays and step orders.
    Optimize {
        problem: PathBuf,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        target: Target,
        #[command(flatten)]
        aco: AcoArgs,
        /// Forecasting depth: how many slots a step may wait.
        #[arg(long, default_value_t = 0)]
        forecast: u32,
        /// Write `iteration,best_objective` rows here.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Exhaustive optimum for small instances.
    Oracle {
        problem: PathBuf,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        target: Target,
    },
    /// Replay a disturbance scenario against the greedy plan.
    Disturb {
        problem: PathBuf,
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Start from this plan instead of the greedy one.
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Write the plan before the first event here.
        #[arg(long)]
        before: Option<PathBuf>,
    },
    /// Best makespan per forecasting depth and jump budget, as CSV.
    Sweep {
        problem: PathBuf,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        aco: AcoArgs,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        forecast_depths: Vec<u32>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output document; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Gantt chart; `.svg` paths get SVG, anything else text.
    #[arg(long)]
    gantt: Option<PathBuf>,
    #[arg(long)]
    horizon: Option<u32>,
    /// Replace the pieces, e.g. `A=3,B=1`.
    #[arg(long)]
    pieces: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Makespan,
    Cost,
    CostAtLength,
}

#[derive(Args)]
struct Target {
    #[arg(long, value_enum, default_value = "makespan")]
    objective: ObjectiveArg,
    /// Delivery length for `cost-at-length`.
    #[arg(long)]
    length: Option<u32>,
}

#[derive(Args)]
struct AcoArgs {
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    ants: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    pool: Option<usize>,
}

impl AcoArgs {
    fn params(&self, seed: u64) -> AcoParams {
        let d = AcoParams::default();
        AcoParams {
            iterations: self.iterations.unwrap_or(d.iterations),
            ants: self.ants.unwrap_or(d.ants),
            alpha: self.alpha.unwrap_or(d.alpha),
            beta: self.beta.unwrap_or(d.beta),
            rho: self.rho.unwrap_or(d.rho),
            pool: self.pool.unwrap_or(d.pool),
            seed,
            ..d
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Log {
    Off,
    Msg,
    Fire,
}

fn log_mode() -> Log {
    match std::env::var("AGENTPLAN_LOG").as_deref() {
        Ok("msg") => Log::Msg,
        Ok("fire") => Log::Fire,
        _ => Log::Off,
    }
}

enum Failure {
    Input(String),
    Infeasible(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let name = e.name();
        let text = e.to_string();
        let msg = if text.starts_with(name) {
            text
        } else {
            format!("{name}: {text}")
        };
        let infeasible = matches!(
            e,
            Error::Csp(CspError::HorizonExhausted { .. } | CspError::Stalled(_))
                | Error::Aco(agentplan::aco::AcoError::Infeasible)
                | Error::Aco(agentplan::aco::AcoError::Csp(CspError::HorizonExhausted { .. }))
                | Error::Oracle(agentplan::oracle::OracleError::Infeasible)
        );
        if infeasible {
            Failure::Infeasible(msg)
        } else {
            Failure::Input(msg)
        }
    }
}

fn io(path: &Path, e: std::io::Error) -> Failure {
    Failure::Input(format!("IoError: {}: {e}", path.display()))
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| io(path, e))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| io(path, e))
}

fn load(path: &Path, common: &Common) -> Result<ProblemInstance, Failure> {
    let mut inst = parse_problem(&read(path)?).map_err(Error::from)?;
    if let Some(spec) = &common.pieces {
        inst = inst.with_piece_spec(spec).map_err(Error::from)?;
    }
    if let Some(h) = common.horizon {
        inst.horizon_hint = Some(h);
    }
    Ok(inst)
}

fn objective(t: &Target) -> Result<Objective, Failure> {
    match (t.objective, t.length) {
        (ObjectiveArg::Makespan, _) => Ok(Objective::MinMakespan),
        (ObjectiveArg::Cost, _) => Ok(Objective::MinCost),
        (ObjectiveArg::CostAtLength, Some(l)) => Ok(Objective::MinCostAtLength(l)),
        (ObjectiveArg::CostAtLength, None) => Err(Failure::Input(
            "InvalidParams: --objective cost-at-length needs --length".into(),
        )),
    }
}

/// Writes the plan document and Gantt chart; returns the stdout text.
fn emit(plan: &Plan, inst: &ProblemInstance, common: &Common) -> Result<String, Failure> {
    let doc = plan.to_document();
    let mut out = String::new();
    match &common.out {
        Some(p) => write(p, &doc)?,
        None => out.push_str(&doc),
    }
    if let Some(p) = &common.gantt {
        let chart = if p.extension().is_some_and(|e| e == "svg") {
            gantt_svg(plan, &inst.machines)
        } else {
            gantt_text(plan, &inst.machines)
        };
        write(p, &chart)?;
    }
    let _ = writeln!(
        out,
        "makespan={} jumps={} cost={:.3}",
        plan.makespan, plan.jumps, plan.cost
    );
    Ok(out)
}

fn run(cli: Cli) -> Result<String, Failure> {
    let log = log_mode();
    match cli.command {
        Command::Validate { problem, plan } => {
            let inst = parse_problem(&read(&problem)?).map_err(Error::from)?;
            let steps = inst.node_count();
            let mut out = format!(
                "valid: {} machines, {} types, {} pieces, {steps} working steps\n",
                inst.machines.len(),
                inst.types.len(),
                inst.pieces.len()
            );
            if let Some(path) = plan {
                let plan = parse_plan(&read(&path)?).map_err(Error::from)?;
                let violations = check_feasibility(&plan, &inst);
                if !violations.is_empty() {
                    let lines: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
                    return Err(Failure::Input(format!(
                        "InfeasiblePlan: {} violations\n{}",
                        lines.len(),
                        lines.join("\n")
                    )));
                }
                out.push_str("plan: feasible\n");
            }
            Ok(out)
        }
        Command::Plan { problem, common } => {
            let inst = load(&problem, &common)?;
            let s = solve_csp(
                &inst,
                &SolveOptions {
                    log: log == Log::Msg,
                    ..SolveOptions::default()
                },
            )
            .map_err(Error::from)?;
            match log {
                Log::Msg => s.messages.iter().for_each(|m| eprintln!("{m}")),
                Log::Fire => {
                    eprint!("{}", s.parameterization.dump());
                    eprint!("{}", s.propagation.dump());
                }
                Log::Off => {}
            }
            emit(&s.plan, &inst, &common)
        }
        Command::Optimize {
            problem,
            common,
            target,
            aco,
            forecast,
            history,
        } => {
            let inst = load(&problem, &common)?;
            let params = AcoParams {
                forecast,
                ..aco.params(common.seed)
            };
            let r = aco_optimize(&inst, objective(&target)?, &params).map_err(Error::from)?;
            if let Some(p) = history {
                let mut csv = String::from("iteration,best_objective\n");
                for (i, v) in r.history.iter().enumerate() {
                    let _ = writeln!(csv, "{},{v:.3}", i + 1);
                }
                write(&p, &csv)?;
            }
            emit(&r.best, &inst, &common)
        }
        Command::Oracle {
            problem,
            common,
            target,
        } => {
            let inst = load(&problem, &common)?;
            let r = brute_force(&inst, objective(&target)?, &OracleLimits::default())
                .map_err(Error::from)?;
            let mut out = emit(&r.plan, &inst, &common)?;
            let _ = writeln!(out, "optimum={:.3} states={}", r.value, r.states);
            Ok(out)
        }
        Command::Disturb {
            problem,
            scenario,
            common,
            plan,
            before,
        } => {
            let inst = load(&problem, &common)?;
            let events = parse_scenario(&read(&scenario)?).map_err(Error::from)?;
            let start = match plan {
                Some(p) => parse_plan(&read(&p)?).map_err(Error::from)?,
                None => {
                    solve_csp(&inst, &SolveOptions::default())
                        .map_err(Error::from)?
                        .plan
                }
            };
            if let Some(p) = before {
                write(&p, &start.to_document())?;
            }
            let mut replanner = Replanner::new(inst, start);
            let mut out = String::new();
            for event in &events.events {
                let report = replanner.apply(event).map_err(Error::from)?;
                if log == Log::Fire {
                    eprint!("{}", report.trace.dump());
                }
                let _ = writeln!(
                    out,
                    "event {event}: invalidated {}, makespan {} -> {}",
                    report.invalidated.len(),
                    report.before.makespan,
                    report.after.makespan
                );
            }
            let tail = emit(&replanner.plan, &replanner.instance, &common)?;
            Ok(tail + &out)
        }
        Command::Sweep {
            problem,
            common,
            aco,
            forecast_depths,
        } => {
            let inst = load(&problem, &common)?;
            let rows = sweep_jumps(&inst, &forecast_depths, &aco.params(common.seed))
                .map_err(Error::from)?;
            let mut csv = format!("{}\n", SweepRow::csv_header());
            for r in &rows {
                csv.push_str(&r.csv_line());
                csv.push('\n');
            }
            match &common.out {
                Some(p) => {
                    write(p, &csv)?;
                    Ok(String::new())
                }
                None => Ok(csv),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Infeasible(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
