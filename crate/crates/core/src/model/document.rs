//! Problem and plan documents (TOML).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use serde::Deserialize;
use thiserror::Error;

use super::{
    CostModel, DownInterval, MachineId, Piece, PieceId, Placement, Plan, ProblemInstance, StepId,
    StepSpec, WorkpieceType,
};

/// A semantic problem found while validating a document, located by a dotted path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("SyntaxError at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("SemanticError: {}", format_issues(.0))]
    Semantic(Vec<Issue>),
}

impl ParseError {
    pub fn issues(&self) -> &[Issue] {
        match self {
            ParseError::Semantic(issues) => issues,
            ParseError::Syntax { .. } => &[],
        }
    }
}

fn format_issues(issues: &[Issue]) -> String {
    issues
        .iter()
        .map(Issue::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    machines: Vec<u32>,
    #[serde(default)]
    types: BTreeMap<String, Vec<RawStep>>,
    #[serde(default)]
    pieces: Vec<RawPiece>,
    cost: Option<RawCost>,
    horizon: Option<u32>,
    #[serde(default)]
    homogeneous: bool,
    #[serde(default)]
    down: Vec<RawDown>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStep {
    id: u32,
    group: u32,
    durations: BTreeMap<String, u32>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPiece {
    id: u32,
    #[serde(rename = "type")]
    type_id: String,
    priority: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCost {
    #[serde(default)]
    machine_rate: BTreeMap<String, f64>,
    jump_cost: Option<f64>,
    storage_cost: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDown {
    machine: u32,
    from: u32,
    to: Option<u32>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlan {
    #[serde(default)]
    placements: Vec<RawPlacement>,
    metrics: RawMetrics,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlacement {
    piece: u32,
    step: u32,
    machine: u32,
    start: u32,
    finish: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMetrics {
    makespan: u32,
    jumps: u32,
    cost: f64,
}

pub(crate) fn syntax_error(text: &str, err: &toml::de::Error) -> ParseError {
    let (line, column) = match err.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            (line, column)
        }
        None => (0, 0),
    };
    ParseError::Syntax {
        line,
        column,
        message: err.message().trim().to_string(),
    }
}

/// Parses and validates a problem document. All semantic issues are reported together.
pub fn parse_problem(text: &str) -> Result<ProblemInstance, ParseError> {
    let raw: RawProblem = toml::from_str(text).map_err(|e| syntax_error(text, &e))?;
    let mut issues = Vec::new();
    let mut issue = |path: String, message: String| issues.push(Issue { path, message });

    let machines: Vec<MachineId> = raw.machines.iter().map(|&m| MachineId(m)).collect();
    let machine_set: BTreeSet<MachineId> = machines.iter().copied().collect();
    if machines.is_empty() {
        issue("machines".into(), "at least one machine is required".into());
    }
    if machine_set.len() != machines.len() {
        issue("machines".into(), "machine ids must be unique".into());
    }
    if machines.iter().any(|m| m.0 == 0) {
        issue("machines".into(), "machine ids must be positive".into());
    }

    let machine_key = |key: &str| key.trim().parse::<u32>().ok().map(MachineId);

    let mut types = BTreeMap::new();
    for (type_id, raw_steps) in &raw.types {
        let base = format!("types.{type_id}");
        if type_id.is_empty()
            || !type_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            issue(base.clone(), "type symbols use [A-Za-z0-9_-]".into());
        }
        if raw_steps.is_empty() {
            issue(
                base.clone(),
                "a type needs at least one working step".into(),
            );
        }
        let mut steps = Vec::with_capacity(raw_steps.len());
        let mut seen = BTreeSet::new();
        let mut prev_group = 0;
        for (idx, rs) in raw_steps.iter().enumerate() {
            let path = format!("{base}.steps[{idx}]");
            if rs.id == 0 {
                issue(path.clone(), "step id must be positive".into());
            }
            if !seen.insert(rs.id) {
                issue(path.clone(), format!("duplicate step id {}", rs.id));
            }
            if idx == 0 && rs.group != 1 {
                issue(path.clone(), "order groups must start at 1".into());
            } else if rs.group < prev_group {
                issue(path.clone(), "order groups must be non-decreasing".into());
            } else if idx > 0 && rs.group > prev_group + 1 {
                issue(
                    path.clone(),
                    format!("order group {} leaves a gap", rs.group),
                );
            }
            prev_group = rs.group.max(prev_group);

            let mut durations = BTreeMap::new();
            for (key, &d) in &rs.durations {
                match machine_key(key) {
                    Some(m) if machine_set.contains(&m) => {
                        durations.insert(m, d);
                    }
                    _ => issue(
                        format!("{path}.durations"),
                        format!("unknown machine `{key}`"),
                    ),
                }
            }
            for m in &machines {
                if !durations.contains_key(m) {
                    issue(
                        format!("{path}.durations"),
                        format!("missing duration for machine {}", m.0),
                    );
                }
            }
            let spec = StepSpec {
                id: StepId(rs.id),
                group: rs.group,
                durations,
            };
            if spec.capable_machines().next().is_none() {
                issue(path.clone(), "step capable on no machine".into());
            }
            if raw.homogeneous && spec.min_duration() != spec.max_duration() {
                issue(
                    path.clone(),
                    "homogeneous machines require equal durations".into(),
                );
            }
            steps.push(spec);
        }
        types.insert(
            type_id.clone(),
            WorkpieceType {
                id: type_id.clone(),
                steps,
            },
        );
    }

    let mut pieces = Vec::with_capacity(raw.pieces.len());
    let mut piece_ids = BTreeSet::new();
    for (idx, rp) in raw.pieces.iter().enumerate() {
        let path = format!("pieces[{idx}]");
        if rp.id == 0 {
            issue(path.clone(), "piece id must be positive".into());
        }
        if !piece_ids.insert(rp.id) {
            issue(path.clone(), format!("duplicate piece id {}", rp.id));
        }
        if rp.priority == 0 {
            issue(path.clone(), "priority must be positive".into());
        }
        if !types.contains_key(&rp.type_id) {
            issue(path.clone(), format!("unknown type `{}`", rp.type_id));
        }
        pieces.push(Piece {
            id: PieceId(rp.id),
            type_id: rp.type_id.clone(),
            priority: rp.priority,
        });
    }

    let cost = match raw.cost {
        None => CostModel::default(),
        Some(rc) => {
            let mut machine_rate = BTreeMap::new();
            for (key, &rate) in &rc.machine_rate {
                match machine_key(key) {
                    Some(m) if machine_set.contains(&m) => {
                        machine_rate.insert(m, rate);
                    }
                    _ => issue(
                        "cost.machine_rate".into(),
                        format!("unknown machine `{key}`"),
                    ),
                }
                if !(rate.is_finite() && rate >= 0.0) {
                    issue(
                        format!("cost.machine_rate.{key}"),
                        "rates must be finite and non-negative".into(),
                    );
                }
            }
            let defaults = CostModel::default();
            let jump_cost = rc.jump_cost.unwrap_or(defaults.jump_cost);
            let storage_cost = rc.storage_cost.unwrap_or(defaults.storage_cost);
            for (name, v) in [("jump_cost", jump_cost), ("storage_cost", storage_cost)] {
                if !(v.is_finite() && v >= 0.0) {
                    issue(
                        format!("cost.{name}"),
                        "rates must be finite and non-negative".into(),
                    );
                }
            }
            CostModel {
                machine_rate,
                jump_cost,
                storage_cost,
            }
        }
    };

    if raw.horizon == Some(0) {
        issue("horizon".into(), "horizon must be positive".into());
    }

    let mut down = Vec::with_capacity(raw.down.len());
    for (idx, rd) in raw.down.iter().enumerate() {
        let path = format!("down[{idx}]");
        if !machine_set.contains(&MachineId(rd.machine)) {
            issue(path.clone(), format!("unknown machine {}", rd.machine));
        }
        if rd.to.is_some_and(|to| to <= rd.from) {
            issue(path.clone(), "interval must satisfy from < to".into());
        }
        down.push(DownInterval {
            machine: MachineId(rd.machine),
            from: rd.from,
            to: rd.to,
        });
    }

    if !issues.is_empty() {
        return Err(ParseError::Semantic(issues));
    }
    Ok(ProblemInstance {
        machines,
        types,
        pieces,
        cost,
        horizon_hint: raw.horizon,
        homogeneous: raw.homogeneous,
        down,
    })
}

/// Re-validates an instance that was edited in memory by serializing it
/// through the document validator.
pub(crate) fn revalidate(instance: &ProblemInstance) -> Result<ProblemInstance, ParseError> {
    parse_problem(&instance.to_document())
}

fn fmt_float(v: f64) -> String {
    format!("{v:?}")
}

impl ProblemInstance {
    pub fn to_document(&self) -> String {
        let mut out = String::new();
        let machines: Vec<String> = self.machines.iter().map(|m| m.0.to_string()).collect();
        let _ = writeln!(out, "machines = [{}]", machines.join(", "));
        if self.homogeneous {
            out.push_str("homogeneous = true\n");
        }
        if let Some(h) = self.horizon_hint {
            let _ = writeln!(out, "horizon = {h}");
        }
        for ty in self.types.values() {
            for step in &ty.steps {
                let durations: Vec<String> = self
                    .machines
                    .iter()
                    .map(|m| format!("{} = {}", m.0, step.duration_on(*m).unwrap_or(0)))
                    .collect();
                let _ = write!(
                    out,
                    "\n[[types.{}]]\nid = {}\ngroup = {}\ndurations = {{ {} }}\n",
                    ty.id,
                    step.id.0,
                    step.group,
                    durations.join(", ")
                );
            }
        }
        for p in &self.pieces {
            let _ = write!(
                out,
                "\n[[pieces]]\nid = {}\ntype = \"{}\"\npriority = {}\n",
                p.id.0, p.type_id, p.priority
            );
        }
        for d in &self.down {
            let _ = write!(
                out,
                "\n[[down]]\nmachine = {}\nfrom = {}\n",
                d.machine.0, d.from
            );
            if let Some(to) = d.to {
                let _ = writeln!(out, "to = {to}");
            }
        }
        let rates: Vec<String> = self
            .cost
            .machine_rate
            .iter()
            .map(|(m, r)| format!("{} = {}", m.0, fmt_float(*r)))
            .collect();
        let _ = write!(
            out,
            "\n[cost]\nmachine_rate = {{ {} }}\njump_cost = {}\nstorage_cost = {}\n",
            rates.join(", "),
            fmt_float(self.cost.jump_cost),
            fmt_float(self.cost.storage_cost)
        );
        out
    }
}

pub(crate) fn plan_to_document(plan: &Plan) -> String {
    let mut out = String::new();
    for p in &plan.placements {
        let _ = write!(
            out,
            "[[placements]]\npiece = {}\nstep = {}\nmachine = {}\nstart = {}\nfinish = {}\n\n",
            p.piece.0, p.step.0, p.machine.0, p.start, p.finish
        );
    }
    let _ = write!(
        out,
        "[metrics]\nmakespan = {}\njumps = {}\ncost = {}\n",
        plan.makespan,
        plan.jumps,
        fmt_float(plan.cost)
    );
    out
}

/// Parses a plan document as written; metrics are taken verbatim so that
/// [`check_feasibility`](super::check_feasibility) can audit them.
pub fn parse_plan(text: &str) -> Result<Plan, ParseError> {
    let raw: RawPlan = toml::from_str(text).map_err(|e| syntax_error(text, &e))?;
    let mut issues = Vec::new();
    let placements = raw
        .placements
        .iter()
        .enumerate()
        .map(|(idx, p)| {
            if p.finish < p.start {
                issues.push(Issue {
                    path: format!("placements[{idx}]"),
                    message: "finish precedes start".into(),
                });
            }
            Placement {
                piece: PieceId(p.piece),
                step: StepId(p.step),
                machine: MachineId(p.machine),
                start: p.start,
                finish: p.finish.max(p.start),
            }
        })
        .collect();
    if !issues.is_empty() {
        return Err(ParseError::Semantic(issues));
    }
    Ok(Plan {
        placements,
        makespan: raw.metrics.makespan,
        jumps: raw.metrics.jumps,
        cost: raw.metrics.cost,
    })
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::*;

    #[test]
    fn table_one_rows_match() {
        let inst = table_a();
        let a = &inst.types["A"];
        assert_eq!(a.steps.len(), 11);
        let rows: Vec<(u32, [u32; 3], u32)> = a
            .steps
            .iter()
            .map(|s| {
                let d = |m| s.durations[&MachineId(m)];
                (s.id.0, [d(1), d(2), d(3)], s.group)
            })
            .collect();
        let expected = vec![
            (1, [1, 0, 1], 1),
            (2, [2, 0, 2], 2),
            (3, [0, 1, 1], 2),
            (4, [3, 0, 3], 2),
            (5, [1, 1, 0], 2),
            (6, [2, 2, 2], 2),
            (7, [0, 1, 1], 3),
            (8, [3, 0, 3], 4),
            (9, [2, 0, 2], 4),
            (10, [1, 1, 0], 4),
            (11, [1, 1, 1], 4),
        ];
        assert_eq!(rows, expected);
        assert_eq!(inst.pieces.len(), 1);
    }

    #[test]
    fn zero_pieces_is_valid() {
        let text = "machines = [1]\n[[types.X]]\nid = 1\ngroup = 1\ndurations = { 1 = 2 }\n";
        let inst = parse_problem(text).unwrap();
        assert!(inst.pieces.is_empty());
        assert_eq!(inst.cost, CostModel::default());
    }

    #[test]
    fn incapable_step_is_reported_with_path() {
        let text = TABLE_A.replace(
            "id = 3\ngroup = 2\ndurations = { 1 = 0, 2 = 1, 3 = 1 }",
            "id = 3\ngroup = 2\ndurations = { 1 = 0, 2 = 0, 3 = 0 }",
        );
        let err = parse_problem(&text).unwrap_err();
        let issues = err.issues();
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].path, "types.A.steps[2]");
        assert_eq!(issues[0].message, "step capable on no machine");
    }

    #[test]
    fn issues_are_collected() {
        let text =
            "machines = [1, 1]\n[[types.X]]\nid = 1\ngroup = 2\ndurations = { 1 = 2, 7 = 1 }\n\
                    [[pieces]]\nid = 1\ntype = \"Q\"\npriority = 0\n";
        let err = parse_problem(text).unwrap_err();
        assert!(err.issues().len() >= 4, "{err}");
    }

    #[test]
    fn truncated_document_is_a_syntax_error() {
        let cut = &TABLE_A[..TABLE_A.find("durations = { 1 = 3").unwrap() + 15];
        match parse_problem(cut) {
            Err(ParseError::Syntax { line, .. }) => assert!(line > 1),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn group_gaps_are_rejected() {
        let text = "machines = [1]\n[[types.X]]\nid = 1\ngroup = 1\ndurations = { 1 = 2 }\n\
                    [[types.X]]\nid = 2\ngroup = 3\ndurations = { 1 = 2 }\n";
        let err = parse_problem(text).unwrap_err();
        assert_eq!(err.issues()[0].path, "types.X.steps[1]");
    }

    #[test]
    fn plan_document_roundtrip() {
        let inst = table_a();
        let plan = Plan::new(vec![place(1, 1, 1, 0, 1), place(1, 2, 3, 1, 2)], &inst);
        let back = parse_plan(&plan.to_document()).unwrap();
        assert_eq!(back, plan);
    }
}
