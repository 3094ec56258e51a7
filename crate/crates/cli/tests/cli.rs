use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use agentplan::model::{check_feasibility, parse_plan, parse_problem};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn agentplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agentplan"))
        .args(args)
        .env_remove("AGENTPLAN_LOG")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_accepts_the_bundled_table() {
    let o = agentplan(&["validate", path(&fixture("tableA.problem"))]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("11 working steps"));
}

#[test]
fn validate_reports_syntax_errors_with_a_line() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(fixture("tableA.problem")).unwrap();
    let cut = dir.path().join("cut.problem");
    fs::write(&cut, &text[..text.len() / 3]).unwrap();
    let o = agentplan(&["validate", path(&cut)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("SyntaxError at line"), "{}", stderr(&o));
}

#[test]
fn validate_names_the_incapable_step() {
    let dir = tempfile::tempdir().unwrap();
    let mut inst = parse_problem(&fs::read_to_string(fixture("tableA.problem")).unwrap()).unwrap();
    let step = &mut inst.types.get_mut("A").unwrap().steps[2];
    for d in step.durations.values_mut() {
        *d = 0;
    }
    let bad = dir.path().join("bad.problem");
    fs::write(&bad, inst.to_document()).unwrap();
    let o = agentplan(&["validate", path(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("SemanticError"), "{err}");
    assert!(err.contains("types.A.steps[2]"), "{err}");
}

#[test]
fn missing_files_and_bad_flags_are_input_errors() {
    let o = agentplan(&["plan", "/nonexistent/x.problem"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("IoError"));
    let o = agentplan(&["plan", path(&fixture("fig6.problem")), "--iterations", "3"]);
    assert_eq!(o.status.code(), Some(2));
    let o = agentplan(&[
        "optimize",
        path(&fixture("fig6.problem")),
        "--objective",
        "cost-at-length",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("InvalidParams"));
}

#[test]
fn plan_single_table_piece() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a.plan");
    let gantt = dir.path().join("a.txt");
    let o = agentplan(&[
        "plan",
        path(&fixture("tableA.problem")),
        "--pieces",
        "A=1",
        "--out",
        path(&out),
        "--gantt",
        path(&gantt),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let plan = parse_plan(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(plan.makespan, 18);
    let chart = fs::read_to_string(&gantt).unwrap();
    let rows: Vec<&str> = chart.lines().collect();
    assert_eq!(rows.len(), 3);
    for (i, row) in rows.iter().enumerate() {
        assert!(row.starts_with(&format!("M{} |", i + 1)));
        assert_eq!(row.len(), "M1 |".len() + 18 + 1);
    }
}

#[test]
fn optimize_reaches_the_fig6_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("f.plan");
    let hist = dir.path().join("h.csv");
    let o = agentplan(&[
        "optimize",
        path(&fixture("fig6.problem")),
        "--objective",
        "makespan",
        "--iterations",
        "200",
        "--seed",
        "7",
        "--out",
        path(&out),
        "--history",
        path(&hist),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let plan = parse_plan(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(plan.makespan, 6);
    let inst = parse_problem(&fs::read_to_string(fixture("fig6.problem")).unwrap()).unwrap();
    assert_eq!(check_feasibility(&plan, &inst), vec![]);
    let h = fs::read_to_string(&hist).unwrap();
    assert!(h.starts_with("iteration,best_objective\n1,"));
    assert_eq!(h.lines().count(), 201);
}

#[test]
fn oracle_refuses_large_instances() {
    let o = agentplan(&["oracle", path(&fixture("tableA3.problem"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("LimitExceeded"));
    let o = agentplan(&["oracle", path(&fixture("fig6.problem"))]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("optimum=6.000"));
}

#[test]
fn infeasible_instances_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(fixture("fig6.problem")).unwrap();
    let down: String = (1..=3)
        .map(|m| format!("\n[[down]]\nmachine = {m}\nfrom = 0\n"))
        .collect();
    let p = dir.path().join("down.problem");
    fs::write(&p, text + &down).unwrap();
    let o = agentplan(&["plan", path(&p)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("HorizonExhausted"), "{}", stderr(&o));
}

#[test]
fn disturb_writes_before_and_after() {
    let dir = tempfile::tempdir().unwrap();
    let before = dir.path().join("before.plan");
    let after = dir.path().join("after.plan");
    let o = agentplan(&[
        "disturb",
        path(&fixture("tableA3.problem")),
        path(&fixture("down.scenario")),
        "--before",
        path(&before),
        "--out",
        path(&after),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("event machine_down M1 [10,20)"));
    let b = parse_plan(&fs::read_to_string(&before).unwrap()).unwrap();
    let a = parse_plan(&fs::read_to_string(&after).unwrap()).unwrap();
    assert!(a
        .placements
        .iter()
        .all(|p| p.machine.0 != 1 || p.finish <= 10 || p.start >= 20));
    for p in b.placements.iter().filter(|p| p.finish <= 10) {
        assert!(a.placements.contains(p), "{p:?}");
    }
}

#[test]
fn sweep_csv_contract() {
    let o = agentplan(&[
        "sweep",
        path(&fixture("tableA3.problem")),
        "--forecast-depths",
        "0,1,2",
        "--iterations",
        "5",
        "--ants",
        "6",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = stdout(&o);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("depth,jumps,length,cost,feasible"));
    let depths: std::collections::BTreeSet<&str> =
        lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(depths.into_iter().collect::<Vec<_>>(), ["0", "1", "2"]);
}

#[test]
fn message_and_firing_logs_go_to_stderr() {
    let fig6 = fixture("fig6.problem");
    let o = Command::new(env!("CARGO_BIN_EXE_agentplan"))
        .args(["plan", path(&fig6)])
        .env("AGENTPLAN_LOG", "msg")
        .output()
        .unwrap();
    assert!(stderr(&o).lines().any(|l| l.starts_with("MSG Propagate ctl→P1.WS1")));
    let o = Command::new(env!("CARGO_BIN_EXE_agentplan"))
        .args(["plan", path(&fig6)])
        .env("AGENTPLAN_LOG", "fire")
        .output()
        .unwrap();
    assert!(stderr(&o)
        .lines()
        .next()
        .unwrap()
        .starts_with("FIRE t0 p0->p1 role=γ0 outcome=ok payload=n=9"));
    assert!(!stdout(&o).contains("FIRE"));
}

#[test]
fn svg_output_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut seen = Vec::new();
    for i in 0..2 {
        let svg = dir.path().join(format!("{i}.svg"));
        let o = agentplan(&[
            "optimize",
            path(&fixture("tableA3.problem")),
            "--iterations",
            "10",
            "--forecast",
            "2",
            "--seed",
            "3",
            "--gantt",
            path(&svg),
        ]);
        assert_eq!(o.status.code(), Some(0));
        seen.push((stdout(&o), fs::read(&svg).unwrap()));
    }
    assert_eq!(seen[0], seen[1]);
    assert!(String::from_utf8_lossy(&seen[0].1).starts_with("<svg"));
}
