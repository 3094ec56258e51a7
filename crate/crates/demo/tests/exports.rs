use agentplan_demo::{run_machine_down, run_optimize, run_plan};

const FIG6: &str = include_str!("../../../fixtures/fig6.problem");
const TABLE_A3: &str = include_str!("../../../fixtures/tableA3.problem");

#[test]
fn plan_returns_chart_and_document() {
    let o = run_plan(TABLE_A3).unwrap();
    assert_eq!(o.makespan, 30);
    assert!(o.svg.starts_with("<svg"));
    assert!(o.document.contains("[[placements]]"));
    assert!(o.log.is_empty());
}

#[test]
fn optimize_is_seeded() {
    let a = run_optimize(FIG6, 7, 2, 200).unwrap();
    assert_eq!(a.makespan, 6);
    assert_eq!(a, run_optimize(FIG6, 7, 2, 200).unwrap());
}

#[test]
fn machine_down_repairs_the_plan() {
    let o = run_machine_down(TABLE_A3, 1, 10, 20).unwrap();
    assert!(o.log.starts_with("event machine_down M1 [10,20): invalidated"));
    assert!(o.makespan >= 30);
}

#[test]
fn errors_carry_the_kind() {
    let e = run_plan("machines = [").unwrap_err();
    assert!(e.starts_with("SyntaxError"), "{e}");
    let e = run_machine_down(FIG6, 9, 0, 0).unwrap_err();
    assert!(e.starts_with("UnknownMachine"), "{e}");
}
