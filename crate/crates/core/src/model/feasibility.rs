use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{MachineId, PieceId, Placement, Plan, ProblemInstance, StepId};

/// A constraint broken by a plan. Violations are data, not errors.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    UnknownPiece {
        piece: PieceId,
    },
    UnknownStep {
        piece: PieceId,
        step: StepId,
    },
    UnknownMachine {
        machine: MachineId,
    },
    DuplicateStep {
        piece: PieceId,
        step: StepId,
    },
    MissingStep {
        piece: PieceId,
        step: StepId,
    },
    /// C1: the machine cannot perform the step.
    Incapable {
        piece: PieceId,
        step: StepId,
        machine: MachineId,
    },
    DurationMismatch {
        piece: PieceId,
        step: StepId,
        expected: u32,
        found: u32,
    },
    MachineOverlap {
        machine: MachineId,
        first: (PieceId, StepId),
        second: (PieceId, StepId),
        from: u32,
        to: u32,
    },
    MachineDown {
        machine: MachineId,
        piece: PieceId,
        step: StepId,
    },
    /// C2–C4: a step of a later order group starts before an earlier group finished.
    Precedence {
        piece: PieceId,
        before: StepId,
        after: StepId,
    },
    /// C5/C6: two steps of one piece run at the same time.
    PieceOverlap {
        piece: PieceId,
        first: StepId,
        second: StepId,
    },
    /// C7: a lower-priority piece does not start a step strictly later.
    Priority {
        type_id: String,
        step: StepId,
        higher: PieceId,
        lower: PieceId,
    },
    MetricsMismatch {
        field: &'static str,
        recorded: f64,
        actual: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            UnknownPiece { piece } => write!(f, "UnknownPiece {piece}"),
            UnknownStep { piece, step } => write!(f, "UnknownStep {piece}.{step}"),
            UnknownMachine { machine } => write!(f, "UnknownMachine {machine}"),
            DuplicateStep { piece, step } => write!(f, "DuplicateStep {piece}.{step}"),
            MissingStep { piece, step } => write!(f, "MissingStep {piece}.{step}"),
            Incapable {
                piece,
                step,
                machine,
            } => {
                write!(f, "Incapable {piece}.{step} on {machine}")
            }
            DurationMismatch {
                piece,
                step,
                expected,
                found,
            } => write!(
                f,
                "DurationMismatch {piece}.{step}: expected {expected}, found {found}"
            ),
            MachineOverlap {
                machine,
                first,
                second,
                from,
                to,
            } => write!(
                f,
                "MachineOverlap {machine} [{from},{to}): {}.{} and {}.{}",
                first.0, first.1, second.0, second.1
            ),
            MachineDown {
                machine,
                piece,
                step,
            } => {
                write!(f, "MachineDown {machine}: {piece}.{step}")
            }
            Precedence {
                piece,
                before,
                after,
            } => {
                write!(
                    f,
                    "Precedence {piece}: {after} starts before {before} finishes"
                )
            }
            PieceOverlap {
                piece,
                first,
                second,
            } => {
                write!(f, "PieceOverlap {piece}: {first} and {second}")
            }
            Priority {
                type_id,
                step,
                higher,
                lower,
            } => write!(
                f,
                "Priority type {type_id} {step}: {lower} must start after {higher}"
            ),
            MetricsMismatch {
                field,
                recorded,
                actual,
            } => {
                write!(
                    f,
                    "MetricsMismatch {field}: recorded {recorded}, actual {actual}"
                )
            }
        }
    }
}

/// Audits a plan against every constraint of `instance`; empty iff feasible.
pub fn check_feasibility(plan: &Plan, instance: &ProblemInstance) -> Vec<Violation> {
    let mut out = Vec::new();
    let machines: BTreeSet<MachineId> = instance.machines.iter().copied().collect();

    let mut by_piece: BTreeMap<PieceId, Vec<Placement>> = BTreeMap::new();
    let mut reported_machines = BTreeSet::new();
    for p in &plan.placements {
        if !machines.contains(&p.machine) && reported_machines.insert(p.machine) {
            out.push(Violation::UnknownMachine { machine: p.machine });
        }
        by_piece.entry(p.piece).or_default().push(*p);
    }

    // per-piece: completeness, C1, durations, C2–C6
    for (&piece_id, seq) in by_piece.iter_mut() {
        let Some(piece) = instance.piece(piece_id) else {
            out.push(Violation::UnknownPiece { piece: piece_id });
            continue;
        };
        let ty = instance.type_of(piece);
        seq.sort_by_key(|p| (p.start, p.step));
        let mut seen = BTreeSet::new();
        for p in seq.iter() {
            if !seen.insert(p.step) {
                out.push(Violation::DuplicateStep {
                    piece: piece_id,
                    step: p.step,
                });
            }
            let Some(spec) = ty.step(p.step) else {
                out.push(Violation::UnknownStep {
                    piece: piece_id,
                    step: p.step,
                });
                continue;
            };
            match spec.durations.get(&p.machine).copied() {
                Some(d) if d > 0 => {
                    if p.length() != d {
                        out.push(Violation::DurationMismatch {
                            piece: piece_id,
                            step: p.step,
                            expected: d,
                            found: p.length(),
                        });
                    }
                }
                _ if machines.contains(&p.machine) => out.push(Violation::Incapable {
                    piece: piece_id,
                    step: p.step,
                    machine: p.machine,
                }),
                _ => {}
            }
        }
        for a in 0..seq.len() {
            for b in (a + 1)..seq.len() {
                let (pa, pb) = (seq[a], seq[b]);
                let (Some(sa), Some(sb)) = (ty.step(pa.step), ty.step(pb.step)) else {
                    continue;
                };
                if sa.group == sb.group {
                    if pa.overlaps(&pb) {
                        out.push(Violation::PieceOverlap {
                            piece: piece_id,
                            first: pa.step,
                            second: pb.step,
                        });
                    }
                    continue;
                }
                let (early, late) = if sa.group < sb.group {
                    (pa, pb)
                } else {
                    (pb, pa)
                };
                if late.start < early.finish {
                    out.push(Violation::Precedence {
                        piece: piece_id,
                        before: early.step,
                        after: late.step,
                    });
                }
            }
        }
    }
    for piece in &instance.pieces {
        let Some(ty) = instance.types.get(&piece.type_id) else {
            continue;
        };
        let placed: BTreeSet<StepId> = by_piece
            .get(&piece.id)
            .map(|v| v.iter().map(|p| p.step).collect())
            .unwrap_or_default();
        for s in &ty.steps {
            if !placed.contains(&s.id) {
                out.push(Violation::MissingStep {
                    piece: piece.id,
                    step: s.id,
                });
            }
        }
    }

    // machine exclusivity and availability
    let mut by_machine: BTreeMap<MachineId, Vec<Placement>> = BTreeMap::new();
    for p in &plan.placements {
        by_machine.entry(p.machine).or_default().push(*p);
    }
    for (&machine, seq) in by_machine.iter_mut() {
        seq.sort_by_key(|p| (p.start, p.finish, p.piece, p.step));
        let mut reach: Option<Placement> = None;
        for p in seq.iter() {
            if let Some(prev) = reach {
                if p.start < prev.finish && p.length() > 0 {
                    out.push(Violation::MachineOverlap {
                        machine,
                        first: (prev.piece, prev.step),
                        second: (p.piece, p.step),
                        from: p.start,
                        to: prev.finish.min(p.finish),
                    });
                }
            }
            if reach.is_none_or(|r| p.finish > r.finish) {
                reach = Some(*p);
            }
            if instance
                .down
                .iter()
                .any(|d| d.machine == machine && d.overlaps(p.start, p.finish))
            {
                out.push(Violation::MachineDown {
                    machine,
                    piece: p.piece,
                    step: p.step,
                });
            }
        }
    }

    // C7 between same-type pieces of different priority
    let mut by_type: BTreeMap<&str, Vec<&super::Piece>> = BTreeMap::new();
    for piece in &instance.pieces {
        by_type.entry(&piece.type_id).or_default().push(piece);
    }
    for (type_id, pieces) in by_type {
        for (i, p) in pieces.iter().enumerate() {
            for q in &pieces[i + 1..] {
                let (hi, lo) = match p.priority.cmp(&q.priority) {
                    std::cmp::Ordering::Less => (p, q),
                    std::cmp::Ordering::Greater => (q, p),
                    std::cmp::Ordering::Equal => continue,
                };
                let Some(ty) = instance.types.get(type_id) else {
                    continue;
                };
                for s in &ty.steps {
                    let (Some(a), Some(b)) =
                        (plan.placement(hi.id, s.id), plan.placement(lo.id, s.id))
                    else {
                        continue;
                    };
                    if b.start <= a.start {
                        out.push(Violation::Priority {
                            type_id: type_id.to_string(),
                            step: s.id,
                            higher: hi.id,
                            lower: lo.id,
                        });
                    }
                }
            }
        }
    }

    // recorded metrics
    let mut fresh = plan.clone();
    fresh.refresh_metrics(instance);
    if fresh.makespan != plan.makespan {
        out.push(Violation::MetricsMismatch {
            field: "makespan",
            recorded: plan.makespan as f64,
            actual: fresh.makespan as f64,
        });
    }
    if fresh.jumps != plan.jumps {
        out.push(Violation::MetricsMismatch {
            field: "jumps",
            recorded: plan.jumps as f64,
            actual: fresh.jumps as f64,
        });
    }
    if (fresh.cost - plan.cost).abs() > 1e-9 * fresh.cost.abs().max(1.0) {
        out.push(Violation::MetricsMismatch {
            field: "cost",
            recorded: plan.cost,
            actual: fresh.cost,
        });
    }
    out
}
