use std::collections::{BTreeMap, BTreeSet};

use super::{
    CostModel, MachineId, ModelError, Piece, PieceId, Placement, Plan, ProblemInstance,
    WorkpieceType,
};

/// Number of machine changes between consecutive steps of `piece`, in start order.
pub fn count_jumps(
    plan: &Plan,
    instance: &ProblemInstance,
    piece: PieceId,
) -> Result<u32, ModelError> {
    let spec = instance
        .piece(piece)
        .ok_or(ModelError::UnknownPiece(piece))?;
    let placed = plan.piece_placements(piece);
    let have: BTreeSet<_> = placed.iter().map(|p| p.step).collect();
    let missing: Vec<_> = instance
        .type_of(spec)
        .steps
        .iter()
        .map(|s| s.id)
        .filter(|id| !have.contains(id))
        .collect();
    if !missing.is_empty() {
        return Err(ModelError::MissingSteps { piece, missing });
    }
    Ok(jumps_in_sequence(&placed))
}

fn jumps_in_sequence(sorted: &[Placement]) -> u32 {
    sorted
        .windows(2)
        .filter(|w| w[0].machine != w[1].machine)
        .count() as u32
}

pub(crate) fn total_jumps(placements: &[Placement]) -> u32 {
    let mut by_piece: BTreeMap<PieceId, Vec<Placement>> = BTreeMap::new();
    for p in placements {
        by_piece.entry(p.piece).or_default().push(*p);
    }
    by_piece
        .into_values()
        .map(|mut v| {
            v.sort_by_key(|p| (p.start, p.step));
            jumps_in_sequence(&v)
        })
        .sum()
}

/// The fewest machine changes any group-respecting order and capable machine
/// choice can achieve for one piece of `ty`.
///
/// Dynamic program over (steps done within the current group, last machine);
/// groups are chained through the last-machine vector.
pub fn min_jumps(ty: &WorkpieceType) -> u32 {
    const INF: u32 = u32::MAX / 2;
    let machines: Vec<MachineId> = ty
        .steps
        .iter()
        .flat_map(|s| s.durations.keys().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let nm = machines.len();
    // None until the first step has been placed.
    let mut carry: Option<Vec<u32>> = None;
    for group in ty.groups() {
        let n = group.len();
        let capable: Vec<Vec<usize>> = group
            .iter()
            .map(|s| {
                (0..nm)
                    .filter(|&k| s.is_capable(machines[k]))
                    .collect::<Vec<_>>()
            })
            .collect();
        let mut dp = vec![vec![INF; nm]; 1 << n];
        for (i, caps) in capable.iter().enumerate() {
            for &k in caps {
                let entry = match &carry {
                    None => 0,
                    Some(prev) => (0..nm)
                        .map(|pk| prev[pk].saturating_add(u32::from(pk != k)))
                        .min()
                        .unwrap_or(INF),
                };
                dp[1 << i][k] = dp[1 << i][k].min(entry);
            }
        }
        for mask in 1..(1usize << n) {
            for k in 0..nm {
                let here = dp[mask][k];
                if here >= INF {
                    continue;
                }
                for (i, caps) in capable.iter().enumerate() {
                    if mask & (1 << i) != 0 {
                        continue;
                    }
                    for &k2 in caps {
                        let next = &mut dp[mask | (1 << i)][k2];
                        *next = (*next).min(here + u32::from(k != k2));
                    }
                }
            }
        }
        carry = Some(dp.pop().unwrap_or_default());
    }
    carry
        .and_then(|v| v.into_iter().min())
        .filter(|&v| v < INF)
        .unwrap_or(0)
}

/// Σ of the shortest capable durations of a piece's steps.
pub fn piece_lower_bound(instance: &ProblemInstance, piece: &Piece) -> u32 {
    instance
        .type_of(piece)
        .steps
        .iter()
        .map(|s| s.min_duration())
        .sum()
}

/// Processing + transport + intermediate storage cost of a plan.
///
/// A step's storage delay is its start minus the earliest slot at or after
/// its predecessor's finish where the chosen machine is up; first steps of a
/// piece carry no delay.
pub fn compute_cost(plan: &Plan, cost: &CostModel, baseline: &ProblemInstance) -> f64 {
    let processing: f64 = plan
        .placements
        .iter()
        .map(|p| p.length() as f64 * cost.rate(p.machine))
        .sum();
    let jumps = total_jumps(&plan.placements) as f64;

    let mut by_piece: BTreeMap<PieceId, Vec<Placement>> = BTreeMap::new();
    for p in &plan.placements {
        by_piece.entry(p.piece).or_default().push(*p);
    }
    let mut delay: u64 = 0;
    for mut seq in by_piece.into_values() {
        seq.sort_by_key(|p| (p.start, p.step));
        for w in seq.windows(2) {
            let ready = earliest_up(baseline, w[1].machine, w[0].finish, w[1].length());
            delay += u64::from(w[1].start.saturating_sub(ready));
        }
    }
    processing + cost.jump_cost * jumps + cost.storage_cost * delay as f64
}

/// First slot `>= from` where `machine` is up for `len` consecutive slots.
pub(crate) fn earliest_up(
    instance: &ProblemInstance,
    machine: MachineId,
    from: u32,
    len: u32,
) -> u32 {
    let mut t = from;
    loop {
        let blocking = instance
            .down
            .iter()
            .filter(|d| d.machine == machine && d.overlaps(t, t.saturating_add(len)))
            .map(|d| d.end())
            .max();
        match blocking {
            Some(end) if end > t => t = end,
            _ => return t,
        }
        if t == u32::MAX {
            return t;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::{DownInterval, StepId, StepSpec};
    use super::*;

    /// Table A piece on M3 (1,2,3,4,6), then M2 (5,7,10,11), then M1 (8,9).
    fn two_jump_plan(inst: &ProblemInstance) -> Plan {
        let seq = [
            (1, 3, 1),
            (2, 3, 2),
            (3, 3, 1),
            (4, 3, 3),
            (6, 3, 2),
            (5, 2, 1),
            (7, 2, 1),
            (10, 2, 1),
            (11, 2, 1),
            (8, 1, 3),
            (9, 1, 2),
        ];
        let mut t = 0;
        let placements = seq
            .iter()
            .map(|&(step, m, len)| {
                let p = place(1, step, m, t, len);
                t += len;
                p
            })
            .collect();
        Plan::new(placements, inst)
    }

    #[test]
    fn jumps_of_hand_plan() {
        let inst = table_a();
        let plan = two_jump_plan(&inst);
        assert_eq!(plan.makespan, 18);
        assert_eq!(count_jumps(&plan, &inst, PieceId(1)).unwrap(), 2);
        assert_eq!(plan.jumps, 2);
    }

    #[test]
    fn single_step_has_no_jumps() {
        let inst = table_a().with_piece_spec("A=1").unwrap();
        let plan = Plan::new(vec![place(1, 1, 1, 0, 1)], &inst);
        assert!(matches!(
            count_jumps(&plan, &inst, PieceId(1)),
            Err(ModelError::MissingSteps { .. })
        ));
        let mut one = inst.clone();
        one.types.get_mut("A").unwrap().steps.truncate(1);
        assert_eq!(count_jumps(&plan, &one, PieceId(1)).unwrap(), 0);
    }

    #[test]
    fn alternating_machines() {
        let mut inst = fig6();
        inst.pieces.truncate(1);
        let plan = Plan::new(
            vec![
                place(1, 1, 1, 0, 1),
                place(1, 2, 3, 1, 2),
                place(1, 3, 1, 3, 1),
            ],
            &inst,
        );
        assert_eq!(count_jumps(&plan, &inst, PieceId(1)).unwrap(), 2);
    }

    #[test]
    fn min_jumps_examples() {
        assert_eq!(min_jumps(&table_a().types["A"]), 2);
        assert_eq!(min_jumps(&fig6().types["F"]), 0);
        let single = WorkpieceType {
            id: "S".into(),
            steps: vec![StepSpec {
                id: StepId(1),
                group: 1,
                durations: [(MachineId(1), 4)].into_iter().collect(),
            }],
        };
        assert_eq!(min_jumps(&single), 0);
    }

    #[test]
    fn cost_examples() {
        let inst = table_a();
        let plan = two_jump_plan(&inst);
        let zero = CostModel::zero(&inst.machines);
        assert_eq!(compute_cost(&plan, &zero, &inst), 0.0);

        let model = CostModel {
            storage_cost: 0.0,
            ..CostModel::default()
        };
        assert_eq!(compute_cost(&plan, &model, &inst), 20.0);

        // delay the last step by one slot
        let mut delayed = plan.clone();
        let last = delayed
            .placements
            .iter_mut()
            .find(|p| p.step == StepId(9))
            .unwrap();
        last.start += 1;
        last.finish += 1;
        let model = CostModel::default();
        assert!((compute_cost(&delayed, &model, &inst) - 20.1).abs() < 1e-9);
    }

    #[test]
    fn waiting_for_a_down_machine_is_not_storage() {
        let mut inst = fig6();
        inst.pieces.truncate(1);
        inst.down.push(DownInterval {
            machine: MachineId(1),
            from: 1,
            to: Some(4),
        });
        let plan = Plan::new(
            vec![
                place(1, 1, 1, 0, 1),
                place(1, 2, 1, 4, 2),
                place(1, 3, 1, 6, 1),
            ],
            &inst,
        );
        let mut model = CostModel::zero(&inst.machines);
        model.storage_cost = 1.0;
        assert_eq!(compute_cost(&plan, &model, &inst), 0.0);
        assert_eq!(earliest_up(&inst, MachineId(1), 0, 2), 4);
    }
}
