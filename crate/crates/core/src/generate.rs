//! Seeded random instances for tests, fuzzing and benchmarks.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{
    CostModel, MachineId, Piece, PieceId, ProblemInstance, StepId, StepSpec, WorkpieceType,
};

#[derive(Clone, Debug, PartialEq)]
pub struct GenParams {
    pub machines: (usize, usize),
    pub types: (usize, usize),
    pub steps: (usize, usize),
    pub pieces: (usize, usize),
    pub max_duration: u32,
    /// Chance that a machine is capable of a step; one machine always is.
    pub capable: f64,
    /// Instances whose default horizon exceeds this are redrawn.
    pub max_horizon: u32,
}

impl Default for GenParams {
    /// Sized to fit the default oracle limits.
    fn default() -> Self {
        Self {
            machines: (2, 3),
            types: (1, 2),
            steps: (1, 4),
            pieces: (1, 3),
            max_duration: 3,
            capable: 0.7,
            max_horizon: 24,
        }
    }
}

pub fn random_instance(seed: u64, params: &GenParams) -> ProblemInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let inst = draw(&mut rng, params);
        if inst.default_horizon() <= params.max_horizon {
            return inst;
        }
    }
}

fn draw(rng: &mut ChaCha8Rng, params: &GenParams) -> ProblemInstance {
    let nm = rng.random_range(params.machines.0..=params.machines.1);
    let machines: Vec<MachineId> = (1..=nm as u32).map(MachineId).collect();
    let nt = rng.random_range(params.types.0..=params.types.1);
    let mut types = BTreeMap::new();
    for t in 0..nt {
        let id = ((b'A' + t as u8) as char).to_string();
        let ns = rng.random_range(params.steps.0..=params.steps.1);
        let mut group = 1;
        let mut steps = Vec::new();
        for j in 1..=ns as u32 {
            if j > 1 && rng.random_bool(0.5) {
                group += 1;
            }
            let must = rng.random_range(0..nm);
            let durations = machines
                .iter()
                .enumerate()
                .map(|(k, &m)| {
                    let d = if k == must || rng.random_bool(params.capable) {
                        rng.random_range(1..=params.max_duration)
                    } else {
                        0
                    };
                    (m, d)
                })
                .collect();
            steps.push(StepSpec {
                id: StepId(j),
                group,
                durations,
            });
        }
        types.insert(id.clone(), WorkpieceType { id, steps });
    }
    let type_ids: Vec<String> = types.keys().cloned().collect();
    let np = rng.random_range(params.pieces.0..=params.pieces.1);
    let pieces = (1..=np as u32)
        .map(|n| Piece {
            id: PieceId(n),
            type_id: type_ids[rng.random_range(0..type_ids.len())].clone(),
            priority: rng.random_range(1..=np as u32),
        })
        .collect();
    ProblemInstance {
        machines,
        types,
        pieces,
        cost: CostModel::default(),
        horizon_hint: None,
        homogeneous: false,
        down: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_problem;
    use crate::oracle::OracleLimits;

    #[test]
    fn generated_instances_validate_and_fit_oracle() {
        let params = GenParams::default();
        for seed in 0..100 {
            let inst = random_instance(seed, &params);
            let back = parse_problem(&inst.to_document()).unwrap();
            assert_eq!(back, inst);
            OracleLimits::default().check(&inst).unwrap();
        }
    }

    #[test]
    fn same_seed_same_instance() {
        let p = GenParams::default();
        assert_eq!(random_instance(5, &p), random_instance(5, &p));
    }
}
