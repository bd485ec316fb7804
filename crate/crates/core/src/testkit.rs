//! Seeded random candidate instances for verification suites.
//!
//! Instances are generated feasible by construction: for every species,
//! `OH >= H0 + (number of +1 deltas)` and `H0 >= (number of -1 deltas)`,
//! so any execution order keeps habitat within `[0, OH]`. Decoupled
//! instances additionally give every species exactly one candidate cell
//! and only positive deltas, the regime where greedy prefixes are
//! provably cost-optimal at their own index breakpoints.

use std::collections::HashSet;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::prioritizer::CandidateAction;
use crate::sar::{self, SpeciesState};

#[derive(Debug, Clone)]
pub struct InstanceShape {
    pub max_candidates: usize,
    pub max_species: usize,
    pub max_technologies: usize,
    pub allow_negative: bool,
    pub allow_zero_cost: bool,
    pub decoupled: bool,
}

impl InstanceShape {
    /// General instances with habitat losses and shared species.
    pub fn coupled() -> Self {
        InstanceShape {
            max_candidates: 12,
            max_species: 5,
            max_technologies: 2,
            allow_negative: true,
            allow_zero_cost: true,
            decoupled: false,
        }
    }

    /// Each species tied to exactly one candidate, positive deltas only.
    pub fn decoupled() -> Self {
        InstanceShape {
            max_candidates: 12,
            max_species: 5,
            max_technologies: 2,
            allow_negative: false,
            allow_zero_cost: false,
            decoupled: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub candidates: Vec<CandidateAction>,
    pub h0: Vec<u32>,
    pub oh: Vec<u32>,
    pub z: f64,
}

pub fn random_instance(seed: u64, shape: &InstanceShape) -> RandomInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_cands = rng.gen_range(1..=shape.max_candidates);
    let n_species = rng.gen_range(1..=shape.max_species);
    let n_tech = rng.gen_range(1..=shape.max_technologies);
    let techs: Vec<Arc<str>> = (0..n_tech).map(|t| Arc::from(format!("t{t}"))).collect();
    let z = 0.15 + 0.2 * rng.gen::<f64>();

    let mut raw_deltas: Vec<Vec<(u32, i32)>> = vec![Vec::new(); n_cands];
    if shape.decoupled {
        for sp in 0..n_species {
            let cand = rng.gen_range(0..n_cands);
            raw_deltas[cand].push((sp as u32, 1));
        }
    } else {
        for (cand, deltas) in raw_deltas.iter_mut().enumerate() {
            let _ = cand;
            let k = rng.gen_range(1..=3.min(n_species));
            let mut species: Vec<u32> = (0..n_species as u32).collect();
            for _ in 0..k {
                let pick = rng.gen_range(0..species.len());
                let sp = species.swap_remove(pick);
                let sign = if shape.allow_negative && rng.gen::<f64>() < 0.25 {
                    -1
                } else {
                    1
                };
                deltas.push((sp, sign));
            }
            deltas.sort_unstable_by_key(|&(sp, _)| sp);
        }
    }

    let mut plus = vec![0u32; n_species];
    let mut minus = vec![0u32; n_species];
    for deltas in &raw_deltas {
        for &(sp, d) in deltas {
            if d > 0 {
                plus[sp as usize] += d as u32;
            } else {
                minus[sp as usize] += (-d) as u32;
            }
        }
    }
    let mut h0 = Vec::with_capacity(n_species);
    let mut oh = Vec::with_capacity(n_species);
    for sp in 0..n_species {
        let h = minus[sp] + rng.gen_range(0..3);
        let o = (h + plus[sp] + rng.gen_range(0..3)).max(1);
        h0.push(h);
        oh.push(o);
    }

    let mut candidates = Vec::with_capacity(n_cands);
    let mut used_techs: Vec<Vec<usize>> = vec![Vec::new(); n_cands];
    for (j, deltas) in raw_deltas.into_iter().enumerate() {
        let mut tech = rng.gen_range(0..n_tech);
        let mut cell = j;
        // occasionally two technologies compete for the same cell
        if !shape.decoupled && j > 0 && n_tech > 1 && rng.gen::<f64>() < 0.2 {
            let prev = j - 1;
            if let Some(free) = (0..n_tech).find(|t| !used_techs[prev].contains(t)) {
                cell = prev;
                if used_techs[prev].contains(&tech) {
                    tech = free;
                }
            }
        }
        used_techs[cell].push(tech);
        let cost = if shape.allow_zero_cost && rng.gen::<f64>() < 0.15 {
            0.0
        } else {
            rng.gen_range(0.5..40.0)
        };
        candidates.push(CandidateAction {
            cell_id: cell as u32,
            technology_id: Arc::clone(&techs[tech]),
            cost,
            species_deltas: deltas,
            cells: vec![cell as u32],
            to_class: 0,
        });
    }

    RandomInstance {
        candidates,
        h0,
        oh,
        z,
    }
}

/// One step of the reference greedy below.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleStep {
    pub cell_id: u32,
    pub technology_id: Arc<str>,
    pub cost: f64,
    pub marginal_benefit: f64,
    pub index_after: f64,
}

/// Reference greedy: full re-evaluation of every remaining candidate each
/// round, straight off the public persistence API. Deliberately naive and
/// independent of the production sequencer's heap and caching.
pub fn naive_greedy(
    candidates: &[CandidateAction],
    h0: &[u32],
    oh: &[u32],
    z: f64,
    target: Option<f64>,
) -> Vec<OracleStep> {
    let mut states: Vec<SpeciesState> = h0
        .iter()
        .zip(oh)
        .enumerate()
        .map(|(i, (&h, &o))| SpeciesState {
            species_id: format!("s{i}"),
            h,
            oh: o,
        })
        .collect();
    let mut used_cells: HashSet<u32> = HashSet::new();
    let mut done: Vec<bool> = vec![false; candidates.len()];
    let mut steps = Vec::new();
    let mut index = sar::biodiversity_index(&states, z).unwrap().value;

    loop {
        if let Some(t) = target {
            if index >= t - 1e-12 {
                break;
            }
        }
        let mut best: Option<(usize, f64)> = None;
        for (j, cand) in candidates.iter().enumerate() {
            if done[j] || used_cells.contains(&cand.cell_id) {
                continue;
            }
            let mb = sar::cell_marginal_benefit(&cand.species_deltas, &states, z).unwrap();
            if mb <= 0.0 {
                continue;
            }
            let better = match best {
                None => true,
                Some((bj, bmb)) => oracle_prefers(cand, mb, &candidates[bj], bmb),
            };
            if better {
                best = Some((j, mb));
            }
        }
        let Some((j, mb)) = best else { break };
        let cand = &candidates[j];
        for &(sp, d) in &cand.species_deltas {
            let s = &mut states[sp as usize];
            s.h = (s.h as i64 + d as i64) as u32;
        }
        used_cells.insert(cand.cell_id);
        done[j] = true;
        index = sar::biodiversity_index(&states, z).unwrap().value;
        steps.push(OracleStep {
            cell_id: cand.cell_id,
            technology_id: Arc::clone(&cand.technology_id),
            cost: cand.cost,
            marginal_benefit: mb,
            index_after: index,
        });
    }
    steps
}

/// Selection rule restated from scratch: free actions first (higher
/// benefit wins), then higher benefit-per-cost; ties fall to lower cost,
/// lower cell id, then technology id.
fn oracle_prefers(a: &CandidateAction, a_mb: f64, b: &CandidateAction, b_mb: f64) -> bool {
    let a_free = a.cost == 0.0;
    let b_free = b.cost == 0.0;
    if a_free != b_free {
        return a_free;
    }
    let (a_primary, b_primary) = if a_free {
        (a_mb, b_mb)
    } else {
        (a_mb / a.cost, b_mb / b.cost)
    };
    if a_primary != b_primary {
        return a_primary > b_primary;
    }
    if a.cost != b.cost {
        return a.cost < b.cost;
    }
    if a.cell_id != b.cell_id {
        return a.cell_id < b.cell_id;
    }
    a.technology_id < b.technology_id
}

/// Minimum total cost over all candidate subsets (respecting one action
/// per cell) whose final index reaches `target`. Costs are summed in
/// candidate-index order. Returns the cost and the chosen subset.
pub fn exhaustive_min_cost(
    candidates: &[CandidateAction],
    h0: &[u32],
    oh: &[u32],
    z: f64,
    target: f64,
) -> Option<(f64, Vec<usize>)> {
    assert!(candidates.len() <= 20, "exhaustive search is exponential");
    let mut states: Vec<SpeciesState> = h0
        .iter()
        .zip(oh)
        .enumerate()
        .map(|(i, (&h, &o))| SpeciesState {
            species_id: format!("s{i}"),
            h,
            oh: o,
        })
        .collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    'subsets: for mask in 0u32..(1 << candidates.len()) {
        let mut cells = HashSet::new();
        let mut h: Vec<i64> = h0.iter().map(|&v| v as i64).collect();
        let mut cost = 0.0;
        for (j, cand) in candidates.iter().enumerate() {
            if mask & (1 << j) == 0 {
                continue;
            }
            if !cells.insert(cand.cell_id) {
                continue 'subsets;
            }
            cost += cand.cost;
            for &(sp, d) in &cand.species_deltas {
                h[sp as usize] += d as i64;
            }
        }
        for (state, (&hv, &o)) in states.iter_mut().zip(h.iter().zip(oh)) {
            if hv < 0 || hv > o as i64 {
                continue 'subsets;
            }
            state.h = hv as u32;
        }
        let index = sar::biodiversity_index(&states, z).unwrap().value;
        if index >= target - 1e-12 && best.as_ref().map_or(true, |(c, _)| cost < *c) {
            let subset = (0..candidates.len()).filter(|j| mask & (1 << j) != 0).collect();
            best = Some((cost, subset));
        }
    }
    best
}
