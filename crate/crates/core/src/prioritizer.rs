//! Candidate enumeration and greedy cost-effectiveness sequencing.
//!
//! Candidates are (decision unit, technology) conversions; the sequencer
//! repeatedly executes the remaining candidate with the best
//! cost-effectiveness evaluated against the *current* species states,
//! re-scoring as habitat accumulates. Two modes produce byte-identical
//! sequences: `Exact` re-scores every live candidate each round, `Lazy`
//! keeps a max-heap of stale scores and re-validates on pop.
//!
//! Because an executed action can carry habitat losses, another
//! candidate's marginal benefit may *rise* (losing habitat makes the next
//! cell more valuable), so stale heap keys are not automatically upper
//! bounds the way they are for submodular objectives. After each
//! execution the lazy mode therefore eagerly re-scores exactly the
//! candidates that interact with the executed action through a species
//! delta of opposite sign; all other stale keys can only have decreased,
//! which pop-revalidation handles.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sar::{self, SpeciesState, INDEX_EPS};
use crate::scenario::{EngineView, Scenario};

/// One (decision unit, technology) conversion with its cost and sparse
/// per-species habitat deltas. With an aggregation factor above 1 the
/// unit is a block and deltas/costs are sums over converted member cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateAction {
    /// Decision-unit id: native cell id, or block id when aggregated.
    pub cell_id: u32,
    pub technology_id: Arc<str>,
    pub cost: f64,
    /// (included-species index, habitat delta), sorted by species index,
    /// zero deltas omitted.
    pub species_deltas: Vec<(u32, i32)>,
    /// Native cells this action converts.
    pub cells: Vec<u32>,
    /// Dense class index the converted cells take.
    pub to_class: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrioritizerMode {
    /// Re-score every remaining candidate after each selection.
    Exact,
    /// CELF-style heap with re-validation on pop.
    Lazy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// Run until no candidate improves the index.
    ExhaustAll,
    /// Stop once the index reaches this level.
    TargetIndex(f64),
}

/// One executed restoration action.
#[derive(Debug, Clone, PartialEq)]
pub struct RestorationStep {
    pub action: CandidateAction,
    /// Index gain realized by this action (evaluated at execution time).
    pub marginal_benefit: f64,
    /// `marginal_benefit / cost`; +inf for zero-cost actions.
    pub cost_effectiveness: f64,
    pub index_after: f64,
}

/// Result of a greedy run over an explicit candidate set.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyRun {
    pub steps: Vec<RestorationStep>,
    pub baseline_index: f64,
    pub final_index: f64,
    pub reached_target: bool,
    pub final_h: Vec<u32>,
}

/// A greedy run plus the evolved class layer, for downstream appraisal.
#[derive(Debug, Clone)]
pub struct SequenceOutcome {
    pub steps: Vec<RestorationStep>,
    pub baseline_index: f64,
    pub final_index: f64,
    pub reached_target: bool,
    pub final_h: Vec<u32>,
    /// Current-class layer after the sequence (dense class indices).
    pub final_classes: Vec<Option<u16>>,
}

/// Cost-effectiveness of a marginal benefit at a cost. Zero-cost actions
/// rank above every finite value; the ordering among them (by descending
/// benefit) is handled by [`RankKey`], this returns the +inf sentinel.
pub fn cost_effectiveness(mb: f64, cost: f64) -> f64 {
    if cost > 0.0 {
        mb / cost
    } else {
        f64::INFINITY
    }
}

/// Apply an action's habitat deltas to a species-state list.
///
/// The engine additionally retires the action's decision unit and flips
/// the converted cells' class so the unit cannot be selected again; see
/// [`build_sequence`].
pub fn apply_action(states: &mut [SpeciesState], action: &CandidateAction) -> Result<()> {
    // Validate before mutating so a failed apply leaves states untouched.
    for &(idx, dh) in &action.species_deltas {
        let state = states
            .get(idx as usize)
            .ok_or_else(|| Error::Domain(format!("species index {idx} out of range")))?;
        let new_h = state.h as i64 + dh as i64;
        if new_h < 0 || new_h > state.oh as i64 {
            return Err(Error::Domain(format!(
                "applying delta {dh} to species {} moves H = {} outside [0, {}] (inconsistent candidate generation)",
                state.species_id, state.h, state.oh
            )));
        }
    }
    for &(idx, dh) in &action.species_deltas {
        let state = &mut states[idx as usize];
        state.h = (state.h as i64 + dh as i64) as u32;
    }
    Ok(())
}

/// Enumerate every applicable (decision unit, technology) conversion.
///
/// A species gains a habitat unit from a converted cell iff its habitat
/// envelope covers the cell, the target class is suitable and the
/// pre-conversion class is not; it loses a unit in the mirrored case.
/// Nodata cells and cells without a cost value are never converted.
pub fn enumerate_candidates(
    scenario: &Scenario,
    view: &EngineView,
) -> Result<Vec<CandidateAction>> {
    let blocks = scenario.block_grid()?;
    let mut tech_info = Vec::with_capacity(scenario.technologies.len());
    for tech in &scenario.technologies {
        let mut from = vec![false; scenario.classes.len()];
        for code in &tech.from_classes {
            let dense = view.class_index.get(code).ok_or(Error::UnknownClass {
                code: *code,
                context: format!("technology {}", tech.id),
            })?;
            from[*dense as usize] = true;
        }
        let to = *view.class_index.get(&tech.to_class).ok_or(Error::UnknownClass {
            code: tech.to_class,
            context: format!("technology {}", tech.id),
        })?;
        let cost_layer = scenario.cost_layers.get(&tech.id).ok_or_else(|| {
            Error::Domain(format!("technology {} has no cost layer", tech.id))
        })?;
        let id: Arc<str> = Arc::from(tech.id.as_str());
        tech_info.push((id, from, to, cost_layer));
    }

    let mut candidates = Vec::new();
    let mut deltas: Vec<(u32, i32)> = Vec::new();
    for block in 0..blocks.n_blocks() {
        for (tech_id, from, to, cost_layer) in &tech_info {
            let mut cost = 0.0;
            let mut cells = Vec::new();
            deltas.clear();
            for cell in blocks.member_cells(block) {
                let Some(class) = view.current_class[cell as usize] else {
                    continue;
                };
                if !from[class as usize] {
                    continue;
                }
                let Some(cell_cost) = cost_layer.value(cell) else {
                    continue;
                };
                cost += cell_cost;
                cells.push(cell);
                for &sp in &view.relevant[cell as usize] {
                    let d = view.class_change_delta(sp, Some(class), *to);
                    if d != 0 {
                        merge_delta(&mut deltas, sp, d);
                    }
                }
            }
            if cells.is_empty() {
                continue;
            }
            deltas.sort_unstable_by_key(|&(sp, _)| sp);
            deltas.retain(|&(_, d)| d != 0);
            candidates.push(CandidateAction {
                cell_id: block,
                technology_id: Arc::clone(tech_id),
                cost,
                species_deltas: deltas.clone(),
                cells,
                to_class: *to,
            });
        }
    }
    Ok(candidates)
}

fn merge_delta(deltas: &mut Vec<(u32, i32)>, sp: u32, d: i32) {
    if let Some(entry) = deltas.iter_mut().find(|(s, _)| *s == sp) {
        entry.1 += d;
    } else {
        deltas.push((sp, d));
    }
}

/// Selection order: zero-cost candidates first (by descending benefit),
/// then by descending cost-effectiveness; ties broken by lower cost, then
/// lower cell id, then technology id (lexicographic, precomputed rank).
#[derive(Debug, Clone, Copy, PartialEq)]
struct RankKey {
    zero_cost: bool,
    /// Marginal benefit when zero-cost, cost-effectiveness otherwise.
    primary: f64,
    cost: f64,
    cell_id: u32,
    tech_rank: u32,
}

impl RankKey {
    fn new(mb: f64, cand: &CandidateAction, tech_rank: u32) -> RankKey {
        let zero_cost = cand.cost == 0.0;
        RankKey {
            zero_cost,
            primary: if zero_cost { mb } else { mb / cand.cost },
            cost: cand.cost,
            cell_id: cand.cell_id,
            tech_rank,
        }
    }

    /// `Greater` means `self` is selected before `other`.
    fn rank_cmp(&self, other: &RankKey) -> Ordering {
        self.zero_cost
            .cmp(&other.zero_cost)
            .then_with(|| self.primary.partial_cmp(&other.primary).unwrap())
            .then_with(|| other.cost.partial_cmp(&self.cost).unwrap())
            .then_with(|| other.cell_id.cmp(&self.cell_id))
            .then_with(|| other.tech_rank.cmp(&self.tech_rank))
    }
}

struct HeapEntry {
    key: RankKey,
    cand: usize,
    version: u32,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key
            .rank_cmp(&other.key)
            .then_with(|| self.version.cmp(&other.version))
    }
}

/// Lexicographic rank of each candidate's technology id.
fn tech_ranks(candidates: &[CandidateAction]) -> Vec<u32> {
    let mut ids: Vec<&str> = candidates.iter().map(|c| &*c.technology_id).collect();
    ids.sort_unstable();
    ids.dedup();
    candidates
        .iter()
        .map(|c| ids.binary_search(&&*c.technology_id).unwrap() as u32)
        .collect()
}

struct Sequencer<'a> {
    candidates: &'a [CandidateAction],
    tech_rank: Vec<u32>,
    h: Vec<u32>,
    oh: &'a [u32],
    z: f64,
    unit_used: std::collections::HashSet<u32>,
    dead: Vec<bool>,
    steps: Vec<RestorationStep>,
    index: f64,
}

impl<'a> Sequencer<'a> {
    fn new(candidates: &'a [CandidateAction], h0: &[u32], oh: &'a [u32], z: f64) -> Result<Self> {
        if h0.is_empty() {
            return Err(Error::EmptySpeciesList);
        }
        for (i, (&h, &o)) in h0.iter().zip(oh).enumerate() {
            if o == 0 || h > o {
                return Err(Error::Domain(format!(
                    "species {i}: invalid state H = {h}, OH = {o}"
                )));
            }
        }
        for cand in candidates {
            if !(cand.cost >= 0.0) {
                return Err(Error::Domain(format!(
                    "candidate (cell {}, {}): negative cost {}",
                    cand.cell_id, cand.technology_id, cand.cost
                )));
            }
        }
        Ok(Sequencer {
            candidates,
            tech_rank: tech_ranks(candidates),
            h: h0.to_vec(),
            oh,
            z,
            unit_used: Default::default(),
            dead: vec![false; candidates.len()],
            steps: Vec::new(),
            index: sar::index_raw(h0, oh, z),
        })
    }

    fn alive(&self, i: usize) -> bool {
        !self.dead[i] && !self.unit_used.contains(&self.candidates[i].cell_id)
    }

    fn score(&self, i: usize) -> Result<f64> {
        sar::marginal_benefit_raw(&self.candidates[i].species_deltas, &self.h, self.oh, self.z)
    }

    fn key(&self, i: usize, mb: f64) -> RankKey {
        RankKey::new(mb, &self.candidates[i], self.tech_rank[i])
    }

    fn execute(&mut self, i: usize, mb: f64) {
        let cand = &self.candidates[i];
        for &(sp, dh) in &cand.species_deltas {
            self.h[sp as usize] = (self.h[sp as usize] as i64 + dh as i64) as u32;
        }
        self.unit_used.insert(cand.cell_id);
        self.dead[i] = true;
        self.index = sar::index_raw(&self.h, self.oh, self.z);
        self.steps.push(RestorationStep {
            action: cand.clone(),
            marginal_benefit: mb,
            cost_effectiveness: cost_effectiveness(mb, cand.cost),
            index_after: self.index,
        });
    }

    fn target_reached(&self, stop: &StopRule) -> bool {
        match stop {
            StopRule::ExhaustAll => false,
            StopRule::TargetIndex(t) => self.index >= t - INDEX_EPS,
        }
    }

    fn finish(self, stop: StopRule, baseline_index: f64) -> Result<GreedyRun> {
        let reached = match stop {
            StopRule::ExhaustAll => true,
            StopRule::TargetIndex(t) => {
                if self.index < t - INDEX_EPS {
                    return Err(Error::TargetUnreachable {
                        target: t,
                        max_achievable: self.index,
                    });
                }
                true
            }
        };
        Ok(GreedyRun {
            baseline_index,
            final_index: self.index,
            reached_target: reached,
            final_h: self.h,
            steps: self.steps,
        })
    }
}

/// Greedy sequencing over an explicit candidate set. `h0`/`oh` are the
/// included species' habitat states in index order.
pub fn run_greedy(
    candidates: &[CandidateAction],
    h0: &[u32],
    oh: &[u32],
    z: f64,
    mode: PrioritizerMode,
    stop: StopRule,
) -> Result<GreedyRun> {
    let mut seq = Sequencer::new(candidates, h0, oh, z)?;
    let baseline_index = seq.index;

    if !seq.target_reached(&stop) {
        match mode {
            PrioritizerMode::Exact => run_exact(&mut seq, &stop)?,
            PrioritizerMode::Lazy => run_lazy(&mut seq, &stop)?,
        }
    }

    seq.finish(stop, baseline_index)
}

fn run_exact(seq: &mut Sequencer, stop: &StopRule) -> Result<()> {
    loop {
        let scored: Vec<Option<(usize, f64)>> = (0..seq.candidates.len())
            .into_par_iter()
            .map(|i| {
                if !seq.alive(i) {
                    return Ok(None);
                }
                let mb = seq.score(i)?;
                Ok(if mb > 0.0 { Some((i, mb)) } else { None })
            })
            .collect::<Result<_>>()?;

        let mut best: Option<(usize, f64, RankKey)> = None;
        for (i, mb) in scored.into_iter().flatten() {
            let key = seq.key(i, mb);
            if best
                .as_ref()
                .map_or(true, |(_, _, bk)| key.rank_cmp(bk) == Ordering::Greater)
            {
                best = Some((i, mb, key));
            }
        }
        let Some((i, mb, _)) = best else { break };
        seq.execute(i, mb);
        if seq.target_reached(stop) {
            break;
        }
    }
    Ok(())
}

fn run_lazy(seq: &mut Sequencer, stop: &StopRule) -> Result<()> {
    let n = seq.candidates.len();
    let mut version = vec![0u32; n];
    // parked[i]: last evaluated benefit was non-positive, kept out of the
    // heap until an interaction could raise it
    let mut parked = vec![false; n];
    let mut heap = BinaryHeap::with_capacity(n);

    for i in 0..n {
        if !seq.alive(i) {
            continue;
        }
        let mb = seq.score(i)?;
        if mb > 0.0 {
            heap.push(HeapEntry {
                key: seq.key(i, mb),
                cand: i,
                version: 0,
            });
        } else {
            parked[i] = true;
        }
    }

    // inverse index split by delta sign: an executed gain on a species can
    // only raise the scores of candidates that *lose* that species, and
    // vice versa, so each execution scans exactly the opposite-sign lists
    let mut plus_by_species: Vec<Vec<u32>> = vec![Vec::new(); seq.h.len()];
    let mut minus_by_species: Vec<Vec<u32>> = vec![Vec::new(); seq.h.len()];
    for (i, cand) in seq.candidates.iter().enumerate() {
        for &(sp, d) in &cand.species_deltas {
            if d > 0 {
                plus_by_species[sp as usize].push(i as u32);
            } else {
                minus_by_species[sp as usize].push(i as u32);
            }
        }
    }

    let stale = |entry: &HeapEntry, version: &[u32], parked: &[bool], seq: &Sequencer| {
        entry.version != version[entry.cand] || !seq.alive(entry.cand) || parked[entry.cand]
    };

    while let Some(entry) = heap.pop() {
        let i = entry.cand;
        if stale(&entry, &version, &parked, seq) {
            continue;
        }
        let mb = seq.score(i)?;
        if mb <= 0.0 {
            parked[i] = true;
            version[i] += 1;
            continue;
        }
        let key = seq.key(i, mb);
        // Drop superseded entries off the top so dominance is tested
        // against a live candidate; otherwise a candidate's own stale
        // duplicates can pin it in a re-push cycle.
        while let Some(top) = heap.peek() {
            if stale(top, &version, &parked, seq) {
                heap.pop();
            } else {
                break;
            }
        }
        let dominates = heap
            .peek()
            .map_or(true, |top| key.rank_cmp(&top.key) == Ordering::Greater);
        if !dominates {
            version[i] += 1;
            heap.push(HeapEntry {
                key,
                cand: i,
                version: version[i],
            });
            continue;
        }

        let executed: Vec<(u32, i32)> = seq.candidates[i].species_deltas.clone();
        seq.execute(i, mb);
        if seq.target_reached(stop) {
            return Ok(());
        }

        // Candidates sharing a species with the executed action through an
        // opposite-sign delta may now score higher than their stale key;
        // re-score them eagerly so stale keys stay upper bounds.
        let mut affected = BTreeSet::new();
        for &(sp, dh) in &executed {
            let opposite = if dh > 0 {
                &minus_by_species[sp as usize]
            } else {
                &plus_by_species[sp as usize]
            };
            for &other in opposite {
                let o = other as usize;
                if o != i && seq.alive(o) {
                    affected.insert(o);
                }
            }
        }
        for o in affected {
            let mb = seq.score(o)?;
            version[o] += 1;
            if mb > 0.0 {
                parked[o] = false;
                heap.push(HeapEntry {
                    key: seq.key(o, mb),
                    cand: o,
                    version: version[o],
                });
            } else {
                parked[o] = true;
            }
        }
    }
    Ok(())
}

/// Full pipeline at scenario level: enumerate candidates, run the greedy
/// sequencer, and evolve the class layer alongside the species states.
pub fn build_sequence(
    scenario: &Scenario,
    view: &EngineView,
    z: f64,
    mode: PrioritizerMode,
    stop: StopRule,
) -> Result<SequenceOutcome> {
    let candidates = enumerate_candidates(scenario, view)?;
    run_sequence(&candidates, view, z, mode, stop)
}

/// As [`build_sequence`] over a pre-enumerated (possibly filtered)
/// candidate set.
pub fn run_sequence(
    candidates: &[CandidateAction],
    view: &EngineView,
    z: f64,
    mode: PrioritizerMode,
    stop: StopRule,
) -> Result<SequenceOutcome> {
    let h0 = view.baseline_h();
    let oh = view.oh();
    let run = run_greedy(candidates, &h0, &oh, z, mode, stop)?;
    let mut classes = view.current_class.clone();
    for step in &run.steps {
        for &cell in &step.action.cells {
            classes[cell as usize] = Some(step.action.to_class);
        }
    }
    Ok(SequenceOutcome {
        steps: run.steps,
        baseline_index: run.baseline_index,
        final_index: run.final_index,
        reached_target: run.reached_target,
        final_h: run.final_h,
        final_classes: classes,
    })
}
