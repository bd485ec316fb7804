//! Greedy sequencer verification against independent oracles: naive
//! full-re-evaluation greedy, exhaustive subset enumeration, and
//! exact/lazy mode equivalence on randomized instances.

use mbrc_core::prioritizer::{run_greedy, GreedyRun, PrioritizerMode, StopRule};
use mbrc_core::testkit::{exhaustive_min_cost, naive_greedy, random_instance, InstanceShape};

fn assert_matches_oracle(run: &GreedyRun, oracle: &[mbrc_core::testkit::OracleStep], seed: u64) {
    assert_eq!(run.steps.len(), oracle.len(), "seed {seed}: step count");
    for (k, (got, want)) in run.steps.iter().zip(oracle).enumerate() {
        assert_eq!(got.action.cell_id, want.cell_id, "seed {seed} step {k}: cell");
        assert_eq!(
            got.action.technology_id, want.technology_id,
            "seed {seed} step {k}: technology"
        );
        assert_eq!(
            got.marginal_benefit.to_bits(),
            want.marginal_benefit.to_bits(),
            "seed {seed} step {k}: benefit"
        );
        assert_eq!(
            got.index_after.to_bits(),
            want.index_after.to_bits(),
            "seed {seed} step {k}: index"
        );
    }
}

fn assert_runs_identical(a: &GreedyRun, b: &GreedyRun, seed: u64) {
    assert_eq!(a.steps.len(), b.steps.len(), "seed {seed}");
    assert_eq!(a, b, "seed {seed}: exact and lazy runs must be identical");
}

#[test]
fn exact_equals_naive_oracle_and_lazy_on_coupled_instances() {
    let shape = InstanceShape::coupled();
    for seed in 0..200 {
        let inst = random_instance(seed, &shape);
        let exact = run_greedy(
            &inst.candidates,
            &inst.h0,
            &inst.oh,
            inst.z,
            PrioritizerMode::Exact,
            StopRule::ExhaustAll,
        )
        .unwrap();
        let lazy = run_greedy(
            &inst.candidates,
            &inst.h0,
            &inst.oh,
            inst.z,
            PrioritizerMode::Lazy,
            StopRule::ExhaustAll,
        )
        .unwrap();
        let oracle = naive_greedy(&inst.candidates, &inst.h0, &inst.oh, inst.z, None);
        assert_matches_oracle(&exact, &oracle, seed);
        assert_runs_identical(&exact, &lazy, seed);
    }
}

#[test]
fn oracle_equivalence_holds_under_target_stops() {
    let shape = InstanceShape::coupled();
    for seed in 200..260 {
        let inst = random_instance(seed, &shape);
        let full = naive_greedy(&inst.candidates, &inst.h0, &inst.oh, inst.z, None);
        let Some(last) = full.last() else { continue };
        let baseline = {
            let first = &full[0];
            first.index_after - first.marginal_benefit
        };
        let target = baseline + 0.6 * (last.index_after - baseline);
        let oracle = naive_greedy(&inst.candidates, &inst.h0, &inst.oh, inst.z, Some(target));
        for mode in [PrioritizerMode::Exact, PrioritizerMode::Lazy] {
            let run = run_greedy(
                &inst.candidates,
                &inst.h0,
                &inst.oh,
                inst.z,
                mode,
                StopRule::TargetIndex(target),
            )
            .unwrap();
            assert_matches_oracle(&run, &oracle, seed);
            assert!(run.reached_target);
        }
    }
}

#[test]
fn unreachable_targets_error_with_max_achievable() {
    let shape = InstanceShape::coupled();
    let mut checked = 0;
    for seed in 300..340 {
        let inst = random_instance(seed, &shape);
        let full = run_greedy(
            &inst.candidates,
            &inst.h0,
            &inst.oh,
            inst.z,
            PrioritizerMode::Exact,
            StopRule::ExhaustAll,
        )
        .unwrap();
        if full.final_index >= 1.0 - 1e-9 {
            continue;
        }
        let target = full.final_index + 0.5 * (1.0 - full.final_index);
        for mode in [PrioritizerMode::Exact, PrioritizerMode::Lazy] {
            let err = run_greedy(
                &inst.candidates,
                &inst.h0,
                &inst.oh,
                inst.z,
                mode,
                StopRule::TargetIndex(target),
            )
            .unwrap_err();
            match err {
                mbrc_core::Error::TargetUnreachable { max_achievable, .. } => {
                    assert_eq!(max_achievable.to_bits(), full.final_index.to_bits());
                }
                other => panic!("seed {seed}: unexpected error {other}"),
            }
        }
        checked += 1;
    }
    assert!(checked > 10, "too few instances with headroom: {checked}");
}

/// On decoupled instances the greedy prefix is provably min-cost at its
/// own index breakpoints; verify against exhaustive enumeration.
#[test]
fn modular_greedy_is_cost_optimal_at_breakpoints() {
    let shape = InstanceShape::decoupled();
    for seed in 0..100 {
        let inst = random_instance(seed, &shape);
        let full = run_greedy(
            &inst.candidates,
            &inst.h0,
            &inst.oh,
            inst.z,
            PrioritizerMode::Exact,
            StopRule::ExhaustAll,
        )
        .unwrap();
        for k in 0..full.steps.len() {
            let target = full.steps[k].index_after;
            let greedy_cost = ordered_cost(&full, k);
            let (opt_cost, _) =
                exhaustive_min_cost(&inst.candidates, &inst.h0, &inst.oh, inst.z, target)
                    .unwrap_or_else(|| panic!("seed {seed}: target {target} must be coverable"));
            assert_eq!(
                greedy_cost.to_bits(),
                opt_cost.to_bits(),
                "seed {seed} breakpoint {k}: greedy {greedy_cost} vs optimal {opt_cost}"
            );

            // the target-stopped engine run pays the same
            let run = run_greedy(
                &inst.candidates,
                &inst.h0,
                &inst.oh,
                inst.z,
                PrioritizerMode::Lazy,
                StopRule::TargetIndex(target),
            )
            .unwrap();
            let run_cost = ordered_cost(&run, run.steps.len() - 1);
            assert_eq!(run_cost.to_bits(), greedy_cost.to_bits(), "seed {seed} k {k}");
        }
    }
}

/// Sum the first `k+1` steps' costs in candidate order (cell id, then
/// technology), the same canonical order the exhaustive oracle uses.
fn ordered_cost(run: &GreedyRun, k: usize) -> f64 {
    let mut picked: Vec<&mbrc_core::prioritizer::RestorationStep> =
        run.steps[..=k].iter().collect();
    picked.sort_by(|a, b| {
        a.action
            .cell_id
            .cmp(&b.action.cell_id)
            .then_with(|| a.action.technology_id.cmp(&b.action.technology_id))
    });
    picked.iter().map(|s| s.action.cost).sum()
}

/// On coupled instances greedy is only heuristic; check the sanity
/// direction (greedy cost >= optimum) and report the worst ratio.
#[test]
fn coupled_greedy_cost_at_least_exhaustive_optimum() {
    let shape = InstanceShape::coupled();
    let mut worst_ratio = 1.0f64;
    let mut compared = 0;
    for seed in 400..440 {
        let inst = random_instance(seed, &shape);
        let full = run_greedy(
            &inst.candidates,
            &inst.h0,
            &inst.oh,
            inst.z,
            PrioritizerMode::Exact,
            StopRule::ExhaustAll,
        )
        .unwrap();
        let Some(last) = full.steps.last() else { continue };
        let target = last.index_after;
        let greedy_cost = ordered_cost(&full, full.steps.len() - 1);
        let Some((opt_cost, _)) =
            exhaustive_min_cost(&inst.candidates, &inst.h0, &inst.oh, inst.z, target)
        else {
            continue;
        };
        assert!(
            greedy_cost >= opt_cost - 1e-9,
            "seed {seed}: greedy {greedy_cost} beat the exhaustive optimum {opt_cost}"
        );
        if opt_cost > 0.0 {
            worst_ratio = worst_ratio.max(greedy_cost / opt_cost);
        }
        compared += 1;
    }
    println!("coupled greedy/optimal worst cost ratio over {compared} instances: {worst_ratio:.4}");
    assert!(compared > 10);
}

/// The documented reference case: 8 candidates, 3 species, seeded costs.
#[test]
fn eight_cell_three_species_instance_matches_oracle() {
    let shape = InstanceShape {
        max_candidates: 8,
        max_species: 3,
        max_technologies: 2,
        allow_negative: true,
        allow_zero_cost: false,
        decoupled: false,
    };
    for seed in [7u64, 21, 99] {
        let inst = random_instance(seed, &shape);
        let exact = run_greedy(
            &inst.candidates,
            &inst.h0,
            &inst.oh,
            inst.z,
            PrioritizerMode::Exact,
            StopRule::ExhaustAll,
        )
        .unwrap();
        let oracle = naive_greedy(&inst.candidates, &inst.h0, &inst.oh, inst.z, None);
        assert_matches_oracle(&exact, &oracle, seed);
    }
}

/// Habitat bookkeeping: after k steps each species' H equals its initial
/// H plus the sum of executed deltas.
#[test]
fn habitat_accounting_is_exact() {
    let shape = InstanceShape::coupled();
    for seed in 500..540 {
        let inst = random_instance(seed, &shape);
        let run = run_greedy(
            &inst.candidates,
            &inst.h0,
            &inst.oh,
            inst.z,
            PrioritizerMode::Lazy,
            StopRule::ExhaustAll,
        )
        .unwrap();
        let mut expect: Vec<i64> = inst.h0.iter().map(|&h| h as i64).collect();
        for step in &run.steps {
            for &(sp, d) in &step.action.species_deltas {
                expect[sp as usize] += d as i64;
            }
        }
        let got: Vec<i64> = run.final_h.iter().map(|&h| h as i64).collect();
        assert_eq!(got, expect, "seed {seed}");
    }
}

/// With no habitat losses anywhere, selected cost-effectiveness is
/// non-increasing along the sequence.
#[test]
fn ce_sequence_non_increasing_without_losses() {
    let shape = InstanceShape {
        allow_negative: false,
        ..InstanceShape::coupled()
    };
    for seed in 600..660 {
        let inst = random_instance(seed, &shape);
        let run = run_greedy(
            &inst.candidates,
            &inst.h0,
            &inst.oh,
            inst.z,
            PrioritizerMode::Exact,
            StopRule::ExhaustAll,
        )
        .unwrap();
        let mut last = f64::INFINITY;
        for step in &run.steps {
            assert!(
                step.cost_effectiveness <= last + 1e-15,
                "seed {seed}: CE rose from {last} to {}",
                step.cost_effectiveness
            );
            last = step.cost_effectiveness;
        }
    }
}
