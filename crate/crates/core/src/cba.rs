//! Project appraisal: price the biodiversity impact of an exogenous
//! footprint against a target-compatible shadow price.
//!
//! A footprint forces class changes on named cells outside the
//! prioritizer. Its index impact (in percentage points) is evaluated
//! either against the baseline or against the state reached by restoring
//! to the target, and priced linearly at the quote's per-percentage-point
//! shadow price: harms cost, gains credit.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::curve::ShadowPriceQuote;
use crate::error::{Error, Result};
use crate::prioritizer::SequenceOutcome;
use crate::sar;
use crate::scenario::{ClassCode, EngineView, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootprintChange {
    pub cell_id: u32,
    pub forced_class: ClassCode,
}

/// An exogenous set of forced land-class changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectFootprint {
    pub label: String,
    pub changes: Vec<FootprintChange>,
}

impl ProjectFootprint {
    pub fn from_json(text: &str, source: &str) -> Result<ProjectFootprint> {
        serde_json::from_str(text).map_err(|e| Error::Json {
            path: source.to_string(),
            source: e,
        })
    }
}

/// Which species/class state a footprint is evaluated against.
#[derive(Debug, Clone, Copy)]
pub enum EvaluationState<'a> {
    Baseline,
    /// After executing the restoration sequence to the target.
    AtTarget(&'a SequenceOutcome),
}

/// Index impact of a footprint in percentage points (0.01 index units),
/// negative for net habitat loss. Applies the same species-delta rules as
/// candidate enumeration, counting both gains and losses.
pub fn project_delta_index(
    scenario: &Scenario,
    view: &EngineView,
    footprint: &ProjectFootprint,
    z: f64,
    eval: EvaluationState,
) -> Result<f64> {
    let (classes, h): (&[Option<u16>], Vec<u32>) = match eval {
        EvaluationState::Baseline => (&view.current_class, view.baseline_h()),
        EvaluationState::AtTarget(outcome) => (&outcome.final_classes, outcome.final_h.clone()),
    };
    let oh = view.oh();
    let n_cells = scenario.grid.n_cells();

    let mut seen = HashSet::with_capacity(footprint.changes.len());
    let mut new_h = h.clone();
    for change in &footprint.changes {
        if change.cell_id >= n_cells {
            return Err(Error::UnknownCell {
                cell_id: change.cell_id as u64,
                context: format!("footprint '{}'", footprint.label),
                n_cells: n_cells as u64,
            });
        }
        if !seen.insert(change.cell_id) {
            return Err(Error::Domain(format!(
                "footprint '{}': duplicate cell {}",
                footprint.label, change.cell_id
            )));
        }
        let to = *view
            .class_index
            .get(&change.forced_class)
            .ok_or(Error::UnknownClass {
                code: change.forced_class,
                context: format!("footprint '{}'", footprint.label),
            })?;
        // Nodata terrain holds no habitat; forcing a class there moves
        // nothing.
        let Some(from) = classes[change.cell_id as usize] else {
            continue;
        };
        for &sp in &view.relevant[change.cell_id as usize] {
            let d = view.class_change_delta(sp, Some(from), to);
            new_h[sp as usize] = (new_h[sp as usize] as i64 + d as i64) as u32;
        }
    }

    let before = sar::index_raw(&h, &oh, z);
    let after = sar::index_raw(&new_h, &oh, z);
    Ok((after - before) * 100.0)
}

/// A footprint's index impact with the tags it was computed under.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectDelta {
    pub label: String,
    pub delta_pp: f64,
    pub z: f64,
    /// Target whose restored state the delta was evaluated at; None for a
    /// baseline evaluation.
    pub target: Option<f64>,
}

/// Appraisal output: `total_cost = |delta_pp| * price` for harms, the
/// mirrored credit (negative cost) for gains.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectAppraisal {
    pub label: String,
    pub target: f64,
    pub z: f64,
    pub delta_pp: f64,
    pub price_per_pp: f64,
    pub total_cost: f64,
}

/// Multiply a quoted shadow price by a project delta. The quote and delta
/// must carry the same z and target.
pub fn price_project(quote: &ShadowPriceQuote, delta: &ProjectDelta) -> Result<ProjectAppraisal> {
    if delta.z != quote.z {
        return Err(Error::TagMismatch(format!(
            "delta evaluated at z = {} but quote priced at z = {}",
            delta.z, quote.z
        )));
    }
    if delta.target != Some(quote.target) {
        return Err(Error::TagMismatch(format!(
            "delta evaluated at target {:?} but quote priced at target {}",
            delta.target, quote.target
        )));
    }
    Ok(ProjectAppraisal {
        label: delta.label.clone(),
        target: quote.target,
        z: quote.z,
        delta_pp: delta.delta_pp,
        price_per_pp: quote.price_per_pp,
        total_cost: -delta.delta_pp * quote.price_per_pp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prioritizer::{build_sequence, PrioritizerMode, StopRule};
    use crate::raster::Raster;
    use crate::sar::ZConfig;
    use crate::scenario::{ClassDef, GridSpec, SpeciesSpec, TechnologySpec};
    use std::collections::{BTreeMap, BTreeSet};

    /// 10x10 all-forest world, one species covering everything.
    fn pristine_world() -> (Scenario, EngineView) {
        let scenario = Scenario {
            grid: GridSpec { rows: 10, cols: 10, cell_area_km2: 1.0, nodata: -9999.0 },
            classes: vec![
                ClassDef { code: 1, name: "forest".into() },
                ClassDef { code: 100, name: "plantation".into() },
            ],
            current: Raster::filled(10, 10, 1.0),
            potential: Raster::filled(10, 10, 1.0),
            elevation: Raster::filled(10, 10, 50.0),
            cost_layers: BTreeMap::from([("restore".to_string(), Raster::filled(10, 10, 1.0))]),
            species: vec![SpeciesSpec {
                id: "sp".into(),
                suitable_classes: BTreeSet::from([1]),
                elev_min: 0.0,
                elev_max: 100.0,
                range: (0..100).collect(),
            }],
            technologies: vec![TechnologySpec {
                id: "restore".into(),
                from_classes: BTreeSet::from([100]),
                to_class: 1,
            }],
            aggregation_factor: 1,
            z: ZConfig::DEFAULT,
        };
        let view = scenario.engine_view().unwrap();
        (scenario, view)
    }

    fn footprint(changes: &[(u32, ClassCode)]) -> ProjectFootprint {
        ProjectFootprint {
            label: "test".into(),
            changes: changes
                .iter()
                .map(|&(cell_id, forced_class)| FootprintChange { cell_id, forced_class })
                .collect(),
        }
    }

    #[test]
    fn noop_footprint_has_zero_delta() {
        let (scenario, view) = pristine_world();
        let fp = footprint(&[(0, 1), (5, 1)]);
        let d = project_delta_index(&scenario, &view, &fp, 0.25, EvaluationState::Baseline).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn destroying_one_suitable_cell() {
        let (scenario, view) = pristine_world();
        let fp = footprint(&[(42, 100)]);
        let d = project_delta_index(&scenario, &view, &fp, 0.25, EvaluationState::Baseline).unwrap();
        // (0.99^0.25 - 1) * 100, frozen via mpmath
        assert!((d - -0.250943006631889526).abs() < 1e-12);
    }

    #[test]
    fn gains_and_losses_both_count() {
        let (mut scenario, _) = pristine_world();
        // a second species that prefers plantation
        scenario.species.push(SpeciesSpec {
            id: "sp_plantation".into(),
            suitable_classes: BTreeSet::from([100]),
            elev_min: 0.0,
            elev_max: 100.0,
            range: (0..100).collect(),
        });
        // give it potential habitat on one strip so it is not excluded
        for cell in 0..10 {
            scenario.potential.data[cell] = 100.0;
            scenario.current.data[cell] = 100.0;
        }
        let view = scenario.engine_view().unwrap();
        let fp = footprint(&[(3, 1)]); // plantation strip cell -> forest
        let d = project_delta_index(&scenario, &view, &fp, 0.25, EvaluationState::Baseline).unwrap();
        // forest species: cell 3 not potential-forest, no gain;
        // plantation species loses 1 of its 10 cells.
        assert!(d < 0.0);
    }

    #[test]
    fn footprint_on_nodata_cell_is_inert() {
        let (mut scenario, _) = pristine_world();
        scenario.current.data[7] = -9999.0;
        scenario.potential.data[7] = -9999.0;
        let view = scenario.engine_view().unwrap();
        let fp = footprint(&[(7, 100)]);
        let d = project_delta_index(&scenario, &view, &fp, 0.25, EvaluationState::Baseline).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn unknown_cell_and_class_error() {
        let (scenario, view) = pristine_world();
        let err = project_delta_index(
            &scenario,
            &view,
            &footprint(&[(100, 1)]),
            0.25,
            EvaluationState::Baseline,
        )
        .unwrap_err();
        assert!(matches!(err, Error::UnknownCell { .. }));

        let err = project_delta_index(
            &scenario,
            &view,
            &footprint(&[(0, 77)]),
            0.25,
            EvaluationState::Baseline,
        )
        .unwrap_err();
        assert!(matches!(err, Error::UnknownClass { .. }));
    }

    #[test]
    fn duplicate_cells_rejected() {
        let (scenario, view) = pristine_world();
        let err = project_delta_index(
            &scenario,
            &view,
            &footprint(&[(0, 100), (0, 1)]),
            0.25,
            EvaluationState::Baseline,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn at_target_evaluation_uses_restored_state() {
        // One degraded cell; restoring it is the sequence to target 1.0.
        let (mut scenario, _) = pristine_world();
        scenario.current.data[0] = 100.0;
        let view = scenario.engine_view().unwrap();
        let outcome = build_sequence(
            &scenario,
            &view,
            0.25,
            PrioritizerMode::Exact,
            StopRule::TargetIndex(1.0),
        )
        .unwrap();
        assert_eq!(outcome.steps.len(), 1);

        // Destroying cell 0 is a no-op at baseline (already degraded) but
        // a real loss at the target state (it was restored).
        let fp = footprint(&[(0, 100)]);
        let at_baseline =
            project_delta_index(&scenario, &view, &fp, 0.25, EvaluationState::Baseline).unwrap();
        let at_target = project_delta_index(
            &scenario,
            &view,
            &fp,
            0.25,
            EvaluationState::AtTarget(&outcome),
        )
        .unwrap();
        assert_eq!(at_baseline, 0.0);
        assert!((at_target - -0.250943006631889526).abs() < 1e-12);
    }

    fn quote(target: f64, z: f64, price_per_pp: f64) -> ShadowPriceQuote {
        ShadowPriceQuote {
            target,
            z,
            price_per_unit_index: price_per_pp * 100.0,
            price_per_pp,
            marginal_step: Some(1),
            achieved_index: target,
        }
    }

    fn delta(delta_pp: f64, z: f64, target: f64) -> ProjectDelta {
        ProjectDelta {
            label: "proj".into(),
            delta_pp,
            z,
            target: Some(target),
        }
    }

    #[test]
    fn harms_cost_and_gains_credit() {
        let q = quote(0.8, 0.25, 1542.3);
        let harm = price_project(&q, &delta(-0.0017, 0.25, 0.8)).unwrap();
        assert!((harm.total_cost - 2.62191).abs() < 1e-9);
        let gain = price_project(&q, &delta(0.0017, 0.25, 0.8)).unwrap();
        assert!((gain.total_cost + 2.62191).abs() < 1e-9);
        let zero = price_project(&q, &delta(0.0, 0.25, 0.8)).unwrap();
        assert_eq!(zero.total_cost, 0.0);
    }

    #[test]
    fn pricing_is_linear() {
        let q = quote(0.8, 0.25, 500.0);
        let a = price_project(&q, &delta(-0.002, 0.25, 0.8)).unwrap();
        let b = price_project(&q, &delta(-0.004, 0.25, 0.8)).unwrap();
        assert_eq!(b.total_cost, 2.0 * a.total_cost);
    }

    #[test]
    fn tag_mismatch_is_rejected() {
        let q = quote(0.8, 0.25, 500.0);
        assert!(matches!(
            price_project(&q, &delta(-0.002, 0.35, 0.8)),
            Err(Error::TagMismatch(_))
        ));
        assert!(matches!(
            price_project(&q, &delta(-0.002, 0.25, 0.9)),
            Err(Error::TagMismatch(_))
        ));
        let baseline_delta = ProjectDelta {
            label: "proj".into(),
            delta_pp: -0.002,
            z: 0.25,
            target: None,
        };
        assert!(matches!(
            price_project(&q, &baseline_delta),
            Err(Error::TagMismatch(_))
        ));
    }

    #[test]
    fn footprint_json_roundtrip() {
        let text = r#"{"label": "plantation", "changes": [{"cell_id": 3, "forced_class": 100}]}"#;
        let fp = ProjectFootprint::from_json(text, "fp.json").unwrap();
        assert_eq!(fp.label, "plantation");
        assert_eq!(fp.changes.len(), 1);
        assert!(ProjectFootprint::from_json("{", "fp.json").is_err());
    }
}
