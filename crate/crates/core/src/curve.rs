//! MBRC curve assembly, shadow-price queries and z-sensitivity sweeps.
//!
//! Each executed restoration step contributes a curve point with marginal
//! cost per unit of index gain, `mbrc = cost / delta_index`. The shadow
//! price at a target is the mbrc of the first step whose cumulative index
//! reaches the target (right-continuous step function, no interpolation),
//! reported both per unit index and per percentage point (unit / 100).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::prioritizer::{
    build_sequence, enumerate_candidates, run_sequence, PrioritizerMode, RestorationStep,
    SequenceOutcome, StopRule,
};
use crate::sar::{ZConfig, INDEX_EPS};
use crate::scenario::{EngineView, Scenario};

/// One step of an MBRC curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveStep {
    /// 1-based position in the restoration sequence.
    pub step: u32,
    /// Decision-unit id of the executed action.
    pub cell_id: u32,
    pub technology_id: Arc<str>,
    pub cost: f64,
    /// Index gain of this step, always > 0.
    pub delta_index: f64,
    /// Index after this step, strictly increasing along the curve.
    pub cumulative_index: f64,
    /// Marginal cost per unit of index: `cost / delta_index`; 0 for
    /// zero-cost steps.
    pub mbrc: f64,
}

/// Marginal biodiversity recovery cost curve.
#[derive(Debug, Clone, PartialEq)]
pub struct MbrcCurve {
    pub steps: Vec<CurveStep>,
    pub baseline_index: f64,
    pub z_used: f64,
}

impl MbrcCurve {
    pub fn final_index(&self) -> f64 {
        self.steps.last().map_or(self.baseline_index, |s| s.cumulative_index)
    }

    pub fn total_cost(&self) -> f64 {
        self.steps.iter().map(|s| s.cost).sum()
    }

    /// Total cost of the curve prefix that reaches `target`, or None when
    /// the curve never gets there.
    pub fn cost_to_reach(&self, target: f64) -> Option<f64> {
        if target <= self.baseline_index + INDEX_EPS {
            return Some(0.0);
        }
        let mut total = 0.0;
        for step in &self.steps {
            total += step.cost;
            if step.cumulative_index >= target - INDEX_EPS {
                return Some(total);
            }
        }
        None
    }

    /// CSV export, one row per step.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "step,cell_id,technology_id,cost,delta_index,cumulative_index,mbrc,mbrc_per_pp\n",
        );
        for s in &self.steps {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                s.step,
                s.cell_id,
                s.technology_id,
                s.cost,
                s.delta_index,
                s.cumulative_index,
                s.mbrc,
                s.mbrc / 100.0
            );
        }
        out
    }
}

/// A target-compatible shadow price read off the curve.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ShadowPriceQuote {
    pub target: f64,
    pub z: f64,
    /// Marginal cost per unit change of the index at the target.
    pub price_per_unit_index: f64,
    /// `price_per_unit_index / 100`, the Table-style reporting unit.
    pub price_per_pp: f64,
    /// 1-based step supplying the price; None for a no-action quote.
    pub marginal_step: Option<u32>,
    /// Cumulative index at the marginal step (>= target).
    pub achieved_index: f64,
}

/// Assemble the curve for an executed sequence.
pub fn build_curve(steps: &[RestorationStep], baseline_index: f64, z: f64) -> Result<MbrcCurve> {
    let mut curve_steps = Vec::with_capacity(steps.len());
    for (k, step) in steps.iter().enumerate() {
        if !(step.marginal_benefit > 0.0) {
            return Err(Error::Domain(format!(
                "step {}: delta_index must be positive, got {}",
                k + 1,
                step.marginal_benefit
            )));
        }
        let mbrc = if step.action.cost == 0.0 {
            0.0
        } else {
            step.action.cost / step.marginal_benefit
        };
        curve_steps.push(CurveStep {
            step: k as u32 + 1,
            cell_id: step.action.cell_id,
            technology_id: Arc::clone(&step.action.technology_id),
            cost: step.action.cost,
            delta_index: step.marginal_benefit,
            cumulative_index: step.index_after,
            mbrc,
        });
    }
    Ok(MbrcCurve {
        steps: curve_steps,
        baseline_index,
        z_used: z,
    })
}

/// Shadow price at `target`: the mbrc of the first step whose cumulative
/// index reaches it. Targets at or below the baseline price at zero.
pub fn shadow_price(curve: &MbrcCurve, target: f64) -> Result<ShadowPriceQuote> {
    if target <= curve.baseline_index + INDEX_EPS {
        return Ok(ShadowPriceQuote {
            target,
            z: curve.z_used,
            price_per_unit_index: 0.0,
            price_per_pp: 0.0,
            marginal_step: None,
            achieved_index: curve.baseline_index,
        });
    }
    for step in &curve.steps {
        if step.cumulative_index >= target - INDEX_EPS {
            return Ok(ShadowPriceQuote {
                target,
                z: curve.z_used,
                price_per_unit_index: step.mbrc,
                price_per_pp: step.mbrc / 100.0,
                marginal_step: Some(step.step),
                achieved_index: step.cumulative_index,
            });
        }
    }
    Err(Error::TargetUnreachable {
        target,
        max_achievable: curve.final_index(),
    })
}

/// Build the full curve for a scenario at one z (exhausting all
/// beneficial candidates).
pub fn build_full_curve(
    scenario: &Scenario,
    view: &EngineView,
    z: f64,
    mode: PrioritizerMode,
) -> Result<(MbrcCurve, SequenceOutcome)> {
    let outcome = build_sequence(scenario, view, z, mode, StopRule::ExhaustAll)?;
    let curve = build_curve(&outcome.steps, outcome.baseline_index, z)?;
    Ok((curve, outcome))
}

/// One curve per technology, each from a prioritization restricted to
/// that technology's candidates.
pub fn per_technology_curves(
    scenario: &Scenario,
    view: &EngineView,
    z: f64,
    mode: PrioritizerMode,
) -> Result<BTreeMap<String, MbrcCurve>> {
    let candidates = enumerate_candidates(scenario, view)?;
    let mut curves = BTreeMap::new();
    for tech in &scenario.technologies {
        let restricted: Vec<_> = candidates
            .iter()
            .filter(|c| &*c.technology_id == tech.id.as_str())
            .cloned()
            .collect();
        let outcome = run_sequence(&restricted, view, z, mode, StopRule::ExhaustAll)?;
        curves.insert(
            tech.id.clone(),
            build_curve(&outcome.steps, outcome.baseline_index, z)?,
        );
    }
    Ok(curves)
}

/// One vertex of the smoothed presentation envelope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopePoint {
    pub cumulative_index: f64,
    pub cumulative_cost: f64,
    /// Marginal cost per unit index along the hull segment ending here;
    /// 0 at the starting vertex. Non-decreasing across the envelope.
    pub mbrc_smoothed: f64,
}

/// Lower convex hull of the cumulative (index, cost) profile, for
/// presenting curves whose step prices are not monotone (possible when
/// actions carry habitat losses). The raw curve remains the reported
/// object; this is an explicitly smoothed view.
pub fn lower_convex_envelope(curve: &MbrcCurve) -> Vec<EnvelopePoint> {
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(curve.steps.len() + 1);
    points.push((curve.baseline_index, 0.0));
    let mut cost = 0.0;
    for step in &curve.steps {
        cost += step.cost;
        points.push((step.cumulative_index, cost));
    }

    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(points.len());
    for p in points {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            // keep b only if it lies strictly below the chord a->p
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }

    hull.iter()
        .enumerate()
        .map(|(k, &(x, y))| {
            let slope = if k == 0 {
                0.0
            } else {
                let (px, py) = hull[k - 1];
                (y - py) / (x - px)
            };
            EnvelopePoint {
                cumulative_index: x,
                cumulative_cost: y,
                mbrc_smoothed: slope,
            }
        })
        .collect()
}

/// CSV export of a smoothed envelope; the column name flags the smoothing.
pub fn envelope_to_csv(points: &[EnvelopePoint]) -> String {
    let mut out = String::from("point,cumulative_index,cumulative_cost,mbrc_smoothed\n");
    for (k, p) in points.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            k, p.cumulative_index, p.cumulative_cost, p.mbrc_smoothed
        );
    }
    out
}

/// One z-sensitivity row: the full pipeline rebuilt at one exponent.
#[derive(Debug)]
pub struct SweepEntry {
    pub label: &'static str,
    pub z: f64,
    pub baseline_index: f64,
    pub max_achievable_index: f64,
    /// The quote, or Err(TargetUnreachable) when the target exceeds the
    /// achievable index at this z.
    pub quote: Result<ShadowPriceQuote>,
}

/// Rebuild baseline, sequence and curve for each of z_low, z_central,
/// z_high and quote the target against each. Always returns three rows,
/// even when the bounds coincide.
pub fn sweep_z(
    scenario: &Scenario,
    view: &EngineView,
    zcfg: &ZConfig,
    target: f64,
    mode: PrioritizerMode,
) -> Result<Vec<SweepEntry>> {
    zcfg.validate()?;
    let labels = ["low", "central", "high"];
    let mut entries = Vec::with_capacity(3);
    for (label, z) in labels.into_iter().zip(zcfg.values()) {
        let (curve, _) = build_full_curve(scenario, view, z, mode)?;
        entries.push(SweepEntry {
            label,
            z,
            baseline_index: curve.baseline_index,
            max_achievable_index: curve.final_index(),
            quote: shadow_price(&curve, target),
        });
    }
    Ok(entries)
}

/// CSV export of a sweep, one row per z.
pub fn sweep_to_csv(entries: &[SweepEntry], target: f64) -> String {
    let mut out = String::from(
        "z_label,z,target,baseline_index,max_achievable_index,reachable,price_per_unit_index,price_per_pp,marginal_step,achieved_index\n",
    );
    for e in entries {
        match &e.quote {
            Ok(q) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},true,{},{},{},{}",
                    e.label,
                    e.z,
                    target,
                    e.baseline_index,
                    e.max_achievable_index,
                    q.price_per_unit_index,
                    q.price_per_pp,
                    q.marginal_step.map_or(String::new(), |s| s.to_string()),
                    q.achieved_index
                );
            }
            Err(_) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},false,,,,",
                    e.label, e.z, target, e.baseline_index, e.max_achievable_index
                );
            }
        }
    }
    out
}
