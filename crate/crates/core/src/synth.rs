//! Deterministic synthetic scenario generation, a desk-scale stand-in for
//! continental habitat/cost data.
//!
//! The potential layer draws natural classes per cell; the current layer
//! degrades a share of cells to artificial classes; each technology
//! restores artificial cells to one natural class. Species get random
//! range masks, suitability over the natural classes, and elevation
//! bands. Generation is a pure function of the seed and parameters, and
//! post-generation fix-ups guarantee every species keeps potential
//! habitat and at least one species has room to recover.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::sar::ZConfig;
use crate::scenario::{ClassDef, GridSpec, Scenario, SpeciesSpec, TechnologySpec};
use std::collections::{BTreeMap, BTreeSet};

const NATURAL: [(i32, &str); 6] = [
    (10, "forest"),
    (11, "grassland"),
    (12, "wetland"),
    (13, "shrubland"),
    (14, "heath"),
    (15, "savanna"),
];
const ARTIFICIAL: [(i32, &str); 3] = [(100, "arable"), (101, "pasture"), (102, "urban")];

/// Share of cells degraded from their potential class.
const DEGRADED_SHARE: f64 = 0.55;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostDistribution {
    Uniform { lo: f64, hi: f64 },
    LogNormal { location: f64, scale: f64 },
}

impl Default for CostDistribution {
    fn default() -> Self {
        CostDistribution::LogNormal {
            location: 4.0,
            scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub rows: u32,
    pub cols: u32,
    pub n_species: u32,
    pub n_technologies: u32,
    pub cost_distribution: CostDistribution,
    /// Probability a cell belongs to a species' range.
    pub range_density: f64,
    /// Probability a natural class is suitable for a species.
    pub suitability_density: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            rows: 20,
            cols: 20,
            n_species: 10,
            n_technologies: 2,
            cost_distribution: CostDistribution::default(),
            range_density: 0.35,
            suitability_density: 0.5,
        }
    }
}

impl SynthParams {
    fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Domain("rows and cols must be >= 1".into()));
        }
        if self.n_species == 0 {
            return Err(Error::Domain(
                "n_species must be >= 1 (the index is undefined without species)".into(),
            ));
        }
        if self.n_species as u64 > self.rows as u64 * self.cols as u64 {
            return Err(Error::Domain(format!(
                "n_species {} exceeds cell count {}",
                self.n_species,
                self.rows as u64 * self.cols as u64
            )));
        }
        if self.n_technologies == 0 || self.n_technologies as usize > NATURAL.len() {
            return Err(Error::Domain(format!(
                "n_technologies must lie in 1..={}",
                NATURAL.len()
            )));
        }
        if !(self.range_density > 0.0 && self.range_density <= 1.0) {
            return Err(Error::Domain("range_density must lie in (0, 1]".into()));
        }
        if !(self.suitability_density > 0.0 && self.suitability_density <= 1.0) {
            return Err(Error::Domain("suitability_density must lie in (0, 1]".into()));
        }
        if let CostDistribution::Uniform { lo, hi } = self.cost_distribution {
            if !(0.0 <= lo && lo < hi) {
                return Err(Error::Domain(format!(
                    "uniform cost bounds must satisfy 0 <= lo < hi, got {lo}..{hi}"
                )));
            }
        }
        if let CostDistribution::LogNormal { scale, .. } = self.cost_distribution {
            if !(scale > 0.0) {
                return Err(Error::Domain("lognormal scale must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Generate a scenario; byte-identical for identical seed and parameters.
pub fn gen_synthetic(seed: u64, params: &SynthParams) -> Result<Scenario> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_cells = (params.rows * params.cols) as usize;
    // enough natural variety that technologies target distinct classes
    let pool = NATURAL[..usize::max(3, params.n_technologies as usize)].to_vec();

    let mut classes: Vec<ClassDef> = pool
        .iter()
        .map(|&(code, name)| ClassDef { code, name: name.into() })
        .collect();
    classes.extend(ARTIFICIAL.iter().map(|&(code, name)| ClassDef {
        code,
        name: name.into(),
    }));

    let grid = GridSpec {
        rows: params.rows,
        cols: params.cols,
        cell_area_km2: 1.0,
        nodata: -9999.0,
    };

    let mut potential = Raster::filled(params.rows, params.cols, 0.0);
    let mut current = Raster::filled(params.rows, params.cols, 0.0);
    let mut elevation = Raster::filled(params.rows, params.cols, 0.0);
    for cell in 0..n_cells {
        let pot = pool[rng.gen_range(0..pool.len())].0;
        potential.data[cell] = pot as f64;
        current.data[cell] = if rng.gen::<f64>() < DEGRADED_SHARE {
            ARTIFICIAL[rng.gen_range(0..ARTIFICIAL.len())].0 as f64
        } else {
            pot as f64
        };
        elevation.data[cell] = rng.gen_range(0.0..1000.0);
    }

    let artificial_codes: BTreeSet<i32> = ARTIFICIAL.iter().map(|&(code, _)| code).collect();
    let mut technologies = Vec::new();
    let mut cost_layers = BTreeMap::new();
    for t in 0..params.n_technologies as usize {
        let (to_class, name) = pool[t];
        let id = format!("restore_{name}");
        let mut layer = Raster::filled(params.rows, params.cols, 0.0);
        for cell in 0..n_cells {
            layer.data[cell] = sample_cost(&params.cost_distribution, &mut rng);
        }
        cost_layers.insert(id.clone(), layer);
        technologies.push(TechnologySpec {
            id,
            from_classes: artificial_codes.clone(),
            to_class,
        });
    }

    let mut species = Vec::new();
    for i in 0..params.n_species as usize {
        let mut suitable: BTreeSet<i32> = pool
            .iter()
            .filter(|_| rng.gen::<f64>() < params.suitability_density)
            .map(|&(code, _)| code)
            .collect();
        suitable.insert(pool[i % pool.len()].0);
        let (elev_min, elev_max) = if i % 5 == 4 { (200.0, 800.0) } else { (0.0, 1000.0) };
        let mut range = BTreeSet::new();
        for cell in 0..n_cells as u32 {
            if rng.gen::<f64>() < params.range_density {
                range.insert(cell);
            }
        }
        species.push(SpeciesSpec {
            id: format!("sp{i:03}"),
            suitable_classes: suitable,
            elev_min,
            elev_max,
            range,
        });
    }

    let mut scenario = Scenario {
        grid,
        classes,
        current,
        potential,
        elevation,
        cost_layers,
        species,
        technologies,
        aggregation_factor: 1,
        z: ZConfig::DEFAULT,
    };
    fix_up(&mut scenario, &pool)?;
    Ok(scenario)
}

fn sample_cost(dist: &CostDistribution, rng: &mut ChaCha8Rng) -> f64 {
    match *dist {
        CostDistribution::Uniform { lo, hi } => rng.gen_range(lo..hi),
        CostDistribution::LogNormal { location, scale } => {
            LogNormal::new(location, scale).unwrap().sample(rng)
        }
    }
}

/// Deterministic repairs: every species keeps at least one potential
/// habitat cell (anchor cell = its own index), and species 0 always has a
/// restorable cell so the scenario admits at least one beneficial action.
fn fix_up(scenario: &mut Scenario, pool: &[(i32, &str)]) -> Result<()> {
    for i in 0..scenario.species.len() {
        let has_oh = {
            let sp = &scenario.species[i];
            sp.range.iter().any(|&cell| {
                let elev = scenario.elevation.get(cell);
                elev >= sp.elev_min
                    && elev <= sp.elev_max
                    && sp
                        .suitable_classes
                        .contains(&(scenario.potential.get(cell) as i32))
            })
        };
        if !has_oh {
            let anchor = i as u32;
            let first_suitable = *scenario.species[i].suitable_classes.iter().next().unwrap();
            scenario.species[i].range.insert(anchor);
            scenario.elevation.data[anchor as usize] = 500.0;
            scenario.potential.data[anchor as usize] = first_suitable as f64;
            if scenario.current.get(anchor) as i32 == first_suitable {
                // keep the anchor consistent rather than minting habitat
                continue;
            }
        }
    }

    // species 0 must have room to recover via technology 0
    let view = scenario.engine_view()?;
    let any_room = view.states.iter().any(|s| s.h < s.oh);
    if !any_room {
        let sp = &mut scenario.species[0];
        let to_class = pool[0].0;
        let anchor = *sp.range.iter().next().unwrap_or(&0);
        sp.range.insert(anchor);
        sp.suitable_classes.insert(to_class);
        scenario.elevation.data[anchor as usize] = 500.0;
        scenario.potential.data[anchor as usize] = to_class as f64;
        scenario.current.data[anchor as usize] = ARTIFICIAL[0].0 as f64;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{derive_species_states, validate};

    #[test]
    fn same_seed_same_scenario() {
        let params = SynthParams::default();
        let a = gen_synthetic(42, &params).unwrap();
        let b = gen_synthetic(42, &params).unwrap();
        assert_eq!(a, b);
        let c = gen_synthetic(43, &params).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_species_rejected() {
        let params = SynthParams {
            n_species: 0,
            ..SynthParams::default()
        };
        assert!(gen_synthetic(1, &params).is_err());
    }

    #[test]
    fn generated_scenarios_validate_with_restoration_possible() {
        for seed in 0..20 {
            let scenario = gen_synthetic(seed, &SynthParams::default()).unwrap();
            let report = validate(&scenario);
            assert!(report.is_ok(), "seed {seed}: {}", report.render());
            let (states, _) = derive_species_states(&scenario).unwrap();
            assert!(!states.is_empty());
            assert!(
                states.iter().any(|s| s.h < s.oh),
                "seed {seed}: no species has room to recover"
            );
        }
    }

    #[test]
    fn baseline_index_below_one_on_default_fixture() {
        let scenario = gen_synthetic(42, &SynthParams::default()).unwrap();
        let (states, _) = derive_species_states(&scenario).unwrap();
        let idx = crate::sar::biodiversity_index(&states, 0.25).unwrap();
        assert!(idx.value < 1.0);
        assert!(idx.value > 0.0);
    }

    #[test]
    fn uniform_costs_respect_bounds() {
        let params = SynthParams {
            cost_distribution: CostDistribution::Uniform { lo: 5.0, hi: 10.0 },
            ..SynthParams::default()
        };
        let scenario = gen_synthetic(7, &params).unwrap();
        for layer in scenario.cost_layers.values() {
            assert!(layer.data.iter().all(|&v| (5.0..10.0).contains(&v)));
        }
    }
}
