//! Scenario data model: grid, habitat class layers, species catalog,
//! technologies and cost layers, plus derivation of per-species habitat
//! states and semantic validation.
//!
//! A species' habitat envelope is the set of range cells inside its
//! elevation band that are suitable under the potential layer or under
//! the baseline current layer. `OH` is the envelope size; `H` counts the
//! envelope cells whose current class is suitable. Folding baseline
//! habitat into the envelope lets species that prefer converted land
//! (and would have no potential habitat at all) participate and lose
//! cells to restoration, while keeping `H <= OH` under every sequence of
//! class conversions, which the persistence ratio needs to stay a
//! probability.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::sar::{SpeciesState, ZConfig};

pub type ClassCode = i32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct ClassDef {
    pub code: ClassCode,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub rows: u32,
    pub cols: u32,
    pub cell_area_km2: f64,
    pub nodata: f64,
}

impl GridSpec {
    pub fn n_cells(&self) -> u32 {
        self.rows * self.cols
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesSpec {
    pub id: String,
    pub suitable_classes: BTreeSet<ClassCode>,
    pub elev_min: f64,
    pub elev_max: f64,
    /// Cell ids of the species' range map, native grid resolution.
    pub range: BTreeSet<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TechnologySpec {
    pub id: String,
    pub from_classes: BTreeSet<ClassCode>,
    pub to_class: ClassCode,
}

/// The complete immutable input to the engine.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub grid: GridSpec,
    pub classes: Vec<ClassDef>,
    pub current: Raster,
    pub potential: Raster,
    pub elevation: Raster,
    /// technology id -> cost raster (currency per converted cell).
    pub cost_layers: BTreeMap<String, Raster>,
    pub species: Vec<SpeciesSpec>,
    pub technologies: Vec<TechnologySpec>,
    pub aggregation_factor: u32,
    pub z: ZConfig,
}

/// Perpetuity present value of an annual land rent.
pub const DEFAULT_DISCOUNT_RATE: f64 = 0.05;

pub fn rent_to_asset(annual_rent: f64, discount_rate: f64) -> Result<f64> {
    if !(discount_rate > 0.0) {
        return Err(Error::Domain(format!(
            "discount rate must be positive, got {discount_rate}"
        )));
    }
    Ok(annual_rent / discount_rate)
}

/// Decision-unit structure: with `factor > 1` restoration decisions are
/// taken per square block of `factor x factor` native cells.
#[derive(Debug, Clone, Copy)]
pub struct BlockGrid {
    pub factor: u32,
    pub block_rows: u32,
    pub block_cols: u32,
    cols: u32,
}

impl BlockGrid {
    pub fn new(grid: &GridSpec, factor: u32) -> Result<BlockGrid> {
        if factor == 0 {
            return Err(Error::Domain("aggregation_factor must be >= 1".into()));
        }
        if grid.rows % factor != 0 || grid.cols % factor != 0 {
            return Err(Error::Domain(format!(
                "grid {}x{} not divisible by aggregation_factor {factor}",
                grid.rows, grid.cols
            )));
        }
        Ok(BlockGrid {
            factor,
            block_rows: grid.rows / factor,
            block_cols: grid.cols / factor,
            cols: grid.cols,
        })
    }

    pub fn n_blocks(&self) -> u32 {
        self.block_rows * self.block_cols
    }

    /// Native cell ids of a block, row-major within the block.
    pub fn member_cells(&self, block: u32) -> impl Iterator<Item = u32> + '_ {
        let br = block / self.block_cols;
        let bc = block % self.block_cols;
        let f = self.factor;
        let cols = self.cols;
        (0..f).flat_map(move |r| {
            let row = br * f + r;
            (0..f).map(move |c| row * cols + (bc * f + c))
        })
    }
}

/// Why a species was dropped from the analysis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SpeciesExclusion {
    pub species_id: String,
    pub reason: String,
}

/// Species states plus the cell-level lookup structures the prioritizer
/// and project appraisal share.
#[derive(Debug, Clone)]
pub struct EngineView {
    /// Included species, in catalog order.
    pub states: Vec<SpeciesState>,
    pub excluded: Vec<SpeciesExclusion>,
    /// Dense class index of each cell's current class (None = nodata).
    pub current_class: Vec<Option<u16>>,
    /// Dense class index of each cell's potential class (None = nodata).
    pub potential_class: Vec<Option<u16>>,
    /// class code -> dense index.
    pub class_index: HashMap<ClassCode, u16>,
    /// [included species][dense class] -> suitable?
    pub suitable: Vec<Vec<bool>>,
    /// [cell] -> included species indices whose habitat envelope covers
    /// the cell. Only these species can gain or lose habitat from a class
    /// change at the cell.
    pub relevant: Vec<Vec<u32>>,
}

impl EngineView {
    pub fn n_species(&self) -> usize {
        self.states.len()
    }

    pub fn baseline_h(&self) -> Vec<u32> {
        self.states.iter().map(|s| s.h).collect()
    }

    pub fn oh(&self) -> Vec<u32> {
        self.states.iter().map(|s| s.oh).collect()
    }

    /// Habitat delta for included species `i` when a relevant cell's class
    /// changes `from -> to`.
    #[inline]
    pub fn class_change_delta(&self, species: u32, from: Option<u16>, to: u16) -> i32 {
        let suit = &self.suitable[species as usize];
        let before = from.is_some_and(|c| suit[c as usize]);
        let after = suit[to as usize];
        i32::from(after) - i32::from(before)
    }
}

pub(crate) fn build_class_index(classes: &[ClassDef]) -> Result<HashMap<ClassCode, u16>> {
    if classes.is_empty() {
        return Err(Error::Domain("scenario declares no habitat classes".into()));
    }
    let mut map = HashMap::with_capacity(classes.len());
    for (i, def) in classes.iter().enumerate() {
        if map.insert(def.code, i as u16).is_some() {
            return Err(Error::Domain(format!(
                "duplicate class code {} in class table",
                def.code
            )));
        }
    }
    Ok(map)
}

/// Decode a class raster into dense class indices, rejecting non-integer
/// values and codes missing from the class table.
pub(crate) fn decode_class_raster(
    raster: &Raster,
    index: &HashMap<ClassCode, u16>,
    label: &str,
) -> Result<Vec<Option<u16>>> {
    let mut out = Vec::with_capacity(raster.data.len());
    for cell in 0..raster.n_cells() {
        match raster.value(cell) {
            None => out.push(None),
            Some(v) => {
                if v.fract() != 0.0 || v < i32::MIN as f64 || v > i32::MAX as f64 {
                    return Err(Error::parse(
                        label,
                        0,
                        format!("cell {cell}: class value {v} is not an integer code"),
                    ));
                }
                let code = v as ClassCode;
                let dense = index.get(&code).ok_or(Error::UnknownClass {
                    code,
                    context: format!("{label} cell {cell}"),
                })?;
                out.push(Some(*dense));
            }
        }
    }
    Ok(out)
}

impl Scenario {
    pub fn block_grid(&self) -> Result<BlockGrid> {
        BlockGrid::new(&self.grid, self.aggregation_factor)
    }

    pub fn technology(&self, id: &str) -> Option<&TechnologySpec> {
        self.technologies.iter().find(|t| t.id == id)
    }

    /// Build the engine view: decode class layers, resolve per-species
    /// suitability, derive H/OH and the per-cell relevance lists.
    pub fn engine_view(&self) -> Result<EngineView> {
        let class_index = build_class_index(&self.classes)?;
        let current_class = decode_class_raster(&self.current, &class_index, "current_classes")?;
        let potential_class =
            decode_class_raster(&self.potential, &class_index, "potential_classes")?;
        let n_cells = self.grid.n_cells();
        if self.elevation.n_cells() != n_cells {
            return Err(Error::DimensionMismatch {
                path: "elevation".into(),
                expected_rows: self.grid.rows,
                expected_cols: self.grid.cols,
                found_rows: self.elevation.rows,
                found_cols: self.elevation.cols,
            });
        }

        let mut states = Vec::new();
        let mut excluded = Vec::new();
        let mut suitable = Vec::new();
        let mut relevant: Vec<Vec<u32>> = vec![Vec::new(); n_cells as usize];

        for spec in &self.species {
            if spec.range.is_empty() {
                excluded.push(SpeciesExclusion {
                    species_id: spec.id.clone(),
                    reason: "empty range map".into(),
                });
                continue;
            }
            let mut suit = vec![false; self.classes.len()];
            for code in &spec.suitable_classes {
                let dense = class_index.get(code).ok_or(Error::UnknownClass {
                    code: *code,
                    context: format!("species {}", spec.id),
                })?;
                suit[*dense as usize] = true;
            }

            let mut h = 0u32;
            let mut oh = 0u32;
            let mut cells = Vec::new();
            for &cell in &spec.range {
                if cell >= n_cells {
                    return Err(Error::UnknownCell {
                        cell_id: cell as u64,
                        context: format!("range map of species {}", spec.id),
                        n_cells: n_cells as u64,
                    });
                }
                let Some(elev) = self.elevation.value(cell) else {
                    continue;
                };
                if elev < spec.elev_min || elev > spec.elev_max {
                    continue;
                }
                let pot_ok = potential_class[cell as usize].is_some_and(|c| suit[c as usize]);
                let cur_ok = current_class[cell as usize].is_some_and(|c| suit[c as usize]);
                if !(pot_ok || cur_ok) {
                    continue;
                }
                oh += 1;
                cells.push(cell);
                if cur_ok {
                    h += 1;
                }
            }

            if oh == 0 {
                excluded.push(SpeciesExclusion {
                    species_id: spec.id.clone(),
                    reason: "no habitat envelope within range and elevation band".into(),
                });
                continue;
            }
            let idx = states.len() as u32;
            for cell in cells {
                relevant[cell as usize].push(idx);
            }
            states.push(SpeciesState {
                species_id: spec.id.clone(),
                h,
                oh,
            });
            suitable.push(suit);
        }

        Ok(EngineView {
            states,
            excluded,
            current_class,
            potential_class,
            class_index,
            suitable,
            relevant,
        })
    }
}

/// Per-species current and potential habitat, with exclusions reported.
pub fn derive_species_states(scenario: &Scenario) -> Result<(Vec<SpeciesState>, Vec<SpeciesExclusion>)> {
    let view = scenario.engine_view()?;
    Ok((view.states, view.excluded))
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationItem {
    pub context: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub errors: Vec<ValidationItem>,
    pub warnings: Vec<ValidationItem>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    fn error(&mut self, context: impl Into<String>, message: impl Into<String>) {
        self.errors.push(ValidationItem {
            context: context.into(),
            message: message.into(),
        });
    }

    fn warn(&mut self, context: impl Into<String>, message: impl Into<String>) {
        self.warnings.push(ValidationItem {
            context: context.into(),
            message: message.into(),
        });
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for item in &self.errors {
            out.push_str(&format!("error [{}]: {}\n", item.context, item.message));
        }
        for item in &self.warnings {
            out.push_str(&format!("warning [{}]: {}\n", item.context, item.message));
        }
        if self.errors.is_empty() && self.warnings.is_empty() {
            out.push_str("scenario valid, no findings\n");
        }
        out
    }
}

/// Semantic validation of a loaded scenario. Parse/shape failures surface
/// earlier, at load; this checks cross-references and value invariants and
/// reports species exclusions as warnings.
pub fn validate(scenario: &Scenario) -> ValidationReport {
    let mut report = ValidationReport::default();
    let grid = &scenario.grid;

    if grid.rows == 0 || grid.cols == 0 {
        report.error("grid", "rows and cols must be >= 1");
    }
    if !(grid.cell_area_km2 > 0.0) {
        report.error("grid", format!("cell_area_km2 must be positive, got {}", grid.cell_area_km2));
    }
    if let Err(e) = scenario.z.validate() {
        report.error("z", e.to_string());
    }
    if let Err(e) = BlockGrid::new(grid, scenario.aggregation_factor) {
        report.error("aggregation_factor", e.to_string());
    }

    let class_index = match build_class_index(&scenario.classes) {
        Ok(ix) => ix,
        Err(e) => {
            report.error("classes", e.to_string());
            return report;
        }
    };

    let mut check_dims = |label: &str, raster: &Raster| {
        if raster.rows != grid.rows || raster.cols != grid.cols {
            report.error(
                label,
                format!(
                    "dimension mismatch: expected {}x{}, found {}x{}",
                    grid.rows, grid.cols, raster.rows, raster.cols
                ),
            );
            false
        } else {
            true
        }
    };
    let mut dims_ok = check_dims("current_classes", &scenario.current);
    dims_ok &= check_dims("potential_classes", &scenario.potential);
    dims_ok &= check_dims("elevation", &scenario.elevation);
    for (tech_id, layer) in &scenario.cost_layers {
        dims_ok &= check_dims(&format!("cost layer for technology {tech_id}"), layer);
    }
    if !dims_ok {
        return report;
    }

    for (label, raster) in [
        ("current_classes", &scenario.current),
        ("potential_classes", &scenario.potential),
    ] {
        if let Err(e) = decode_class_raster(raster, &class_index, label) {
            report.error(label, e.to_string());
        }
    }

    let mut seen_species = HashSet::new();
    for spec in &scenario.species {
        let ctx = format!("species {}", spec.id);
        if !seen_species.insert(&spec.id) {
            report.error(&ctx, "duplicate species_id");
        }
        if spec.suitable_classes.is_empty() {
            report.error(&ctx, "suitable_classes must be non-empty");
        }
        if spec.elev_min > spec.elev_max {
            report.error(&ctx, format!("elev_min {} > elev_max {}", spec.elev_min, spec.elev_max));
        }
        for code in &spec.suitable_classes {
            if !class_index.contains_key(code) {
                report.error(&ctx, format!("unknown habitat class {code}"));
            }
        }
        if let Some(&cell) = spec.range.iter().next_back() {
            if cell >= grid.n_cells() {
                report.error(&ctx, format!("range cell {cell} outside {}x{} grid", grid.rows, grid.cols));
            }
        }
    }

    let mut seen_tech = HashSet::new();
    for tech in &scenario.technologies {
        let ctx = format!("technology {}", tech.id);
        if !seen_tech.insert(&tech.id) {
            report.error(&ctx, "duplicate technology_id");
        }
        if tech.from_classes.contains(&tech.to_class) {
            report.error(&ctx, format!("to_class {} is also a from_class", tech.to_class));
        }
        if tech.from_classes.is_empty() {
            report.warn(&ctx, "empty from_classes: technology never applies");
        }
        for code in tech.from_classes.iter().chain([&tech.to_class]) {
            if !class_index.contains_key(code) {
                report.error(&ctx, format!("unknown habitat class {code}"));
            }
        }
        match scenario.cost_layers.get(&tech.id) {
            None => report.error(&ctx, "missing cost layer"),
            Some(layer) => {
                let mut negative = 0u32;
                let mut zero = 0u32;
                for cell in 0..layer.n_cells() {
                    match layer.value(cell) {
                        Some(v) if v < 0.0 => negative += 1,
                        Some(v) if v == 0.0 => zero += 1,
                        _ => {}
                    }
                }
                if negative > 0 {
                    report.error(
                        format!("cost layer for technology {}", tech.id),
                        format!("{negative} negative cost cells (land opportunity costs must be >= 0)"),
                    );
                }
                if zero > 0 {
                    report.warn(
                        format!("cost layer for technology {}", tech.id),
                        format!("{zero} zero-cost cells"),
                    );
                }
            }
        }
    }
    for tech_id in scenario.cost_layers.keys() {
        if scenario.technology(tech_id).is_none() {
            report.warn(format!("cost layer {tech_id}"), "no matching technology");
        }
    }

    if !report.errors.is_empty() {
        return report;
    }

    match scenario.engine_view() {
        Ok(view) => {
            for excl in &view.excluded {
                report.warn(format!("species {}", excl.species_id), format!("excluded: {}", excl.reason));
            }
            if view.states.is_empty() {
                report.error("species", "no species remain after exclusions");
            }

            let used: HashSet<u16> = view
                .current_class
                .iter()
                .chain(&view.potential_class)
                .flatten()
                .copied()
                .collect();
            for (dense, def) in scenario.classes.iter().enumerate() {
                let producible = scenario.technologies.iter().any(|t| t.to_class == def.code);
                if !used.contains(&(dense as u16)) && !producible {
                    report.warn(
                        "classes",
                        format!("class {} ({}) never occurs and no technology produces it", def.code, def.name),
                    );
                }
            }
        }
        Err(e) => report.error("scenario", e.to_string()),
    }

    report
}
