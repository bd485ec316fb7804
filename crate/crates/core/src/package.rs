//! Scenario package loading and saving.
//!
//! Package layout:
//!
//! ```text
//! manifest.json        grid, z bounds, class table, file references
//! rasters/*.asc        class, elevation and cost layers (ESRI ASCII)
//! species.csv          species_id,suitable_classes,elev_min,elev_max,range_file
//! ranges/*.csv|*.asc   one range map per species (cell-id list or mask)
//! technologies.csv     technology_id,from_classes,to_class,cost_layer
//! ```
//!
//! `suitable_classes` and `from_classes` are `|`-separated class codes.
//! Cost layers hold asset values by default; a manifest `cost_basis` of
//! `annual_rent` converts each cell to the perpetuity present value at
//! the given discount rate on load.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::sar::ZConfig;
use crate::scenario::{
    build_class_index, decode_class_raster, rent_to_asset, ClassCode, ClassDef, GridSpec,
    Scenario, SpeciesSpec, TechnologySpec,
};

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    grid: ManifestGrid,
    aggregation_factor: u32,
    z: ManifestZ,
    classes: Vec<ClassDef>,
    current_classes: String,
    potential_classes: String,
    elevation: String,
    species: String,
    technologies: String,
    #[serde(default)]
    cost_basis: CostBasis,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestGrid {
    rows: u32,
    cols: u32,
    cell_area_km2: f64,
    nodata: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestZ {
    central: f64,
    low: f64,
    high: f64,
}

#[derive(Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum CostBasis {
    #[default]
    Asset,
    AnnualRent {
        discount_rate: f64,
    },
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn load_scenario(dir: &Path) -> Result<Scenario> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path)
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: manifest_path.display().to_string(),
        source: e,
    })?;

    let grid = GridSpec {
        rows: manifest.grid.rows,
        cols: manifest.grid.cols,
        cell_area_km2: manifest.grid.cell_area_km2,
        nodata: manifest.grid.nodata,
    };
    let z = ZConfig {
        central: manifest.z.central,
        low: manifest.z.low,
        high: manifest.z.high,
    };

    let load_raster = |rel: &str| -> Result<Raster> {
        let path = dir.join(rel);
        let raster = Raster::read_ascii(&path)?;
        if raster.rows != grid.rows || raster.cols != grid.cols {
            return Err(Error::DimensionMismatch {
                path: path.display().to_string(),
                expected_rows: grid.rows,
                expected_cols: grid.cols,
                found_rows: raster.rows,
                found_cols: raster.cols,
            });
        }
        Ok(raster)
    };

    let current = load_raster(&manifest.current_classes)?;
    let potential = load_raster(&manifest.potential_classes)?;
    let elevation = load_raster(&manifest.elevation)?;

    // Surface unknown class codes at load, naming the raster file.
    let class_index = build_class_index(&manifest.classes)?;
    decode_class_raster(
        &current,
        &class_index,
        &dir.join(&manifest.current_classes).display().to_string(),
    )?;
    decode_class_raster(
        &potential,
        &class_index,
        &dir.join(&manifest.potential_classes).display().to_string(),
    )?;

    let species = load_species(dir, &manifest.species, &class_index)?;
    let (technologies, cost_layers) =
        load_technologies(dir, &manifest.technologies, &class_index, &grid, &manifest.cost_basis)?;

    Ok(Scenario {
        grid,
        classes: manifest.classes,
        current,
        potential,
        elevation,
        cost_layers,
        species,
        technologies,
        aggregation_factor: manifest.aggregation_factor,
        z,
    })
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path.display().to_string(), 0, e.to_string()))
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn parse_classes(
    field: &str,
    index: &std::collections::HashMap<ClassCode, u16>,
    path: &str,
    line: u64,
    context: &str,
) -> Result<BTreeSet<ClassCode>> {
    let mut out = BTreeSet::new();
    for token in field.split('|').filter(|t| !t.is_empty()) {
        let code: ClassCode = token
            .parse()
            .map_err(|_| Error::parse(path, line, format!("{context}: invalid class code '{token}'")))?;
        if !index.contains_key(&code) {
            return Err(Error::UnknownClass {
                code,
                context: format!("{path}:{line} {context}"),
            });
        }
        out.insert(code);
    }
    Ok(out)
}

fn load_species(
    dir: &Path,
    rel: &str,
    class_index: &std::collections::HashMap<ClassCode, u16>,
) -> Result<Vec<SpeciesSpec>> {
    let path = dir.join(rel);
    let path_str = path.display().to_string();
    let mut reader = csv_reader(&path)?;
    let mut species = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(&path_str, 0, e.to_string()))?;
        let line = record_line(&record);
        if record.len() != 5 {
            return Err(Error::parse(
                &path_str,
                line,
                format!("expected 5 fields (species_id,suitable_classes,elev_min,elev_max,range_file), found {}", record.len()),
            ));
        }
        let id = record[0].to_string();
        let suitable_classes =
            parse_classes(&record[1], class_index, &path_str, line, &format!("species {id}"))?;
        let elev_min: f64 = record[2]
            .parse()
            .map_err(|_| Error::parse(&path_str, line, format!("invalid elev_min '{}'", &record[2])))?;
        let elev_max: f64 = record[3]
            .parse()
            .map_err(|_| Error::parse(&path_str, line, format!("invalid elev_max '{}'", &record[3])))?;
        let range = load_range(dir, &record[4])?;
        species.push(SpeciesSpec {
            id,
            suitable_classes,
            elev_min,
            elev_max,
            range,
        });
    }
    Ok(species)
}

/// Range maps are either CSV cell-id lists (`cell_id` header) or raster
/// masks where any non-zero, non-nodata cell is in range.
fn load_range(dir: &Path, rel: &str) -> Result<BTreeSet<u32>> {
    let path = dir.join(rel);
    let path_str = path.display().to_string();
    if rel.ends_with(".asc") {
        let mask = Raster::read_ascii(&path)?;
        let mut range = BTreeSet::new();
        for cell in 0..mask.n_cells() {
            if let Some(v) = mask.value(cell) {
                if v != 0.0 {
                    range.insert(cell);
                }
            }
        }
        return Ok(range);
    }
    let mut reader = csv_reader(&path)?;
    let mut range = BTreeSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(&path_str, 0, e.to_string()))?;
        let line = record_line(&record);
        let cell: u32 = record[0]
            .parse()
            .map_err(|_| Error::parse(&path_str, line, format!("invalid cell_id '{}'", &record[0])))?;
        range.insert(cell);
    }
    Ok(range)
}

fn load_technologies(
    dir: &Path,
    rel: &str,
    class_index: &std::collections::HashMap<ClassCode, u16>,
    grid: &GridSpec,
    cost_basis: &CostBasis,
) -> Result<(Vec<TechnologySpec>, BTreeMap<String, Raster>)> {
    let path = dir.join(rel);
    let path_str = path.display().to_string();
    let mut reader = csv_reader(&path)?;
    let mut technologies = Vec::new();
    let mut cost_layers = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(&path_str, 0, e.to_string()))?;
        let line = record_line(&record);
        if record.len() != 4 {
            return Err(Error::parse(
                &path_str,
                line,
                format!("expected 4 fields (technology_id,from_classes,to_class,cost_layer), found {}", record.len()),
            ));
        }
        let id = record[0].to_string();
        let from_classes =
            parse_classes(&record[1], class_index, &path_str, line, &format!("technology {id}"))?;
        let to_class: ClassCode = record[2]
            .parse()
            .map_err(|_| Error::parse(&path_str, line, format!("invalid to_class '{}'", &record[2])))?;
        if !class_index.contains_key(&to_class) {
            return Err(Error::UnknownClass {
                code: to_class,
                context: format!("{path_str}:{line} technology {id}"),
            });
        }

        let layer_path = dir.join(&record[3]);
        let mut layer = Raster::read_ascii(&layer_path)?;
        if layer.rows != grid.rows || layer.cols != grid.cols {
            return Err(Error::DimensionMismatch {
                path: layer_path.display().to_string(),
                expected_rows: grid.rows,
                expected_cols: grid.cols,
                found_rows: layer.rows,
                found_cols: layer.cols,
            });
        }
        if let CostBasis::AnnualRent { discount_rate } = cost_basis {
            for cell in 0..layer.n_cells() {
                if !layer.is_nodata(cell) {
                    layer.data[cell as usize] = rent_to_asset(layer.data[cell as usize], *discount_rate)?;
                }
            }
        }
        cost_layers.insert(id.clone(), layer);
        technologies.push(TechnologySpec {
            id,
            from_classes,
            to_class,
        });
    }
    Ok((technologies, cost_layers))
}

fn file_stub(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

fn join_classes(classes: &BTreeSet<ClassCode>) -> String {
    classes
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join("|")
}

/// Write a scenario as a package directory. Produces the canonical layout
/// regardless of how the scenario was obtained; identical scenarios write
/// byte-identical packages.
pub fn save_scenario(scenario: &Scenario, dir: &Path) -> Result<()> {
    let io_err = |p: &Path, e: std::io::Error| Error::io(p.display().to_string(), e);
    let rasters = dir.join("rasters");
    let ranges = dir.join("ranges");
    fs::create_dir_all(&rasters).map_err(|e| io_err(&rasters, e))?;
    fs::create_dir_all(&ranges).map_err(|e| io_err(&ranges, e))?;

    scenario.current.write_ascii(&rasters.join("current.asc"))?;
    scenario.potential.write_ascii(&rasters.join("potential.asc"))?;
    scenario.elevation.write_ascii(&rasters.join("elevation.asc"))?;
    let mut cost_files = BTreeMap::new();
    for (tech_id, layer) in &scenario.cost_layers {
        let rel = format!("rasters/cost_{}.asc", file_stub(tech_id));
        layer.write_ascii(&dir.join(&rel))?;
        cost_files.insert(tech_id.clone(), rel);
    }

    let species_path = dir.join("species.csv");
    let mut writer = csv::Writer::from_path(&species_path)
        .map_err(|e| Error::parse(species_path.display().to_string(), 0, e.to_string()))?;
    writer
        .write_record(["species_id", "suitable_classes", "elev_min", "elev_max", "range_file"])
        .and_then(|()| {
            for sp in &scenario.species {
                let range_rel = format!("ranges/{}.csv", file_stub(&sp.id));
                writer.write_record([
                    sp.id.as_str(),
                    &join_classes(&sp.suitable_classes),
                    &sp.elev_min.to_string(),
                    &sp.elev_max.to_string(),
                    &range_rel,
                ])?;
            }
            writer.flush()?;
            Ok(())
        })
        .map_err(|e| Error::parse(species_path.display().to_string(), 0, e.to_string()))?;

    for sp in &scenario.species {
        let range_path = ranges.join(format!("{}.csv", file_stub(&sp.id)));
        let mut text = String::from("cell_id\n");
        for cell in &sp.range {
            text.push_str(&cell.to_string());
            text.push('\n');
        }
        fs::write(&range_path, text).map_err(|e| io_err(&range_path, e))?;
    }

    let tech_path = dir.join("technologies.csv");
    let mut writer = csv::Writer::from_path(&tech_path)
        .map_err(|e| Error::parse(tech_path.display().to_string(), 0, e.to_string()))?;
    writer
        .write_record(["technology_id", "from_classes", "to_class", "cost_layer"])
        .and_then(|()| {
            for tech in &scenario.technologies {
                writer.write_record([
                    tech.id.as_str(),
                    &join_classes(&tech.from_classes),
                    &tech.to_class.to_string(),
                    &cost_files[&tech.id],
                ])?;
            }
            writer.flush()?;
            Ok(())
        })
        .map_err(|e| Error::parse(tech_path.display().to_string(), 0, e.to_string()))?;

    let manifest = Manifest {
        grid: ManifestGrid {
            rows: scenario.grid.rows,
            cols: scenario.grid.cols,
            cell_area_km2: scenario.grid.cell_area_km2,
            nodata: scenario.grid.nodata,
        },
        aggregation_factor: scenario.aggregation_factor,
        z: ManifestZ {
            central: scenario.z.central,
            low: scenario.z.low,
            high: scenario.z.high,
        },
        classes: scenario.classes.clone(),
        current_classes: "rasters/current.asc".into(),
        potential_classes: "rasters/potential.asc".into(),
        elevation: "rasters/elevation.asc".into(),
        species: "species.csv".into(),
        technologies: "technologies.csv".into(),
        cost_basis: CostBasis::Asset,
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Json {
        path: manifest_path.display().to_string(),
        source: e,
    })?;
    text.push('\n');
    fs::write(&manifest_path, text).map_err(|e| io_err(&manifest_path, e))
}
