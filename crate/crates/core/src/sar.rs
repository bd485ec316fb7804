//! Species-area-relationship persistence math.
//!
//! A species' long-run persistence probability is `(H/OH)^z`, where `H` is
//! its current suitable habitat, `OH` its potential (pre-disturbance)
//! suitable habitat, and `z` the sensitivity exponent of the species-area
//! power law. Habitat is measured in whole grid cells. The aggregate
//! biodiversity index is the arithmetic mean of persistence over all
//! species; restoring or destroying one cell moves each affected species'
//! `H` by one unit, and the index delta of such a move is the marginal
//! benefit used everywhere downstream.

use crate::error::{Error, Result};

/// Absolute epsilon for comparisons between persistence-scale values.
pub const INDEX_EPS: f64 = 1e-12;

/// Central estimate and sensitivity bounds for the species-area exponent.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ZConfig {
    pub central: f64,
    pub low: f64,
    pub high: f64,
}

impl ZConfig {
    /// The conventional central estimate with its 95% confidence bounds.
    pub const DEFAULT: ZConfig = ZConfig {
        central: 0.25,
        low: 0.15,
        high: 0.35,
    };

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.low && self.low <= self.central && self.central <= self.high && self.high < 1.0)
        {
            return Err(Error::Domain(format!(
                "z bounds must satisfy 0 < low <= central <= high < 1, got low={}, central={}, high={}",
                self.low, self.central, self.high
            )));
        }
        Ok(())
    }

    /// Sweep order: low, central, high.
    pub fn values(&self) -> [f64; 3] {
        [self.low, self.central, self.high]
    }
}

impl Default for ZConfig {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Per-species habitat state: current suitable habitat `H` and potential
/// suitable habitat `OH`, both in whole-cell counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpeciesState {
    pub species_id: String,
    pub h: u32,
    pub oh: u32,
}

impl SpeciesState {
    pub fn new(species_id: impl Into<String>, h: u32, oh: u32) -> Result<Self> {
        let state = SpeciesState {
            species_id: species_id.into(),
            h,
            oh,
        };
        state.check()?;
        Ok(state)
    }

    fn check(&self) -> Result<()> {
        check_state(self.h, self.oh).map_err(|e| match e {
            Error::Domain(msg) => Error::Domain(format!("species {}: {msg}", self.species_id)),
            other => other,
        })
    }
}

/// The aggregate persistence index: mean persistence over `n_species`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PersistenceIndex {
    pub value: f64,
    pub n_species: usize,
}

fn check_z(z: f64) -> Result<()> {
    if !(z > 0.0 && z < 1.0) {
        return Err(Error::Domain(format!("z must lie in (0, 1), got {z}")));
    }
    Ok(())
}

fn check_state(h: u32, oh: u32) -> Result<()> {
    if oh == 0 {
        return Err(Error::Domain("OH must be positive".into()));
    }
    if h > oh {
        return Err(Error::Domain(format!("H = {h} exceeds OH = {oh}")));
    }
    Ok(())
}

/// `(H/OH)^z` on raw counts. Callers must have validated the state.
#[inline]
pub(crate) fn persistence_raw(h: u32, oh: u32, z: f64) -> f64 {
    if h == 0 {
        return 0.0;
    }
    if h == oh {
        return 1.0;
    }
    (h as f64 / oh as f64).powf(z)
}

/// Persistence probability `(H/OH)^z` of a single species.
///
/// Exactly 1 at full habitat and exactly 0 at none.
pub fn persistence(state: &SpeciesState, z: f64) -> Result<f64> {
    check_z(z)?;
    state.check()?;
    Ok(persistence_raw(state.h, state.oh, z))
}

/// Mean persistence over a species list (the biodiversity index).
pub fn biodiversity_index(states: &[SpeciesState], z: f64) -> Result<PersistenceIndex> {
    check_z(z)?;
    if states.is_empty() {
        return Err(Error::EmptySpeciesList);
    }
    let mut sum = 0.0;
    for state in states {
        state.check()?;
        sum += persistence_raw(state.h, state.oh, z);
    }
    Ok(PersistenceIndex {
        value: sum / states.len() as f64,
        n_species: states.len(),
    })
}

/// Index over raw (h, oh) pairs; same summation order as
/// [`biodiversity_index`]. States must be pre-validated.
#[inline]
pub(crate) fn index_raw(h: &[u32], oh: &[u32], z: f64) -> f64 {
    let mut sum = 0.0;
    for (&hi, &ohi) in h.iter().zip(oh) {
        sum += persistence_raw(hi, ohi, z);
    }
    sum / h.len() as f64
}

/// Analytic derivative of persistence with respect to `H`:
/// `(z/H) * (H/OH)^z`. Strictly positive and strictly decreasing in `H`.
///
/// Singular at `H = 0`; whole-cell prioritization uses
/// [`discrete_delta_persistence`] instead, this is kept as a diagnostic.
pub fn marginal_persistence_derivative(state: &SpeciesState, z: f64) -> Result<f64> {
    check_z(z)?;
    state.check()?;
    if state.h == 0 {
        return Err(Error::DerivativeSingular);
    }
    Ok(z / state.h as f64 * persistence_raw(state.h, state.oh, z))
}

/// Change in persistence from a whole-cell habitat step:
/// `((H+dH)/OH)^z - (H/OH)^z`.
pub fn discrete_delta_persistence(state: &SpeciesState, z: f64, dh: i64) -> Result<f64> {
    check_z(z)?;
    state.check()?;
    Ok(delta_raw(state.h, state.oh, z, dh)?)
}

#[inline]
pub(crate) fn delta_raw(h: u32, oh: u32, z: f64, dh: i64) -> Result<f64> {
    let new_h = h as i64 + dh;
    if new_h < 0 || new_h > oh as i64 {
        return Err(Error::Domain(format!(
            "habitat step {dh} moves H = {h} outside [0, {oh}]"
        )));
    }
    if dh == 0 {
        return Ok(0.0);
    }
    Ok(persistence_raw(new_h as u32, oh, z) - persistence_raw(h, oh, z))
}

/// Index change from one action's per-species habitat deltas:
/// the mean over all `n_species` of each affected species' persistence
/// delta. Species absent from `deltas` contribute nothing. Negative when
/// habitat losses dominate gains.
///
/// `deltas` holds `(index into states, habitat step)` pairs and must be
/// sorted by species index so that summation order is reproducible.
pub fn cell_marginal_benefit(
    deltas: &[(u32, i32)],
    states: &[SpeciesState],
    z: f64,
) -> Result<f64> {
    check_z(z)?;
    let mut sum = 0.0;
    for &(idx, dh) in deltas {
        let state = states
            .get(idx as usize)
            .ok_or_else(|| Error::Domain(format!("species index {idx} out of range")))?;
        state.check()?;
        sum += delta_raw(state.h, state.oh, z, dh as i64)?;
    }
    Ok(sum / states.len() as f64)
}

/// Same as [`cell_marginal_benefit`] on raw state vectors, for the
/// prioritizer's hot loop. Bit-identical to the public path: same per-delta
/// arithmetic, same summation order, same final division.
#[inline]
pub(crate) fn marginal_benefit_raw(
    deltas: &[(u32, i32)],
    h: &[u32],
    oh: &[u32],
    z: f64,
) -> Result<f64> {
    let mut sum = 0.0;
    for &(idx, dh) in deltas {
        let i = idx as usize;
        sum += delta_raw(h[i], oh[i], z, dh as i64)?;
    }
    Ok(sum / h.len() as f64)
}
