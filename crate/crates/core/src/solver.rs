//! Alternating optimization of beam weights and antenna positions.
//!
//! Each outer iteration refreshes the aux variables, solves every slot's
//! weights in closed form and, for the movable array, runs majorize–minimize
//! steps on the layout. Fixed-array baselines skip the layout update.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::Vector2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beamformer::update_weights;
use crate::channel::{
    build_slot_geometry, channel_vector, link_power, slot_rates, ArrayLayout, BeamWeights,
    CVector, SlotGeometry, StationConfig,
};
use crate::error::{Error, Result};
use crate::fp_transform::{fp_objective, refresh_aux};
use crate::orbit::{make_time_grid, GroundStation, ShellConfig, TimeGrid};
use crate::placement::sca_refine;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scheme {
    /// Movable antennas, layout optimized.
    #[serde(rename = "MA")]
    Ma,
    /// Fixed grid at the movable array's initial spacing.
    #[serde(rename = "SFPA")]
    Sfpa,
    /// Fixed grid packed at the minimum spacing.
    #[serde(rename = "DFPA")]
    Dfpa,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Ma, Scheme::Sfpa, Scheme::Dfpa];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Ma => "MA",
            Scheme::Sfpa => "SFPA",
            Scheme::Dfpa => "DFPA",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "MA" => Ok(Scheme::Ma),
            "SFPA" => Ok(Scheme::Sfpa),
            "DFPA" => Ok(Scheme::Dfpa),
            other => Err(Error::InvalidConfig(format!(
                "unknown scheme `{other}` (expected MA, SFPA or DFPA)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Stop when the average rate changes by at most this much (bps/Hz).
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Majorize–minimize steps per layout update.
    pub sca_max_inner: usize,
    /// Relative decrease of the reduced objective that ends the inner loop.
    pub sca_tolerance: f64,
    /// Smallest curvature fraction tried per step; 1 disables the search.
    pub sca_min_curvature_scale: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            max_iterations: 100,
            sca_max_inner: 20,
            sca_tolerance: 1e-6,
            sca_min_curvature_scale: 1e-3,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig("epsilon must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be at least 1".into()));
        }
        if self.sca_max_inner == 0 {
            return Err(Error::InvalidConfig("sca_max_inner must be at least 1".into()));
        }
        if !(self.sca_tolerance >= 0.0) {
            return Err(Error::InvalidConfig("sca_tolerance must be non-negative".into()));
        }
        if !(self.sca_min_curvature_scale > 0.0 && self.sca_min_curvature_scale <= 1.0) {
            return Err(Error::InvalidConfig("sca_min_curvature_scale must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// A constellation, a station and an observation window split into slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub shell: ShellConfig,
    pub array: StationConfig,
    pub ground: GroundStation,
    pub slots: usize,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.shell.validate()?;
        self.array.validate()?;
        self.ground.validate()?;
        if self.slots == 0 {
            return Err(Error::InvalidConfig("slot count must be at least 1".into()));
        }
        Ok(())
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        make_time_grid(&self.shell, self.slots)
    }

    /// Geometry of every slot; `None` marks slots with no visible satellite.
    pub fn build_slots(&self) -> Result<Vec<Option<SlotGeometry>>> {
        self.validate()?;
        let grid = self.time_grid()?;
        grid.midpoints
            .par_iter()
            .map(|&t| build_slot_geometry(&self.shell, &self.ground, &self.array, t))
            .collect()
    }
}

/// Initial antenna grid for a scheme.
///
/// `⌈√N⌉` columns filled row-major. MA and SFPA stretch the grid over the
/// whole region; DFPA packs it at `d_min` from the region corner.
pub fn init_layout(scheme: Scheme, array: &StationConfig) -> Result<ArrayLayout> {
    array.validate()?;
    let n = array.antennas;
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let span = |count: usize| {
        if count > 1 {
            array.region_side / (count - 1) as f64
        } else {
            0.0
        }
    };
    let (dx, dy) = match scheme {
        Scheme::Ma | Scheme::Sfpa => (span(cols), span(rows)),
        Scheme::Dfpa => {
            if !(array.d_min > 0.0) {
                return Err(Error::InvalidConfig("DFPA needs a positive d_min".into()));
            }
            (array.d_min, array.d_min)
        }
    };
    let extent = ((cols - 1) as f64 * dx).max((rows - 1) as f64 * dy);
    if extent > array.region_side * (1.0 + 1e-12) {
        return Err(Error::InvalidConfig(format!(
            "{scheme} grid of {n} antennas does not fit the region"
        )));
    }
    let layout = ArrayLayout::new(
        (0..n)
            .map(|i| Vector2::new((i % cols) as f64 * dx, (i / cols) as f64 * dy))
            .collect(),
    );
    if n > 1 && layout.min_pairwise_distance() < array.d_min * (1.0 - 1e-12) {
        return Err(Error::InvalidConfig(format!(
            "{scheme} grid of {n} antennas violates d_min"
        )));
    }
    Ok(layout)
}

/// Normalized serving channel per slot; zero for unservable slots.
pub fn init_weights(layout: &ArrayLayout, slots: &[Option<SlotGeometry>]) -> BeamWeights {
    BeamWeights {
        per_slot: slots
            .iter()
            .map(|slot| match slot {
                Some(slot) => {
                    let h = channel_vector(&slot.serving, layout);
                    let norm = h.norm();
                    if norm > 0.0 {
                        h / Complex64::new(norm, 0.0)
                    } else {
                        CVector::zeros(layout.len())
                    }
                }
                None => CVector::zeros(layout.len()),
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub scheme: Scheme,
    pub layout: ArrayLayout,
    pub weights: BeamWeights,
    pub per_slot_rates: Vec<f64>,
    pub avg_rate: f64,
    /// Average rate at initialization and after every outer iteration.
    pub trace: Vec<f64>,
    /// Transformed objective after each iteration's aux refresh.
    pub fp_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Mean desired-signal power gain, W.
    pub desired_gain: f64,
    /// Mean interference power gain, W.
    pub interference_gain: f64,
    /// 1-based indices of slots with no visible satellite.
    pub unservable_slots: Vec<usize>,
    pub warnings: Vec<String>,
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Runs the alternating optimization for one scheme on precomputed slots.
pub fn optimize(
    slots: &[Option<SlotGeometry>],
    array: &StationConfig,
    scheme: Scheme,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    cfg.validate()?;
    let mut layout = init_layout(scheme, array)?;
    let mut weights = init_weights(&layout, slots);
    let mut warnings = Vec::new();
    let unservable_slots: Vec<usize> = slots
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_none())
        .map(|(m, _)| m + 1)
        .collect();
    if !unservable_slots.is_empty() {
        warnings.push(format!("{} slot(s) have no visible satellite", unservable_slots.len()));
    }
    let servable = slots.len() - unservable_slots.len();
    if servable == 0 {
        return Ok(SolveResult {
            scheme,
            layout,
            weights,
            per_slot_rates: vec![0.0; slots.len()],
            avg_rate: 0.0,
            trace: vec![0.0],
            fp_trace: Vec::new(),
            iterations: 0,
            converged: true,
            desired_gain: 0.0,
            interference_gain: 0.0,
            unservable_slots,
            warnings,
        });
    }

    let mut rates = slot_rates(slots, &layout, &weights, array)?;
    let mut trace = vec![mean(&rates)];
    let mut fp_trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        iterations += 1;
        let started = Instant::now();
        let aux = refresh_aux(slots, &layout, &weights, array)?;
        fp_trace.push(fp_objective(&layout, &weights, &aux, slots, array)?);
        let aux_time = started.elapsed();

        let (new_weights, weight_warnings) = update_weights(slots, &layout, &aux, array)?;
        weights = new_weights;
        warnings.extend(weight_warnings.into_iter().map(|w| format!("iteration {iterations}: {w}")));
        let weight_time = started.elapsed() - aux_time;

        if scheme == Scheme::Ma {
            let step = sca_refine(
                slots,
                &weights,
                &aux,
                &layout,
                array,
                cfg.sca_max_inner,
                cfg.sca_tolerance,
                cfg.sca_min_curvature_scale,
            )?;
            warnings.extend(step.warnings.into_iter().map(|w| format!("iteration {iterations}: {w}")));
            layout = step.layout;
        }

        rates = slot_rates(slots, &layout, &weights, array)?;
        let rate = mean(&rates);
        log::debug!(
            "{scheme} iteration {iterations}: rate {rate:.6} (aux {:?}, weights {:?}, total {:?})",
            aux_time,
            weight_time,
            started.elapsed()
        );
        let previous = *trace.last().expect("trace starts non-empty");
        trace.push(rate);
        if (rate - previous).abs() <= cfg.epsilon {
            converged = true;
            break;
        }
    }
    if !converged {
        warnings.push(format!("no convergence within {} iterations", cfg.max_iterations));
    }

    let (desired_gain, interference_gain) = power_gain_metrics(&layout, &weights, slots, array);
    Ok(SolveResult {
        scheme,
        avg_rate: mean(&rates),
        per_slot_rates: rates,
        layout,
        weights,
        trace,
        fp_trace,
        iterations,
        converged,
        desired_gain,
        interference_gain,
        unservable_slots,
        warnings,
    })
}

/// Mean desired and interference power gains with unit-norm weights, over all `M` slots.
pub fn power_gain_metrics(
    layout: &ArrayLayout,
    weights: &BeamWeights,
    slots: &[Option<SlotGeometry>],
    array: &StationConfig,
) -> (f64, f64) {
    let mut desired = 0.0;
    let mut interference = 0.0;
    for (slot, w) in slots.iter().zip(&weights.per_slot) {
        let (Some(slot), norm) = (slot, w.norm()) else {
            continue;
        };
        if norm == 0.0 {
            continue;
        }
        let w = w / Complex64::new(norm, 0.0);
        desired += array.tx_power * link_power(&slot.serving, layout, &w);
        interference += slot
            .interferers
            .iter()
            .map(|l| array.tx_power * link_power(l, layout, &w))
            .sum::<f64>();
    }
    let m = slots.len().max(1) as f64;
    (desired / m, interference / m)
}

/// `10·log10(x)`, with `−∞` for zero.
pub fn to_db(x: f64) -> f64 {
    if x > 0.0 {
        10.0 * x.log10()
    } else {
        f64::NEG_INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sinr, SlotLink};
    use crate::orbit::SatelliteId;
    use approx::assert_relative_eq;

    fn reference_station(n: usize) -> StationConfig {
        StationConfig::reference(n)
    }

    #[test]
    fn sfpa_sixteen_is_lambda_grid() {
        let array = reference_station(16);
        let layout = init_layout(Scheme::Sfpa, &array).unwrap();
        let lambda = array.wavelength;
        assert_relative_eq!(layout.positions[0], Vector2::zeros());
        assert_relative_eq!(layout.positions[15], Vector2::new(3.0 * lambda, 3.0 * lambda), epsilon = 1e-15);
        assert_relative_eq!(layout.min_pairwise_distance(), lambda, max_relative = 1e-12);
    }

    #[test]
    fn dfpa_sixteen_is_half_lambda_grid() {
        let array = reference_station(16);
        let layout = init_layout(Scheme::Dfpa, &array).unwrap();
        let lambda = array.wavelength;
        assert_relative_eq!(layout.positions[15], Vector2::new(1.5 * lambda, 1.5 * lambda), epsilon = 1e-15);
        assert_relative_eq!(layout.min_pairwise_distance(), 0.5 * lambda, max_relative = 1e-12);
    }

    #[test]
    fn four_antennas_span_region() {
        let array = reference_station(4);
        let layout = init_layout(Scheme::Ma, &array).unwrap();
        let side = array.region_side;
        let expected = [(0.0, 0.0), (side, 0.0), (0.0, side), (side, side)];
        for (p, e) in layout.positions.iter().zip(expected) {
            assert_relative_eq!(*p, Vector2::new(e.0, e.1), epsilon = 1e-15);
        }
    }

    #[test]
    fn non_square_counts_fill_row_major() {
        let array = reference_station(8);
        let layout = init_layout(Scheme::Sfpa, &array).unwrap();
        assert_eq!(layout.len(), 8);
        layout.check_feasible(&array, 1e-12).unwrap();
        let two = init_layout(Scheme::Ma, &reference_station(2)).unwrap();
        assert_eq!(two.positions[1].y, 0.0);
    }

    #[test]
    fn oversized_dense_grid_is_rejected() {
        let mut array = reference_station(64);
        array.d_min = array.wavelength;
        assert!(init_layout(Scheme::Dfpa, &array).is_err());
    }

    fn single_slot(array: &StationConfig) -> Vec<Option<SlotGeometry>> {
        vec![Some(SlotGeometry {
            t_m: 0.0,
            serving: SlotLink {
                sat: SatelliteId::new(1, 1),
                a_eff: Vector2::new(0.3, -0.2) * array.wavenumber(),
                d_bar: 1.705e-15,
                phase: 0.7,
            },
            interferers: Vec::new(),
        })]
    }

    #[test]
    fn initial_weights_are_matched_filters() {
        let array = reference_station(16);
        let slots = single_slot(&array);
        let layout = init_layout(Scheme::Sfpa, &array).unwrap();
        let w = init_weights(&layout, &slots);
        assert_relative_eq!(w.per_slot[0].norm(), 1.0, epsilon = 1e-12);
        let gamma = sinr(slots[0].as_ref().unwrap(), &layout, &w.per_slot[0], &array).unwrap();
        let expected = 16.0 * array.tx_power * 1.705e-15 / array.noise_power;
        assert_relative_eq!(gamma, expected, max_relative = 1e-10);
    }

    #[test]
    fn huge_epsilon_stops_after_one_iteration() {
        let array = reference_station(4);
        let cfg = SolverConfig {
            epsilon: 10.0,
            ..SolverConfig::default()
        };
        let res = optimize(&single_slot(&array), &array, Scheme::Ma, &cfg).unwrap();
        assert_eq!(res.iterations, 1);
        assert!(res.converged);
        assert_eq!(res.interference_gain, 0.0);
        assert_eq!(to_db(res.interference_gain), f64::NEG_INFINITY);
    }

    #[test]
    fn unservable_only_scenario_has_zero_rate() {
        let array = reference_station(4);
        let res = optimize(&[None, None], &array, Scheme::Sfpa, &SolverConfig::default()).unwrap();
        assert_eq!(res.avg_rate, 0.0);
        assert_eq!(res.unservable_slots, vec![1, 2]);
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.as_str().parse::<Scheme>().unwrap(), s);
        }
        assert!("XYZ".parse::<Scheme>().is_err());
    }
}
