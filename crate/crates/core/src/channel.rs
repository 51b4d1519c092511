//! Per-slot channel model seen by the ground-station array.
//!
//! Each visible satellite contributes a plane wave with an effective 2D wave
//! vector in the station plane and a combined gain `d̄ = D(τ)·ρ` from the
//! satellite antenna pattern and free-space path gain. Antenna `n` at `c_n`
//! sees the phase `exp(i·a_effᵀc_n)`.

use std::f64::consts::{PI, TAU};

use nalgebra::{DVector, Matrix3, Vector2, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orbit::{
    ground_station_ecef, satellite_ecef, visible_ascending_set, GroundStation, SatelliteId,
    ShellConfig,
};

pub type CVector = DVector<Complex64>;

/// Speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Shape of the satellite antenna pattern off boresight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainPattern {
    /// `4·D0·|J1(x)/x|` with `D(0) = D0`.
    #[default]
    Amplitude,
    /// `4·D0·|J1(x)/x|²`, continuous at boresight.
    Squared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationConfig {
    pub antennas: usize,
    pub wavelength: f64,
    /// Side of the square movement region `[0, side]²`, meters.
    pub region_side: f64,
    pub d_min: f64,
    /// Receiver noise power, W.
    pub noise_power: f64,
    /// Satellite transmit power, W.
    pub tx_power: f64,
    pub aperture_radius: f64,
    pub aperture_efficiency: f64,
    pub path_loss_exponent: f64,
    /// Path gain at 1 m.
    pub ref_path_gain: f64,
    pub gain_pattern: GainPattern,
}

impl StationConfig {
    /// Reference station at 14 GHz: 3λ×3λ region, d_min = λ/2, σ² = −120 dBm,
    /// P_s = 30 dBW, r = 3λ, η = 0.5, free-space path loss.
    pub fn reference(antennas: usize) -> Self {
        let wavelength = SPEED_OF_LIGHT / 14e9;
        Self {
            antennas,
            wavelength,
            region_side: 3.0 * wavelength,
            d_min: 0.5 * wavelength,
            noise_power: 1e-15,
            tx_power: 1e3,
            aperture_radius: 3.0 * wavelength,
            aperture_efficiency: 0.5,
            path_loss_exponent: 2.0,
            ref_path_gain: (wavelength / (4.0 * PI)).powi(2),
            gain_pattern: GainPattern::Amplitude,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks: [(bool, &str); 9] = [
            (self.antennas >= 1, "antenna count N must be at least 1"),
            (self.wavelength > 0.0, "wavelength must be positive"),
            (self.region_side > 0.0, "region side must be positive"),
            (self.d_min >= 0.0, "d_min must be non-negative"),
            (self.noise_power > 0.0, "noise power must be positive"),
            (self.tx_power > 0.0, "transmit power must be positive"),
            (
                self.aperture_efficiency > 0.0 && self.aperture_efficiency <= 1.0,
                "aperture efficiency must lie in (0, 1]",
            ),
            (self.path_loss_exponent > 0.0, "path-loss exponent must be positive"),
            (self.ref_path_gain > 0.0, "reference path gain must be positive"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::InvalidConfig(msg.into()));
            }
        }
        if !(self.aperture_radius > 0.0) {
            return Err(Error::InvalidConfig("aperture radius must be positive".into()));
        }
        Ok(())
    }

    pub fn wavenumber(&self) -> f64 {
        TAU / self.wavelength
    }

    /// Boresight gain `D0 = η(2πr/λ)²`.
    pub fn max_gain(&self) -> f64 {
        self.aperture_efficiency * (self.wavenumber() * self.aperture_radius).powi(2)
    }
}

/// Antenna positions in the station x–y plane (the APV).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayLayout {
    pub positions: Vec<Vector2<f64>>,
}

impl ArrayLayout {
    pub fn new(positions: Vec<Vector2<f64>>) -> Self {
        Self { positions }
    }

    /// From the stacked `[x1, y1, x2, y2, ...]` form.
    pub fn from_flat(c: &[f64]) -> Self {
        Self {
            positions: c.chunks_exact(2).map(|p| Vector2::new(p[0], p[1])).collect(),
        }
    }

    pub fn to_flat(&self) -> DVector<f64> {
        DVector::from_iterator(
            2 * self.positions.len(),
            self.positions.iter().flat_map(|p| [p.x, p.y]),
        )
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.positions.iter().enumerate() {
            for b in &self.positions[i + 1..] {
                best = best.min((a - b).norm());
            }
        }
        best
    }

    /// Checks region membership and minimum spacing up to `tol` meters.
    pub fn check_feasible(&self, station: &StationConfig, tol: f64) -> Result<()> {
        if self.len() != station.antennas {
            return Err(Error::DimensionMismatch {
                expected: station.antennas,
                got: self.len(),
            });
        }
        for (n, p) in self.positions.iter().enumerate() {
            let inside = |v: f64| v >= -tol && v <= station.region_side + tol;
            if !(inside(p.x) && inside(p.y)) {
                return Err(Error::InvalidConfig(format!(
                    "antenna {} at ({:.6}, {:.6}) lies outside the movement region",
                    n + 1,
                    p.x,
                    p.y
                )));
            }
        }
        let dist = self.min_pairwise_distance();
        if dist < station.d_min - tol {
            return Err(Error::InvalidConfig(format!(
                "minimum antenna spacing {dist:.6e} m is below d_min = {:.6e} m",
                station.d_min
            )));
        }
        Ok(())
    }
}

/// One satellite link at one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotLink {
    pub sat: SatelliteId,
    /// Wave vector projected on the station plane, rad/m.
    pub a_eff: Vector2<f64>,
    /// Combined gain `D(τ)·ρ`.
    pub d_bar: f64,
    /// Carrier phase `(2π/λ)·‖ā‖`.
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotGeometry {
    pub t_m: f64,
    pub serving: SlotLink,
    pub interferers: Vec<SlotLink>,
}

impl SlotGeometry {
    /// Serving link first, then interferers.
    pub fn links(&self) -> impl Iterator<Item = &SlotLink> {
        std::iter::once(&self.serving).chain(self.interferers.iter())
    }
}

/// Per-slot receive weights; unservable slots carry a zero vector.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamWeights {
    pub per_slot: Vec<CVector>,
}

impl BeamWeights {
    pub fn len(&self) -> usize {
        self.per_slot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_slot.is_empty()
    }
}

/// Station-frame basis `T(t)`; `Tᵀ` maps geocentric vectors into the station frame.
///
/// Columns are west, north and nadir at the station, so `T` is orthogonal.
pub fn sccs_basis(cfg: &ShellConfig, station: &GroundStation, t: f64) -> Matrix3<f64> {
    let (st, ct) = station.latitude.sin_cos();
    let (sp, cp) = station.azimuth(cfg, t).sin_cos();
    Matrix3::new(
        sp, -cp * st, -cp * ct, //
        -cp, -sp * st, -sp * ct, //
        0.0, ct, -st,
    )
}

/// Satellite-to-station wave vector in the station frame (norm `2π/λ`), plus `‖ā‖`.
pub fn wave_vector_sccs(
    cfg: &ShellConfig,
    station: &GroundStation,
    array: &StationConfig,
    sat: SatelliteId,
    t: f64,
) -> Result<(Vector3<f64>, f64)> {
    let offset = ground_station_ecef(cfg, station, t) - satellite_ecef(cfg, sat, t)?;
    let range = offset.norm();
    if !(range > 0.0) {
        return Err(Error::DegenerateGeometry(format!(
            "satellite {sat} coincides with the ground station"
        )));
    }
    let a = offset * (array.wavenumber() / range);
    Ok((sccs_basis(cfg, station, t).transpose() * a, range))
}

/// Station-plane (x, y) components of the wave vector.
pub fn effective_wave_vector(
    cfg: &ShellConfig,
    station: &GroundStation,
    array: &StationConfig,
    sat: SatelliteId,
    t: f64,
) -> Result<Vector2<f64>> {
    let (a, _) = wave_vector_sccs(cfg, station, array, sat, t)?;
    Ok(a.xy())
}

/// Off-boresight angles below this (radians) count as exact boresight; the
/// amplitude pattern is discontinuous at zero and orbit round-off is ~1e-16.
pub const BORESIGHT_TOLERANCE: f64 = 1e-9;

/// Satellite antenna gain at off-boresight angle `tau`.
pub fn antenna_gain(tau: f64, array: &StationConfig) -> f64 {
    if tau.abs() > std::f64::consts::FRAC_PI_2 {
        return 0.0;
    }
    let d0 = array.max_gain();
    if tau.abs() <= BORESIGHT_TOLERANCE {
        return d0;
    }
    let x = array.wavenumber() * array.aperture_radius * tau.sin();
    let ratio = (libm::j1(x) / x).abs();
    match array.gain_pattern {
        GainPattern::Amplitude => 4.0 * d0 * ratio,
        GainPattern::Squared => 4.0 * d0 * ratio * ratio,
    }
}

/// Combined gain `d̄ = D(τ)·ρ` and carrier phase of a satellite link.
pub fn link_gain(
    cfg: &ShellConfig,
    station: &GroundStation,
    array: &StationConfig,
    sat: SatelliteId,
    t: f64,
) -> Result<(f64, f64)> {
    let sat_pos = satellite_ecef(cfg, sat, t)?;
    let offset = ground_station_ecef(cfg, station, t) - sat_pos;
    let range = offset.norm();
    if !(range > 0.0) {
        return Err(Error::DegenerateGeometry(format!(
            "satellite {sat} coincides with the ground station"
        )));
    }
    let nadir = -sat_pos;
    let tau = offset.cross(&nadir).norm().atan2(offset.dot(&nadir));
    let rho = array.ref_path_gain * range.powf(-array.path_loss_exponent);
    Ok((antenna_gain(tau, array) * rho, array.wavenumber() * range))
}

pub fn slot_link(
    cfg: &ShellConfig,
    station: &GroundStation,
    array: &StationConfig,
    sat: SatelliteId,
    t: f64,
) -> Result<SlotLink> {
    let a_eff = effective_wave_vector(cfg, station, array, sat, t)?;
    let (d_bar, phase) = link_gain(cfg, station, array, sat, t)?;
    Ok(SlotLink {
        sat,
        a_eff,
        d_bar,
        phase,
    })
}

/// `[exp(i·a_effᵀc_n)]_n`.
pub fn steering_vector(a_eff: &Vector2<f64>, layout: &ArrayLayout) -> CVector {
    CVector::from_iterator(
        layout.len(),
        layout
            .positions
            .iter()
            .map(|c| Complex64::from_polar(1.0, a_eff.dot(c))),
    )
}

/// Full channel vector `√d̄·e^{iφ}·s`.
pub fn channel_vector(link: &SlotLink, layout: &ArrayLayout) -> CVector {
    let scale = Complex64::from_polar(link.d_bar.sqrt(), link.phase);
    steering_vector(&link.a_eff, layout) * scale
}

/// Snapshot of the sky at `t`. `None` when no ascending satellite is visible.
///
/// The serving satellite is the visible one with the largest `d̄`; ties go to
/// the smallest `(j, k)`.
pub fn build_slot_geometry(
    cfg: &ShellConfig,
    station: &GroundStation,
    array: &StationConfig,
    t: f64,
) -> Result<Option<SlotGeometry>> {
    let visible = visible_ascending_set(cfg, station, t)?;
    let links = visible
        .into_iter()
        .map(|sat| slot_link(cfg, station, array, sat, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(select_serving(t, links))
}

/// Splits links (ordered by `(j, k)`) into serving and interferers.
pub fn select_serving(t_m: f64, mut links: Vec<SlotLink>) -> Option<SlotGeometry> {
    let mut best: Option<usize> = None;
    for (i, link) in links.iter().enumerate() {
        match best {
            Some(b) if link.d_bar <= links[b].d_bar => {}
            _ => best = Some(i),
        }
    }
    let serving = links.remove(best?);
    Some(SlotGeometry {
        t_m,
        serving,
        interferers: links,
    })
}

/// `Σ_n conj(a_n)·b_n`.
pub fn inner(a: &CVector, b: &CVector) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub(crate) fn check_weights(w: &CVector, n: usize) -> Result<()> {
    if w.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: w.len(),
        });
    }
    if w.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
        return Err(Error::InvalidWeights("non-finite weight entry".into()));
    }
    if w.norm_squared() == 0.0 {
        return Err(Error::InvalidWeights("weight vector is zero".into()));
    }
    Ok(())
}

/// Beamforming gain `d̄·|sᴴw|²` toward one link.
pub fn link_power(link: &SlotLink, layout: &ArrayLayout, w: &CVector) -> f64 {
    link.d_bar * inner(&steering_vector(&link.a_eff, layout), w).norm_sqr()
}

pub fn sinr(
    slot: &SlotGeometry,
    layout: &ArrayLayout,
    w: &CVector,
    array: &StationConfig,
) -> Result<f64> {
    check_weights(w, layout.len())?;
    let signal = link_power(&slot.serving, layout, w);
    let interference: f64 = slot.interferers.iter().map(|l| link_power(l, layout, w)).sum();
    let noise = array.noise_power / array.tx_power * w.norm_squared();
    Ok(signal / (interference + noise))
}

/// Per-slot rates `log2(1 + γ_m)`; unservable slots yield 0.
pub fn slot_rates(
    slots: &[Option<SlotGeometry>],
    layout: &ArrayLayout,
    weights: &BeamWeights,
    array: &StationConfig,
) -> Result<Vec<f64>> {
    if weights.len() != slots.len() {
        return Err(Error::DimensionMismatch {
            expected: slots.len(),
            got: weights.len(),
        });
    }
    slots
        .iter()
        .zip(&weights.per_slot)
        .map(|(slot, w)| match slot {
            Some(slot) => Ok((1.0 + sinr(slot, layout, w, array)?).log2()),
            None => Ok(0.0),
        })
        .collect()
}

/// Average achievable rate in bps/Hz over all `M` slots.
pub fn average_rate(
    slots: &[Option<SlotGeometry>],
    layout: &ArrayLayout,
    weights: &BeamWeights,
    array: &StationConfig,
) -> Result<f64> {
    let rates = slot_rates(slots, layout, weights, array)?;
    if rates.is_empty() {
        return Ok(0.0);
    }
    Ok(rates.iter().sum::<f64>() / rates.len() as f64)
}

/// A look direction at the station: elevation above the horizon and azimuth, radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LookDirection {
    pub elevation: f64,
    pub azimuth: f64,
}

impl LookDirection {
    /// Station-plane wave vector of a plane wave arriving from this direction.
    pub fn wave_vector(&self, wavenumber: f64) -> Vector2<f64> {
        let h = wavenumber * self.elevation.cos();
        Vector2::new(-h * self.azimuth.cos(), -h * self.azimuth.sin())
    }

    /// Inverse of [`LookDirection::wave_vector`] for an above-horizon source.
    pub fn from_wave_vector(a_eff: &Vector2<f64>, wavenumber: f64) -> Self {
        let ratio = (a_eff.norm() / wavenumber).clamp(0.0, 1.0);
        Self {
            elevation: ratio.acos(),
            azimuth: (-a_eff.y).atan2(-a_eff.x),
        }
    }
}

/// Elevation/azimuth sampling grid, degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularGrid {
    pub elevation_deg: (f64, f64, usize),
    pub azimuth_deg: (f64, f64, usize),
}

impl Default for AngularGrid {
    fn default() -> Self {
        Self {
            elevation_deg: (0.0, 90.0, 91),
            azimuth_deg: (-180.0, 180.0, 181),
        }
    }
}

impl AngularGrid {
    pub fn points(&self) -> Vec<LookDirection> {
        let axis = |(lo, hi, n): (f64, f64, usize)| -> Vec<f64> {
            match n {
                0 => Vec::new(),
                1 => vec![lo],
                _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
            }
        };
        let elevations = axis(self.elevation_deg);
        let azimuths = axis(self.azimuth_deg);
        elevations
            .iter()
            .flat_map(|&e| {
                azimuths.iter().map(move |&a| LookDirection {
                    elevation: e.to_radians(),
                    azimuth: a.to_radians(),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternSample {
    pub direction: LookDirection,
    pub gain: f64,
    /// `serving:j-k` / `interferer:j-k` for satellite rows, empty for grid rows.
    pub marker: String,
}

/// Array gain `|s(a)ᴴw|²` over a set of wave vectors.
pub fn beam_pattern(
    layout: &ArrayLayout,
    w: &CVector,
    wave_vectors: &[Vector2<f64>],
) -> Result<Vec<f64>> {
    check_weights(w, layout.len())?;
    Ok(wave_vectors
        .iter()
        .map(|a| inner(&steering_vector(a, layout), w).norm_sqr())
        .collect())
}

/// Grid samples followed by one marker row per satellite in the slot.
pub fn beam_pattern_with_markers(
    slot: &SlotGeometry,
    layout: &ArrayLayout,
    w: &CVector,
    grid: &AngularGrid,
    array: &StationConfig,
) -> Result<Vec<PatternSample>> {
    let k = array.wavenumber();
    let mut directions = grid.points();
    let mut markers = vec![String::new(); directions.len()];
    for (i, link) in slot.links().enumerate() {
        directions.push(LookDirection::from_wave_vector(&link.a_eff, k));
        let role = if i == 0 { "serving" } else { "interferer" };
        markers.push(format!("{role}:{}", link.sat));
    }
    let vectors: Vec<_> = directions.iter().map(|d| d.wave_vector(k)).collect();
    let gains = beam_pattern(layout, w, &vectors)?;
    Ok(directions
        .into_iter()
        .zip(gains)
        .zip(markers)
        .map(|((direction, gain), marker)| PatternSample {
            direction,
            gain,
            marker,
        })
        .collect())
}
