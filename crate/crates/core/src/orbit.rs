//! Walker-Delta constellation kinematics.
//!
//! Every satellite moves on a circular orbit of radius `R + H`. Satellites are
//! indexed by orbit plane `j` (1..=J) and in-plane index `k` (1..=K); the
//! plane `j` has its ascending node at longitude `2πj/J`. The ground station
//! sits on the surface at a fixed latitude and rotates with the earth.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;

use log::warn;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Position in the geocentric Cartesian frame, meters.
pub type EcefVec = Vector3<f64>;

/// Standard gravitational parameter of the earth, m³/s².
pub const EARTH_MU: f64 = 3.986_004_418e14;
pub const EARTH_RADIUS: f64 = 6_371e3;
pub const DEFAULT_ALTITUDE: f64 = 550e3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShellConfig {
    /// Number of orbital planes (J).
    pub orbits: usize,
    /// Satellites per plane (K).
    pub sats_per_orbit: usize,
    pub earth_radius: f64,
    pub altitude: f64,
    /// Inclination, radians.
    pub inclination: f64,
    pub mu: f64,
    /// Earth rotation period used for the ground-station motion, seconds.
    pub earth_period: f64,
}

impl ShellConfig {
    /// Reference shell: 550 km altitude, 65° inclination, `T_E = 15·T`.
    pub fn reference(sats_per_orbit: usize, orbits: usize) -> Self {
        let mut cfg = Self {
            orbits,
            sats_per_orbit,
            earth_radius: EARTH_RADIUS,
            altitude: DEFAULT_ALTITUDE,
            inclination: 65f64.to_radians(),
            mu: EARTH_MU,
            earth_period: 0.0,
        };
        cfg.earth_period = 15.0 * orbital_period(&cfg);
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.orbits < 1 {
            return bad("orbit count J must be at least 1");
        }
        if self.sats_per_orbit < 2 {
            return bad("satellites per orbit K must be at least 2");
        }
        if !(self.altitude > 0.0 && self.altitude.is_finite()) {
            return bad("altitude H must be positive");
        }
        if !(self.earth_radius > 0.0 && self.earth_radius.is_finite()) {
            return bad("earth radius R must be positive");
        }
        if !(self.inclination > 0.0 && self.inclination < PI) {
            return bad("inclination must lie in (0, π)");
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return bad("gravitational parameter must be positive");
        }
        if !(self.earth_period > 0.0 && self.earth_period.is_finite()) {
            return bad("earth rotation period must be positive");
        }
        Ok(())
    }

    pub fn orbit_radius(&self) -> f64 {
        self.earth_radius + self.altitude
    }

    /// All satellites in `(j, k)` order.
    pub fn satellites(&self) -> impl Iterator<Item = SatelliteId> + '_ {
        (1..=self.orbits)
            .flat_map(move |j| (1..=self.sats_per_orbit).map(move |k| SatelliteId::new(j, k)))
    }
}

/// Satellite `S_jk`: 1-based plane and in-plane indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SatelliteId {
    pub j: usize,
    pub k: usize,
}

impl SatelliteId {
    pub fn new(j: usize, k: usize) -> Self {
        Self { j, k }
    }

    fn check(&self, cfg: &ShellConfig) -> Result<()> {
        if self.j == 0 || self.j > cfg.orbits || self.k == 0 || self.k > cfg.sats_per_orbit {
            return Err(Error::InvalidConfig(format!(
                "satellite {self} outside {}x{} shell",
                cfg.orbits, cfg.sats_per_orbit
            )));
        }
        Ok(())
    }
}

impl fmt::Display for SatelliteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.j, self.k)
    }
}

/// Fixed ground station: latitude and azimuth at `t = 0` (radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundStation {
    pub latitude: f64,
    pub initial_azimuth: f64,
}

impl GroundStation {
    pub fn new(latitude: f64) -> Self {
        Self {
            latitude,
            initial_azimuth: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.latitude.abs() <= FRAC_PI_2) {
            return Err(Error::InvalidConfig(
                "station latitude must lie in [-π/2, π/2]".into(),
            ));
        }
        if !self.initial_azimuth.is_finite() {
            return Err(Error::InvalidConfig("station azimuth must be finite".into()));
        }
        Ok(())
    }

    /// Station azimuth `Φ_u(t)`.
    pub fn azimuth(&self, cfg: &ShellConfig, t: f64) -> f64 {
        TAU * t / cfg.earth_period + self.initial_azimuth
    }
}

/// Keplerian period of a circular orbit at altitude `H`.
pub fn orbital_period(cfg: &ShellConfig) -> f64 {
    TAU * (cfg.orbit_radius().powi(3) / cfg.mu).sqrt()
}

/// Geocentric angle from the ascending node, `α_jk(t)`.
pub fn anomaly(cfg: &ShellConfig, sat: SatelliteId, t: f64) -> Result<f64> {
    if cfg.sats_per_orbit < 2 {
        return Err(Error::InvalidConfig(
            "initial anomaly needs at least two satellites per orbit".into(),
        ));
    }
    sat.check(cfg)?;
    let k = cfg.sats_per_orbit as f64;
    let initial = -FRAC_PI_2 + PI * (sat.k as f64 - 1.0) / (k - 1.0);
    Ok(TAU * t / orbital_period(cfg) + initial)
}

/// Wrap an angle into `(-π, π]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let wrapped = angle.rem_euclid(TAU);
    if wrapped > PI {
        wrapped - TAU
    } else {
        wrapped
    }
}

fn spherical_to_cartesian(radius: f64, elevation: f64, azimuth: f64) -> EcefVec {
    let (se, ce) = elevation.sin_cos();
    let (sa, ca) = azimuth.sin_cos();
    Vector3::new(radius * ce * ca, radius * ce * sa, radius * se)
}

/// Geocentric latitude and azimuth of a satellite.
pub fn satellite_angles(cfg: &ShellConfig, sat: SatelliteId, t: f64) -> Result<(f64, f64)> {
    let alpha = anomaly(cfg, sat, t)?;
    let (sb, cb) = cfg.inclination.sin_cos();
    let (sa, ca) = alpha.sin_cos();
    let elevation = (sb * sa).clamp(-1.0, 1.0).asin();
    let azimuth = (cb * sa).atan2(ca) + TAU * sat.j as f64 / cfg.orbits as f64;
    Ok((elevation, wrap_angle(azimuth)))
}

pub fn satellite_ecef(cfg: &ShellConfig, sat: SatelliteId, t: f64) -> Result<EcefVec> {
    let (elevation, azimuth) = satellite_angles(cfg, sat, t)?;
    Ok(spherical_to_cartesian(cfg.orbit_radius(), elevation, azimuth))
}

pub fn ground_station_ecef(cfg: &ShellConfig, station: &GroundStation, t: f64) -> EcefVec {
    spherical_to_cartesian(cfg.earth_radius, station.latitude, station.azimuth(cfg, t))
}

/// Squared slant range below which a satellite is above the station horizon.
pub fn visibility_threshold_sq(cfg: &ShellConfig) -> f64 {
    cfg.orbit_radius().powi(2) - cfg.earth_radius.powi(2)
}

/// Visible satellites on the ascending segment of their orbit, ordered by `(j, k)`.
pub fn visible_ascending_set(
    cfg: &ShellConfig,
    station: &GroundStation,
    t: f64,
) -> Result<Vec<SatelliteId>> {
    let ground = ground_station_ecef(cfg, station, t);
    let threshold = visibility_threshold_sq(cfg);
    let mut visible = Vec::new();
    for sat in cfg.satellites() {
        if anomaly(cfg, sat, t)?.cos() <= 0.0 {
            continue;
        }
        let pos = satellite_ecef(cfg, sat, t)?;
        if (ground - pos).norm_squared() <= threshold {
            visible.push(sat);
        }
    }
    Ok(visible)
}

/// Observation window `(0, T_E/J]` split into equal slots, represented by midpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub window: f64,
    pub midpoints: Vec<f64>,
}

impl TimeGrid {
    pub fn slots(&self) -> usize {
        self.midpoints.len()
    }

    pub fn slot_length(&self) -> f64 {
        self.window / self.midpoints.len() as f64
    }

    /// Whether the window is an integer multiple of the in-plane spacing period `T/K`.
    pub fn is_aligned(&self, cfg: &ShellConfig) -> bool {
        let spacing = orbital_period(cfg) / cfg.sats_per_orbit as f64;
        let ratio = self.window / spacing;
        (ratio - ratio.round()).abs() <= 1e-6 * ratio.max(1.0)
    }
}

pub fn make_time_grid(cfg: &ShellConfig, slots: usize) -> Result<TimeGrid> {
    if slots == 0 {
        return Err(Error::InvalidConfig("slot count M must be at least 1".into()));
    }
    let window = cfg.earth_period / cfg.orbits as f64;
    let step = window / slots as f64;
    let midpoints = (1..=slots).map(|m| (m as f64 - 0.5) * step).collect();
    let grid = TimeGrid { window, midpoints };
    if !grid.is_aligned(cfg) {
        warn!(
            "observation window {:.3} s is not an integer multiple of T/K = {:.3} s",
            window,
            orbital_period(cfg) / cfg.sats_per_orbit as f64
        );
    }
    Ok(grid)
}
