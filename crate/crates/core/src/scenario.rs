//! Scenario files: a flat JSON document with unit-tagged quantities.
//!
//! Lengths take `m`, `km` or (station lengths only) `lambda`; bare numbers are
//! meters. Powers must carry `W`, `mW`, `dBW` or `dBm`. Angles are degrees
//! unless tagged `rad`. Missing keys fall back to the reference values except `K`
//! and `J`, which are required.

use std::path::Path;

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::channel::{AngularGrid, GainPattern, StationConfig, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::orbit::{
    orbital_period, GroundStation, ShellConfig, DEFAULT_ALTITUDE, EARTH_MU, EARTH_RADIUS,
};
use crate::solver::{Scenario, Scheme, SolverConfig};

/// Station latitude used when the file does not set `theta_u`, degrees.
pub const DEFAULT_LATITUDE_DEG: f64 = 30.0;
pub const DEFAULT_SLOTS: usize = 500;
pub const DEFAULT_ANTENNAS: usize = 16;
pub const DEFAULT_FREQUENCY: f64 = 14e9;

/// Optional sweep axes; an absent axis keeps the base value.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepAxes {
    pub antennas: Vec<usize>,
    /// Satellite transmit powers, W.
    pub tx_power: Vec<f64>,
    /// Station latitudes, radians.
    pub latitude: Vec<f64>,
    /// `(K, J)` pairs.
    pub constellation: Vec<(usize, usize)>,
}

impl SweepAxes {
    pub fn is_empty(&self) -> bool {
        self.antennas.is_empty()
            && self.tx_power.is_empty()
            && self.latitude.is_empty()
            && self.constellation.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternRequest {
    pub grid: AngularGrid,
    /// 1-based slot indices.
    pub slots: Vec<usize>,
}

impl Default for PatternRequest {
    fn default() -> Self {
        Self {
            grid: AngularGrid::default(),
            slots: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub schemes: Vec<Scheme>,
    pub solver: SolverConfig,
    pub sweep: Option<SweepAxes>,
    pub pattern: PatternRequest,
}

impl ScenarioSpec {
    /// Reference scenario for a `K × J` shell at the default latitude.
    pub fn reference(sats_per_orbit: usize, orbits: usize) -> Self {
        Self {
            scenario: Scenario {
                shell: ShellConfig::reference(sats_per_orbit, orbits),
                array: StationConfig::reference(DEFAULT_ANTENNAS),
                ground: GroundStation::new(DEFAULT_LATITUDE_DEG.to_radians()),
                slots: DEFAULT_SLOTS,
            },
            schemes: Scheme::ALL.to_vec(),
            solver: SolverConfig::default(),
            sweep: None,
            pattern: PatternRequest::default(),
        }
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Canonical JSON: SI numbers, powers in W, angles in radians.
    pub fn to_json(&self) -> String {
        let shell = &self.scenario.shell;
        let array = &self.scenario.array;
        let ground = &self.scenario.ground;
        let mut root = json!({
            "K": shell.sats_per_orbit,
            "J": shell.orbits,
            "R": shell.earth_radius,
            "H": shell.altitude,
            "beta": rad(shell.inclination),
            "mu": shell.mu,
            "earth_period": shell.earth_period,
            "M": self.scenario.slots,
            "N": array.antennas,
            "lambda": array.wavelength,
            "region_side": array.region_side,
            "d_min": array.d_min,
            "sigma2": watts(array.noise_power),
            "P_s": watts(array.tx_power),
            "r_ap": array.aperture_radius,
            "eta": array.aperture_efficiency,
            "gamma_pl": array.path_loss_exponent,
            "rho0": array.ref_path_gain,
            "gain_pattern": match array.gain_pattern {
                GainPattern::Amplitude => "amplitude",
                GainPattern::Squared => "squared",
            },
            "theta_u": rad(ground.latitude),
            "phi_u0": rad(ground.initial_azimuth),
            "schemes": self.schemes.iter().map(|s| s.as_str()).collect::<Vec<_>>(),
            "solver": {
                "epsilon": self.solver.epsilon,
                "i_max": self.solver.max_iterations,
                "sca_max_inner": self.solver.sca_max_inner,
                "sca_tolerance": self.solver.sca_tolerance,
                "sca_min_curvature_scale": self.solver.sca_min_curvature_scale,
            },
            "pattern": {
                "elevation_deg": grid_axis(self.pattern.grid.elevation_deg),
                "azimuth_deg": grid_axis(self.pattern.grid.azimuth_deg),
                "slots": self.pattern.slots,
            },
        });
        if let Some(sweep) = &self.sweep {
            let mut axes = Map::new();
            if !sweep.antennas.is_empty() {
                axes.insert("N".into(), json!(sweep.antennas));
            }
            if !sweep.tx_power.is_empty() {
                axes.insert("P_s".into(), sweep.tx_power.iter().map(|&p| watts(p)).collect());
            }
            if !sweep.latitude.is_empty() {
                axes.insert("theta_u".into(), sweep.latitude.iter().map(|&a| rad(a)).collect());
            }
            if !sweep.constellation.is_empty() {
                axes.insert(
                    "KJ".into(),
                    sweep.constellation.iter().map(|&(k, j)| json!([k, j])).collect(),
                );
            }
            root["sweep"] = Value::Object(axes);
        }
        serde_json::to_string_pretty(&root).expect("JSON values always serialize")
    }
}

fn watts(p: f64) -> Value {
    Value::String(format!("{p:e} W"))
}

fn rad(a: f64) -> Value {
    Value::String(format!("{a:e} rad"))
}

fn grid_axis((lo, hi, n): (f64, f64, usize)) -> Value {
    json!([lo, hi, n])
}

pub fn parse_scenario(path: &Path) -> Result<ScenarioSpec> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario_str(&text)
}

/// Object whose keys are consumed one by one; leftovers are unknown keys.
struct Fields {
    prefix: String,
    map: Map<String, Value>,
}

impl Fields {
    fn new(prefix: &str, value: Value) -> Result<Self> {
        match value {
            Value::Object(map) => Ok(Self {
                prefix: prefix.to_string(),
                map,
            }),
            _ => Err(Error::parse(
                if prefix.is_empty() { "<root>" } else { prefix.trim_end_matches('.') },
                "expected a JSON object",
            )),
        }
    }

    fn key(&self, name: &str) -> String {
        format!("{}{name}", self.prefix)
    }

    fn take(&mut self, name: &str) -> Option<Value> {
        self.map.remove(name).filter(|v| !v.is_null())
    }

    fn finish(self) -> Result<()> {
        match self.map.keys().next() {
            Some(k) => Err(Error::parse(format!("{}{k}", self.prefix), "unknown key")),
            None => Ok(()),
        }
    }

    fn number(&mut self, name: &str) -> Result<Option<f64>> {
        let key = self.key(name);
        self.take(name).map(|v| as_f64(&key, &v)).transpose()
    }

    fn count(&mut self, name: &str) -> Result<Option<usize>> {
        let key = self.key(name);
        self.take(name).map(|v| as_usize(&key, &v)).transpose()
    }
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::parse(key, format!("expected a finite number, got {v}")))
}

fn as_usize(key: &str, v: &Value) -> Result<usize> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| Error::parse(key, format!("expected a non-negative integer, got {v}")))
}

fn as_list<'a>(key: &str, v: &'a Value) -> Result<&'a Vec<Value>> {
    v.as_array()
        .ok_or_else(|| Error::parse(key, format!("expected a list, got {v}")))
}

/// Splits `"-120 dBm"` into `(-120, "dBm")`.
fn split_quantity(key: &str, text: &str) -> Result<(f64, String)> {
    let text = text.trim();
    let split = text
        .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E')))
        .unwrap_or(text.len());
    let (num, unit) = text.split_at(split);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| Error::parse(key, format!("cannot read a number from `{text}`")))?;
    if !value.is_finite() {
        return Err(Error::parse(key, "value must be finite"));
    }
    Ok((value, unit.trim().to_string()))
}

fn power(key: &str, v: &Value) -> Result<f64> {
    let Some(text) = v.as_str() else {
        return Err(Error::parse(key, "power needs a unit: W, mW, dBW or dBm"));
    };
    let (x, unit) = split_quantity(key, text)?;
    let watts = match unit.as_str() {
        "W" => x,
        "mW" => x * 1e-3,
        "dBW" => 10f64.powf(x / 10.0),
        "dBm" => 10f64.powf(x / 10.0) * 1e-3,
        "" => return Err(Error::parse(key, "power needs a unit: W, mW, dBW or dBm")),
        other => return Err(Error::parse(key, format!("unknown power unit `{other}`"))),
    };
    if !(watts > 0.0) {
        return Err(Error::parse(key, "power must be positive"));
    }
    Ok(watts)
}

fn length(key: &str, v: &Value, wavelength: Option<f64>) -> Result<f64> {
    if let Some(x) = v.as_f64() {
        return Ok(x);
    }
    let Some(text) = v.as_str() else {
        return Err(Error::parse(key, format!("expected a length, got {v}")));
    };
    let (x, unit) = split_quantity(key, text)?;
    match (unit.as_str(), wavelength) {
        ("m" | "", _) => Ok(x),
        ("km", _) => Ok(x * 1e3),
        ("lambda" | "λ", Some(l)) => Ok(x * l),
        ("lambda" | "λ", None) => Err(Error::parse(key, "wavelength units are not allowed here")),
        (other, _) => Err(Error::parse(key, format!("unknown length unit `{other}`"))),
    }
}

/// Degrees by default; `deg` or `rad` suffixes on strings.
fn angle(key: &str, v: &Value) -> Result<f64> {
    if let Some(x) = v.as_f64() {
        return Ok(x.to_radians());
    }
    let Some(text) = v.as_str() else {
        return Err(Error::parse(key, format!("expected an angle, got {v}")));
    };
    let (x, unit) = split_quantity(key, text)?;
    match unit.as_str() {
        "" | "deg" => Ok(x.to_radians()),
        "rad" => Ok(x),
        other => Err(Error::parse(key, format!("unknown angle unit `{other}`"))),
    }
}

fn frequency(key: &str, v: &Value) -> Result<f64> {
    let hz = if let Some(x) = v.as_f64() {
        x
    } else if let Some(text) = v.as_str() {
        let (x, unit) = split_quantity(key, text)?;
        match unit.as_str() {
            "" | "Hz" => x,
            "kHz" => x * 1e3,
            "MHz" => x * 1e6,
            "GHz" => x * 1e9,
            other => return Err(Error::parse(key, format!("unknown frequency unit `{other}`"))),
        }
    } else {
        return Err(Error::parse(key, format!("expected a frequency, got {v}")));
    };
    if !(hz > 0.0) {
        return Err(Error::parse(key, "frequency must be positive"));
    }
    Ok(hz)
}

/// Seconds, or a multiple of the orbital period with unit `T`.
fn duration(key: &str, v: &Value, period: f64) -> Result<f64> {
    if let Some(x) = v.as_f64() {
        return Ok(x);
    }
    let Some(text) = v.as_str() else {
        return Err(Error::parse(key, format!("expected a duration, got {v}")));
    };
    let (x, unit) = split_quantity(key, text)?;
    match unit.as_str() {
        "" | "s" => Ok(x),
        "T" => Ok(x * period),
        other => Err(Error::parse(key, format!("unknown time unit `{other}`"))),
    }
}

fn require(key: &str, ok: bool, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::parse(key, message))
    }
}

pub fn parse_scenario_str(text: &str) -> Result<ScenarioSpec> {
    let root: Value = serde_json::from_str(text)?;
    let mut f = Fields::new("", root)?;

    let sats_per_orbit = f.count("K")?.ok_or_else(|| Error::parse("K", "required"))?;
    let orbits = f.count("J")?.ok_or_else(|| Error::parse("J", "required"))?;
    require("K", sats_per_orbit >= 2, "need at least 2 satellites per orbit")?;
    require("J", orbits >= 1, "need at least 1 orbit")?;

    let earth_radius = f
        .take("R")
        .map(|v| length("R", &v, None))
        .transpose()?
        .unwrap_or(EARTH_RADIUS);
    require("R", earth_radius > 0.0, "must be positive")?;
    let altitude = f
        .take("H")
        .map(|v| length("H", &v, None))
        .transpose()?
        .unwrap_or(DEFAULT_ALTITUDE);
    require("H", altitude > 0.0, "must be positive")?;
    let inclination = f
        .take("beta")
        .map(|v| angle("beta", &v))
        .transpose()?
        .unwrap_or(65f64.to_radians());
    require(
        "beta",
        inclination > 0.0 && inclination < std::f64::consts::PI,
        "inclination must lie strictly between 0° and 180°",
    )?;
    let mu = f.number("mu")?.unwrap_or(EARTH_MU);
    require("mu", mu > 0.0, "must be positive")?;
    let mut shell = ShellConfig {
        orbits,
        sats_per_orbit,
        earth_radius,
        altitude,
        inclination,
        mu,
        earth_period: 0.0,
    };
    let period = orbital_period(&shell);
    shell.earth_period = f
        .take("earth_period")
        .map(|v| duration("earth_period", &v, period))
        .transpose()?
        .unwrap_or(15.0 * period);
    require("earth_period", shell.earth_period > 0.0, "must be positive")?;

    let slots = f.count("M")?.unwrap_or(DEFAULT_SLOTS);
    require("M", slots >= 1, "need at least one slot")?;

    let antennas = f.count("N")?.unwrap_or(DEFAULT_ANTENNAS);
    require("N", antennas >= 1, "need at least one antenna")?;
    let freq = f.take("frequency").map(|v| frequency("frequency", &v)).transpose()?;
    let lambda = f.take("lambda").map(|v| length("lambda", &v, None)).transpose()?;
    let wavelength = match (freq, lambda) {
        (Some(_), Some(_)) => {
            return Err(Error::parse("lambda", "give either `frequency` or `lambda`, not both"))
        }
        (Some(hz), None) => SPEED_OF_LIGHT / hz,
        (None, Some(l)) => l,
        (None, None) => SPEED_OF_LIGHT / DEFAULT_FREQUENCY,
    };
    require("lambda", wavelength > 0.0, "must be positive")?;
    let defaults = StationConfig::reference(antennas);
    let scale = wavelength / defaults.wavelength;
    let station_length = |f: &mut Fields, key: &str, default: f64| -> Result<f64> {
        f.take(key)
            .map(|v| length(key, &v, Some(wavelength)))
            .transpose()
            .map(|x| x.unwrap_or(default * scale))
    };
    let region_side = station_length(&mut f, "region_side", defaults.region_side)?;
    require("region_side", region_side > 0.0, "must be positive")?;
    let d_min = station_length(&mut f, "d_min", defaults.d_min)?;
    require("d_min", d_min >= 0.0, "must be non-negative")?;
    let aperture_radius = station_length(&mut f, "r_ap", defaults.aperture_radius)?;
    require("r_ap", aperture_radius > 0.0, "must be positive")?;
    let noise_power = f
        .take("sigma2")
        .map(|v| power("sigma2", &v))
        .transpose()?
        .unwrap_or(defaults.noise_power);
    let tx_power = f
        .take("P_s")
        .map(|v| power("P_s", &v))
        .transpose()?
        .unwrap_or(defaults.tx_power);
    let aperture_efficiency = f.number("eta")?.unwrap_or(defaults.aperture_efficiency);
    require(
        "eta",
        aperture_efficiency > 0.0 && aperture_efficiency <= 1.0,
        "must lie in (0, 1]",
    )?;
    let path_loss_exponent = f.number("gamma_pl")?.unwrap_or(defaults.path_loss_exponent);
    require("gamma_pl", path_loss_exponent > 0.0, "must be positive")?;
    let ref_path_gain = f
        .number("rho0")?
        .unwrap_or((wavelength / (4.0 * std::f64::consts::PI)).powi(2));
    require("rho0", ref_path_gain > 0.0, "must be positive")?;
    let gain_pattern = match f.take("gain_pattern") {
        None => GainPattern::Amplitude,
        Some(v) => match v.as_str() {
            Some("amplitude") => GainPattern::Amplitude,
            Some("squared") => GainPattern::Squared,
            _ => {
                return Err(Error::parse(
                    "gain_pattern",
                    format!("expected \"amplitude\" or \"squared\", got {v}"),
                ))
            }
        },
    };
    let array = StationConfig {
        antennas,
        wavelength,
        region_side,
        d_min,
        noise_power,
        tx_power,
        aperture_radius,
        aperture_efficiency,
        path_loss_exponent,
        ref_path_gain,
        gain_pattern,
    };

    let latitude = f
        .take("theta_u")
        .map(|v| angle("theta_u", &v))
        .transpose()?
        .unwrap_or(DEFAULT_LATITUDE_DEG.to_radians());
    require(
        "theta_u",
        latitude.abs() <= std::f64::consts::FRAC_PI_2,
        "latitude must lie in [-90°, 90°]",
    )?;
    let initial_azimuth = f
        .take("phi_u0")
        .map(|v| angle("phi_u0", &v))
        .transpose()?
        .unwrap_or(0.0);
    let ground = GroundStation {
        latitude,
        initial_azimuth,
    };

    let schemes = match f.take("schemes") {
        None => Scheme::ALL.to_vec(),
        Some(v) => parse_schemes("schemes", &v)?,
    };
    let solver = match f.take("solver") {
        None => SolverConfig::default(),
        Some(v) => parse_solver(v)?,
    };
    let sweep = f.take("sweep").map(parse_sweep).transpose()?;
    let pattern = match f.take("pattern") {
        None => PatternRequest::default(),
        Some(v) => parse_pattern(v, slots)?,
    };
    f.finish()?;

    let spec = ScenarioSpec {
        scenario: Scenario {
            shell,
            array,
            ground,
            slots,
        },
        schemes,
        solver,
        sweep,
        pattern,
    };
    spec.scenario.validate()?;
    Ok(spec)
}

fn parse_schemes(key: &str, v: &Value) -> Result<Vec<Scheme>> {
    let mut schemes = Vec::new();
    for item in as_list(key, v)? {
        let name = item
            .as_str()
            .ok_or_else(|| Error::parse(key, format!("expected a scheme name, got {item}")))?;
        let scheme: Scheme = name.parse().map_err(|e: Error| Error::parse(key, e.to_string()))?;
        if !schemes.contains(&scheme) {
            schemes.push(scheme);
        }
    }
    require(key, !schemes.is_empty(), "at least one scheme is required")?;
    Ok(schemes)
}

fn parse_solver(v: Value) -> Result<SolverConfig> {
    let mut f = Fields::new("solver.", v)?;
    let d = SolverConfig::default();
    let cfg = SolverConfig {
        epsilon: f.number("epsilon")?.unwrap_or(d.epsilon),
        max_iterations: f.count("i_max")?.unwrap_or(d.max_iterations),
        sca_max_inner: f.count("sca_max_inner")?.unwrap_or(d.sca_max_inner),
        sca_tolerance: f.number("sca_tolerance")?.unwrap_or(d.sca_tolerance),
        sca_min_curvature_scale: f
            .number("sca_min_curvature_scale")?
            .unwrap_or(d.sca_min_curvature_scale),
    };
    f.finish()?;
    require("solver.epsilon", cfg.epsilon > 0.0, "must be positive")?;
    require("solver.i_max", cfg.max_iterations >= 1, "must be at least 1")?;
    require("solver.sca_max_inner", cfg.sca_max_inner >= 1, "must be at least 1")?;
    require("solver.sca_tolerance", cfg.sca_tolerance >= 0.0, "must be non-negative")?;
    require(
        "solver.sca_min_curvature_scale",
        cfg.sca_min_curvature_scale > 0.0 && cfg.sca_min_curvature_scale <= 1.0,
        "must lie in (0, 1]",
    )?;
    Ok(cfg)
}

fn parse_sweep(v: Value) -> Result<SweepAxes> {
    let mut f = Fields::new("sweep.", v)?;
    let mut axes = SweepAxes::default();
    if let Some(v) = f.take("N") {
        for item in as_list("sweep.N", &v)? {
            let n = as_usize("sweep.N", item)?;
            require("sweep.N", n >= 1, "antenna counts must be at least 1")?;
            axes.antennas.push(n);
        }
        require("sweep.N", !axes.antennas.is_empty(), "axis must not be empty")?;
    }
    if let Some(v) = f.take("P_s") {
        for item in as_list("sweep.P_s", &v)? {
            axes.tx_power.push(power("sweep.P_s", item)?);
        }
        require("sweep.P_s", !axes.tx_power.is_empty(), "axis must not be empty")?;
    }
    if let Some(v) = f.take("theta_u") {
        for item in as_list("sweep.theta_u", &v)? {
            let a = angle("sweep.theta_u", item)?;
            require(
                "sweep.theta_u",
                a.abs() <= std::f64::consts::FRAC_PI_2,
                "latitude must lie in [-90°, 90°]",
            )?;
            axes.latitude.push(a);
        }
        require("sweep.theta_u", !axes.latitude.is_empty(), "axis must not be empty")?;
    }
    if let Some(v) = f.take("KJ") {
        for item in as_list("sweep.KJ", &v)? {
            let pair = as_list("sweep.KJ", item)?;
            require("sweep.KJ", pair.len() == 2, "entries must be [K, J] pairs")?;
            let k = as_usize("sweep.KJ", &pair[0])?;
            let j = as_usize("sweep.KJ", &pair[1])?;
            require("sweep.KJ", k >= 2 && j >= 1, "need K ≥ 2 and J ≥ 1")?;
            axes.constellation.push((k, j));
        }
        require("sweep.KJ", !axes.constellation.is_empty(), "axis must not be empty")?;
    }
    f.finish()?;
    require("sweep", !axes.is_empty(), "at least one axis is required")?;
    Ok(axes)
}

fn parse_grid_axis(key: &str, v: &Value) -> Result<(f64, f64, usize)> {
    let items = as_list(key, v)?;
    require(key, items.len() == 3, "expected [start, stop, count]")?;
    Ok((as_f64(key, &items[0])?, as_f64(key, &items[1])?, as_usize(key, &items[2])?))
}

fn parse_pattern(v: Value, slots: usize) -> Result<PatternRequest> {
    let mut f = Fields::new("pattern.", v)?;
    let mut req = PatternRequest::default();
    if let Some(v) = f.take("elevation_deg") {
        req.grid.elevation_deg = parse_grid_axis("pattern.elevation_deg", &v)?;
    }
    if let Some(v) = f.take("azimuth_deg") {
        req.grid.azimuth_deg = parse_grid_axis("pattern.azimuth_deg", &v)?;
    }
    if let Some(v) = f.take("slots") {
        for item in as_list("pattern.slots", &v)? {
            let m = as_usize("pattern.slots", item)?;
            if m == 0 || m > slots {
                return Err(Error::SlotOutOfRange { index: m, slots });
            }
            req.slots.push(m);
        }
    }
    f.finish()?;
    Ok(req)
}
