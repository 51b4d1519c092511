//! Batch commands behind the CLI: solve, export CSVs, sweep, dump ephemeris.
//!
//! All CSV files are written in a fixed row order so reruns are byte-identical.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde_json::json;

use crate::channel::{beam_pattern_with_markers, SlotGeometry};
use crate::error::{Error, Result};
use crate::orbit::satellite_ecef;
use crate::scenario::ScenarioSpec;
use crate::solver::{optimize, to_db, Scenario, Scheme, SolveResult};

/// Solved schemes for one scenario plus run metadata.
#[derive(Debug, Clone)]
pub struct ResultBundle {
    pub spec_hash: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub midpoints: Vec<f64>,
    pub slots: Vec<Option<SlotGeometry>>,
    pub results: Vec<SolveResult>,
    pub warnings: Vec<String>,
}

impl ResultBundle {
    pub fn result(&self, scheme: Scheme) -> Option<&SolveResult> {
        self.results.iter().find(|r| r.scheme == scheme)
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Runs `f` on a pool of `workers` threads (all cores when `None`).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(Error::InvalidConfig("worker count must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Solves every scheme of the scenario, sorted in `Scheme` order.
pub fn solve_spec(spec: &ScenarioSpec) -> Result<ResultBundle> {
    let started_unix = unix_now();
    let grid = spec.scenario.time_grid()?;
    let slots = spec.scenario.build_slots()?;
    let mut schemes = spec.schemes.clone();
    schemes.sort();
    let results = schemes
        .par_iter()
        .map(|&s| optimize(&slots, &spec.scenario.array, s, &spec.solver))
        .collect::<Result<Vec<_>>>()?;
    let mut warnings = Vec::new();
    if !grid.is_aligned(&spec.scenario.shell) {
        warnings.push(
            "observation window is not a whole number of satellite spacing periods".to_string(),
        );
    }
    for r in &results {
        warnings.extend(r.warnings.iter().map(|w| format!("{}: {w}", r.scheme)));
    }
    Ok(ResultBundle {
        spec_hash: spec.hash(),
        started_unix,
        finished_unix: unix_now(),
        midpoints: grid.midpoints,
        slots,
        results,
        warnings,
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

/// Degrees rounded to 1e-9 so user-entered angles print as entered.
fn fmt_deg(rad: f64) -> String {
    fmt((rad.to_degrees() * 1e9).round() / 1e9)
}

/// Writes rates.csv, trace.csv, layout.csv, gains.csv and bundle.json into `out`.
pub fn write_run(bundle: &ResultBundle, wavelength: f64, out: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out)?;
    let mut written = Vec::new();

    let path = out.join("rates.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["slot_index", "t_m", "scheme", "rate_bpshz"])?;
    for (m, t) in bundle.midpoints.iter().enumerate() {
        for r in &bundle.results {
            w.write_record([
                (m + 1).to_string(),
                fmt(*t),
                r.scheme.to_string(),
                fmt(r.per_slot_rates[m]),
            ])?;
        }
    }
    w.flush()?;
    written.push(path);

    let path = out.join("trace.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["iteration", "scheme", "avg_rate"])?;
    let longest = bundle.results.iter().map(|r| r.trace.len()).max().unwrap_or(0);
    for i in 0..longest {
        for r in &bundle.results {
            if let Some(rate) = r.trace.get(i) {
                w.write_record([i.to_string(), r.scheme.to_string(), fmt(*rate)])?;
            }
        }
    }
    w.flush()?;
    written.push(path);

    let path = out.join("layout.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["scheme", "antenna", "x_over_lambda", "y_over_lambda"])?;
    for r in &bundle.results {
        for (n, p) in r.layout.positions.iter().enumerate() {
            w.write_record([
                r.scheme.to_string(),
                (n + 1).to_string(),
                fmt(p.x / wavelength),
                fmt(p.y / wavelength),
            ])?;
        }
    }
    w.flush()?;
    written.push(path);

    let path = out.join("gains.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["scheme", "desired_db", "interference_db"])?;
    for r in &bundle.results {
        w.write_record([
            r.scheme.to_string(),
            fmt(to_db(r.desired_gain)),
            fmt(to_db(r.interference_gain)),
        ])?;
    }
    w.flush()?;
    written.push(path);

    let path = out.join("bundle.json");
    let meta = json!({
        "spec_hash": bundle.spec_hash,
        "started_unix": bundle.started_unix,
        "finished_unix": bundle.finished_unix,
        "schemes": bundle.results.iter().map(|r| json!({
            "scheme": r.scheme.as_str(),
            "avg_rate": r.avg_rate,
            "iterations": r.iterations,
            "converged": r.converged,
            "unservable_slots": r.unservable_slots,
        })).collect::<Vec<_>>(),
        "warnings": bundle.warnings,
    });
    std::fs::write(&path, serde_json::to_string_pretty(&meta)?)?;
    written.push(path);
    Ok(written)
}

pub fn cmd_run(spec: &ScenarioSpec, out: &Path) -> Result<ResultBundle> {
    let bundle = solve_spec(spec)?;
    write_run(&bundle, spec.scenario.array.wavelength, out)?;
    Ok(bundle)
}

/// Beam-pattern CSVs `beampattern_slot<m>_<scheme>.csv` for each requested slot.
pub fn cmd_beampattern(spec: &ScenarioSpec, slots: &[usize], out: &Path) -> Result<Vec<PathBuf>> {
    let m_total = spec.scenario.slots;
    if slots.is_empty() {
        return Err(Error::InvalidConfig("no slots requested for the beam pattern".into()));
    }
    if let Some(&bad) = slots.iter().find(|&&m| m == 0 || m > m_total) {
        return Err(Error::SlotOutOfRange {
            index: bad,
            slots: m_total,
        });
    }
    let bundle = solve_spec(spec)?;
    std::fs::create_dir_all(out)?;
    let mut written = Vec::new();
    for &m in slots {
        let Some(slot) = &bundle.slots[m - 1] else {
            log::warn!("slot {m} has no visible satellite; no beam pattern written");
            continue;
        };
        for r in &bundle.results {
            let samples = beam_pattern_with_markers(
                slot,
                &r.layout,
                &r.weights.per_slot[m - 1],
                &spec.pattern.grid,
                &spec.scenario.array,
            )?;
            let path = out.join(format!("beampattern_slot{m}_{}.csv", r.scheme));
            let mut w = csv_writer(&path)?;
            w.write_record(["elev_deg", "azim_deg", "gain_linear", "gain_db", "marker"])?;
            for s in samples {
                w.write_record([
                    fmt_deg(s.direction.elevation),
                    fmt_deg(s.direction.azimuth),
                    fmt(s.gain),
                    fmt(to_db(s.gain)),
                    s.marker,
                ])?;
            }
            w.flush()?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Cartesian product of the sweep axes, in axis-major order (N, P_s, θ_u, (K, J)).
pub fn sweep_points(spec: &ScenarioSpec) -> Result<Vec<Scenario>> {
    let axes = spec
        .sweep
        .as_ref()
        .filter(|a| !a.is_empty())
        .ok_or_else(|| Error::InvalidConfig("the scenario has no sweep axes".into()))?;
    let base = &spec.scenario;
    let antennas: Vec<Option<usize>> = opt_axis(&axes.antennas);
    let powers = opt_axis(&axes.tx_power);
    let latitudes = opt_axis(&axes.latitude);
    let shells = opt_axis(&axes.constellation);
    let mut points = Vec::new();
    for n in &antennas {
        for p in &powers {
            for lat in &latitudes {
                for kj in &shells {
                    let mut s = base.clone();
                    if let Some(n) = n {
                        s.array.antennas = *n;
                    }
                    if let Some(p) = p {
                        s.array.tx_power = *p;
                    }
                    if let Some(lat) = lat {
                        s.ground.latitude = *lat;
                    }
                    if let Some((k, j)) = kj {
                        s.shell.sats_per_orbit = *k;
                        s.shell.orbits = *j;
                    }
                    points.push(s);
                }
            }
        }
    }
    Ok(points)
}

fn opt_axis<T: Copy>(axis: &[T]) -> Vec<Option<T>> {
    if axis.is_empty() {
        vec![None]
    } else {
        axis.iter().copied().map(Some).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub point: usize,
    pub antennas: usize,
    pub tx_power: f64,
    pub latitude: f64,
    pub sats_per_orbit: usize,
    pub orbits: usize,
    pub scheme: Scheme,
    pub avg_rate: f64,
}

/// Solves every sweep point for every scheme and writes sweep.csv.
pub fn cmd_sweep(spec: &ScenarioSpec, out: &Path) -> Result<Vec<SweepRow>> {
    let points = sweep_points(spec)?;
    let mut schemes = spec.schemes.clone();
    schemes.sort();
    let jobs: Vec<(usize, Scheme)> = (0..points.len())
        .flat_map(|p| schemes.iter().map(move |&s| (p, s)))
        .collect();
    let slot_sets = points
        .par_iter()
        .map(|s| s.build_slots())
        .collect::<Result<Vec<_>>>()?;
    let rows = jobs
        .par_iter()
        .map(|&(p, scheme)| {
            let s = &points[p];
            let res = optimize(&slot_sets[p], &s.array, scheme, &spec.solver)?;
            Ok(SweepRow {
                point: p + 1,
                antennas: s.array.antennas,
                tx_power: s.array.tx_power,
                latitude: s.ground.latitude,
                sats_per_orbit: s.shell.sats_per_orbit,
                orbits: s.shell.orbits,
                scheme,
                avg_rate: res.avg_rate,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    std::fs::create_dir_all(out)?;
    let mut w = csv_writer(&out.join("sweep.csv"))?;
    w.write_record([
        "point",
        "antennas",
        "tx_power_dbw",
        "latitude_deg",
        "sats_per_orbit",
        "orbits",
        "scheme",
        "avg_rate",
    ])?;
    for r in &rows {
        w.write_record([
            r.point.to_string(),
            r.antennas.to_string(),
            fmt(to_db(r.tx_power)),
            fmt_deg(r.latitude),
            r.sats_per_orbit.to_string(),
            r.orbits.to_string(),
            r.scheme.to_string(),
            fmt(r.avg_rate),
        ])?;
    }
    w.flush()?;
    Ok(rows)
}

/// Dumps every visible ascending satellite per slot to ephemeris.csv.
pub fn cmd_ephemeris(spec: &ScenarioSpec, out: &Path) -> Result<PathBuf> {
    let scenario = &spec.scenario;
    let grid = scenario.time_grid()?;
    let slots = scenario.build_slots()?;
    std::fs::create_dir_all(out)?;
    let path = out.join("ephemeris.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["slot_index", "t_m", "satellite", "role", "x_m", "y_m", "z_m", "d_bar"])?;
    for (m, (t, slot)) in grid.midpoints.iter().zip(&slots).enumerate() {
        let Some(slot) = slot else { continue };
        let mut links: Vec<_> = slot.links().enumerate().collect();
        links.sort_by_key(|(_, l)| l.sat);
        for (i, link) in links {
            let pos = satellite_ecef(&scenario.shell, link.sat, *t)?;
            w.write_record([
                (m + 1).to_string(),
                fmt(*t),
                link.sat.to_string(),
                if i == 0 { "serving" } else { "interferer" }.to_string(),
                fmt(pos.x),
                fmt(pos.y),
                fmt(pos.z),
                fmt(link.d_bar),
            ])?;
        }
    }
    w.flush()?;
    Ok(path)
}
