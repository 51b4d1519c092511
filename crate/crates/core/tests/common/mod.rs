#![allow(dead_code)]

use std::f64::consts::TAU;

use leoma::channel::{ArrayLayout, BeamWeights, CVector, SlotGeometry, SlotLink, StationConfig};
use leoma::fp_transform::{refresh_aux, AuxState};
use leoma::orbit::SatelliteId;
use leoma::scenario::ScenarioSpec;
use nalgebra::Vector2;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// K=24, J=12, N=8, M=50 at the default latitude.
pub fn desk_spec() -> ScenarioSpec {
    let mut spec = ScenarioSpec::reference(24, 12);
    spec.scenario.array = StationConfig::reference(8);
    spec.scenario.slots = 50;
    spec
}

pub fn random_cvec(rng: &mut ChaCha8Rng, n: usize) -> CVector {
    CVector::from_fn(n, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

/// A synthetic link whose wave vector points above the horizon.
pub fn random_link(rng: &mut ChaCha8Rng, array: &StationConfig, k: usize) -> SlotLink {
    let r = rng.gen_range(0.0..0.95) * array.wavenumber();
    let phi = rng.gen_range(0.0..TAU);
    SlotLink {
        sat: SatelliteId::new(1, k),
        a_eff: Vector2::new(r * phi.cos(), r * phi.sin()),
        d_bar: rng.gen_range(0.1..3.0) * 1e-15,
        phase: rng.gen_range(0.0..TAU),
    }
}

pub fn random_slot(rng: &mut ChaCha8Rng, array: &StationConfig, links: usize) -> SlotGeometry {
    SlotGeometry {
        t_m: 0.0,
        serving: random_link(rng, array, 1),
        interferers: (2..=links).map(|k| random_link(rng, array, k)).collect(),
    }
}

/// Uniform layout in the region, rejection-sampled against `d_min`.
pub fn random_feasible_layout(rng: &mut ChaCha8Rng, array: &StationConfig) -> ArrayLayout {
    let side = array.region_side;
    let mut positions: Vec<Vector2<f64>> = Vec::with_capacity(array.antennas);
    while positions.len() < array.antennas {
        let p = Vector2::new(rng.gen_range(0.0..=side), rng.gen_range(0.0..=side));
        if positions.iter().all(|q| (p - q).norm() >= array.d_min) {
            positions.push(p);
        }
    }
    ArrayLayout::new(positions)
}

pub struct Instance {
    pub array: StationConfig,
    pub slots: Vec<Option<SlotGeometry>>,
    pub weights: BeamWeights,
    pub aux: AuxState,
    pub layout: ArrayLayout,
}

/// Random servable slots, random weights, aux refreshed at a random layout.
pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, m: usize, links: usize) -> Instance {
    let array = StationConfig::reference(n);
    let slots: Vec<_> = (0..m).map(|_| Some(random_slot(rng, &array, links))).collect();
    let weights = BeamWeights {
        per_slot: (0..m).map(|_| random_cvec(rng, n)).collect(),
    };
    let layout = random_feasible_layout(rng, &array);
    let aux = refresh_aux(&slots, &layout, &weights, &array).unwrap();
    Instance {
        array,
        slots,
        weights,
        aux,
        layout,
    }
}
