//! Lagrangian-dual and quadratic transforms of the sum-rate objective.
//!
//! For fixed layout and weights, slot `m` is summarized by the signal term
//! `A_m = √(P_s·d̄_serv)·s_servᴴw` and the total received power
//! `B_m = P_s·Σ_all d̄_l|s_lᴴw|² + σ²‖w‖²`, so that `γ_m = |A_m|²/(B_m − |A_m|²)`.
//! The transformed objective
//!
//! ```text
//! f = Σ_m log2(1 + α_m) − α_m + 2√(1 + α_m)·Re(β_m*·A_m) − |β_m|²·B_m
//! ```
//!
//! is tight (equals `Σ log2(1 + γ_m)`) at `α_m = γ_m`, `β_m = √(1 + α_m)·A_m/B_m`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::channel::{
    check_weights, inner, link_power, sinr, steering_vector, ArrayLayout, BeamWeights, CVector,
    SlotGeometry, StationConfig,
};
use crate::error::{Error, Result};

/// Auxiliary variables, one pair per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxState {
    pub alpha: Vec<f64>,
    pub beta: Vec<Complex64>,
}

impl AuxState {
    pub fn zeros(slots: usize) -> Self {
        Self {
            alpha: vec![0.0; slots],
            beta: vec![Complex64::new(0.0, 0.0); slots],
        }
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalTerms {
    pub a: Complex64,
    pub b: f64,
}

pub fn signal_terms(
    slot: &SlotGeometry,
    layout: &ArrayLayout,
    w: &CVector,
    array: &StationConfig,
) -> Result<SignalTerms> {
    check_weights(w, layout.len())?;
    let s = steering_vector(&slot.serving.a_eff, layout);
    let a = (array.tx_power * slot.serving.d_bar).sqrt() * inner(&s, w);
    let received: f64 = slot.links().map(|l| link_power(l, layout, w)).sum();
    let b = array.tx_power * received + array.noise_power * w.norm_squared();
    Ok(SignalTerms { a, b })
}

/// Closed-form maximizers `(α*, β*)` for one slot.
pub fn update_aux(gamma: f64, terms: SignalTerms) -> Result<(f64, Complex64)> {
    if !(terms.b > 0.0) || !terms.b.is_finite() {
        return Err(Error::NumericalDegeneracy(format!(
            "received power B = {:e} must be positive",
            terms.b
        )));
    }
    let alpha = gamma.max(0.0);
    let beta = terms.a * ((1.0 + alpha).sqrt() / terms.b);
    Ok((alpha, beta))
}

/// Value of one slot's transformed objective.
pub fn slot_objective(alpha: f64, beta: Complex64, terms: SignalTerms) -> f64 {
    (1.0 + alpha).log2() - alpha + 2.0 * (1.0 + alpha).sqrt() * (beta.conj() * terms.a).re
        - beta.norm_sqr() * terms.b
}

fn check_lengths(slots: usize, weights: &BeamWeights, aux: Option<&AuxState>) -> Result<()> {
    if weights.len() != slots {
        return Err(Error::DimensionMismatch {
            expected: slots,
            got: weights.len(),
        });
    }
    if let Some(aux) = aux {
        if aux.len() != slots || aux.beta.len() != slots {
            return Err(Error::DimensionMismatch {
                expected: slots,
                got: aux.len(),
            });
        }
    }
    Ok(())
}

/// Transformed objective summed over servable slots.
pub fn fp_objective(
    layout: &ArrayLayout,
    weights: &BeamWeights,
    aux: &AuxState,
    slots: &[Option<SlotGeometry>],
    array: &StationConfig,
) -> Result<f64> {
    check_lengths(slots.len(), weights, Some(aux))?;
    let terms = slots
        .par_iter()
        .enumerate()
        .map(|(m, slot)| match slot {
            Some(slot) => {
                let t = signal_terms(slot, layout, &weights.per_slot[m], array)?;
                Ok(slot_objective(aux.alpha[m], aux.beta[m], t))
            }
            None => Ok(0.0),
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(terms.iter().sum())
}

/// Aux refresh for every slot at the current `(c, w)`: α from the current SINR, then β.
pub fn refresh_aux(
    slots: &[Option<SlotGeometry>],
    layout: &ArrayLayout,
    weights: &BeamWeights,
    array: &StationConfig,
) -> Result<AuxState> {
    check_lengths(slots.len(), weights, None)?;
    let pairs = slots
        .par_iter()
        .zip(weights.per_slot.par_iter())
        .map(|(slot, w)| match slot {
            Some(slot) => {
                let gamma = sinr(slot, layout, w, array)?;
                update_aux(gamma, signal_terms(slot, layout, w, array)?)
            }
            None => Ok((0.0, Complex64::new(0.0, 0.0))),
        })
        .collect::<Result<Vec<_>>>()?;
    let (alpha, beta) = pairs.into_iter().unzip();
    Ok(AuxState { alpha, beta })
}
