//! Closed-form per-slot weight update.
//!
//! With the aux variables fixed, each slot's weights minimize
//! `wᴴUw − 2·Re(wᴴv)`, whose minimizer solves `U·w = v`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::channel::{steering_vector, ArrayLayout, BeamWeights, CVector, SlotGeometry, StationConfig};
use crate::error::{Error, Result};
use crate::fp_transform::AuxState;

pub type CMatrix = DMatrix<Complex64>;

#[derive(Debug, Clone, PartialEq)]
pub struct NormalEquations {
    pub u: CMatrix,
    pub v: CVector,
}

impl NormalEquations {
    /// `wᴴUw − 2·Re(wᴴv)`.
    pub fn objective(&self, w: &CVector) -> f64 {
        let uw = &self.u * w;
        w.dotc(&uw).re - 2.0 * w.dotc(&self.v).re
    }
}

/// Builds `U = |β|²(σ²I + P_s·Σ d̄_l s_l s_lᴴ)` and `v = √(P_s d̄_serv (1+α))·β·s_serv`.
///
/// Returns `None` when `β = 0`: the system has `v = 0` and the slot must be reset.
pub fn assemble_normal_equations(
    slot: &SlotGeometry,
    layout: &ArrayLayout,
    alpha: f64,
    beta: Complex64,
    array: &StationConfig,
) -> Result<Option<NormalEquations>> {
    if !(beta.re.is_finite() && beta.im.is_finite()) {
        return Err(Error::NumericalDegeneracy("non-finite β".into()));
    }
    if beta.norm_sqr() == 0.0 {
        return Ok(None);
    }
    let n = layout.len();
    let mut u = CMatrix::identity(n, n) * Complex64::new(array.noise_power, 0.0);
    for link in slot.links() {
        let s = steering_vector(&link.a_eff, layout);
        let weight = Complex64::new(array.tx_power * link.d_bar, 0.0);
        u.gerc(weight, &s, &s, Complex64::new(1.0, 0.0));
    }
    // Rank-one updates round differently above and below the diagonal.
    let u = (&u + u.adjoint()) * Complex64::new(0.5 * beta.norm_sqr(), 0.0);
    let scale = (array.tx_power * slot.serving.d_bar * (1.0 + alpha)).sqrt();
    let v = steering_vector(&slot.serving.a_eff, layout) * (beta * scale);
    Ok(Some(NormalEquations { u, v }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSolution {
    pub w: CVector,
    /// Diagonal loading applied when the plain factorization failed.
    pub loading: Option<f64>,
}

/// Solves `U·w = v` by Cholesky factorization.
pub fn solve_weights(ne: &NormalEquations) -> Result<WeightSolution> {
    let n = ne.v.len();
    if ne.u.nrows() != n || ne.u.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: ne.u.nrows(),
        });
    }
    if let Some(chol) = ne.u.clone().cholesky() {
        return Ok(WeightSolution {
            w: chol.solve(&ne.v),
            loading: None,
        });
    }
    let trace: f64 = (0..n).map(|i| ne.u[(i, i)].re).sum();
    let eps = 1e-12 * trace / n as f64;
    let loaded = &ne.u + CMatrix::identity(n, n) * Complex64::new(eps, 0.0);
    let chol = loaded.cholesky().ok_or_else(|| {
        Error::NumericalDegeneracy("normal-equation matrix is not positive definite".into())
    })?;
    Ok(WeightSolution {
        w: chol.solve(&ne.v),
        loading: Some(eps),
    })
}

/// Unit-norm matched filter toward the serving satellite.
pub fn matched_filter(slot: &SlotGeometry, layout: &ArrayLayout) -> CVector {
    let s = steering_vector(&slot.serving.a_eff, layout);
    let norm = s.norm();
    s / Complex64::new(norm, 0.0)
}

/// Updates every servable slot; returns the new weights and any warnings raised.
pub fn update_weights(
    slots: &[Option<SlotGeometry>],
    layout: &ArrayLayout,
    aux: &AuxState,
    array: &StationConfig,
) -> Result<(BeamWeights, Vec<String>)> {
    if aux.len() != slots.len() {
        return Err(Error::DimensionMismatch {
            expected: slots.len(),
            got: aux.len(),
        });
    }
    let n = layout.len();
    let results = slots
        .par_iter()
        .enumerate()
        .map(|(m, slot)| -> Result<(CVector, Option<String>)> {
            let Some(slot) = slot else {
                return Ok((CVector::zeros(n), None));
            };
            match assemble_normal_equations(slot, layout, aux.alpha[m], aux.beta[m], array)? {
                None => Ok((
                    matched_filter(slot, layout),
                    Some(format!("slot {}: β = 0, weights reset to matched filter", m + 1)),
                )),
                Some(ne) => {
                    let sol = solve_weights(&ne)?;
                    let warning = sol.loading.map(|eps| {
                        format!("slot {}: normal equations regularized with {eps:e}·I", m + 1)
                    });
                    Ok((sol.w, warning))
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut warnings = Vec::new();
    let per_slot = results
        .into_iter()
        .map(|(w, warn)| {
            warnings.extend(warn);
            w
        })
        .collect();
    Ok((BeamWeights { per_slot }, warnings))
}
