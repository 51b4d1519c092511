//! Antenna-position update by successive convex approximation.
//!
//! With weights and aux variables fixed, the layout minimizes the reduced
//! objective
//!
//! ```text
//! f̃(c) = Σ_m |β_m|²·B_m(c) − 2√(1 + α_m)·Re(β_m*·A_m(c))
//! ```
//!
//! Each interference quadratic `|s_lᴴw|²` is majorized by a term linear in
//! `s_l(c)` (rank-one bound with `‖w‖²I`), and every `Re(bᴴs(c))` is then
//! bounded by its first-order expansion plus `½‖a‖²‖b‖·‖c − c0‖²`. The
//! resulting isotropic quadratic is minimized over the box and the linearized
//! spacing constraints, which is a Euclidean projection.
//!
//! That curvature bound is loose. `sca_step` first tries smaller curvatures
//! and keeps a trial only if `f̃` at its minimizer stays under the trial
//! quadratic. Descent is preserved and the true majorizer is the fallback.

pub mod qp;

use nalgebra::{DVector, Vector2};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::channel::{
    inner, steering_vector, ArrayLayout, BeamWeights, CVector, SlotGeometry, StationConfig,
};
use crate::error::{Error, Result};
use crate::fp_transform::{signal_terms, AuxState};

use self::qp::{kkt_residual, project, restore_feasibility, LinearConstraint, ProjectionOptions};

/// Majorizer vectors of one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotSurrogate {
    /// `z_l`, one per link in `SlotGeometry::links()` order (serving first).
    pub link_vectors: Vec<CVector>,
    /// `z` for the serving signal term.
    pub serving_vector: CVector,
}

/// `z_l = 2|β|²d̄_l P_s (W − ‖w‖²I) s_l(c0)` and `z = 2β*√((1+α)d̄_serv P_s)·w`.
pub fn surrogate_vectors(
    slot: &SlotGeometry,
    w: &CVector,
    alpha: f64,
    beta: Complex64,
    layout0: &ArrayLayout,
    array: &StationConfig,
) -> SlotSurrogate {
    let w_norm2 = w.norm_squared();
    let link_vectors = slot
        .links()
        .map(|link| {
            let s = steering_vector(&link.a_eff, layout0);
            let proj = inner(w, &s);
            let scale = 2.0 * beta.norm_sqr() * link.d_bar * array.tx_power;
            (w * proj - s * Complex64::new(w_norm2, 0.0)) * Complex64::new(scale, 0.0)
        })
        .collect();
    let serving_scale = 2.0 * ((1.0 + alpha) * slot.serving.d_bar * array.tx_power).sqrt();
    let serving_vector = w * (beta.conj() * serving_scale);
    SlotSurrogate {
        link_vectors,
        serving_vector,
    }
}

/// `Re(bᴴs(c))`.
pub fn linear_term(b: &CVector, a_eff: &Vector2<f64>, layout: &ArrayLayout) -> f64 {
    inner(b, &steering_vector(a_eff, layout)).re
}

/// Gradient of `Re(bᴴs(c))`, laid out as `[x_1, y_1, x_2, y_2, …]`.
pub fn linear_term_gradient(b: &CVector, a_eff: &Vector2<f64>, layout: &ArrayLayout) -> DVector<f64> {
    let mut grad = DVector::zeros(2 * layout.len());
    for (n, (c, bn)) in layout.positions.iter().zip(b.iter()).enumerate() {
        let factor = -bn.norm() * (a_eff.dot(c) - bn.arg()).sin();
        grad[2 * n] = factor * a_eff.x;
        grad[2 * n + 1] = factor * a_eff.y;
    }
    grad
}

fn check_state(
    slots: &[Option<SlotGeometry>],
    weights: &BeamWeights,
    aux: &AuxState,
) -> Result<()> {
    for got in [weights.len(), aux.len(), aux.beta.len()] {
        if got != slots.len() {
            return Err(Error::DimensionMismatch {
                expected: slots.len(),
                got,
            });
        }
    }
    Ok(())
}

/// Slots that take part in the placement update: servable with `β ≠ 0`.
fn active_slot<'a>(
    slots: &'a [Option<SlotGeometry>],
    aux: &AuxState,
    m: usize,
) -> Option<&'a SlotGeometry> {
    slots[m].as_ref().filter(|_| aux.beta[m].norm_sqr() > 0.0)
}

/// Reduced objective `f̃(c)` at fixed weights and aux variables.
pub fn reduced_objective(
    slots: &[Option<SlotGeometry>],
    weights: &BeamWeights,
    aux: &AuxState,
    layout: &ArrayLayout,
    array: &StationConfig,
) -> Result<f64> {
    check_state(slots, weights, aux)?;
    let terms = (0..slots.len())
        .into_par_iter()
        .map(|m| match active_slot(slots, aux, m) {
            Some(slot) => {
                let t = signal_terms(slot, layout, &weights.per_slot[m], array)?;
                let (alpha, beta) = (aux.alpha[m], aux.beta[m]);
                Ok(beta.norm_sqr() * t.b - 2.0 * (1.0 + alpha).sqrt() * (beta.conj() * t.a).re)
            }
            None => Ok(0.0),
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(terms.iter().sum())
}

/// Isotropic quadratic `f̄(c) = f̃(c0) + Gᵀ(c − c0) + (κ/2)‖c − c0‖²`, tight at `c0 = center`.
///
/// Kept in centered form: expanding it costs about `κ‖c0‖²·ε` in absolute accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    pub kappa: f64,
    pub center: DVector<f64>,
    /// `G`, the gradient of `f̃` at `center`.
    pub gradient: DVector<f64>,
    pub value_at_center: f64,
}

impl SurrogateModel {
    pub fn value(&self, c: &DVector<f64>) -> f64 {
        let d = c - &self.center;
        self.value_at_center + self.gradient.dot(&d) + 0.5 * self.kappa * d.norm_squared()
    }

    /// Linear coefficient of the expanded form `(κ/2)‖c‖² + qᵀc + constant`: `q = G − κc0`.
    pub fn q(&self) -> DVector<f64> {
        &self.gradient - &self.center * self.kappa
    }

    /// `f̃(c0) − Gᵀc0 + (κ/2)‖c0‖²`.
    pub fn constant(&self) -> f64 {
        self.value_at_center - self.gradient.dot(&self.center)
            + 0.5 * self.kappa * self.center.norm_squared()
    }

    /// `−q/κ = c0 − G/κ`.
    pub fn unconstrained_minimizer(&self) -> DVector<f64> {
        &self.center - &self.gradient / self.kappa
    }

    /// Same tangent plane at `center`, different curvature.
    pub fn with_curvature(&self, kappa: f64) -> SurrogateModel {
        SurrogateModel {
            kappa,
            ..self.clone()
        }
    }
}

/// Builds the majorizer of `f̃` at `layout0`; `None` when every slot's
/// curvature vanishes (no placement information).
pub fn build_surrogate(
    slots: &[Option<SlotGeometry>],
    weights: &BeamWeights,
    aux: &AuxState,
    layout0: &ArrayLayout,
    array: &StationConfig,
) -> Result<Option<SurrogateModel>> {
    check_state(slots, weights, aux)?;
    let dim = 2 * layout0.len();
    let parts: Vec<(f64, DVector<f64>)> = (0..slots.len())
        .into_par_iter()
        .filter_map(|m| {
            let slot = active_slot(slots, aux, m)?;
            let w = &weights.per_slot[m];
            let z = surrogate_vectors(slot, w, aux.alpha[m], aux.beta[m], layout0, array);
            let mut kappa = 0.0;
            let mut grad = DVector::zeros(dim);
            for (link, zl) in slot.links().zip(&z.link_vectors) {
                kappa += link.a_eff.norm_squared() * zl.norm();
                grad += linear_term_gradient(zl, &link.a_eff, layout0);
            }
            let a_s = &slot.serving.a_eff;
            kappa += a_s.norm_squared() * z.serving_vector.norm();
            grad -= linear_term_gradient(&z.serving_vector, a_s, layout0);
            Some((kappa, grad))
        })
        .collect();

    let mut kappa = 0.0;
    let mut grad = DVector::zeros(dim);
    for (k, g) in &parts {
        kappa += k;
        grad += g;
    }
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Ok(None);
    }
    Ok(Some(SurrogateModel {
        kappa,
        center: layout0.to_flat(),
        gradient: grad,
        value_at_center: reduced_objective(slots, weights, aux, layout0, array)?,
    }))
}

/// Linearized spacing constraint `gᵀ(c_first − c_second) ≥ d_min`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairHalfspace {
    pub first: usize,
    pub second: usize,
    /// Unit vector from `c_second⁰` to `c_first⁰`.
    pub direction: Vector2<f64>,
}

impl PairHalfspace {
    pub fn slack(&self, layout: &ArrayLayout, d_min: f64) -> f64 {
        let diff = layout.positions[self.first] - layout.positions[self.second];
        self.direction.dot(&diff) - d_min
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HalfspaceSet {
    pub d_min: f64,
    pub pairs: Vec<PairHalfspace>,
}

/// Separations below this fraction of λ are treated as coincident.
const COINCIDENT_FRACTION: f64 = 1e-9;
/// Deterministic nudge applied to coincident pairs, as a fraction of λ.
const COINCIDENT_NUDGE: f64 = 1e-3;

/// One half-space per unordered antenna pair, linearized at `layout0`.
///
/// Coincident pairs get a direction from nudging the second antenna by
/// `1e-3·λ` along a fixed per-pair angle; a warning is returned.
pub fn distance_halfspaces(
    layout0: &ArrayLayout,
    d_min: f64,
    wavelength: f64,
) -> (HalfspaceSet, Vec<String>) {
    let n = layout0.len();
    let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    let mut warnings = Vec::new();
    let golden_angle = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    for first in 0..n {
        for second in first + 1..n {
            let mut diff = layout0.positions[first] - layout0.positions[second];
            if diff.norm() <= COINCIDENT_FRACTION * wavelength {
                let angle = golden_angle * pairs.len() as f64;
                let nudge = Vector2::new(angle.cos(), angle.sin()) * (COINCIDENT_NUDGE * wavelength);
                diff -= nudge;
                warnings.push(format!(
                    "antennas {} and {} coincide; second nudged by {:.0e}·λ",
                    first + 1,
                    second + 1,
                    COINCIDENT_NUDGE
                ));
            }
            pairs.push(PairHalfspace {
                first,
                second,
                direction: diff / diff.norm(),
            });
        }
    }
    (HalfspaceSet { d_min, pairs }, warnings)
}

fn linear_constraints(dim: usize, region_side: f64, halfspaces: &HalfspaceSet) -> Vec<LinearConstraint> {
    let mut cons = Vec::with_capacity(2 * dim + halfspaces.pairs.len());
    for i in 0..dim {
        let mut lower = DVector::zeros(dim);
        lower[i] = 1.0;
        cons.push(LinearConstraint {
            normal: lower,
            bound: 0.0,
        });
        let mut upper = DVector::zeros(dim);
        upper[i] = -1.0;
        cons.push(LinearConstraint {
            normal: upper,
            bound: -region_side,
        });
    }
    for pair in &halfspaces.pairs {
        let mut normal = DVector::zeros(dim);
        normal[2 * pair.first] = pair.direction.x;
        normal[2 * pair.first + 1] = pair.direction.y;
        normal[2 * pair.second] = -pair.direction.x;
        normal[2 * pair.second + 1] = -pair.direction.y;
        cons.push(LinearConstraint {
            normal,
            bound: halfspaces.d_min,
        });
    }
    cons
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub layout: ArrayLayout,
    /// KKT residual of the projection, divided by the region side.
    pub kkt_residual: f64,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

/// Minimizes the surrogate over `[0, side]^{2N}` and the linearized spacing constraints.
pub fn solve_qp(
    model: &SurrogateModel,
    region_side: f64,
    halfspaces: &HalfspaceSet,
) -> Result<QpSolution> {
    if !(model.kappa > 0.0) {
        return Err(Error::NumericalDegeneracy("surrogate curvature must be positive".into()));
    }
    let dim = model.center.len();
    let cons = linear_constraints(dim, region_side, halfspaces);
    let mut warnings = Vec::new();
    let feas_tol = 1e-12 * region_side;

    let mut start = model.center.clone();
    if cons.iter().any(|c| c.slack(&start) < -feas_tol) {
        start = restore_feasibility(&start, &cons, feas_tol, 10_000);
        warnings.push("expansion point violates the linearized constraints; restored by alternating projections".into());
    }

    let target = model.unconstrained_minimizer();
    let opts = ProjectionOptions {
        scale: region_side,
        max_iterations: 50 * (cons.len() + dim),
    };
    let proj = project(&target, &start, &cons, opts);
    if !proj.converged {
        warnings.push(format!(
            "placement QP hit its iteration cap ({}); using the last feasible iterate",
            proj.iterations
        ));
    }
    let residual = kkt_residual(&target, &cons, &proj) / region_side;
    let mut x = proj.x;
    if !proj.converged && model.value(&x) > model.value(&start) {
        x = start;
    }
    // Round-off can leave coordinates a few ulps outside the box.
    for v in x.iter_mut() {
        *v = v.clamp(0.0, region_side);
    }
    Ok(QpSolution {
        layout: ArrayLayout::from_flat(x.as_slice()),
        kkt_residual: residual,
        iterations: proj.iterations,
        warnings,
    })
}

/// Outcome of one majorize–minimize step on the layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaStep {
    pub layout: ArrayLayout,
    pub reduced_before: f64,
    pub reduced_after: f64,
    /// Euclidean norm of the layout change, meters.
    pub movement: f64,
    /// Accepted curvature as a fraction of the majorizing one; 1 when no trial passed.
    pub curvature_scale: f64,
    pub warnings: Vec<String>,
}

/// Growth factor between curvature trials.
const CURVATURE_GROWTH: f64 = 4.0;

/// Surrogate → linearized constraints → QP. Never increases `f̃`.
///
/// Curvatures `κ·s` with `s = scale, 4·scale, …, 1` are tried in turn; a
/// trial is accepted once `f̃` at its minimizer lies below the trial
/// quadratic, which implies descent. `s = 1` is the true majorizer and always
/// passes, so `scale = 1` gives the plain majorize–minimize step.
pub fn sca_step(
    slots: &[Option<SlotGeometry>],
    weights: &BeamWeights,
    aux: &AuxState,
    layout: &ArrayLayout,
    array: &StationConfig,
    scale: f64,
) -> Result<ScaStep> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(Error::InvalidConfig(format!("curvature scale {scale} must lie in (0, 1]")));
    }
    let before = reduced_objective(slots, weights, aux, layout, array)?;
    let unchanged = |warnings: Vec<String>| ScaStep {
        layout: layout.clone(),
        reduced_before: before,
        reduced_after: before,
        movement: 0.0,
        curvature_scale: 1.0,
        warnings,
    };
    let Some(model) = build_surrogate(slots, weights, aux, layout, array)? else {
        return Ok(unchanged(vec!["surrogate curvature is zero; placement step skipped".into()]));
    };
    let (halfspaces, mut warnings) = distance_halfspaces(layout, array.d_min, array.wavelength);
    let slack = 1e-12 * before.abs().max(f64::MIN_POSITIVE);
    let mut s = scale;
    loop {
        let majorizer = s >= 1.0;
        let trial = if majorizer { model.clone() } else { model.with_curvature(model.kappa * s) };
        let sol = solve_qp(&trial, array.region_side, &halfspaces)?;
        let after = reduced_objective(slots, weights, aux, &sol.layout, array)?;
        let bound = trial.value(&sol.layout.to_flat());
        if majorizer || after <= bound + slack {
            warnings.extend(sol.warnings);
            // Guard against round-off on the majorizer.
            if after > before {
                return Ok(unchanged(warnings));
            }
            let movement = (sol.layout.to_flat() - layout.to_flat()).norm();
            return Ok(ScaStep {
                layout: sol.layout,
                reduced_before: before,
                reduced_after: after,
                movement,
                curvature_scale: s.min(1.0),
                warnings,
            });
        }
        s = (s * CURVATURE_GROWTH).min(1.0);
    }
}

/// Repeats `sca_step` until the relative decrease of `f̃` drops below `tol`
/// or `max_steps` is reached.
///
/// `min_scale` bounds the curvature search; each step starts one growth
/// factor below the scale accepted by the previous step.
pub fn sca_refine(
    slots: &[Option<SlotGeometry>],
    weights: &BeamWeights,
    aux: &AuxState,
    layout: &ArrayLayout,
    array: &StationConfig,
    max_steps: usize,
    tol: f64,
    min_scale: f64,
) -> Result<ScaStep> {
    let mut current = sca_step(slots, weights, aux, layout, array, min_scale)?;
    let first_before = current.reduced_before;
    for _ in 1..max_steps {
        let gain = current.reduced_before - current.reduced_after;
        if gain <= tol * current.reduced_after.abs().max(f64::MIN_POSITIVE) || current.movement == 0.0 {
            break;
        }
        let start = (current.curvature_scale / CURVATURE_GROWTH).max(min_scale);
        let next = sca_step(slots, weights, aux, &current.layout, array, start)?;
        let mut warnings = std::mem::take(&mut current.warnings);
        warnings.extend(next.warnings);
        current = ScaStep { warnings, ..next };
    }
    log::trace!(
        "sca_refine: f̃ {first_before:.6e} -> {:.6e}, last scale {:.1e}",
        current.reduced_after,
        current.curvature_scale
    );
    current.reduced_before = first_before;
    current.movement = (current.layout.to_flat() - layout.to_flat()).norm();
    Ok(current)
}
