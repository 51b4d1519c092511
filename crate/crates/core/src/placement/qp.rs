//! Euclidean projection onto a polyhedron by a primal active-set method.
//!
//! Solves `min ½‖x − p‖²  s.t.  g_iᵀx ≥ h_i` from a feasible start. Working-set
//! rows are kept linearly independent: a blocking constraint always has
//! `g_iᵀd < 0` for a step `d` in the null space of the working rows.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub normal: DVector<f64>,
    pub bound: f64,
}

impl LinearConstraint {
    pub fn slack(&self, x: &DVector<f64>) -> f64 {
        self.normal.dot(x) - self.bound
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub x: DVector<f64>,
    /// Multipliers `λ_i ≥ 0` with `x − p = Σ λ_i g_i`, indexed like the constraints.
    pub multipliers: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct ProjectionOptions {
    /// Length scale of the problem; tolerances are relative to it.
    pub scale: f64,
    pub max_iterations: usize,
}

fn working_gram(rows: &[&DVector<f64>]) -> DMatrix<f64> {
    let k = rows.len();
    DMatrix::from_fn(k, k, |i, j| rows[i].dot(rows[j]))
}

/// Solves `(G Gᵀ) μ = G r` for the working rows `G`; `None` if they are dependent.
fn working_solve(rows: &[&DVector<f64>], r: &DVector<f64>) -> Option<DVector<f64>> {
    if rows.is_empty() {
        return Some(DVector::zeros(0));
    }
    let rhs = DVector::from_iterator(rows.len(), rows.iter().map(|g| g.dot(r)));
    let chol = working_gram(rows).cholesky()?;
    let gram_diag_min = rows.iter().map(|g| g.norm_squared()).fold(f64::INFINITY, f64::min);
    let l_min = chol.l_dirty().diagonal().iter().fold(f64::INFINITY, |a, &b| a.min(b.abs()));
    // Near-dependent rows make the factor's diagonal collapse.
    if l_min * l_min < 1e-12 * gram_diag_min {
        return None;
    }
    Some(chol.solve(&rhs))
}

/// Pushes an infeasible point toward the feasible set by cyclic projections.
pub fn restore_feasibility(
    x: &DVector<f64>,
    constraints: &[LinearConstraint],
    tol: f64,
    sweeps: usize,
) -> DVector<f64> {
    let mut x = x.clone();
    for _ in 0..sweeps {
        let mut worst = 0.0f64;
        for c in constraints {
            let slack = c.slack(&x);
            if slack < 0.0 {
                worst = worst.max(-slack);
                let norm2 = c.normal.norm_squared();
                x.axpy(-slack / norm2, &c.normal, 1.0);
            }
        }
        if worst <= tol {
            break;
        }
    }
    x
}

/// Projects `target` onto `{x : g_iᵀx ≥ h_i}` starting from `start`.
///
/// `start` should be feasible; residual violations are absorbed into the
/// working set on the first step.
pub fn project(
    target: &DVector<f64>,
    start: &DVector<f64>,
    constraints: &[LinearConstraint],
    opts: ProjectionOptions,
) -> Projection {
    let active_tol = 1e-12 * opts.scale;
    let step_tol = 1e-13 * opts.scale;
    let mut x = start.clone();
    let mut working: Vec<usize> = Vec::new();

    for (i, c) in constraints.iter().enumerate() {
        if c.slack(&x) <= active_tol {
            working.push(i);
            let rows: Vec<_> = working.iter().map(|&j| &constraints[j].normal).collect();
            if working_solve(&rows, &x).is_none() {
                working.pop();
            }
        }
    }

    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        let r = target - &x;
        let rows: Vec<_> = working.iter().map(|&j| &constraints[j].normal).collect();
        let Some(mu) = working_solve(&rows, &r) else {
            // Should not happen with independent rows; drop the newest and retry.
            working.pop();
            continue;
        };
        let mut d = r.clone();
        for (g, m) in rows.iter().zip(mu.iter()) {
            d.axpy(-m, g, 1.0);
        }

        if d.norm() <= step_tol {
            // Multipliers of x − p = Gᵀλ are λ = −μ.
            let worst = mu
                .iter()
                .enumerate()
                .map(|(k, m)| (k, -m))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match worst {
                Some((k, lambda)) if lambda < -1e-12 * opts.scale => {
                    working.remove(k);
                }
                _ => {
                    let mut multipliers = vec![0.0; constraints.len()];
                    for (&j, m) in working.iter().zip(mu.iter()) {
                        multipliers[j] = (-m).max(0.0);
                    }
                    return Projection {
                        x,
                        multipliers,
                        iterations,
                        converged: true,
                    };
                }
            }
            continue;
        }

        let mut step = 1.0;
        let mut blocking = None;
        let d_norm = d.norm();
        for (i, c) in constraints.iter().enumerate() {
            if working.contains(&i) {
                continue;
            }
            let gd = c.normal.dot(&d);
            if gd < -1e-12 * d_norm * c.normal.norm() {
                let t = (c.slack(&x) / -gd).max(0.0);
                if t < step {
                    step = t;
                    blocking = Some(i);
                }
            }
        }
        x.axpy(step, &d, 1.0);
        if let Some(i) = blocking {
            working.push(i);
        }
    }

    let mut multipliers = vec![0.0; constraints.len()];
    let rows: Vec<_> = working.iter().map(|&j| &constraints[j].normal).collect();
    if let Some(mu) = working_solve(&rows, &(target - &x)) {
        for (&j, m) in working.iter().zip(mu.iter()) {
            multipliers[j] = (-m).max(0.0);
        }
    }
    Projection {
        x,
        multipliers,
        iterations,
        converged: false,
    }
}

/// Max of stationarity, primal infeasibility and complementarity violations.
pub fn kkt_residual(
    target: &DVector<f64>,
    constraints: &[LinearConstraint],
    proj: &Projection,
) -> f64 {
    let mut stationarity = &proj.x - target;
    for (c, &l) in constraints.iter().zip(&proj.multipliers) {
        stationarity.axpy(-l, &c.normal, 1.0);
    }
    let mut worst = stationarity.amax();
    for (c, &l) in constraints.iter().zip(&proj.multipliers) {
        let slack = c.slack(&proj.x);
        worst = worst.max((-slack).max(0.0));
        worst = worst.max((l * slack).abs());
        worst = worst.max((-l).max(0.0));
    }
    worst
}
