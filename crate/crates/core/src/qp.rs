//! The quadratic program `Π_Σ(a)`: minimise `xᵀ Σ⁻¹ x` subject to `x ≥ a`.
//!
//! Its unique solution `ã` and multipliers `λ = Σ⁻¹ ã` decompose the
//! coordinates into the essential set `I = {i : λ_i > 0}` (where `ã_I = a_I`
//! and `λ_I = Σ_II⁻¹ a_I > 0`), the complement `J` (where `λ_J = 0` and
//! `ã_J = Σ_JI Σ_II⁻¹ a_I ≥ a_J`), and the boundary subset
//! `U = {i ∈ J : ã_i = a_i}`. Everything downstream — the decay rate `D`,
//! the correction constant and the endpoint tail asymptotics — is a function
//! of this structure.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::linalg::{cholesky_strict, submatrix, subvector};
use crate::model::ModelSpec;

/// Relative tolerance for multiplier positivity: entries of `λ` within
/// `TOL_KKT · max(1, ‖λ‖∞)` of zero are treated as zero and assigned to `J`.
pub const TOL_KKT: f64 = 1e-9;

/// Relative tolerance deciding membership in `U`: `|ã_i - a_i| ≤ TOL_U · max(1, |a_i|)`.
pub const TOL_U: f64 = 1e-9;

/// Hard cap for the exhaustive-enumeration solver.
pub const ENUM_LIMIT: usize = 20;

/// Enumeration fallback kicks in below this dimension when the active-set
/// iteration detects a cycle.
const CYCLE_FALLBACK_LIMIT: usize = 12;

/// Solution of `Π_Σ(a)` with its KKT index-set structure.
///
/// Index sets are sorted ascending and 0-based (also in serialized form;
/// report text renders them 1-based).
#[derive(Clone, Debug, Serialize)]
pub struct QpSolution {
    /// The minimizer `ã ≥ a`.
    pub a_tilde: Vec<f64>,
    /// Multipliers `λ = Σ⁻¹ ã`; exactly zero on `J` by construction.
    pub lambda: Vec<f64>,
    #[serde(rename = "I")]
    pub active: Vec<usize>,
    #[serde(rename = "J")]
    pub inactive: Vec<usize>,
    #[serde(rename = "U")]
    pub boundary: Vec<usize>,
    /// Optimal value `D = ãᵀ Σ⁻¹ ã = a_Iᵀ Σ_II⁻¹ a_I > 0`.
    #[serde(rename = "D")]
    pub value: f64,
}

impl QpSolution {
    pub fn a_tilde_vector(&self) -> DVector<f64> {
        DVector::from_vec(self.a_tilde.clone())
    }

    pub fn lambda_vector(&self) -> DVector<f64> {
        DVector::from_vec(self.lambda.clone())
    }
}

fn validate_inputs(sigma: &DMatrix<f64>, a: &DVector<f64>) -> Result<usize> {
    let d = sigma.nrows();
    if sigma.ncols() != d || a.len() != d || d == 0 {
        return Err(Error::DimensionMismatch(format!(
            "sigma is {}x{}, a has length {}",
            sigma.nrows(),
            sigma.ncols(),
            a.len()
        )));
    }
    if !a.iter().any(|&ai| ai > 0.0) {
        return Err(Error::InvalidDirection);
    }
    cholesky_strict(sigma)?;
    Ok(d)
}

/// Assemble the canonical solution from a candidate essential set.
///
/// Recomputes `λ_I = Σ_II⁻¹ a_I` and `ã_J = Σ_JI Σ_II⁻¹ a_I` (the
/// conditional-expectation form, the unique one consistent with `λ_J = 0`),
/// then verifies the KKT system. Returns `None` when the candidate fails.
fn assemble(
    sigma: &DMatrix<f64>,
    a: &DVector<f64>,
    active: &[usize],
) -> Option<QpSolution> {
    let d = a.len();
    if active.is_empty() {
        return None;
    }
    let inactive: Vec<usize> = (0..d).filter(|i| !active.contains(i)).collect();
    let sigma_ii = submatrix(sigma, active, active);
    let a_i = subvector(a, active);
    let chol = cholesky_strict(&sigma_ii).ok()?;
    let lambda_i = chol.solve(&a_i);
    let lambda_scale = lambda_i.amax().max(1.0);
    if lambda_i.iter().any(|&l| l <= TOL_KKT * lambda_scale) {
        return None;
    }
    let mut a_tilde = a.clone();
    if !inactive.is_empty() {
        let sigma_ji = submatrix(sigma, &inactive, active);
        let cond = sigma_ji * &lambda_i;
        for (row, &j) in inactive.iter().enumerate() {
            if cond[row] < a[j] - TOL_U * a[j].abs().max(1.0) {
                return None;
            }
            a_tilde[j] = cond[row];
        }
    }
    let mut lambda = DVector::zeros(d);
    for (row, &i) in active.iter().enumerate() {
        lambda[i] = lambda_i[row];
    }
    let boundary: Vec<usize> = inactive
        .iter()
        .copied()
        .filter(|&j| (a_tilde[j] - a[j]).abs() <= TOL_U * a[j].abs().max(1.0))
        .collect();
    let value = a_i.dot(&lambda_i);
    Some(QpSolution {
        a_tilde: a_tilde.iter().copied().collect(),
        lambda: lambda.iter().copied().collect(),
        active: active.to_vec(),
        inactive,
        boundary,
        value,
    })
}

/// Solve `Π_Σ(a)` with a primal active-set iteration on the KKT system.
///
/// Starts from the feasible point `x = a` with all constraints in the working
/// set; drops the lowest-index constraint with a negative multiplier and adds
/// the first blocking constraint along each step (Bland-style order, which
/// also breaks potential cycles). If a working set repeats, falls back to
/// exhaustive enumeration for `d ≤ 12`.
pub fn solve_pi(sigma: &DMatrix<f64>, a: &DVector<f64>) -> Result<QpSolution> {
    let d = sigma.nrows();
    solve_pi_with_start(sigma, a, &(0..d).collect::<Vec<_>>())
}

/// Same iteration from an arbitrary initial working set (the starting point
/// is still `x = a`, so any subset is admissible). The unique minimizer must
/// come out regardless of the start; tests probe exactly that.
pub fn solve_pi_with_start(
    sigma: &DMatrix<f64>,
    a: &DVector<f64>,
    initial_working: &[usize],
) -> Result<QpSolution> {
    let d = validate_inputs(sigma, a)?;
    let step_tol = 1e-12 * a.amax().max(1.0);

    let mut x = a.clone();
    let mut working: Vec<bool> = vec![false; d];
    for &i in initial_working {
        if i >= d {
            return Err(Error::DimensionMismatch(format!(
                "initial working index {i} out of range for d={d}"
            )));
        }
        working[i] = true;
    }
    let mut visited: HashSet<Vec<bool>> = HashSet::new();
    visited.insert(working.clone());

    let max_iters = 100 + 20 * d * d;
    for _ in 0..max_iters {
        let w_idx: Vec<usize> = (0..d).filter(|&i| working[i]).collect();
        let free_idx: Vec<usize> = (0..d).filter(|&i| !working[i]).collect();

        // Equality-constrained target: x_W = a_W pinned, free coordinates at
        // their conditional expectation Σ_{FW} Σ_WW⁻¹ a_W (zero when W = ∅).
        let (target, lambda_w) = if w_idx.is_empty() {
            (DVector::zeros(d), DVector::zeros(0))
        } else {
            let sigma_ww = submatrix(sigma, &w_idx, &w_idx);
            let a_w = subvector(a, &w_idx);
            let y = cholesky_strict(&sigma_ww)?.solve(&a_w);
            let mut t = DVector::zeros(d);
            for &i in &w_idx {
                t[i] = a[i];
            }
            if !free_idx.is_empty() {
                let sigma_fw = submatrix(sigma, &free_idx, &w_idx);
                let cond = sigma_fw * &y;
                for (row, &i) in free_idx.iter().enumerate() {
                    t[i] = cond[row];
                }
            }
            (t, y)
        };

        let p = &target - &x;
        if p.amax() <= step_tol {
            // At the EQP optimum: check multipliers.
            let lambda_scale = lambda_w.amax().max(1.0);
            let drop = w_idx
                .iter()
                .enumerate()
                .find(|(row, _)| lambda_w[*row] < -TOL_KKT * lambda_scale)
                .map(|(_, &i)| i);
            match drop {
                Some(i) => {
                    working[i] = false;
                }
                None => {
                    // Converged; near-zero multipliers migrate to J.
                    let active: Vec<usize> = w_idx
                        .iter()
                        .enumerate()
                        .filter(|(row, _)| lambda_w[*row] > TOL_KKT * lambda_scale)
                        .map(|(_, &i)| i)
                        .collect();
                    if let Some(sol) = assemble(sigma, a, &active) {
                        return Ok(sol);
                    }
                    return fallback(sigma, a, d);
                }
            }
        } else {
            // Step toward the target, blocked by the first constraint hit.
            let mut alpha = 1.0;
            let mut blocker = None;
            for &i in &free_idx {
                if p[i] < -step_tol {
                    let ai = (a[i] - x[i]) / p[i];
                    if ai < alpha {
                        alpha = ai;
                        blocker = Some(i);
                    }
                }
            }
            x += alpha * &p;
            if let Some(i) = blocker {
                x[i] = a[i];
                working[i] = true;
            } else {
                x = target;
            }
        }

        if !visited.insert(working.clone()) {
            return fallback(sigma, a, d);
        }
    }
    fallback(sigma, a, d)
}

fn fallback(sigma: &DMatrix<f64>, a: &DVector<f64>, d: usize) -> Result<QpSolution> {
    if d <= CYCLE_FALLBACK_LIMIT {
        solve_pi_enumerate(sigma, a)
    } else {
        Err(Error::NoFeasibleIndexSet)
    }
}

/// Exhaustive-enumeration solver: tries every non-empty candidate `I` and
/// returns the unique one with `Σ_II⁻¹ a_I > 0` and `Σ_JI Σ_II⁻¹ a_I ≥ a_J`.
///
/// Exponential in `d`; guarded at `d ≤ 20`. This is the independent test
/// oracle for [`solve_pi`].
pub fn solve_pi_enumerate(sigma: &DMatrix<f64>, a: &DVector<f64>) -> Result<QpSolution> {
    let d = validate_inputs(sigma, a)?;
    if d > ENUM_LIMIT {
        return Err(Error::DimensionTooLarge(d, ENUM_LIMIT));
    }
    for mask in 1u32..(1u32 << d) {
        let active: Vec<usize> = (0..d).filter(|i| mask & (1 << i) != 0).collect();
        if let Some(sol) = assemble(sigma, a, &active) {
            return Ok(sol);
        }
    }
    Err(Error::NoFeasibleIndexSet)
}

/// Solve `Π_{Σ(t)}(a)` along a time grid; also used to trace `D(t)`.
pub fn qp_along_time(spec: &ModelSpec, grid: &[f64]) -> Result<Vec<(f64, QpSolution)>> {
    grid.iter()
        .map(|&t| {
            let sol = spec
                .covariance_at(t)
                .and_then(|sigma| solve_pi(&sigma, spec.direction()))
                .map_err(|e| Error::QpAtTime { t, source: Box::new(e) })?;
            Ok((t, sol))
        })
        .collect()
}
