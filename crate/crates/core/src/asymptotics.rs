//! Closed-form asymptotics: the decay rate `D(t)`, its derivative at the
//! horizon, the correction constant `C` with its finite-window variant
//! `C(L)`, the endpoint tail asymptotic, the ruin asymptotic
//! `p_T(u a) ~ C · P(X(T) - cT > u a)`, and the uniform bounds.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussprob::{self, MvnOptions, MvnSpec, ProbEstimate};
use crate::linalg;
use crate::model::ModelSpec;
use crate::qp::{self, QpSolution};

/// Everything the closed forms need at the horizon: `Σ(T)`, the QP solution,
/// `Q = diag(v̇_i(T)/v_i(T))` and the products `λ_i (A Q A⁻¹ ã)_i`.
struct Endpoint {
    sigma: DMatrix<f64>,
    sol: QpSolution,
    q_diag: DVector<f64>,
    /// `λ_i · (A Q A⁻¹ ã)_i` per coordinate.
    products: DVector<f64>,
    /// `Ḋ(T)` by the closed form.
    d_dot: f64,
}

impl Endpoint {
    fn new(spec: &ModelSpec) -> Result<Self> {
        let t = spec.horizon();
        let sigma = spec.covariance_at(t)?;
        let sol = qp::solve_pi(&sigma, spec.direction())?;
        let d = spec.dim();
        let mut q_diag = DVector::zeros(d);
        for i in 0..d {
            let v = spec.variance(i).value(t);
            let vdot = spec.variance(i).deriv(t);
            if !(vdot > 0.0) {
                return Err(Error::AssumptionViolated(format!(
                    "BI fails: v'_{i}(T) = {vdot} is not positive"
                )));
            }
            q_diag[i] = vdot / v;
        }
        let a_tilde = sol.a_tilde_vector();
        let a_inv = spec
            .mixing()
            .clone()
            .lu()
            .solve(&a_tilde)
            .ok_or_else(|| Error::SingularModel("mixing matrix not invertible".into()))?;
        // A Q A⁻¹ ã
        let g = spec.mixing() * DMatrix::from_diagonal(&q_diag) * &a_inv;
        let lambda = sol.lambda_vector();
        let products = DVector::from_fn(d, |i, _| lambda[i] * g[i]);
        // Ḋ(T) = -‖diag(√v̇(T)/v(T)) A⁻¹ ã(T)‖²
        let mut d_dot = 0.0;
        for i in 0..d {
            let v = spec.variance(i).value(t);
            let vdot = spec.variance(i).deriv(t);
            d_dot -= vdot / (v * v) * a_inv[i] * a_inv[i];
        }
        Ok(Endpoint { sigma, sol, q_diag, products, d_dot })
    }
}

fn require_exact(spec: &ModelSpec) -> Result<()> {
    let report = spec.validate();
    if !report.exact_ok() {
        return Err(Error::AssumptionViolated(
            report.exact.first_violation.unwrap_or_else(|| "exact assumptions fail".into()),
        ));
    }
    Ok(())
}

/// `D(t) = ã(t)ᵀ Σ(t)⁻¹ ã(t)`, the optimal value of `Π_{Σ(t)}(a)`.
pub fn d_of_t(spec: &ModelSpec, t: f64) -> Result<f64> {
    let sigma = spec.covariance_at(t)?;
    Ok(qp::solve_pi(&sigma, spec.direction())?.value)
}

/// `Ḋ(T) = -‖diag(√v̇(T)/v(T)) A⁻¹ ã(T)‖² < 0`.
pub fn d_dot_at_horizon(spec: &ModelSpec) -> Result<f64> {
    Ok(Endpoint::new(spec)?.d_dot)
}

/// Closed form of `∫_{ℝ^d} 1{∃ t ∈ [0,L] : x < f t} e^{Σ x_i} dx`:
///
/// `1 + Σ f_i⁺ L` when `Σ f_i = 0`, otherwise
/// `Σ f_i⁻ / Σ f_i + (Σ f_i⁺ / Σ f_i) e^{Σ f_i L}`.
pub fn int_repr(f: &[f64], l: f64) -> f64 {
    assert!(l >= 0.0, "window length must be nonnegative");
    let s_plus: f64 = f.iter().map(|&x| x.max(0.0)).sum();
    let s_minus: f64 = f.iter().map(|&x| x.min(0.0)).sum();
    let s = s_plus + s_minus;
    let scale: f64 = s_plus - s_minus;
    if s.abs() <= 1e-13 * scale.max(1e-300) {
        1.0 + s_plus * l
    } else {
        s_minus / s + s_plus / s * (s * l).exp()
    }
}

/// The correction constant
/// `C = Σ max(λ_i (A Q A⁻¹ ã)_i, 0) / Σ λ_i (A Q A⁻¹ ã)_i ≥ 1`,
/// `Q = diag(v̇_i(T)/v_i(T))`; the denominator equals `-Ḋ(T)`.
pub fn constant_c(spec: &ModelSpec) -> Result<f64> {
    require_exact(spec)?;
    let ep = Endpoint::new(spec)?;
    Ok(constant_c_from(&ep))
}

fn constant_c_from(ep: &Endpoint) -> f64 {
    let num: f64 = ep.products.iter().map(|&p| p.max(0.0)).sum();
    let den: f64 = ep.products.iter().sum();
    num / den
}

/// Finite-window constant `C(L)`: the same object restricted to a window of
/// length `L/u²` before the horizon. Evaluated through [`int_repr`] with
/// `f_i = -½ λ_i (A Q A⁻¹ ã)_i` over the essential set; `C(0) = 1`,
/// nondecreasing in `L`, and `C(L) → C` as `L → ∞`.
pub fn constant_c_of_l(spec: &ModelSpec, l: f64) -> Result<f64> {
    if l < 0.0 {
        return Err(Error::InvalidParameter(format!("window length {l} must be >= 0")));
    }
    require_exact(spec)?;
    let ep = Endpoint::new(spec)?;
    Ok(constant_c_of_l_from(&ep, l))
}

fn constant_c_of_l_from(ep: &Endpoint, l: f64) -> f64 {
    let f: Vec<f64> = ep.sol.active.iter().map(|&i| -0.5 * ep.products[i]).collect();
    int_repr(&f, l)
}

/// Endpoint tail asymptotic of `P(X - cT > u a)` for the centered vector
/// `X = X(T)`:
///
/// ```text
/// u^{-|I|} φ_X(u ã + cT) / Π_{i∈I} λ_i
///   · ∫_{ℝ^{|J|}} 1{x_U < 0} exp(-½ x_Jᵀ (Σ⁻¹)_JJ x_J + ⟨c̃_J, x_J⟩) dx_J
/// ```
///
/// with `c̃ = Σ⁻¹ (cT)`. The `J`-integral is computed in closed form by
/// completing the square: a Gaussian normalization times the orthant
/// probability `P(Y_U < 0)` with `Y ~ N(((Σ⁻¹)_JJ)⁻¹ c̃_J, ((Σ⁻¹)_JJ)⁻¹)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TailAsymptotic {
    /// Log of the asymptotic value; finite even when `value` underflows.
    pub log_value: f64,
    pub value: f64,
    /// Accuracy flag inherited from the orthant factor (exact when `U = ∅`).
    pub orthant: ProbEstimate,
}

pub fn endpoint_tail_asymptotic(spec: &ModelSpec, u: f64) -> Result<TailAsymptotic> {
    endpoint_tail_with_opts(spec, u, &MvnOptions::default())
}

pub fn endpoint_tail_with_opts(
    spec: &ModelSpec,
    u: f64,
    opts: &MvnOptions,
) -> Result<TailAsymptotic> {
    if !(u > 0.0) {
        return Err(Error::InvalidParameter(format!("level u must be positive, got {u}")));
    }
    let ep = Endpoint::new(spec)?;
    endpoint_tail_from(spec, &ep, u, opts)
}

fn endpoint_tail_from(
    spec: &ModelSpec,
    ep: &Endpoint,
    u: f64,
    opts: &MvnOptions,
) -> Result<TailAsymptotic> {
    let t = spec.horizon();
    let shift = spec.drift() * t;
    let mvn = MvnSpec::new(DVector::zeros(spec.dim()), ep.sigma.clone())?;
    let point = ep.sol.a_tilde_vector() * u + &shift;
    let mut log_value = mvn.log_density(&point);
    log_value -= ep.sol.active.len() as f64 * u.ln();
    for &i in &ep.sol.active {
        log_value -= ep.sol.lambda[i].ln();
    }

    let mut orthant = ProbEstimate::exact(1.0);
    if !ep.sol.inactive.is_empty() {
        let j_set = &ep.sol.inactive;
        let i_set = &ep.sol.active;
        // ((Σ⁻¹)_JJ)⁻¹ is the conditional covariance Σ_JJ - Σ_JI Σ_II⁻¹ Σ_IJ.
        let sigma_jj = linalg::submatrix(&ep.sigma, j_set, j_set);
        let sigma_ji = linalg::submatrix(&ep.sigma, j_set, i_set);
        let sigma_ii = linalg::submatrix(&ep.sigma, i_set, i_set);
        let chol_ii = linalg::cholesky_strict(&sigma_ii)?;
        let cond_cov = &sigma_jj - &sigma_ji * chol_ii.solve(&sigma_ji.transpose());
        let cond_chol = linalg::cholesky_with_jitter(&cond_cov)?;
        // c̃_J = (Σ⁻¹ cT)_J
        let c_tilde = linalg::cholesky_strict(&ep.sigma)?.solve(&shift);
        let c_tilde_j = linalg::subvector(&c_tilde, j_set);
        let log_det_cond: f64 =
            (0..j_set.len()).map(|r| cond_chol.l_dirty()[(r, r)].ln()).sum::<f64>() * 2.0;
        let mean_y = &cond_cov * &c_tilde_j;
        log_value += 0.5 * j_set.len() as f64 * (2.0 * std::f64::consts::PI).ln()
            + 0.5 * log_det_cond
            + 0.5 * c_tilde_j.dot(&mean_y);
        if !ep.sol.boundary.is_empty() {
            // P(Y_U < 0) = P(-Y_U > 0), an orthant probability over the
            // boundary coordinates.
            let u_local: Vec<usize> = ep
                .sol
                .boundary
                .iter()
                .map(|b| j_set.iter().position(|j| j == b).expect("U is a subset of J"))
                .collect();
            let mean_u = DVector::from_fn(u_local.len(), |r, _| -mean_y[u_local[r]]);
            let cov_u = linalg::submatrix(&cond_cov, &u_local, &u_local);
            orthant = gaussprob::orthant_upper(&MvnSpec::new(mean_u, cov_u)?, opts);
        }
    }
    log_value += orthant.value.ln();
    Ok(TailAsymptotic { log_value, value: log_value.exp(), orthant })
}

/// The exact endpoint tail `P(X(T) - cT > u a)` via [`gaussprob`].
pub fn endpoint_tail_exact(spec: &ModelSpec, u: f64, opts: &MvnOptions) -> Result<ProbEstimate> {
    let sigma = spec.covariance_at(spec.horizon())?;
    let lower = spec.direction() * u + spec.drift() * spec.horizon();
    Ok(gaussprob::mvn_tail(&sigma, &lower, opts))
}

/// The ruin asymptotic `p_T(u a) ~ C · P(X(T) - cT > u a)`, reported both as
/// the pure asymptotic formula and as `C ×` the exact endpoint tail so the
/// pre-asymptotic error stays visible.
#[derive(Clone, Debug, Serialize)]
pub struct RuinAsymptotic {
    pub u: f64,
    /// The correction constant `C`.
    pub c: f64,
    /// Endpoint tail asymptotic (the `u → ∞` formula).
    pub tail_asym: TailAsymptotic,
    /// Exact endpoint tail at this `u`.
    pub tail_exact: ProbEstimate,
    /// `C ·` tail asymptotic.
    pub p_asym: f64,
    pub log_p_asym: f64,
    /// `C ·` exact endpoint tail (finite-`u` refinement).
    pub p_refined: ProbEstimate,
}

pub fn ruin_asymptotic(spec: &ModelSpec, u: f64) -> Result<RuinAsymptotic> {
    ruin_asymptotic_with_opts(spec, u, &MvnOptions::relative(1e-3))
}

pub fn ruin_asymptotic_with_opts(
    spec: &ModelSpec,
    u: f64,
    opts: &MvnOptions,
) -> Result<RuinAsymptotic> {
    require_exact(spec)?;
    let ep = Endpoint::new(spec)?;
    let c = constant_c_from(&ep);
    let tail_asym = endpoint_tail_from(spec, &ep, u, opts)?;
    let tail_exact = endpoint_tail_exact(spec, u, opts)?;
    Ok(RuinAsymptotic {
        u,
        c,
        tail_asym,
        tail_exact,
        p_asym: c * tail_asym.value,
        log_p_asym: c.ln() + tail_asym.log_value,
        p_refined: tail_exact.scale(c),
    })
}

/// Uniform bounds
/// `P(X(T) - cT > u) ≤ p_T(u) ≤ P(X(T) - cT > u) / P(N(0, AᵀA) > 0)`,
/// valid under a common convex variance function, `(AᵀA)_{ij} ≥ 0`, `c ≥ 0`.
#[derive(Clone, Debug, Serialize)]
pub struct Bounds {
    pub lower: ProbEstimate,
    pub upper: ProbEstimate,
    /// Set when the raw upper bound exceeded one and was clamped.
    pub clamped: bool,
}

pub fn bounds(spec: &ModelSpec, u_vec: &DVector<f64>) -> Result<Bounds> {
    bounds_with_opts(spec, u_vec, &MvnOptions::default())
}

pub fn bounds_with_opts(
    spec: &ModelSpec,
    u_vec: &DVector<f64>,
    opts: &MvnOptions,
) -> Result<Bounds> {
    let report = spec.validate();
    if !report.bounds_ok() {
        return Err(Error::AssumptionViolated(
            report.bounds.first_violation.unwrap_or_else(|| "bounds assumptions fail".into()),
        ));
    }
    if u_vec.len() != spec.dim() {
        return Err(Error::DimensionMismatch(format!(
            "u has length {}, model dimension is {}",
            u_vec.len(),
            spec.dim()
        )));
    }
    let sigma = spec.covariance_at(spec.horizon())?;
    let lower_limits = u_vec + spec.drift() * spec.horizon();
    let lower = gaussprob::mvn_tail(&sigma, &lower_limits, opts);
    let ata = spec.mixing().transpose() * spec.mixing();
    let denom = gaussprob::mvn_tail(&ata, &DVector::zeros(spec.dim()), opts);
    let mut upper = lower / denom;
    let clamped = upper.value > 1.0;
    if clamped {
        upper.value = 1.0;
    }
    Ok(Bounds { lower, upper, clamped })
}

/// `𝒢(t) = ⟨λ(t), c⟩ t / D(t)`; identically zero for driftless models.
pub struct GFunction<'a> {
    spec: &'a ModelSpec,
}

impl<'a> GFunction<'a> {
    pub fn new(spec: &'a ModelSpec) -> Self {
        GFunction { spec }
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        let sigma = self.spec.covariance_at(t)?;
        let sol = qp::solve_pi(&sigma, self.spec.direction())?;
        Ok(sol.lambda_vector().dot(self.spec.drift()) * t / sol.value)
    }
}

/// Diagnostic log-scale exceedance curve `t ↦ -D(t)(u + min_{s≤t} 𝒢(s))²/2`.
///
/// Shape only: the underlying inequality carries an unspecified constant, so
/// this is not a certified bound.
pub fn diagnostic_log_bound_curve(
    spec: &ModelSpec,
    u: f64,
    grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let g = GFunction::new(spec);
    let mut running_min = f64::INFINITY;
    let mut out = Vec::with_capacity(grid.len());
    for &t in grid {
        running_min = running_min.min(g.eval(t)?);
        let d = d_of_t(spec, t)?;
        out.push((t, -0.5 * d * (u + running_min) * (u + running_min)));
    }
    Ok(out)
}

/// Full closed-form report at one level `u`.
#[derive(Clone, Debug, Serialize)]
pub struct AsymptoticReport {
    pub u: f64,
    /// `D(T)`.
    pub d_horizon: f64,
    /// `Ḋ(T) < 0`.
    pub d_dot_horizon: f64,
    /// `v̇_i(T)/v_i(T)` per coordinate.
    pub q_diag: Vec<f64>,
    pub c: f64,
    /// Optional `(L, C(L))` curve.
    pub c_of_l: Option<Vec<(f64, f64)>>,
    /// Endpoint tail asymptotic value and its log.
    pub tail_asym: f64,
    pub log_tail_asym: f64,
    pub tail_exact: ProbEstimate,
    /// `C ·` tail asymptotic.
    pub p_ruin_asym: f64,
    pub log_p_ruin_asym: f64,
    /// `C ·` exact endpoint tail.
    pub p_ruin_refined: ProbEstimate,
    /// Present when the bounds assumptions hold.
    pub bounds: Option<Bounds>,
    pub qp_at_t: QpSolution,
}

pub fn report(spec: &ModelSpec, u: f64, l_values: &[f64]) -> Result<AsymptoticReport> {
    report_with_opts(spec, u, l_values, &MvnOptions::relative(1e-3))
}

pub fn report_with_opts(
    spec: &ModelSpec,
    u: f64,
    l_values: &[f64],
    opts: &MvnOptions,
) -> Result<AsymptoticReport> {
    require_exact(spec)?;
    let ep = Endpoint::new(spec)?;
    let c = constant_c_from(&ep);
    let tail_asym = endpoint_tail_from(spec, &ep, u, opts)?;
    let tail_exact = endpoint_tail_exact(spec, u, opts)?;
    let c_of_l = if l_values.is_empty() {
        None
    } else {
        Some(l_values.iter().map(|&l| (l, constant_c_of_l_from(&ep, l))).collect())
    };
    let bounds = if spec.validate().bounds_ok() {
        Some(bounds_with_opts(spec, &(spec.direction() * u), opts)?)
    } else {
        None
    };
    Ok(AsymptoticReport {
        u,
        d_horizon: ep.sol.value,
        d_dot_horizon: ep.d_dot,
        q_diag: ep.q_diag.iter().copied().collect(),
        c,
        c_of_l,
        tail_asym: tail_asym.value,
        log_tail_asym: tail_asym.log_value,
        tail_exact,
        p_ruin_asym: c * tail_asym.value,
        log_p_ruin_asym: c.ln() + tail_asym.log_value,
        p_ruin_refined: tail_exact.scale(c),
        bounds,
        qp_at_t: ep.sol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VarianceFunction;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fbm(alpha: f64) -> VarianceFunction {
        VarianceFunction::Fbm { alpha }
    }

    fn example_model(rho: f64, a2: f64, alpha: f64, c: f64) -> ModelSpec {
        let mixing = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, rho, (1.0 - rho * rho).sqrt()]);
        ModelSpec::new(mixing, vec![fbm(alpha), fbm(alpha)], vec![c, c], vec![1.0, a2], 1.0)
            .unwrap()
    }

    fn scalar_model(alpha: f64) -> ModelSpec {
        ModelSpec::new(DMatrix::identity(1, 1), vec![fbm(alpha)], vec![0.0], vec![1.0], 1.0)
            .unwrap()
    }

    #[test]
    fn d_scalar_power_law() {
        // d=1, v(t) = t^α, a=1: D(t) = t^{-α}.
        let spec = scalar_model(1.5);
        for &t in &[0.25, 0.5, 1.0] {
            assert_relative_eq!(d_of_t(&spec, t).unwrap(), t.powf(-1.5), max_relative = 1e-12);
        }
    }

    #[test]
    fn d_two_dim_inverse_oracle() {
        // a = (1, 0.8) > ρ = 0.5: D(T) = aᵀΣ⁻¹(T)a with the explicit inverse.
        let spec = example_model(0.5, 0.8, 1.5, 0.0);
        assert_relative_eq!(d_of_t(&spec, 1.0).unwrap(), 0.84 / 0.75, max_relative = 1e-12);
    }

    #[test]
    fn d_full_and_restricted_forms_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let d = rng.random_range(2..=4);
            let mixing = DMatrix::from_fn(d, d, |i, j| {
                if i == j {
                    1.0
                } else {
                    rng.random_range(-0.3..0.3)
                }
            });
            let alpha = rng.random_range(1.1..1.9);
            let spec = match ModelSpec::new(
                mixing,
                (0..d).map(|_| fbm(alpha)).collect(),
                vec![0.0; d],
                (0..d).map(|_| rng.random_range(-0.5..1.5)).collect::<Vec<_>>(),
                1.0,
            ) {
                Ok(s) => s,
                Err(_) => continue,
            };
            let t = rng.random_range(0.3..1.0);
            let sigma = spec.covariance_at(t).unwrap();
            let sol = qp::solve_pi(&sigma, spec.direction()).unwrap();
            let full = (sol.a_tilde_vector().transpose()
                * linalg::spd_inverse(&sigma).unwrap()
                * sol.a_tilde_vector())[(0, 0)];
            assert_relative_eq!(sol.value, full, max_relative = 1e-10);
        }
    }

    #[test]
    fn d_dot_scalar_cases() {
        // v(t) = t: D(t) = 1/t, Ḋ(1) = -1. BI/B0 suffice here; BII is not
        // needed for the derivative formula itself.
        let spec = ModelSpec::new(
            DMatrix::identity(1, 1),
            vec![VarianceFunction::Brownian],
            vec![0.0],
            vec![1.0],
            1.0,
        )
        .unwrap();
        assert_relative_eq!(d_dot_at_horizon(&spec).unwrap(), -1.0, max_relative = 1e-12);
        for &alpha in &[1.2, 1.5, 1.8] {
            assert_relative_eq!(
                d_dot_at_horizon(&scalar_model(alpha)).unwrap(),
                -alpha,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn d_dot_matches_left_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let d = rng.random_range(2..=3);
            let mixing = DMatrix::from_fn(d, d, |i, j| {
                if i == j {
                    1.0
                } else {
                    rng.random_range(-0.4..0.4)
                }
            });
            let spec = match ModelSpec::new(
                mixing,
                (0..d).map(|_| fbm(rng.random_range(1.2..1.8))).collect(),
                vec![0.0; d],
                (0..d).map(|_| rng.random_range(-0.5..1.5)).collect::<Vec<_>>(),
                1.0,
            ) {
                Ok(s) => s,
                Err(_) => continue,
            };
            let t = spec.horizon();
            let h = 1e-5 * t;
            let fd = (d_of_t(&spec, t).unwrap() - d_of_t(&spec, t - h).unwrap()) / h;
            let closed = d_dot_at_horizon(&spec).unwrap();
            assert!(closed < 0.0);
            assert_relative_eq!(closed, fd, max_relative = 1e-3);
        }
    }

    #[test]
    fn int_repr_fixed_cases() {
        // all-negative: exactly one for every window
        for &l in &[0.0, 1.0, 10.0] {
            assert_relative_eq!(int_repr(&[-1.0, -2.0], l), 1.0, epsilon = 1e-14);
        }
        // zero-sum branch: 1 + Σf⁺·L
        assert_relative_eq!(int_repr(&[1.0, -1.0], 2.0), 3.0, epsilon = 1e-14);
        // mixed signs: 3 - 2e^{-1}
        assert_relative_eq!(
            int_repr(&[2.0, -3.0], 1.0),
            3.0 - 2.0 * (-1.0f64).exp(),
            epsilon = 1e-14
        );
        // value 1 at L = 0 in every branch
        assert_relative_eq!(int_repr(&[2.0, -3.0], 0.0), 1.0, epsilon = 1e-14);
        assert_relative_eq!(int_repr(&[1.5, 0.5], 0.0), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn constant_c_is_one_for_nonnegative_direction() {
        // identical v, a ≥ 0: Q ∝ I so the products are λ_i ã_i ≥ 0.
        let spec = example_model(0.5, 0.8, 1.5, 0.0);
        assert_relative_eq!(constant_c(&spec).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_c_closed_form_negative_direction() {
        // ρ = -0.8, a = (1, -0.5): C = (1 - aρ)/(1 - 2aρ + a²) = 4/3.
        let spec = example_model(-0.8, -0.5, 1.5, 0.0);
        assert_relative_eq!(constant_c(&spec).unwrap(), 4.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_c_is_one_in_dimension_reduction_regime() {
        let spec = example_model(0.5, 0.2, 1.5, 0.0);
        assert_relative_eq!(constant_c(&spec).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn denominator_identity_matches_d_dot() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..25 {
            let d = rng.random_range(2..=4);
            let mixing = DMatrix::from_fn(d, d, |i, j| {
                if i == j {
                    1.0
                } else {
                    rng.random_range(-0.35..0.35)
                }
            });
            let spec = match ModelSpec::new(
                mixing,
                (0..d).map(|_| fbm(rng.random_range(1.2..1.8))).collect(),
                vec![0.0; d],
                (0..d).map(|_| rng.random_range(-0.5..1.5)).collect::<Vec<_>>(),
                1.0,
            ) {
                Ok(s) => s,
                Err(_) => continue,
            };
            let ep = Endpoint::new(&spec).unwrap();
            let den: f64 = ep.products.iter().sum();
            assert_relative_eq!(den, -ep.d_dot, max_relative = 1e-9);
            assert!(constant_c_from(&ep) >= 1.0 - 1e-12);
        }
    }

    #[test]
    fn c_of_l_limits() {
        let spec = example_model(-0.8, -0.5, 1.5, 0.0);
        let c = constant_c(&spec).unwrap();
        assert_relative_eq!(constant_c_of_l(&spec, 0.0).unwrap(), 1.0, epsilon = 1e-13);
        let u0 = 1.0 / d_dot_at_horizon(&spec).unwrap().abs();
        let mut prev = 1.0;
        for &l in &[1.0, 5.0, 25.0] {
            let cl = constant_c_of_l(&spec, l * u0).unwrap();
            assert!(cl > prev, "C(L) must increase, got {cl} after {prev}");
            prev = cl;
        }
        assert!((constant_c_of_l(&spec, 25.0 * u0).unwrap() - c).abs() < 1e-3);
        assert!((constant_c_of_l(&spec, 40.0 * u0).unwrap() - c).abs() < 1e-6 * c);
        // C = 1 specs have C(L) = 1 identically.
        let flat = example_model(0.5, 0.8, 1.5, 0.0);
        for &l in &[0.0, 1.0, 100.0] {
            assert_relative_eq!(constant_c_of_l(&flat, l).unwrap(), 1.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn endpoint_tail_univariate_mills() {
        // d=1, v(T)=1, c=0, a=1: asymptotic is φ(u)/u; the exact tail is
        // φ(u)/u (1 - u⁻² + 3u⁻⁴ - ...), so the gap closes like u⁻².
        let spec = scalar_model(1.5);
        for (u, tol) in [(5.0, 0.04), (7.0, 0.021), (10.0, 0.0101)] {
            let asym = endpoint_tail_asymptotic(&spec, u).unwrap();
            let expected = gaussprob::normal::pdf(u) / u;
            assert_relative_eq!(asym.value, expected, max_relative = 1e-12);
            let ratio = gaussprob::normal::phi_bar(u) / asym.value;
            assert!((ratio - 1.0).abs() < tol, "u={u}: ratio {ratio}");
        }
    }

    #[test]
    fn endpoint_tail_boundary_regime_halves_the_univariate() {
        // a₂ = ρ puts coordinate 2 on the boundary (U = {2}); with zero
        // drift the conditional factor is P(N < 0) = 1/2, so the asymptotic
        // is half the one-dimensional one, and it tracks the exact tail.
        let spec = example_model(0.5, 0.5, 1.5, 0.0);
        let uni = scalar_model(1.5);
        for &u in &[4.0, 6.0] {
            let joint = endpoint_tail_asymptotic(&spec, u).unwrap();
            let single = endpoint_tail_asymptotic(&uni, u).unwrap();
            assert_relative_eq!(joint.value, 0.5 * single.value, max_relative = 1e-6);
        }
        let u = 8.0;
        let asym = endpoint_tail_asymptotic(&spec, u).unwrap();
        let exact = endpoint_tail_exact(&spec, u, &MvnOptions::relative(1e-4)).unwrap();
        let ratio = exact.value / asym.value;
        assert!((ratio - 1.0).abs() < 0.10, "boundary regime ratio {ratio}");
    }

    #[test]
    fn endpoint_tail_dimension_reduction_matches_univariate() {
        // a < ρ strictly: the 2-d asymptotic collapses to coordinate one.
        let spec2 = example_model(0.5, 0.2, 1.5, 0.0);
        let spec1 = scalar_model(1.5);
        for &u in &[3.0, 5.0, 8.0] {
            let a2 = endpoint_tail_asymptotic(&spec2, u).unwrap();
            let a1 = endpoint_tail_asymptotic(&spec1, u).unwrap();
            assert_relative_eq!(a2.value, a1.value, max_relative = 1e-10);
        }
    }

    #[test]
    fn endpoint_tail_joint_matches_exact_in_far_tail() {
        // J empty: asymptotic u^{-2} φ_Σ(u ã)/(λ₁λ₂) against the exact
        // bivariate tail. The relative gap measures ≈ 6.3/u² for this model
        // (Mills corrections plus cross terms), so the 10% band is reached
        // around tail ≈ 1e-16.
        let spec = example_model(0.5, 0.8, 1.5, 0.0);
        let d = d_of_t(&spec, 1.0).unwrap();
        let ratio_at = |log10_tail: f64| {
            let u = (2.0 * log10_tail * std::f64::consts::LN_10 / d).sqrt();
            let asym = endpoint_tail_asymptotic(&spec, u).unwrap();
            let exact = endpoint_tail_exact(&spec, u, &MvnOptions::default()).unwrap();
            exact.value / asym.value
        };
        let shallow = ratio_at(8.0);
        let deep = ratio_at(17.0);
        assert!((deep - 1.0).abs() < 0.10, "deep ratio {deep}");
        assert!((deep - 1.0).abs() < (shallow - 1.0).abs(), "{deep} vs {shallow}");
    }

    #[test]
    fn ruin_asymptotic_composes_c_and_tail() {
        let spec = example_model(-0.8, -0.5, 1.5, 0.0);
        let r = ruin_asymptotic(&spec, 6.0).unwrap();
        assert_relative_eq!(r.c, 4.0 / 3.0, epsilon = 1e-12);
        assert_eq!(r.p_asym, r.c * r.tail_asym.value);
        assert_eq!(r.p_refined.value, r.c * r.tail_exact.value);
        // dimension-reduction regime equals the univariate asymptotic
        let red = example_model(0.5, 0.2, 1.5, 0.0);
        let rr = ruin_asymptotic(&red, 6.0).unwrap();
        let uni = endpoint_tail_asymptotic(&scalar_model(1.5), 6.0).unwrap();
        assert_relative_eq!(rr.p_asym, uni.value, max_relative = 1e-10);
    }

    #[test]
    fn ruin_asymptotic_rejects_brownian() {
        let spec = ModelSpec::new(
            DMatrix::identity(2, 2),
            vec![VarianceFunction::Brownian, VarianceFunction::Brownian],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            1.0,
        )
        .unwrap();
        assert!(matches!(ruin_asymptotic(&spec, 5.0), Err(Error::AssumptionViolated(_))));
    }

    #[test]
    fn bounds_orthant_case() {
        // A = I, v(t) = t, c = 0, u = 0: lower = 1/4, upper = (1/4)/(1/4) = 1.
        let spec = ModelSpec::new(
            DMatrix::identity(2, 2),
            vec![VarianceFunction::Brownian, VarianceFunction::Brownian],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            1.0,
        )
        .unwrap();
        let b = bounds(&spec, &DVector::zeros(2)).unwrap();
        assert_relative_eq!(b.lower.value, 0.25, epsilon = 1e-12);
        assert_relative_eq!(b.upper.value, 1.0, epsilon = 1e-11);
    }

    #[test]
    fn bounds_brownian_mixed_drift() {
        // Nonnegative AᵀA; denominator equals the arcsine closed form at the
        // correlation of AᵀA.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 0.75f64.sqrt()]);
        let spec = ModelSpec::new(
            a.clone(),
            vec![VarianceFunction::Brownian, VarianceFunction::Brownian],
            vec![1.0, 1.0],
            vec![1.0, 1.0],
            1.0,
        )
        .unwrap();
        let u = DVector::from_vec(vec![1.0, 1.0]);
        let b = bounds(&spec, &u).unwrap();
        let ata = a.transpose() * &a;
        let corr = ata[(0, 1)] / (ata[(0, 0)] * ata[(1, 1)]).sqrt();
        let denom = 0.25 + libm::asin(corr) / (2.0 * std::f64::consts::PI);
        assert_relative_eq!(b.upper.value, b.lower.value / denom, max_relative = 1e-9);
        assert!(b.lower.value <= b.upper.value);
    }

    #[test]
    fn bounds_scalar_ratio_is_two() {
        let spec = ModelSpec::new(
            DMatrix::identity(1, 1),
            vec![VarianceFunction::Brownian],
            vec![0.0],
            vec![1.0],
            1.0,
        )
        .unwrap();
        let b = bounds(&spec, &DVector::from_element(1, 1.3)).unwrap();
        assert_relative_eq!(b.upper.value / b.lower.value, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn bounds_require_assumptions() {
        let spec = example_model(-0.8, -0.5, 1.5, 0.0);
        let err = bounds(&spec, &DVector::from_vec(vec![1.0, 1.0]));
        assert!(matches!(err, Err(Error::AssumptionViolated(_))));
    }

    #[test]
    fn g_function_zero_without_drift() {
        let spec = example_model(0.5, 0.8, 1.5, 0.0);
        let g = GFunction::new(&spec);
        assert_eq!(g.eval(0.5).unwrap(), 0.0);
        assert_eq!(g.eval(1.0).unwrap(), 0.0);
    }

    #[test]
    fn g_function_positive_drift() {
        let spec = example_model(0.5, 0.8, 1.5, 0.4);
        let g = GFunction::new(&spec);
        assert!(g.eval(1.0).unwrap() > 0.0);
        let curve = diagnostic_log_bound_curve(&spec, 3.0, &[0.5, 0.75, 1.0]).unwrap();
        assert_eq!(curve.len(), 3);
        // D decreasing pushes the log-bound up toward the horizon.
        assert!(curve[2].1 > curve[0].1);
    }

    #[test]
    fn report_assembles_everything() {
        let spec = example_model(-0.8, -0.5, 1.5, 0.0);
        let rep = report(&spec, 8.0, &[0.0, 1.0, 10.0]).unwrap();
        assert_relative_eq!(rep.c, 4.0 / 3.0, epsilon = 1e-12);
        assert!(rep.d_dot_horizon < 0.0);
        assert_eq!(rep.q_diag.len(), 2);
        let curve = rep.c_of_l.as_ref().unwrap();
        assert_eq!(curve.len(), 3);
        assert_relative_eq!(curve[0].1, 1.0, epsilon = 1e-13);
        assert!(rep.bounds.is_none(), "bounds hypotheses do not hold for this model");
        assert!(rep.log_p_ruin_asym.is_finite());
        let json = serde_json::to_value(&rep).unwrap();
        assert!(json.get("qp_at_t").unwrap().get("I").is_some());
    }
}
