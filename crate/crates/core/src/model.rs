//! Risk-model specification: variance functions, covariance structure and
//! assumption validation.
//!
//! A model is `X(t) = A Z(t)` where the coordinates of `Z` are independent
//! centered Gaussian processes with stationary increments, each determined by
//! its variance function `v_i(t) = Var(Z_i(t))`. Stationary increments pin the
//! whole covariance: `Cov(Z_i(s), Z_i(t)) = (v_i(s) + v_i(t) - v_i(|s-t|))/2`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Default ceiling on the condition number of the mixing matrix `A`.
pub const DEFAULT_CONDITION_LIMIT: f64 = 1e12;

/// Stationary covariance kernel for the integrated-stationary family.
///
/// `Z_i(t) = ∫_0^t η(s) ds` with `η` stationary of covariance `R`; then
/// `v(t) = 2 ∫_0^t ∫_0^s R(w) dw ds`. Both kernels below are continuous and
/// strictly positive, and admit closed forms for `v` and `v̇`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StationaryKernel {
    /// `R(w) = sigma2 · exp(-w/scale)`
    Exponential { sigma2: f64, scale: f64 },
    /// `R(w) = sigma2 · exp(-(w/scale)^2)`
    Gaussian { sigma2: f64, scale: f64 },
}

impl StationaryKernel {
    pub fn eval(&self, w: f64) -> f64 {
        match *self {
            StationaryKernel::Exponential { sigma2, scale } => sigma2 * (-w / scale).exp(),
            StationaryKernel::Gaussian { sigma2, scale } => {
                let x = w / scale;
                sigma2 * (-x * x).exp()
            }
        }
    }

    /// `v(t) = 2 ∫_0^t ∫_0^s R(w) dw ds` in closed form.
    fn variance(&self, t: f64) -> f64 {
        match *self {
            StationaryKernel::Exponential { sigma2, scale } => {
                // 2 σ² ℓ (t - ℓ(1 - e^{-t/ℓ}))
                2.0 * sigma2 * scale * (t - scale * (-(-t / scale).exp_m1()))
            }
            StationaryKernel::Gaussian { sigma2, scale } => {
                // σ² (√π ℓ t erf(t/ℓ) + ℓ² (e^{-(t/ℓ)²} - 1))
                let x = t / scale;
                sigma2
                    * (core::f64::consts::PI.sqrt() * scale * t * libm::erf(x)
                        + scale * scale * (-x * x).exp_m1())
            }
        }
    }

    /// `v̇(t) = 2 ∫_0^t R(w) dw` in closed form.
    fn variance_deriv(&self, t: f64) -> f64 {
        match *self {
            StationaryKernel::Exponential { sigma2, scale } => {
                2.0 * sigma2 * scale * (-(-t / scale).exp_m1())
            }
            StationaryKernel::Gaussian { sigma2, scale } => {
                sigma2 * scale * core::f64::consts::PI.sqrt() * libm::erf(t / scale)
            }
        }
    }

    fn check_params(&self) -> Result<()> {
        let (sigma2, scale) = match *self {
            StationaryKernel::Exponential { sigma2, scale }
            | StationaryKernel::Gaussian { sigma2, scale } => (sigma2, scale),
        };
        if !(sigma2 > 0.0 && sigma2.is_finite()) || !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter(
                "stationary kernel requires sigma2 > 0 and scale > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Variance function of one coordinate process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VarianceFunction {
    /// `v(t) = t^alpha` with `alpha ∈ (1, 2)` (fractional Brownian motion,
    /// Hurst parameter `alpha/2`).
    Fbm { alpha: f64 },
    /// `v(t) = t` (standard Brownian motion).
    Brownian,
    /// Integrated stationary process, see [`StationaryKernel`].
    IntegratedStationary { kernel: StationaryKernel },
    /// Monotone cubic interpolation of sampled values. The first knot must be
    /// `(0, 0)` and both knots and values must be strictly increasing.
    /// Evaluation outside the knot range clamps to the endpoints.
    Table { times: Vec<f64>, values: Vec<f64> },
}

impl VarianceFunction {
    /// `v(t)`. Negative arguments clamp to zero.
    pub fn value(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        match self {
            VarianceFunction::Fbm { alpha } => t.powf(*alpha),
            VarianceFunction::Brownian => t,
            VarianceFunction::IntegratedStationary { kernel } => kernel.variance(t),
            VarianceFunction::Table { times, values } => pchip_eval(times, values, t).0,
        }
    }

    /// `v̇(t)`.
    pub fn deriv(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        match self {
            VarianceFunction::Fbm { alpha } => alpha * t.powf(alpha - 1.0),
            VarianceFunction::Brownian => 1.0,
            VarianceFunction::IntegratedStationary { kernel } => kernel.variance_deriv(t),
            VarianceFunction::Table { times, values } => pchip_eval(times, values, t).1,
        }
    }

    fn check_params(&self) -> Result<()> {
        match self {
            VarianceFunction::Fbm { alpha } => {
                if !(*alpha > 1.0 && *alpha < 2.0) {
                    return Err(Error::InvalidParameter(format!(
                        "fbm alpha must lie in (1, 2), got {alpha}"
                    )));
                }
            }
            VarianceFunction::Brownian => {}
            VarianceFunction::IntegratedStationary { kernel } => kernel.check_params()?,
            VarianceFunction::Table { times, values } => {
                if times.len() != values.len() || times.len() < 2 {
                    return Err(Error::InvalidParameter(
                        "table needs at least two knots with matching lengths".into(),
                    ));
                }
                if times[0] != 0.0 || values[0] != 0.0 {
                    return Err(Error::InvalidParameter(
                        "table must start at the knot (0, 0)".into(),
                    ));
                }
                for w in times.windows(2) {
                    if !(w[1] > w[0]) {
                        return Err(Error::InvalidParameter(
                            "table times must be strictly increasing".into(),
                        ));
                    }
                }
                for w in values.windows(2) {
                    if !(w[1] > w[0]) {
                        return Err(Error::InvalidParameter(
                            "table values must be strictly increasing".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Fritsch-Carlson monotone cubic Hermite interpolation.
///
/// Returns `(value, derivative)` at `t`, clamped to the knot range.
fn pchip_eval(times: &[f64], values: &[f64], t: f64) -> (f64, f64) {
    let n = times.len();
    debug_assert!(n >= 2);
    let t = t.clamp(times[0], times[n - 1]);
    let slopes = pchip_slopes(times, values);
    // locate the interval
    let k = match times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
        Ok(i) => i.min(n - 2),
        Err(i) => i.saturating_sub(1).min(n - 2),
    };
    let h = times[k + 1] - times[k];
    let s = (t - times[k]) / h;
    let (s2, s3) = (s * s, s * s * s);
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    let value =
        values[k] * h00 + h * slopes[k] * h10 + values[k + 1] * h01 + h * slopes[k + 1] * h11;
    let d00 = 6.0 * s2 - 6.0 * s;
    let d10 = 3.0 * s2 - 4.0 * s + 1.0;
    let d01 = -6.0 * s2 + 6.0 * s;
    let d11 = 3.0 * s2 - 2.0 * s;
    let deriv =
        (values[k] * d00 + h * slopes[k] * d10 + values[k + 1] * d01 + h * slopes[k + 1] * d11) / h;
    (value, deriv)
}

fn pchip_slopes(times: &[f64], values: &[f64]) -> Vec<f64> {
    let n = times.len();
    let h: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (values[i + 1] - values[i]) / h[i]).collect();
    let mut d = vec![0.0; n];
    if n == 2 {
        d[0] = delta[0];
        d[1] = delta[0];
        return d;
    }
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] <= 0.0 {
            d[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    d[0] = edge_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = edge_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

fn edge_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d * d0 <= 0.0 {
        0.0
    } else if d0 * d1 < 0.0 && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

/// Wire format of [`ModelSpec`]; matrix rows are the outer arrays.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
struct RawModelSpec {
    d: usize,
    A: Vec<Vec<f64>>,
    v: Vec<VarianceFunction>,
    c: Vec<f64>,
    a: Vec<f64>,
    T: f64,
}

/// Full risk-model specification. Immutable after construction; all
/// operations on it are pure, so it can be shared freely across threads.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RawModelSpec", into = "RawModelSpec")]
pub struct ModelSpec {
    dim: usize,
    mixing: DMatrix<f64>,
    variances: Vec<VarianceFunction>,
    drift: DVector<f64>,
    direction: DVector<f64>,
    horizon: f64,
}

impl TryFrom<RawModelSpec> for ModelSpec {
    type Error = Error;
    fn try_from(raw: RawModelSpec) -> Result<Self> {
        let d = raw.d;
        if raw.A.len() != d || raw.A.iter().any(|row| row.len() != d) {
            return Err(Error::MalformedSpec {
                pointer: "/A".into(),
                message: format!("expected a {d}x{d} matrix"),
            });
        }
        let mixing = DMatrix::from_fn(d, d, |i, j| raw.A[i][j]);
        ModelSpec::new(mixing, raw.v, raw.c, raw.a, raw.T)
    }
}

impl From<ModelSpec> for RawModelSpec {
    fn from(spec: ModelSpec) -> Self {
        RawModelSpec {
            d: spec.dim,
            A: (0..spec.dim)
                .map(|i| (0..spec.dim).map(|j| spec.mixing[(i, j)]).collect())
                .collect(),
            v: spec.variances,
            c: spec.drift.iter().copied().collect(),
            a: spec.direction.iter().copied().collect(),
            T: spec.horizon,
        }
    }
}

impl ModelSpec {
    pub fn new(
        mixing: DMatrix<f64>,
        variances: Vec<VarianceFunction>,
        drift: Vec<f64>,
        direction: Vec<f64>,
        horizon: f64,
    ) -> Result<Self> {
        Self::with_condition_limit(
            mixing,
            variances,
            drift,
            direction,
            horizon,
            DEFAULT_CONDITION_LIMIT,
        )
    }

    pub fn with_condition_limit(
        mixing: DMatrix<f64>,
        variances: Vec<VarianceFunction>,
        drift: Vec<f64>,
        direction: Vec<f64>,
        horizon: f64,
        condition_limit: f64,
    ) -> Result<Self> {
        let d = mixing.nrows();
        if d == 0 || mixing.ncols() != d {
            return Err(Error::DimensionMismatch(
                "mixing matrix must be square and non-empty".into(),
            ));
        }
        if variances.len() != d || drift.len() != d || direction.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "expected {d} variance functions, drift and direction entries"
            )));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        if !direction.iter().any(|&ai| ai > 0.0) {
            return Err(Error::InvalidDirection);
        }
        let cond = linalg::condition_number(&mixing);
        if !cond.is_finite() || cond > condition_limit {
            return Err(Error::SingularModel(format!(
                "mixing matrix condition number {cond:.3e} exceeds limit {condition_limit:.1e}"
            )));
        }
        for (i, v) in variances.iter().enumerate() {
            v.check_params().map_err(|e| {
                Error::InvalidParameter(format!("variance function {i}: {e}"))
            })?;
            if let VarianceFunction::Table { times, .. } = v {
                if *times.last().unwrap() < horizon {
                    return Err(Error::InvalidParameter(format!(
                        "variance table {i} ends before the horizon T={horizon}"
                    )));
                }
            }
        }
        Ok(ModelSpec {
            dim: d,
            mixing,
            variances,
            drift: DVector::from_vec(drift),
            direction: DVector::from_vec(direction),
            horizon,
        })
    }

    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::MalformedSpec {
            pointer: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model spec serialization cannot fail")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mixing(&self) -> &DMatrix<f64> {
        &self.mixing
    }

    pub fn variance(&self, i: usize) -> &VarianceFunction {
        &self.variances[i]
    }

    pub fn variances(&self) -> &[VarianceFunction] {
        &self.variances
    }

    pub fn drift(&self) -> &DVector<f64> {
        &self.drift
    }

    pub fn direction(&self) -> &DVector<f64> {
        &self.direction
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Variance vector `v(t) = (v_1(t), ..., v_d(t))`.
    pub fn variance_vector(&self, t: f64) -> DVector<f64> {
        DVector::from_fn(self.dim, |i, _| self.variances[i].value(t))
    }

    /// `Σ(t) = A diag(v(t)) Aᵀ`, symmetrized to machine precision.
    pub fn covariance_at(&self, t: f64) -> Result<DMatrix<f64>> {
        if !(t > 0.0) {
            return Err(Error::NonPositiveTime(t));
        }
        let v = self.variance_vector(t);
        if v.iter().any(|&vi| !(vi > 0.0)) {
            return Err(Error::SingularModel(format!(
                "some variance function vanishes at t={t}"
            )));
        }
        let mut sigma = &self.mixing * DMatrix::from_diagonal(&v) * self.mixing.transpose();
        linalg::symmetrize(&mut sigma);
        Ok(sigma)
    }

    /// `ρ_i(s,t) = (v_i(s) + v_i(t) - v_i(|s-t|)) / 2`.
    pub fn cross_covariance(&self, i: usize, s: f64, t: f64) -> Result<f64> {
        if i >= self.dim {
            return Err(Error::DimensionMismatch(format!(
                "coordinate {i} out of range for d={}",
                self.dim
            )));
        }
        for x in [s, t] {
            if !(0.0..=self.horizon).contains(&x) {
                return Err(Error::InvalidParameter(format!(
                    "time {x} outside [0, {}]",
                    self.horizon
                )));
            }
        }
        let v = &self.variances[i];
        Ok(0.5 * (v.value(s) + v.value(t) - v.value((s - t).abs())))
    }

    /// Covariance of the grid-restricted vector `(Z_i(t_j))`, laid out
    /// coordinate-major: entry `(i*m + j, i'*m + j')`. Cross-coordinate
    /// blocks are zero because the coordinates of `Z` are independent.
    pub fn path_covariance(&self, grid: &[f64]) -> Result<DMatrix<f64>> {
        self.check_grid(grid)?;
        let m = grid.len();
        let mut cov = DMatrix::zeros(self.dim * m, self.dim * m);
        for i in 0..self.dim {
            let v = &self.variances[i];
            for j in 0..m {
                for k in j..m {
                    let r = 0.5
                        * (v.value(grid[j]) + v.value(grid[k]) - v.value((grid[j] - grid[k]).abs()));
                    cov[(i * m + j, i * m + k)] = r;
                    cov[(i * m + k, i * m + j)] = r;
                }
            }
        }
        Ok(cov)
    }

    pub(crate) fn check_grid(&self, grid: &[f64]) -> Result<()> {
        if grid.is_empty() {
            return Err(Error::InvalidParameter("empty time grid".into()));
        }
        for (pos, w) in grid.windows(2).enumerate() {
            if w[1] == w[0] {
                return Err(Error::DegenerateGrid(pos + 1));
            }
            if w[1] < w[0] {
                return Err(Error::GridNotSorted(pos + 1));
            }
        }
        if !(grid[0] > 0.0) {
            return Err(Error::NonPositiveTime(grid[0]));
        }
        if *grid.last().unwrap() > self.horizon * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "grid exceeds the horizon T={}",
                self.horizon
            )));
        }
        Ok(())
    }

    /// Check the hypotheses of the exact asymptotics and of the uniform bounds.
    pub fn validate(&self) -> AssumptionReport {
        AssumptionReport {
            exact: self.check_exact(),
            bounds: self.check_bounds(),
        }
    }

    fn check_exact(&self) -> CheckResult {
        for (i, v) in self.variances.iter().enumerate() {
            // B0: v ∈ C¹, strictly increasing, v(0) = 0. All kinds are C¹ by
            // construction; increase and the zero at the origin are enforced
            // analytically for the closed-form kinds and at construction for
            // tables.
            if v.value(0.0).abs() > 1e-12 {
                return CheckResult::fail(format!("coordinate {i}: B0 fails, v(0) != 0"));
            }
            if let VarianceFunction::IntegratedStationary { kernel } = v {
                // The model family requires a strictly positive kernel; check
                // on a sample grid.
                for k in 0..=64 {
                    let w = self.horizon * k as f64 / 64.0;
                    if !(kernel.eval(w) > 0.0) {
                        return CheckResult::fail(format!(
                            "coordinate {i}: stationary kernel not strictly positive at w={w}"
                        ));
                    }
                }
            }
            // BI: v̇(T) > 0.
            if !(v.deriv(self.horizon) > 0.0) {
                return CheckResult::fail(format!(
                    "coordinate {i}: BI fails, v'(T) = {} is not positive",
                    v.deriv(self.horizon)
                ));
            }
            // BII: v(t) = o(t) as t → 0. Analytic for the known kinds,
            // numeric on a geometric grid for tables.
            match v {
                VarianceFunction::Fbm { .. } | VarianceFunction::IntegratedStationary { .. } => {}
                VarianceFunction::Brownian => {
                    return CheckResult::fail(format!(
                        "coordinate {i}: BII fails, v(t) = t is not o(t)"
                    ));
                }
                VarianceFunction::Table { .. } => {
                    if let Some(msg) = self.table_bii_violation(i, v) {
                        return CheckResult::fail(msg);
                    }
                }
            }
        }
        CheckResult::pass()
    }

    /// Numeric BII check: `v(t_k)/t_k` must decrease along `t_k = T·2^{-k}`,
    /// `k = 10..=20`, and end below `0.1 · v(T)/T`.
    fn table_bii_violation(&self, i: usize, v: &VarianceFunction) -> Option<String> {
        let t_ref = self.horizon;
        let ratio_ref = v.value(t_ref) / t_ref;
        let mut prev = f64::INFINITY;
        let mut last = f64::INFINITY;
        for k in 10..=20 {
            let t = t_ref * 2f64.powi(-k);
            let r = v.value(t) / t;
            if r > prev * (1.0 + 1e-9) {
                return Some(format!(
                    "coordinate {i}: BII fails numerically, v(t)/t increases near 0"
                ));
            }
            prev = r;
            last = r;
        }
        if !(last < 0.1 * ratio_ref) {
            return Some(format!(
                "coordinate {i}: BII fails numerically, v(t)/t does not vanish near 0"
            ));
        }
        None
    }

    fn check_bounds(&self) -> CheckResult {
        // Identical variance functions, by kind-and-parameter equality.
        if self.variances.windows(2).any(|w| w[0] != w[1]) {
            return CheckResult::fail("variance functions are not identical across coordinates");
        }
        // Convexity of the common v: analytic for the closed-form kinds,
        // second differences on a 256-point grid for tables.
        let v = &self.variances[0];
        if let VarianceFunction::Table { .. } = v {
            let n = 256;
            let h = self.horizon / n as f64;
            let scale = v.value(self.horizon).abs().max(1.0);
            for k in 1..n {
                let t = k as f64 * h;
                let second = v.value(t - h) - 2.0 * v.value(t) + v.value(t + h);
                if second < -1e-8 * scale {
                    return CheckResult::fail(format!("v is not convex near t={t}"));
                }
            }
        }
        // (AᵀA)_{ij} ≥ 0.
        let ata = self.mixing.transpose() * &self.mixing;
        let scale = ata.abs().max();
        for i in 0..self.dim {
            for j in 0..self.dim {
                if ata[(i, j)] < -1e-12 * scale {
                    return CheckResult::fail(format!(
                        "(AᵀA)[{i},{j}] = {} is negative",
                        ata[(i, j)]
                    ));
                }
            }
        }
        // c ≥ 0.
        if let Some(i) = self.drift.iter().position(|&ci| ci < 0.0) {
            return CheckResult::fail(format!("drift c[{i}] = {} is negative", self.drift[i]));
        }
        CheckResult::pass()
    }
}

/// Outcome of one assumption check with the first violated condition.
#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub ok: bool,
    pub first_violation: Option<String>,
}

impl CheckResult {
    fn pass() -> Self {
        CheckResult { ok: true, first_violation: None }
    }

    fn fail(msg: impl Into<String>) -> Self {
        CheckResult { ok: false, first_violation: Some(msg.into()) }
    }
}

/// Assumption flags, one per downstream result.
///
/// `exact` gates the exact asymptotics (B0, BI, BII per coordinate);
/// `bounds` gates the uniform bounds (one common convex variance
/// function, `(AᵀA)_{ij} ≥ 0`, `c ≥ 0`).
#[derive(Clone, Debug, Serialize)]
pub struct AssumptionReport {
    pub exact: CheckResult,
    pub bounds: CheckResult,
}

impl AssumptionReport {
    pub fn exact_ok(&self) -> bool {
        self.exact.ok
    }

    pub fn bounds_ok(&self) -> bool {
        self.bounds.ok
    }
}
