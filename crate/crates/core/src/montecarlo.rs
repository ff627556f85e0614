//! Monte Carlo estimation of the simultaneous ruin probability on a
//! discretized time grid.
//!
//! Paths of `Z` are sampled exactly at the grid points (Cholesky of the
//! grid covariance per coordinate; an O(m) forward/bridge plan for Brownian
//! coordinates), `X = A Z` is formed per time point, and the ruin indicator
//! `∃ j : X(t_j) - c t_j > u a` is averaged.
//!
//! Reproducibility contract: every (path, coordinate) pair draws from its
//! own counter-based stream `ChaCha8(seed).stream(path·d + coord)`, so the
//! estimate is a pure function of `(spec, u, config)` — independent of
//! thread count and batch layout. Grid points are sampled in a coarse-first
//! order, which makes nested grids (m and 2m) share the coarse path values
//! under a common seed; the discrete ruin sets are then nested per path.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussprob::{normal, MvnOptions};
use crate::linalg;
use crate::model::{ModelSpec, VarianceFunction};
use crate::qp;

/// Optional endpoint-refined grid: adds the points `T - k·l/u²`,
/// `k = 1..=points`, to the uniform backbone. The ruin event concentrates
/// in a window of width `O(1/u²)` before the horizon, which uniform grids
/// under-resolve at large `u`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RefineConfig {
    /// Number of extra points.
    pub points: usize,
    /// Window unit `l`; the refined points span `[T - points·l/u², T)`.
    pub l: f64,
}

/// Monte Carlo configuration.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct McConfig {
    pub n_samples: usize,
    /// Uniform grid size `m` on `(0, T]`.
    pub grid_points: usize,
    pub seed: u64,
    /// Work-splitting granularity; does not affect the estimate.
    pub batches: usize,
    pub importance_sampling: bool,
    pub confidence_level: f64,
    pub refine: Option<RefineConfig>,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            n_samples: 100_000,
            grid_points: 256,
            seed: 1,
            batches: 64,
            importance_sampling: false,
            confidence_level: 0.99,
            refine: None,
        }
    }
}

impl McConfig {
    fn check(&self) -> Result<()> {
        if self.n_samples < 100 {
            return Err(Error::InvalidParameter(format!(
                "n_samples must be at least 100, got {}",
                self.n_samples
            )));
        }
        if self.grid_points < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid_points must be at least 2, got {}",
                self.grid_points
            )));
        }
        if !(self.confidence_level > 0.0 && self.confidence_level < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "confidence level must lie in (0,1), got {}",
                self.confidence_level
            )));
        }
        if self.batches == 0 {
            return Err(Error::InvalidParameter("batches must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum McMethod {
    Crude,
    Importance,
}

/// A ruin-probability estimate with its confidence interval.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct McEstimate {
    pub p_hat: f64,
    pub std_err: f64,
    pub ci: (f64, f64),
    /// Samples used.
    pub n: usize,
    /// Total grid points (uniform backbone plus refinement).
    pub m: usize,
    pub method: McMethod,
    /// Paths that hit the ruin set.
    pub hits: u64,
    /// Effective sample size of the weighted ruin indicators (IS only).
    pub ess: Option<f64>,
    /// All-hit / no-hit (crude) or effective sample size below 1% (IS).
    pub degenerate: bool,
}

/// Uniform grid `t_j = T·j/m`, `j = 1..=m`.
pub fn uniform_grid(spec: &ModelSpec, m: usize) -> Vec<f64> {
    let t = spec.horizon();
    (1..=m).map(|j| t * j as f64 / m as f64).collect()
}

/// Uniform backbone plus endpoint refinement for level `u`.
pub fn refined_grid(spec: &ModelSpec, m: usize, u: f64, refine: &RefineConfig) -> Vec<f64> {
    let t = spec.horizon();
    let mut grid = uniform_grid(spec, m);
    if u > 0.0 && refine.points > 0 {
        let delta = refine.l / (u * u);
        for k in 1..=refine.points {
            let tk = t - k as f64 * delta;
            if tk <= 0.0 {
                break;
            }
            grid.push(tk);
        }
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        grid.dedup_by(|a, b| (*a - *b).abs() < t * 1e-12);
    }
    grid
}

/// Coarse-first sampling order: the embedded half-size grid (even 1-based
/// positions) recursively first, then the remaining points in increasing
/// order. For nested uniform grids (m, 2m) the first m entries of the
/// 2m-order are exactly the m-grid in its own order.
fn canonical_order(n: usize) -> Vec<usize> {
    if n <= 1 || n % 2 == 1 {
        return (0..n).collect();
    }
    let half = canonical_order(n / 2);
    let mut out: Vec<usize> = half.into_iter().map(|i| 2 * i + 1).collect();
    out.extend((0..n).step_by(2));
    out
}

enum CoordSampler {
    /// Forward/bridge plan for Brownian coordinates; one draw per point.
    Markov(Vec<MarkovStep>),
    /// Packed row-major lower-triangular Cholesky factor of the permuted
    /// grid covariance; row `s` lives at offset `s(s+1)/2`.
    Factor(Vec<f64>),
}

struct MarkovStep {
    /// Index into the time grid to fill.
    target: usize,
    /// Left neighbour (`None` anchors at `Z(0) = 0`).
    left: Option<usize>,
    w_left: f64,
    /// Right neighbour (`None` for forward extension).
    right: Option<usize>,
    w_right: f64,
    sd: f64,
}

/// Exact sampler for the grid-restricted path vector of one model.
pub struct PathSampler {
    times: Vec<f64>,
    order: Vec<usize>,
    coords: Vec<CoordSampler>,
    mixing: Vec<f64>,
    dim: usize,
}

impl PathSampler {
    pub fn new(spec: &ModelSpec, grid: &[f64]) -> Result<Self> {
        spec.check_grid(grid)?;
        let m = grid.len();
        let order = canonical_order(m);
        let mut coords = Vec::with_capacity(spec.dim());
        for i in 0..spec.dim() {
            coords.push(match spec.variance(i) {
                VarianceFunction::Brownian => CoordSampler::Markov(markov_plan(grid, &order)),
                v => CoordSampler::Factor(packed_factor(v, grid, &order)?),
            });
        }
        let d = spec.dim();
        let mixing: Vec<f64> = (0..d)
            .flat_map(|r| (0..d).map(move |c| (r, c)))
            .map(|(r, c)| spec.mixing()[(r, c)])
            .collect();
        Ok(PathSampler { times: grid.to_vec(), order, coords, mixing, dim: d })
    }

    pub fn grid(&self) -> &[f64] {
        &self.times
    }

    /// Fill `z` (coordinate-major, `d·m`) with one exact draw of the grid
    /// vector for the given path index, under the per-(path, coordinate)
    /// stream contract.
    fn sample_z_into(&self, base: &ChaCha8Rng, path: u64, z: &mut [f64], scratch: &mut [f64]) {
        let m = self.times.len();
        for (i, coord) in self.coords.iter().enumerate() {
            let mut rng = base.clone();
            rng.set_stream(path * self.dim as u64 + i as u64);
            let block = &mut z[i * m..(i + 1) * m];
            match coord {
                CoordSampler::Markov(plan) => {
                    for step in plan {
                        let noise: f64 = rng.sample(StandardNormal);
                        let mut mean = 0.0;
                        if let Some(l) = step.left {
                            mean += step.w_left * block[l];
                        }
                        if let Some(r) = step.right {
                            mean += step.w_right * block[r];
                        }
                        block[step.target] = mean + step.sd * noise;
                    }
                }
                CoordSampler::Factor(packed) => {
                    for x in scratch.iter_mut().take(m) {
                        *x = rng.sample(StandardNormal);
                    }
                    let mut off = 0;
                    for s in 0..m {
                        let row = &packed[off..off + s + 1];
                        let mut acc = 0.0;
                        for (l, &xi) in row.iter().zip(scratch.iter()) {
                            acc += l * xi;
                        }
                        block[self.order[s]] = acc;
                        off += s + 1;
                    }
                }
            }
        }
    }

    /// `X_i(t_j)` assembled from the `Z` buffer.
    #[inline]
    fn x_at(&self, z: &[f64], i: usize, j: usize) -> f64 {
        let m = self.times.len();
        let mut acc = 0.0;
        for k in 0..self.dim {
            acc += self.mixing[i * self.dim + k] * z[k * m + j];
        }
        acc
    }
}

fn markov_plan(grid: &[f64], order: &[usize]) -> Vec<MarkovStep> {
    let mut sampled: Vec<usize> = Vec::with_capacity(grid.len());
    let mut plan = Vec::with_capacity(grid.len());
    for &target in order {
        let pos = sampled.partition_point(|&s| s < target);
        let left = if pos > 0 { Some(sampled[pos - 1]) } else { None };
        let right = sampled.get(pos).copied();
        let t = grid[target];
        let s = left.map_or(0.0, |l| grid[l]);
        let step = match right {
            None => MarkovStep {
                target,
                left,
                w_left: 1.0,
                right: None,
                w_right: 0.0,
                sd: (t - s).sqrt(),
            },
            Some(r) => {
                let u = grid[r];
                MarkovStep {
                    target,
                    left,
                    w_left: (u - t) / (u - s),
                    right: Some(r),
                    w_right: (t - s) / (u - s),
                    sd: ((t - s) * (u - t) / (u - s)).sqrt(),
                }
            }
        };
        plan.push(step);
        sampled.insert(pos, target);
    }
    plan
}

fn packed_factor(v: &VarianceFunction, grid: &[f64], order: &[usize]) -> Result<Vec<f64>> {
    let m = grid.len();
    let cov = DMatrix::from_fn(m, m, |r, c| {
        let (s, t) = (grid[order[r]], grid[order[c]]);
        0.5 * (v.value(s) + v.value(t) - v.value((s - t).abs()))
    });
    let l = linalg::cholesky_with_jitter(&cov)?.l();
    let mut packed = Vec::with_capacity(m * (m + 1) / 2);
    for s in 0..m {
        for c in 0..=s {
            packed.push(l[(s, c)]);
        }
    }
    Ok(packed)
}

/// Draw `n` paths of `X` on the grid; row = path, columns coordinate-major
/// (`i·m + j` holds `X_i(t_j)`). Intended for validation at test scale.
pub fn sample_paths(spec: &ModelSpec, grid: &[f64], n: usize, seed: u64) -> Result<DMatrix<f64>> {
    let sampler = PathSampler::new(spec, grid)?;
    let m = grid.len();
    let d = spec.dim();
    let base = ChaCha8Rng::seed_from_u64(seed);
    let mut out = DMatrix::zeros(n, d * m);
    let mut z = vec![0.0; d * m];
    let mut scratch = vec![0.0; m];
    for path in 0..n {
        sampler.sample_z_into(&base, path as u64, &mut z, &mut scratch);
        for i in 0..d {
            for j in 0..m {
                out[(path, i * m + j)] = sampler.x_at(&z, i, j);
            }
        }
    }
    Ok(out)
}

/// Mean shift toward the most likely ruin configuration: the conditional
/// mean of the grid vector given `X(T) = u ã(T) + cT`, with the exact
/// likelihood-ratio coefficients of the shifted measure.
struct ImportanceShift {
    /// Shift per (coordinate, grid point), coordinate-major.
    mu: Vec<f64>,
    /// `β_i = z*_i / v_i(T)`; the weight is `exp(-⟨β, Z'(T)⟩ + ½Σβ²v(T))`.
    beta: Vec<f64>,
    half_quad: f64,
}

impl ImportanceShift {
    fn new(spec: &ModelSpec, grid: &[f64], u: f64) -> Result<Self> {
        let t = spec.horizon();
        let sigma = spec.covariance_at(t)?;
        let sol = qp::solve_pi(&sigma, spec.direction())?;
        let endpoint = sol.a_tilde_vector() * u + spec.drift() * t;
        let z_star = spec
            .mixing()
            .clone()
            .lu()
            .solve(&endpoint)
            .ok_or_else(|| Error::SingularModel("mixing matrix not invertible".into()))?;
        let m = grid.len();
        let d = spec.dim();
        let mut mu = vec![0.0; d * m];
        let mut beta = vec![0.0; d];
        let mut half_quad = 0.0;
        for i in 0..d {
            let v_t = spec.variance(i).value(t);
            beta[i] = z_star[i] / v_t;
            half_quad += 0.5 * z_star[i] * z_star[i] / v_t;
            for (j, &tj) in grid.iter().enumerate() {
                let rho = spec.cross_covariance(i, tj, t)?;
                mu[i * m + j] = rho / v_t * z_star[i];
            }
        }
        Ok(ImportanceShift { mu, beta, half_quad })
    }

    fn zero(spec: &ModelSpec, grid: &[f64]) -> Self {
        ImportanceShift {
            mu: vec![0.0; spec.dim() * grid.len()],
            beta: vec![0.0; spec.dim()],
            half_quad: 0.0,
        }
    }

    /// Log likelihood ratio (unshifted over shifted law) at the already
    /// shifted sample `z`; only the endpoint block enters.
    fn log_weight(&self, z: &[f64], m: usize) -> f64 {
        let mut acc = self.half_quad;
        for (i, &b) in self.beta.iter().enumerate() {
            acc -= b * z[i * m + m - 1];
        }
        acc
    }
}

struct BatchAcc {
    hits: u64,
    sum_w: f64,
    sum_w2: f64,
}

/// Crude Monte Carlo estimate of `p_T(u a)`.
pub fn estimate_ruin(spec: &ModelSpec, u: f64, cfg: &McConfig) -> Result<McEstimate> {
    run_estimate(spec, u, cfg, false)
}

/// Mean-shift importance-sampling estimate of `p_T(u a)`; unbiased, with
/// the likelihood ratio computed exactly on the grid.
pub fn estimate_ruin_is(spec: &ModelSpec, u: f64, cfg: &McConfig) -> Result<McEstimate> {
    run_estimate(spec, u, cfg, true)
}

fn run_estimate(spec: &ModelSpec, u: f64, cfg: &McConfig, importance: bool) -> Result<McEstimate> {
    cfg.check()?;
    let grid = match &cfg.refine {
        Some(r) => refined_grid(spec, cfg.grid_points, u, r),
        None => uniform_grid(spec, cfg.grid_points),
    };
    let sampler = PathSampler::new(spec, &grid)?;
    let shift = if importance {
        ImportanceShift::new(spec, &grid, u)?
    } else {
        ImportanceShift::zero(spec, &grid)
    };

    let n = cfg.n_samples;
    let d = spec.dim();
    let m = grid.len();
    let base = ChaCha8Rng::seed_from_u64(cfg.seed);
    let drift: Vec<f64> = spec.drift().iter().copied().collect();
    let dir: Vec<f64> = spec.direction().iter().copied().collect();

    let batches = cfg.batches.min(n);
    // Per-batch partials are folded in batch order afterwards, so the merge
    // does not depend on scheduling.
    let partials: Vec<BatchAcc> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let lo = b * n / batches;
            let hi = (b + 1) * n / batches;
            let mut z = vec![0.0; d * m];
            let mut scratch = vec![0.0; m];
            let mut acc = BatchAcc { hits: 0, sum_w: 0.0, sum_w2: 0.0 };
            for path in lo..hi {
                sampler.sample_z_into(&base, path as u64, &mut z, &mut scratch);
                if importance {
                    for (zi, mi) in z.iter_mut().zip(shift.mu.iter()) {
                        *zi += mi;
                    }
                }
                let mut hit = false;
                'time: for (j, &tj) in grid.iter().enumerate() {
                    for i in 0..d {
                        if sampler.x_at(&z, i, j) - drift[i] * tj <= u * dir[i] {
                            continue 'time;
                        }
                    }
                    hit = true;
                    break;
                }
                if hit {
                    acc.hits += 1;
                    if importance {
                        let w = shift.log_weight(&z, m).exp();
                        acc.sum_w += w;
                        acc.sum_w2 += w * w;
                    }
                }
            }
            acc
        })
        .collect();

    let mut hits = 0u64;
    let mut sum_w = 0.0;
    let mut sum_w2 = 0.0;
    for p in &partials {
        hits += p.hits;
        sum_w += p.sum_w;
        sum_w2 += p.sum_w2;
    }

    let nf = n as f64;
    let z_crit = normal::inv_phi(0.5 * (1.0 + cfg.confidence_level));
    if !importance {
        let p_hat = hits as f64 / nf;
        let std_err = (p_hat * (1.0 - p_hat) / nf).sqrt();
        // Wilson interval when the normal approximation runs out of counts.
        let ci = if (p_hat * nf) < 10.0 || ((1.0 - p_hat) * nf) < 10.0 {
            wilson_interval(hits as f64, nf, z_crit)
        } else {
            ((p_hat - z_crit * std_err).max(0.0), (p_hat + z_crit * std_err).min(1.0))
        };
        Ok(McEstimate {
            p_hat,
            std_err,
            ci,
            n,
            m,
            method: McMethod::Crude,
            hits,
            ess: None,
            degenerate: hits == 0 || hits == n as u64,
        })
    } else {
        let p_hat = sum_w / nf;
        // Sample variance of the weighted indicators (zeros included).
        let var = (sum_w2 - nf * p_hat * p_hat).max(0.0) / (nf - 1.0);
        let std_err = (var / nf).sqrt();
        let ci = ((p_hat - z_crit * std_err).max(0.0), p_hat + z_crit * std_err);
        let ess = if sum_w2 > 0.0 { sum_w * sum_w / sum_w2 } else { 0.0 };
        Ok(McEstimate {
            p_hat,
            std_err,
            ci,
            n,
            m,
            method: McMethod::Importance,
            hits,
            ess: Some(ess),
            degenerate: ess < 0.01 * nf,
        })
    }
}

fn wilson_interval(successes: f64, n: f64, z: f64) -> (f64, f64) {
    let p = successes / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// One row of a convergence study.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct StudyRow {
    pub u: f64,
    pub m: usize,
    pub n: usize,
    pub p_hat: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Exact endpoint tail `P(X(T) - cT > u a)`.
    pub tail_exact: f64,
    /// `p_hat / tail_exact`, to be compared against the predicted constant.
    pub ratio: f64,
    /// Predicted constant `C` (absent when the exact-asymptotics
    /// assumptions fail).
    pub c_pred: Option<f64>,
}

/// Empirical check of `p_T(u a) ~ C · P(X(T) - cT > u a)`: one Monte Carlo
/// estimate per level, against the exact endpoint tail and the predicted `C`.
pub fn convergence_study(
    spec: &ModelSpec,
    u_list: &[f64],
    cfg: &McConfig,
) -> Result<Vec<StudyRow>> {
    if u_list.is_empty() {
        return Err(Error::InvalidParameter("u list must be non-empty".into()));
    }
    if u_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("u list must be strictly increasing".into()));
    }
    let c_pred = crate::asymptotics::constant_c(spec).ok();
    let opts = MvnOptions::relative(1e-4);
    let mut rows = Vec::with_capacity(u_list.len());
    for &u in u_list {
        let est = if cfg.importance_sampling {
            estimate_ruin_is(spec, u, cfg)?
        } else {
            estimate_ruin(spec, u, cfg)?
        };
        let tail = crate::asymptotics::endpoint_tail_exact(spec, u, &opts)?;
        rows.push(StudyRow {
            u,
            m: est.m,
            n: est.n,
            p_hat: est.p_hat,
            se: est.std_err,
            ci_lo: est.ci.0,
            ci_hi: est.ci.1,
            tail_exact: tail.value,
            ratio: est.p_hat / tail.value,
            c_pred,
        });
    }
    Ok(rows)
}

/// Closed form `P(sup_{[0,T]} (B(t) - c t) > u)` for standard Brownian
/// motion (reflection principle); the d = 1 oracle for the estimators.
pub fn brownian_ruin_exact(u: f64, c: f64, t: f64) -> f64 {
    let s = t.sqrt();
    normal::phi_bar((u + c * t) / s) + (-2.0 * c * u).exp() * normal::phi_bar((u - c * t) / s)
}
