//! Shared fixtures and independent numerical oracles for the integration
//! and acceptance suites.

use nalgebra::DMatrix;

use gaussruin::model::{ModelSpec, VarianceFunction};

pub fn fbm(alpha: f64) -> VarianceFunction {
    VarianceFunction::Fbm { alpha }
}

/// The two-dimensional reference model: `A = (1 0; ρ √(1-ρ²))`, identical
/// variance functions, direction `(1, a2)`.
pub fn example_model(rho: f64, a2: f64, v: VarianceFunction, c: f64) -> ModelSpec {
    let mixing = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, rho, (1.0 - rho * rho).sqrt()]);
    ModelSpec::new(mixing, vec![v.clone(), v], vec![c, c], vec![1.0, a2], 1.0).unwrap()
}

pub fn example_model_json(rho: f64, a2: f64, alpha: f64, c: f64) -> String {
    let root = (1.0 - rho * rho).sqrt();
    format!(
        r#"{{
  "d": 2,
  "A": [[1.0, 0.0], [{rho}, {root}]],
  "v": [{{"kind": "fbm", "alpha": {alpha}}}, {{"kind": "fbm", "alpha": {alpha}}}],
  "c": [{c}, {c}],
  "a": [1.0, {a2}],
  "T": 1.0
}}"#
    )
}

pub fn brownian_model_json(d: usize, c: f64) -> String {
    let rows: Vec<String> = (0..d)
        .map(|i| {
            let row: Vec<String> =
                (0..d).map(|j| if i == j { "1.0".into() } else { "0.0".into() }).collect();
            format!("[{}]", row.join(", "))
        })
        .collect();
    let vs: Vec<&str> = (0..d).map(|_| r#"{"kind": "brownian"}"#).collect();
    let cs: Vec<String> = (0..d).map(|_| format!("{c}")).collect();
    let al: Vec<&str> = (0..d).map(|_| "1.0").collect();
    format!(
        r#"{{"d": {d}, "A": [{}], "v": [{}], "c": [{}], "a": [{}], "T": 1.0}}"#,
        rows.join(", "),
        vs.join(", "),
        cs.join(", "),
        al.join(", ")
    )
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n {
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        nodes[k] = x;
        weights[k] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for j in 2..=n {
        let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Brute-force evaluation of `∫ 1{∃ t ∈ [0,L] : x < f t} e^{Σx} dx` by
/// iterated quadrature, independent of the closed form.
///
/// The positive-`f` coordinates integrate to `exp(Σ_{f_i>0} f_i · τ)` for a
/// given deadline `τ` (an elementary exponential integral); the negative
/// coordinates are integrated numerically one level at a time, splitting
/// each axis at the deadline kink `x = f_j·τ` and using composite
/// Gauss-Legendre panels sized to the local exponential rate.
pub fn int_repr_bruteforce(f: &[f64], l: f64) -> f64 {
    let s_plus: f64 = f.iter().filter(|&&x| x > 0.0).sum();
    let neg: Vec<f64> = f.iter().copied().filter(|&x| x < 0.0).collect();
    // zero entries contribute ∫_{-∞}^0 e^x dx = 1
    integrate_neg(&neg, 0, l, s_plus)
}

fn integrate_neg(neg: &[f64], idx: usize, tau: f64, s_plus: f64) -> f64 {
    if idx == neg.len() {
        return (s_plus * tau).exp();
    }
    let fj = neg[idx];
    let kink = fj * tau; // ≤ 0
    let mut total = 0.0;
    // active piece: x ∈ [f_j τ, 0], deadline becomes x/f_j
    total += panelled(kink, 0.0, 1.0 + s_plus / fj, |x| {
        x.exp() * integrate_neg(neg, idx + 1, x / fj, s_plus)
    });
    // inactive piece: x ≤ f_j τ, deadline stays τ
    let tail_inner = integrate_neg(neg, idx + 1, tau, s_plus);
    total += panelled(kink - 46.0, kink, 1.0, |x| x.exp() * tail_inner);
    total
}

/// Composite 24-point Gauss-Legendre with panel widths adapted to the
/// exponential rate of the integrand.
fn panelled(a: f64, b: f64, rate: f64, f: impl Fn(f64) -> f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let width = (4.0 / rate.abs().max(1.0)).min(2.0);
    let panels = (((b - a) / width).ceil() as usize).max(1);
    let (nodes, weights) = gauss_legendre(24);
    let h = (b - a) / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let (lo, hi) = (a + p as f64 * h, a + (p + 1) as f64 * h);
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        for (x, w) in nodes.iter().zip(weights.iter()) {
            acc += w * half * f(mid + half * x);
        }
    }
    acc
}
