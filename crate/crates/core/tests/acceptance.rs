//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured figures (run with `--nocapture` to see them).

mod common;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gaussruin::asymptotics;
use gaussruin::gaussprob::MvnOptions;
use gaussruin::model::{ModelSpec, StationaryKernel, VarianceFunction};
use gaussruin::montecarlo::{self, McConfig, RefineConfig};
use gaussruin::qp;

use common::fbm;

fn random_spd(rng: &mut impl Rng, d: usize) -> DMatrix<f64> {
    let b = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &b * b.transpose() + DMatrix::identity(d, d) * (0.3 * d as f64)
}

fn random_direction(rng: &mut impl Rng, d: usize) -> DVector<f64> {
    loop {
        let a = DVector::from_fn(d, |_, _| rng.random_range(-1.5..1.5));
        if a.iter().any(|&x| x > 0.1) {
            return a;
        }
    }
}

/// Random model satisfying B0-BII: near-identity mixing, fBm or
/// integrated-stationary coordinates.
fn random_valid_model(rng: &mut impl Rng) -> ModelSpec {
    loop {
        let d = rng.random_range(2..=4);
        let mixing = DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                1.0
            } else {
                rng.random_range(-0.35..0.35)
            }
        });
        let horizon = rng.random_range(0.5..2.0);
        let variances: Vec<VarianceFunction> = (0..d)
            .map(|_| {
                if rng.random_bool(0.8) {
                    fbm(rng.random_range(1.15..1.85))
                } else {
                    VarianceFunction::IntegratedStationary {
                        kernel: StationaryKernel::Exponential {
                            sigma2: rng.random_range(0.5..1.5),
                            scale: rng.random_range(0.2..0.8),
                        },
                    }
                }
            })
            .collect();
        let a: Vec<f64> = random_direction(rng, d).iter().copied().collect();
        if let Ok(spec) = ModelSpec::new(mixing, variances, vec![0.0; d], a, horizon) {
            if spec.validate().exact_ok() {
                return spec;
            }
        }
    }
}

#[test]
fn criterion_01_qp_oracle_equivalence() {
    let started = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for case in 0..500 {
        let d = rng.random_range(2..=8);
        let sigma = random_spd(&mut rng, d);
        let a = random_direction(&mut rng, d);
        let fast = qp::solve_pi(&sigma, &a).expect("active set");
        let slow = qp::solve_pi_enumerate(&sigma, &a).expect("enumeration");
        assert_eq!(fast.active, slow.active, "case {case}: index sets diverge");
        for i in 0..d {
            assert!(
                (fast.a_tilde[i] - slow.a_tilde[i]).abs() < 1e-8,
                "case {case}: a_tilde diverges at {i}"
            );
        }
        // KKT invariants
        let lambda = fast.lambda_vector();
        let residual =
            gaussruin::linalg::spd_inverse(&sigma).unwrap() * fast.a_tilde_vector() - &lambda;
        assert!(residual.amax() < 1e-9 * lambda.amax().max(1.0), "case {case}: KKT residual");
        assert!(lambda.iter().all(|&l| l >= -1e-12), "case {case}: negative multiplier");
        for i in 0..d {
            assert!(
                lambda[i] * (fast.a_tilde[i] - a[i]) < 1e-9,
                "case {case}: complementary slackness"
            );
            assert!(fast.a_tilde[i] >= a[i] - 1e-9 * a[i].abs().max(1.0), "case {case}: feasibility");
        }
        assert!(!fast.active.is_empty() && fast.value > 0.0, "case {case}: structure");
    }
    println!(
        "criterion 1: PASS - 500 random instances, active-set == enumeration, KKT within 1e-9 ({:.1?})",
        started.elapsed()
    );
}

#[test]
fn criterion_02_d_monotone_and_derivative() {
    let started = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for case in 0..50 {
        let spec = random_valid_model(&mut rng);
        let horizon = spec.horizon();
        let grid: Vec<f64> = (1..=64).map(|k| horizon * k as f64 / 64.0).collect();
        let sols = qp::qp_along_time(&spec, &grid).expect("qp along grid");
        for w in sols.windows(2) {
            assert!(
                w[1].1.value < w[0].1.value,
                "case {case}: D(t) not strictly decreasing at t={}",
                w[1].0
            );
        }
        let closed = asymptotics::d_dot_at_horizon(&spec).unwrap();
        assert!(closed < 0.0, "case {case}: dD(T) must be negative");
        let h = 1e-5 * horizon;
        let fd = (asymptotics::d_of_t(&spec, horizon).unwrap()
            - asymptotics::d_of_t(&spec, horizon - h).unwrap())
            / h;
        assert!(
            (closed - fd).abs() <= 1e-3 * fd.abs(),
            "case {case}: dD(T) {closed} vs finite difference {fd}"
        );
    }
    println!(
        "criterion 2: PASS - 50 random models, D(t) strictly decreasing, dD(T) matches FD at 1e-3 ({:.1?})",
        started.elapsed()
    );
}

#[test]
fn criterion_03_int_repr_against_quadrature() {
    let started = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let d = if case % 2 == 0 { 2 } else { 3 };
        let f: Vec<f64> = (0..d)
            .map(|_| {
                let x: f64 = rng.random_range(-3.0..3.0);
                if x.abs() < 0.05 {
                    0.05f64.copysign(x)
                } else {
                    x
                }
            })
            .collect();
        let l = rng.random_range(0.1..4.0);
        let closed = asymptotics::int_repr(&f, l);
        let oracle = common::int_repr_bruteforce(&f, l);
        let rel = (closed - oracle).abs() / oracle.abs();
        worst = worst.max(rel);
        assert!(rel < 1e-5, "case {case}: f={f:?} L={l}: closed {closed} vs oracle {oracle}");
    }
    println!(
        "criterion 3: PASS - 100 random f, closed form vs brute-force quadrature, worst rel err {worst:.2e} ({:.1?})",
        started.elapsed()
    );
}

#[test]
fn criterion_04_constant_machinery() {
    let started = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for case in 0..50 {
        let spec = random_valid_model(&mut rng);
        let c = asymptotics::constant_c(&spec).unwrap();
        assert!(c >= 1.0 - 1e-12, "case {case}: C = {c} < 1");
        // denominator of the constant equals -dD(T)
        let t = spec.horizon();
        let sigma = spec.covariance_at(t).unwrap();
        let sol = qp::solve_pi(&sigma, spec.direction()).unwrap();
        let q = DVector::from_fn(spec.dim(), |i, _| {
            spec.variance(i).deriv(t) / spec.variance(i).value(t)
        });
        let a_inv = spec.mixing().clone().lu().solve(&sol.a_tilde_vector()).unwrap();
        let g = spec.mixing() * DMatrix::from_diagonal(&q) * a_inv;
        let den = sol.lambda_vector().dot(&g);
        let d_dot = asymptotics::d_dot_at_horizon(&spec).unwrap();
        assert!(
            (den + d_dot).abs() <= 1e-9 * d_dot.abs(),
            "case {case}: denominator {den} vs -dD(T) {}",
            -d_dot
        );
        // C(L) pinning: C(0) = 1, convergence to C at L = 40/|dD(T)|
        let c0 = asymptotics::constant_c_of_l(&spec, 0.0).unwrap();
        assert!((c0 - 1.0).abs() < 1e-12, "case {case}: C(0) = {c0}");
        let cl = asymptotics::constant_c_of_l(&spec, 40.0 / d_dot.abs()).unwrap();
        assert!(
            (cl - c).abs() < 1e-6 * c,
            "case {case}: C(40/|dD|) = {cl} vs C = {c}"
        );
    }
    println!(
        "criterion 4: PASS - 50 random specs: C >= 1, denominator = -dD(T) at 1e-9, C(L) -> C ({:.1?})",
        started.elapsed()
    );
}

#[test]
fn criterion_05_example_regimes() {
    let started = std::time::Instant::now();
    // rho = 0.5, identical fBm variances, a2 sweeping the three regimes
    let below = common::example_model(0.5, 0.2, fbm(1.5), 0.0);
    let sigma = below.covariance_at(1.0).unwrap();
    let sol = qp::solve_pi(&sigma, below.direction()).unwrap();
    assert_eq!(sol.active, vec![0]);
    assert_eq!(sol.inactive, vec![1]);
    assert!(sol.boundary.is_empty());

    let boundary = common::example_model(0.5, 0.5, fbm(1.5), 0.0);
    let sigma = boundary.covariance_at(1.0).unwrap();
    let sol = qp::solve_pi(&sigma, boundary.direction()).unwrap();
    assert_eq!(sol.active, vec![0]);
    assert_eq!(sol.boundary, vec![1]);

    let above = common::example_model(0.5, 0.8, fbm(1.5), 0.0);
    let sigma = above.covariance_at(1.0).unwrap();
    let sol = qp::solve_pi(&sigma, above.direction()).unwrap();
    assert_eq!(sol.active, vec![0, 1]);

    // (rho, a) = (-0.8, -0.5): C = 4/3 exactly
    let negative = common::example_model(-0.8, -0.5, fbm(1.5), 0.0);
    let c = asymptotics::constant_c(&negative).unwrap();
    assert!((c - 4.0 / 3.0).abs() <= 1e-12, "C = {c}");
    println!(
        "criterion 5: PASS - regimes I={{1}}, I={{1}}/U={{2}}, I={{1,2}}; C = 4/3 within 1e-12 ({:.1?})",
        started.elapsed()
    );
}

#[test]
fn criterion_06_endpoint_tail_ratio() {
    let started = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let opts = MvnOptions::relative(1e-3);
    let mut decreasing = 0;
    let mut specs_done = 0;
    let mut worst_final: f64 = 0.0;
    while specs_done < 20 {
        let d = 2 + (specs_done % 2);
        let mixing = DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                1.0
            } else {
                rng.random_range(-0.3..0.3)
            }
        });
        let alpha = rng.random_range(1.2..1.8);
        let spec = match ModelSpec::new(
            mixing,
            (0..d).map(|_| fbm(alpha)).collect(),
            (0..d).map(|_| rng.random_range(0.0..0.3)).collect(),
            (0..d).map(|_| rng.random_range(-0.6..1.4)).collect(),
            1.0,
        ) {
            Ok(s) => s,
            Err(_) => continue,
        };
        let sigma = spec.covariance_at(1.0).unwrap();
        let sol = qp::solve_pi(&sigma, spec.direction()).unwrap();
        // keep the essential coordinates balanced enough that the asymptotic
        // regime is reachable at double precision
        let min_prod = sol
            .active
            .iter()
            .map(|&i| sol.lambda[i] * sol.a_tilde[i])
            .fold(f64::INFINITY, f64::min);
        if min_prod < 0.1 * sol.value {
            continue;
        }
        specs_done += 1;

        // first level past the 1e-6 gate
        let mut u0 = (2.0 * 6.0 * std::f64::consts::LN_10 / sol.value).sqrt();
        for _ in 0..60 {
            let t = asymptotics::endpoint_tail_exact(&spec, u0, &opts).unwrap().value;
            if t < 1e-6 {
                break;
            }
            u0 *= 1.05;
        }
        let mut deviations = Vec::new();
        let mut final_ratio = f64::NAN;
        for k in 0..3 {
            let u = u0 * (1u32 << k) as f64;
            let asym = asymptotics::endpoint_tail_with_opts(&spec, u, &opts).unwrap();
            let exact = asymptotics::endpoint_tail_exact(&spec, u, &opts).unwrap();
            assert!(exact.value < 1e-6, "points must stay past the 1e-6 gate");
            let ratio = exact.value / asym.value;
            deviations.push((ratio - 1.0).abs());
            final_ratio = ratio;
        }
        if deviations.windows(2).all(|w| w[1] < w[0]) {
            decreasing += 1;
        }
        assert!(
            (0.85..=1.15).contains(&final_ratio),
            "spec {specs_done}: final ratio {final_ratio} outside [0.85, 1.15]"
        );
        worst_final = worst_final.max((final_ratio - 1.0).abs());
    }
    assert!(decreasing >= 18, "deviation decreased in only {decreasing}/20 cases");
    println!(
        "criterion 6: PASS - 20 random 2D/3D specs: final ratio within 15% (worst |r-1| = {worst_final:.3}), deviation decreasing in {decreasing}/20 ({:.1?})",
        started.elapsed()
    );
}

#[test]
fn criterion_07_bounds_contain_mc() {
    let started = std::time::Instant::now();
    let mixing = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 0.75f64.sqrt()]);
    let spec = ModelSpec::new(
        mixing,
        vec![VarianceFunction::Brownian, VarianceFunction::Brownian],
        vec![0.2, 0.2],
        vec![1.0, 1.0],
        1.0,
    )
    .unwrap();
    // level with p ≈ 1e-2
    let u = 1.8;
    let bounds = asymptotics::bounds(&spec, &(spec.direction() * u)).unwrap();
    assert!(bounds.lower.value <= bounds.upper.value);
    let mut contained = 0;
    let mut sample_p = 0.0;
    for seed in 0..20u64 {
        let cfg = McConfig { n_samples: 1_000_000, grid_points: 512, seed, ..Default::default() };
        let est = montecarlo::estimate_ruin(&spec, u, &cfg).unwrap();
        sample_p = est.p_hat;
        if bounds.lower.value <= est.p_hat && est.p_hat <= bounds.upper.value {
            contained += 1;
        }
    }
    assert!(contained >= 19, "containment in only {contained}/20 seeds");
    println!(
        "criterion 7: PASS - p̂ ≈ {sample_p:.3e} inside [{:.3e}, {:.3e}] for {contained}/20 seeds ({:.1?})",
        bounds.lower.value,
        bounds.upper.value,
        started.elapsed()
    );
}

#[test]
fn criterion_08_exact_asymptotic_trend() {
    let started = std::time::Instant::now();
    for (name, rho, a2) in [("C=1", 0.5, 0.8), ("C=4/3", -0.8, -0.5)] {
        let spec = common::example_model(rho, a2, fbm(1.5), 0.0);
        let c = asymptotics::constant_c(&spec).unwrap();
        let d_dot = asymptotics::d_dot_at_horizon(&spec).unwrap();
        let cfg = McConfig {
            n_samples: 100_000,
            grid_points: 128,
            seed: 808,
            importance_sampling: true,
            refine: Some(RefineConfig { points: 160, l: 48.0 / d_dot.abs() / 160.0 }),
            ..Default::default()
        };
        let us = [2.0, 2.8, 4.0, 5.6];
        let rows = montecarlo::convergence_study(&spec, &us, &cfg).unwrap();
        // trend: the gap |r(u) - C| must shrink along the grid
        let gaps: Vec<f64> = rows.iter().map(|r| (r.ratio - c).abs()).collect();
        let n = gaps.len() as f64;
        let mean_k = (n - 1.0) / 2.0;
        let mean_g = gaps.iter().sum::<f64>() / n;
        let slope: f64 = gaps
            .iter()
            .enumerate()
            .map(|(k, g)| (k as f64 - mean_k) * (g - mean_g))
            .sum::<f64>();
        assert!(slope < 0.0, "{name}: |ratio - C| not trending down: {gaps:?}");
        let last = rows.last().unwrap();
        let (ci_lo, ci_hi) = (last.ci_lo / last.tail_exact, last.ci_hi / last.tail_exact);
        assert!(
            ci_lo <= 1.15 * c && ci_hi >= 0.85 * c,
            "{name}: final ratio CI [{ci_lo:.3}, {ci_hi:.3}] misses [{:.3}, {:.3}]",
            0.85 * c,
            1.15 * c
        );
        println!(
            "criterion 8 ({name}): ratios {:?} -> C = {c:.4}, final CI [{ci_lo:.3}, {ci_hi:.3}]",
            rows.iter().map(|r| (r.ratio * 1e4).round() / 1e4).collect::<Vec<_>>()
        );
    }
    println!(
        "criterion 8: PASS - empirical ratio converges toward C; final 99% CI inside [0.85C, 1.15C] ({:.1?})",
        started.elapsed()
    );
}

#[test]
fn criterion_09_brownian_oracle() {
    let started = std::time::Instant::now();
    let c = 0.5;
    let spec = ModelSpec::new(
        DMatrix::identity(1, 1),
        vec![VarianceFunction::Brownian],
        vec![c],
        vec![1.0],
        1.0,
    )
    .unwrap();
    // levels hitting the target probabilities, from the closed form
    let solve_u = |target: f64| {
        let (mut lo, mut hi) = (0.0f64, 10.0f64);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if montecarlo::brownian_ruin_exact(mid, c, 1.0) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    for target in [1e-1, 1e-2, 1e-3] {
        let u = solve_u(target);
        let exact = montecarlo::brownian_ruin_exact(u, c, 1.0);
        for importance in [false, true] {
            let n = if importance { 200_000 } else { 400_000 };
            let base = McConfig {
                n_samples: n,
                grid_points: 512,
                seed: 909,
                importance_sampling: importance,
                ..Default::default()
            };
            let fine = McConfig { grid_points: 1024, ..base };
            let run = |cfg: &McConfig| {
                if importance {
                    montecarlo::estimate_ruin_is(&spec, u, cfg).unwrap()
                } else {
                    montecarlo::estimate_ruin(&spec, u, cfg).unwrap()
                }
            };
            let coarse_est = run(&base);
            let fine_est = run(&fine);
            let bias_margin = 4.0 * (fine_est.p_hat - coarse_est.p_hat).abs();
            assert!(
                (fine_est.p_hat - exact).abs() <= 3.0 * fine_est.std_err + bias_margin,
                "p={target:.0e} importance={importance}: {} vs {exact} (se {}, margin {bias_margin})",
                fine_est.p_hat,
                fine_est.std_err
            );
        }
    }
    println!(
        "criterion 9: PASS - crude and IS match the reflection principle at p = 1e-1, 1e-2, 1e-3 ({:.1?})",
        started.elapsed()
    );
}

#[test]
fn criterion_10_thread_count_determinism() {
    let started = std::time::Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    std::fs::write(&model, common::example_model_json(0.5, 0.8, 1.5, 0.0)).unwrap();
    let run = |threads: &str, name: &str| {
        let out = dir.path().join(name);
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_gaussruin"))
            .env("GAUSSRUIN_THREADS", threads)
            .args(["study", "--u-list", "1.0,1.5,2.0", "--n", "20000", "--grid", "64"])
            .args(["--seed", "4242", "--format", "csv", "--log-level", "quiet", "--model"])
            .arg(&model)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(&out).unwrap()
    };
    let single = run("1", "single.csv");
    let many = run("8", "many.csv");
    assert_eq!(single, many, "CSV artifacts differ between 1 and 8 threads");
    assert!(!single.is_empty());
    println!(
        "criterion 10: PASS - byte-identical study CSV across GAUSSRUIN_THREADS=1 and 8 ({:.1?})",
        started.elapsed()
    );
}
