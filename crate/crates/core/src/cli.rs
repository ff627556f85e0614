//! Command-line front end: loads a model spec, runs one command, writes one
//! artifact.
//!
//! Exit codes: 0 on success, 2 when a result's hypotheses are violated
//! (the assumption report is printed to stderr), 1 on I/O or numeric
//! failure. The `GAUSSRUIN_THREADS` environment variable caps the worker
//! count; results never depend on it.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::asymptotics;
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::montecarlo::{self, McConfig, RefineConfig};
use crate::qp;
use crate::report;

#[derive(Parser, Debug)]
#[command(name = "gaussruin", version, about = "Simultaneous ruin probabilities for multivariate Gaussian risk models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check the model against the asymptotics and bounds hypotheses
    Validate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Solve the quadratic program at the horizon (or at --t)
    Qp {
        #[command(flatten)]
        common: CommonArgs,
        /// Time point; defaults to the horizon T
        #[arg(long)]
        t: Option<f64>,
    },
    /// Closed-form asymptotics and the correction constant
    Asymptotics {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        levels: LevelArgs,
        /// Emit a C(L) curve up to this window length
        #[arg(long = "L")]
        l_window: Option<f64>,
    },
    /// Uniform lower/upper bounds at u·a
    Bounds {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        levels: LevelArgs,
    },
    /// Monte Carlo estimate of the ruin probability
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Ruin level u
        #[arg(long)]
        u: f64,
        #[command(flatten)]
        mc: McArgs,
    },
    /// Convergence study: MC estimate vs endpoint tail over a u-grid
    Study {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated increasing levels
        #[arg(long = "u-list", visible_alias = "u", value_delimiter = ',', required = true)]
        u_list: Vec<f64>,
        #[command(flatten)]
        mc: McArgs,
    },
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CommonArgs {
    /// Model spec JSON file
    #[arg(long)]
    pub model: PathBuf,
    /// Output path; stdout when absent
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// quiet | info | debug
    #[arg(long, default_value = "info")]
    pub log_level: String,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct LevelArgs {
    /// Single ruin level u
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u: Option<f64>,
    /// Comma-separated increasing levels
    #[arg(long = "u-list", value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_list: Option<Vec<f64>>,
}

impl LevelArgs {
    fn resolve(&self) -> Result<Vec<f64>> {
        match (&self.u, &self.u_list) {
            (Some(u), None) => Ok(vec![*u]),
            (None, Some(list)) if !list.is_empty() => {
                if list.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidParameter(
                        "u list must be strictly increasing".into(),
                    ));
                }
                Ok(list.clone())
            }
            _ => Err(Error::InvalidParameter("provide exactly one of --u or --u-list".into())),
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct McArgs {
    /// Sample count
    #[arg(long, default_value_t = 100_000, value_parser = parse_count)]
    pub n: usize,
    /// Uniform grid points on (0, T]
    #[arg(long, default_value_t = 256)]
    pub grid: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Work-splitting granularity (does not affect results)
    #[arg(long, default_value_t = 64)]
    pub batches: usize,
    /// Mean-shift importance sampling
    #[arg(long = "is", default_value_t = false)]
    pub importance: bool,
    /// Confidence level for intervals
    #[arg(long, default_value_t = 0.99)]
    pub confidence: f64,
    /// Endpoint-refined grid: extra points T - k·l/u² (0 = off)
    #[arg(long, default_value_t = 0)]
    pub refine: usize,
    /// Window unit l for the refinement
    #[arg(long, default_value_t = 1.0)]
    pub refine_l: f64,
}

/// Accept scientific notation for counts (--n 1e6).
fn parse_count(s: &str) -> std::result::Result<usize, String> {
    if let Ok(v) = s.parse::<usize>() {
        return Ok(v);
    }
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() && v >= 0.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        Err(format!("{s} is not a valid count"))
    }
}

impl McArgs {
    fn to_config(&self) -> McConfig {
        McConfig {
            n_samples: self.n,
            grid_points: self.grid,
            seed: self.seed,
            batches: self.batches,
            importance_sampling: self.importance,
            confidence_level: self.confidence,
            refine: (self.refine > 0)
                .then_some(RefineConfig { points: self.refine, l: self.refine_l }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Text,
}

/// Resolved configuration embedded into every artifact.
#[derive(Serialize)]
struct ResolvedConfig<'a> {
    command: &'a str,
    model: &'a Path,
    format: Format,
    #[serde(skip_serializing_if = "Option::is_none")]
    t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    u: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    u_list: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    l_window: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mc: Option<McConfig>,
}

impl<'a> ResolvedConfig<'a> {
    fn new(command: &'a str, common: &'a CommonArgs) -> Self {
        ResolvedConfig {
            command,
            model: &common.model,
            format: common.format,
            t: None,
            u: None,
            u_list: None,
            l_window: None,
            mc: None,
        }
    }
}

/// Run the parsed command; the process exit code is the return value.
pub fn run(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(()) => 0,
        Err(Error::AssumptionViolated(msg)) => {
            eprintln!("assumption violated: {msg}");
            if let Ok(spec) = load_model(common_of(cli)) {
                let report = spec.validate();
                eprintln!(
                    "{}",
                    serde_json::to_string_pretty(&report).unwrap_or_else(|_| String::new())
                );
            }
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn common_of(cli: &Cli) -> &CommonArgs {
    match &cli.command {
        Command::Validate { common }
        | Command::Qp { common, .. }
        | Command::Asymptotics { common, .. }
        | Command::Bounds { common, .. }
        | Command::Simulate { common, .. }
        | Command::Study { common, .. } => common,
    }
}

fn load_model(common: &CommonArgs) -> Result<ModelSpec> {
    let text = std::fs::read_to_string(&common.model)?;
    ModelSpec::from_json(&text)
}

fn emit(common: &CommonArgs, artifact: String) -> Result<()> {
    match &common.out {
        Some(path) => std::fs::write(path, artifact)?,
        None => print!("{artifact}"),
    }
    Ok(())
}

fn note(common: &CommonArgs, msg: &str) {
    if common.log_level != "quiet" {
        eprintln!("gaussruin: {msg}");
    }
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Validate { common } => {
            let spec = load_model(common)?;
            let result = spec.validate();
            let cfg = ResolvedConfig::new("validate", common);
            let artifact = match common.format {
                Format::Json => report::to_json(&cfg, &result),
                Format::Text => format!(
                    "exact_ok : {}{}\nbounds_ok: {}{}\n",
                    result.exact.ok,
                    result
                        .exact
                        .first_violation
                        .as_deref()
                        .map(|v| format!("  ({v})"))
                        .unwrap_or_default(),
                    result.bounds.ok,
                    result
                        .bounds
                        .first_violation
                        .as_deref()
                        .map(|v| format!("  ({v})"))
                        .unwrap_or_default(),
                ),
                Format::Csv => {
                    return Err(Error::InvalidParameter(
                        "csv output is not defined for validate".into(),
                    ))
                }
            };
            emit(common, artifact)
        }
        Command::Qp { common, t } => {
            let spec = load_model(common)?;
            let at = t.unwrap_or_else(|| spec.horizon());
            let sigma = spec.covariance_at(at)?;
            let sol = qp::solve_pi(&sigma, spec.direction())?;
            let mut cfg = ResolvedConfig::new("qp", common);
            cfg.t = Some(at);
            let artifact = match common.format {
                Format::Json => report::to_json(&cfg, &sol),
                Format::Text => {
                    let one = |v: &[usize]| {
                        v.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(",")
                    };
                    format!(
                        "qp at t = {}\n  I = {{{}}}  J = {{{}}}  U = {{{}}}\n  D = {}\n  a_tilde = [{}]\n  lambda  = [{}]\n",
                        report::sig6(at),
                        one(&sol.active),
                        one(&sol.inactive),
                        one(&sol.boundary),
                        report::sig6(sol.value),
                        sol.a_tilde.iter().map(|x| report::sig6(*x)).collect::<Vec<_>>().join(", "),
                        sol.lambda.iter().map(|x| report::sig6(*x)).collect::<Vec<_>>().join(", "),
                    )
                }
                Format::Csv => {
                    return Err(Error::InvalidParameter("csv output is not defined for qp".into()))
                }
            };
            emit(common, artifact)
        }
        Command::Asymptotics { common, levels, l_window } => {
            let spec = load_model(common)?;
            let us = levels.resolve()?;
            let l_values: Vec<f64> = match l_window {
                Some(l_max) => [0.0, 0.125, 0.25, 0.5, 1.0].iter().map(|f| f * l_max).collect(),
                None => Vec::new(),
            };
            let reports = us
                .iter()
                .map(|&u| asymptotics::report(&spec, u, &l_values))
                .collect::<Result<Vec<_>>>()?;
            let mut cfg = ResolvedConfig::new("asymptotics", common);
            cfg.u_list = Some(us.clone());
            cfg.l_window = *l_window;
            let artifact = match common.format {
                Format::Json => report::to_json(&cfg, &reports),
                Format::Csv => report::asymptotics_csv(&cfg, &reports)?,
                Format::Text => {
                    reports.iter().map(report::asymptotics_text).collect::<Vec<_>>().join("\n")
                }
            };
            note(common, &format!("asymptotics over {} level(s)", reports.len()));
            emit(common, artifact)
        }
        Command::Bounds { common, levels } => {
            let spec = load_model(common)?;
            let us = levels.resolve()?;
            #[derive(Serialize)]
            struct BoundsRow {
                u: f64,
                #[serde(flatten)]
                bounds: asymptotics::Bounds,
            }
            let rows = us
                .iter()
                .map(|&u| {
                    let b = asymptotics::bounds(&spec, &(spec.direction() * u))?;
                    Ok(BoundsRow { u, bounds: b })
                })
                .collect::<Result<Vec<_>>>()?;
            let mut cfg = ResolvedConfig::new("bounds", common);
            cfg.u_list = Some(us.clone());
            let artifact = match common.format {
                Format::Json => report::to_json(&cfg, &rows),
                Format::Text => rows
                    .iter()
                    .map(|r| {
                        format!(
                            "u = {}: [{}, {}]{}\n",
                            report::sig6(r.u),
                            report::sig6(r.bounds.lower.value),
                            report::sig6(r.bounds.upper.value),
                            if r.bounds.clamped { " (clamped)" } else { "" }
                        )
                    })
                    .collect(),
                Format::Csv => {
                    return Err(Error::InvalidParameter(
                        "csv output is not defined for bounds; use json or text".into(),
                    ))
                }
            };
            emit(common, artifact)
        }
        Command::Simulate { common, u, mc } => {
            let spec = load_model(common)?;
            let mc_cfg = mc.to_config();
            let run_one = |cfg: &McConfig| {
                if cfg.importance_sampling {
                    montecarlo::estimate_ruin_is(&spec, *u, cfg)
                } else {
                    montecarlo::estimate_ruin(&spec, *u, cfg)
                }
            };
            let est = run_one(&mc_cfg)?;
            // The discrete supremum underestimates continuous ruin; report a
            // doubled-grid companion run so the residual bias is visible.
            let doubled = McConfig { grid_points: 2 * mc_cfg.grid_points, ..mc_cfg };
            let est2 = run_one(&doubled)?;
            #[derive(Serialize)]
            struct SimulateResult {
                estimate: montecarlo::McEstimate,
                doubled_grid: montecarlo::McEstimate,
                grid_bias_delta: f64,
            }
            let result = SimulateResult {
                estimate: est,
                doubled_grid: est2,
                grid_bias_delta: est2.p_hat - est.p_hat,
            };
            let mut cfg = ResolvedConfig::new("simulate", common);
            cfg.u = Some(*u);
            cfg.mc = Some(mc_cfg);
            let artifact = match common.format {
                Format::Json => report::to_json(&cfg, &result),
                Format::Csv => report::estimate_csv(&cfg, *u, &est)?,
                Format::Text => {
                    let mut s = report::estimate_text(*u, &est);
                    s.push_str(&format!(
                        "  bias     : {} (p_hat at 2m - p_hat at m)\n",
                        report::sig6(result.grid_bias_delta)
                    ));
                    s
                }
            };
            note(common, &format!("simulate: n={} grid={} p_hat={}", est.n, est.m, est.p_hat));
            emit(common, artifact)
        }
        Command::Study { common, u_list, mc } => {
            let spec = load_model(common)?;
            let mc_cfg = mc.to_config();
            let rows = montecarlo::convergence_study(&spec, u_list, &mc_cfg)?;
            let mut cfg = ResolvedConfig::new("study", common);
            cfg.u_list = Some(u_list.clone());
            cfg.mc = Some(mc_cfg);
            let artifact = match common.format {
                Format::Json => report::to_json(&cfg, &rows),
                Format::Csv => report::study_csv(&cfg, &rows)?,
                Format::Text => {
                    let mut s =
                        String::from("     u       p_hat          se        tail_exact   ratio\n");
                    for r in &rows {
                        s.push_str(&format!(
                            "{:>8} {:>12} {:>12} {:>12} {:>8}\n",
                            report::sig6(r.u),
                            report::sig6(r.p_hat),
                            report::sig6(r.se),
                            report::sig6(r.tail_exact),
                            report::sig6(r.ratio)
                        ));
                    }
                    s
                }
            };
            note(common, &format!("study over {} level(s)", rows.len()));
            emit(common, artifact)
        }
    }
}

/// Apply the `GAUSSRUIN_THREADS` cap. Call once at startup.
pub fn init_thread_pool() {
    if let Ok(v) = std::env::var("GAUSSRUIN_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}
