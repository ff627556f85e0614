//! Report rendering: JSON, CSV and plain text artifacts.
//!
//! Every artifact embeds the resolved run configuration and the library
//! version. Text output rounds to 6 significant digits; JSON and CSV carry
//! full (shortest round-trip) precision, so identical configurations always
//! produce byte-identical files.

use serde::Serialize;

use crate::asymptotics::AsymptoticReport;
use crate::error::Result;
use crate::montecarlo::{McEstimate, StudyRow};

/// Envelope written at the top level of every JSON artifact.
#[derive(Serialize)]
pub struct Envelope<'a, C: Serialize, R: Serialize> {
    pub version: &'a str,
    pub config: &'a C,
    pub result: R,
}

pub fn to_json<C: Serialize, R: Serialize>(config: &C, result: R) -> String {
    let envelope = Envelope { version: crate::VERSION, config, result };
    let mut out = serde_json::to_string_pretty(&envelope).expect("report serialization");
    out.push('\n');
    out
}

/// Render a float with 6 significant digits for text reports.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        let decimals = (5 - mag).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.5e}")
    }
}

/// Full-precision float for CSV cells (shortest round-trip form).
fn cell(x: f64) -> String {
    format!("{x}")
}

fn csv_preamble<C: Serialize>(config: &C) -> String {
    let cfg = serde_json::to_string(config).expect("config serialization");
    format!("# gaussruin {}\n# config {}\n", crate::VERSION, cfg)
}

/// Study table in the documented column order.
pub fn study_csv<C: Serialize>(config: &C, rows: &[StudyRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "u", "m", "n", "p_hat", "se", "ci_lo", "ci_hi", "tail_exact", "ratio", "C_pred",
    ])?;
    for r in rows {
        w.write_record([
            cell(r.u),
            r.m.to_string(),
            r.n.to_string(),
            cell(r.p_hat),
            cell(r.se),
            cell(r.ci_lo),
            cell(r.ci_hi),
            cell(r.tail_exact),
            cell(r.ratio),
            r.c_pred.map(cell).unwrap_or_default(),
        ])?;
    }
    let body = String::from_utf8(w.into_inner().expect("csv buffer")).expect("csv utf8");
    Ok(format!("{}{}", csv_preamble(config), body))
}

/// Asymptotics table: one row per level.
pub fn asymptotics_csv<C: Serialize>(config: &C, rows: &[AsymptoticReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["u", "tail_exact", "tail_asym", "C", "p_asym", "lower", "upper"])?;
    for r in rows {
        w.write_record([
            cell(r.u),
            cell(r.tail_exact.value),
            cell(r.tail_asym),
            cell(r.c),
            cell(r.p_ruin_asym),
            r.bounds.as_ref().map(|b| cell(b.lower.value)).unwrap_or_default(),
            r.bounds.as_ref().map(|b| cell(b.upper.value)).unwrap_or_default(),
        ])?;
    }
    let body = String::from_utf8(w.into_inner().expect("csv buffer")).expect("csv utf8");
    Ok(format!("{}{}", csv_preamble(config), body))
}

/// Single-estimate row (the `simulate` command).
pub fn estimate_csv<C: Serialize>(config: &C, u: f64, est: &McEstimate) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["u", "m", "n", "p_hat", "se", "ci_lo", "ci_hi", "hits", "method"])?;
    w.write_record([
        cell(u),
        est.m.to_string(),
        est.n.to_string(),
        cell(est.p_hat),
        cell(est.std_err),
        cell(est.ci.0),
        cell(est.ci.1),
        est.hits.to_string(),
        format!("{:?}", est.method).to_lowercase(),
    ])?;
    let body = String::from_utf8(w.into_inner().expect("csv buffer")).expect("csv utf8");
    Ok(format!("{}{}", csv_preamble(config), body))
}

pub fn estimate_text(u: f64, est: &McEstimate) -> String {
    let mut s = String::new();
    s.push_str(&format!("ruin probability estimate at u = {}\n", sig6(u)));
    s.push_str(&format!("  method   : {:?}\n", est.method));
    s.push_str(&format!("  p_hat    : {}\n", sig6(est.p_hat)));
    s.push_str(&format!("  std err  : {}\n", sig6(est.std_err)));
    s.push_str(&format!("  ci       : [{}, {}]\n", sig6(est.ci.0), sig6(est.ci.1)));
    s.push_str(&format!("  n        : {}\n", est.n));
    s.push_str(&format!("  grid     : {}\n", est.m));
    if let Some(ess) = est.ess {
        s.push_str(&format!("  ess      : {}\n", sig6(ess)));
    }
    if est.degenerate {
        s.push_str("  warning  : degenerate estimate (all/no hits or tiny effective sample)\n");
    }
    s
}

pub fn asymptotics_text(rep: &AsymptoticReport) -> String {
    let mut s = String::new();
    s.push_str(&format!("asymptotics at u = {}\n", sig6(rep.u)));
    // index sets print 1-based in text, 0-based in JSON
    let one_based =
        |v: &[usize]| v.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(",");
    s.push_str(&format!(
        "  I = {{{}}}  J = {{{}}}  U = {{{}}}\n",
        one_based(&rep.qp_at_t.active),
        one_based(&rep.qp_at_t.inactive),
        one_based(&rep.qp_at_t.boundary)
    ));
    s.push_str(&format!("  D(T)      : {}\n", sig6(rep.d_horizon)));
    s.push_str(&format!("  dD(T)     : {}\n", sig6(rep.d_dot_horizon)));
    s.push_str(&format!("  C         : {}\n", sig6(rep.c)));
    if let Some(curve) = &rep.c_of_l {
        s.push_str("  C(L)      :");
        for (l, v) in curve {
            s.push_str(&format!(" ({}, {})", sig6(*l), sig6(*v)));
        }
        s.push('\n');
    }
    s.push_str(&format!(
        "  tail asym : {}  (log {})\n",
        sig6(rep.tail_asym),
        sig6(rep.log_tail_asym)
    ));
    s.push_str(&format!(
        "  tail exact: {} ± {}{}\n",
        sig6(rep.tail_exact.value),
        sig6(rep.tail_exact.error),
        if rep.tail_exact.converged { "" } else { "  [not converged]" }
    ));
    s.push_str(&format!(
        "  p ruin    : {} (asym)   {} (C x exact tail)\n",
        sig6(rep.p_ruin_asym),
        sig6(rep.p_ruin_refined.value)
    ));
    if let Some(b) = &rep.bounds {
        s.push_str(&format!(
            "  bounds    : [{}, {}]{}\n",
            sig6(b.lower.value),
            sig6(b.upper.value),
            if b.clamped { " (upper clamped to 1)" } else { "" }
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig6_formats() {
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(1.0), "1.00000");
        assert_eq!(sig6(1234.5678), "1234.57");
        assert_eq!(sig6(0.000123456), "0.000123456");
        assert_eq!(sig6(1.23456789e-9), "1.23457e-9");
    }

    #[test]
    fn csv_has_documented_header() {
        let cfg = serde_json::json!({"probe": true});
        let rows = vec![StudyRow {
            u: 2.0,
            m: 64,
            n: 1000,
            p_hat: 0.125,
            se: 0.01,
            ci_lo: 0.1,
            ci_hi: 0.15,
            tail_exact: 0.1,
            ratio: 1.25,
            c_pred: Some(1.0),
        }];
        let csv = study_csv(&cfg, &rows).unwrap();
        assert!(csv.starts_with("# gaussruin"));
        assert!(csv.contains("u,m,n,p_hat,se,ci_lo,ci_hi,tail_exact,ratio,C_pred"));
        assert!(csv.contains("2,64,1000,0.125,0.01,0.1,0.15,0.1,1.25,1"));
    }
}
