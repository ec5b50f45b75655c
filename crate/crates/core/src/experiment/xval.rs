//! DE-versus-MC cross-validation over a manifest grid.

use std::fmt::Write as _;

use rayon::prelude::*;

use super::manifest::Manifest;
use super::runner::{evaluate_point, ResultRow};
use crate::config::Engine;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct XvalPoint {
    pub point: usize,
    pub curve: String,
    pub antennas: usize,
    pub rho_db: f64,
    pub de_sum: f64,
    pub mc_sum: f64,
    pub mc_ci: f64,
    /// Largest relative deviation over users and the sum rate, in percent.
    pub deviation_pct: f64,
    pub tol_pct: f64,
    pub pass: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveSummary {
    pub curve: String,
    pub max_deviation_pct: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct XvalReport {
    pub points: Vec<XvalPoint>,
    pub curves: Vec<CurveSummary>,
    pub pass: bool,
}

fn rel_pct(de: f64, mc: f64) -> f64 {
    100.0 * (de - mc).abs() / mc.abs().max(1e-12)
}

/// Relative DE deviation from MC for one matched pair of rows.
pub fn deviation_pct(de: &ResultRow, mc: &ResultRow) -> f64 {
    let mut d = rel_pct(de.sum_rate, mc.sum_rate);
    for (a, b) in de.private_rates.iter().zip(&mc.private_rates) {
        d = d.max(rel_pct(*a, *b));
    }
    d
}

/// Evaluates both engines at every grid point and compares them.
/// `tol_override` replaces every per-point tolerance of the manifest.
pub fn crossvalidate(m: &Manifest, tol_override: Option<f64>, workers: Option<usize>) -> Result<XvalReport> {
    m.validate()?;
    let mut m = m.clone();
    m.engines = vec![Engine::De, Engine::Mc];
    let points = m.points();
    let eval = || points.par_iter().map(|p| evaluate_point(&m, p)).collect::<Vec<_>>();
    let rows: Vec<ResultRow> = match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?
            .install(eval),
        None => eval(),
    }
    .into_iter()
    .flatten()
    .collect();

    let mut out = Vec::new();
    // Rows come in (DE, MC) pairs for every variant.
    for pair in rows.chunks(2) {
        let (de, mc) = (&pair[0], &pair[1]);
        let tol = tol_override.unwrap_or_else(|| m.tolerance_for(de.antennas));
        let error = de.error.clone().or_else(|| mc.error.clone());
        let dev = if error.is_some() { f64::NAN } else { deviation_pct(de, mc) };
        out.push(XvalPoint {
            point: de.point,
            curve: de.curve(),
            antennas: de.antennas,
            rho_db: de.rho_db,
            de_sum: de.sum_rate,
            mc_sum: mc.sum_rate,
            mc_ci: mc.ci95.unwrap_or(f64::NAN),
            deviation_pct: dev,
            tol_pct: tol,
            pass: error.is_none() && dev <= tol,
            error,
        });
    }
    let mut curves: Vec<CurveSummary> = Vec::new();
    for p in &out {
        let i = match curves.iter().position(|c| c.curve == p.curve) {
            Some(i) => i,
            None => {
                curves.push(CurveSummary { curve: p.curve.clone(), max_deviation_pct: 0.0, pass: true });
                curves.len() - 1
            }
        };
        let c = &mut curves[i];
        c.max_deviation_pct = if p.deviation_pct.is_nan() { f64::NAN } else { c.max_deviation_pct.max(p.deviation_pct) };
        c.pass &= p.pass;
    }
    let pass = out.iter().all(|p| p.pass);
    Ok(XvalReport { points: out, curves, pass })
}

impl XvalReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "point\tcurve\tantennas\trho_db\tde_sum\tmc_sum\tmc_ci95\tdeviation_pct\ttol_pct\tresult");
        for p in &self.points {
            let verdict = match &p.error {
                Some(e) => format!("FAIL ({e})"),
                None if p.pass => "pass".into(),
                None => "FAIL".into(),
            };
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{:.2}\t{:.4}\t{:.4}\t{:.4}\t{:.3}\t{:.2}\t{}",
                p.point, p.curve, p.antennas, p.rho_db, p.de_sum, p.mc_sum, p.mc_ci, p.deviation_pct, p.tol_pct, verdict
            );
        }
        let _ = writeln!(s);
        for c in &self.curves {
            let _ = writeln!(
                s,
                "curve {}: max deviation {:.3}% {}",
                c.curve,
                c.max_deviation_pct,
                if c.pass { "pass" } else { "FAIL" }
            );
        }
        let _ = writeln!(s, "overall: {}", if self.pass { "pass" } else { "FAIL" });
        s
    }
}
