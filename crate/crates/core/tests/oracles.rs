//! Cross-engine oracles: Monte Carlo estimates of the powers and rates that
//! the deterministic equivalents predict.

use rsmimo::config::db_to_linear;
use rsmimo::experiment::{crossvalidate, Manifest};
use rsmimo::link_sim::{run_monte_carlo_with, McReport};
use rsmimo::rmt::{de_rates_with, drift_profile, sinrs, slot_terms, DeCore, Loading, QVariant, Statistics};
use rsmimo::{de_rates, Csit, DeOptions, ImpairmentProfile, McOptions, Strategy, SystemConfig, Topology};

const TRIALS: usize = 1000;
// With two users the interference of a block is close to one exponential
// draw, so its mean needs about 1e4 trials for a 1% standard error.
const POWER_TRIALS: usize = 10_000;

fn config(m: usize, csit: Csit, strategy: Strategy, rho_db: f64) -> SystemConfig {
    let mut c = SystemConfig::new(m, 2, 100, db_to_linear(rho_db));
    c.csit = csit;
    c.strategy = strategy;
    c
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

struct Pair {
    core: DeCore,
    profile: Vec<f64>,
    mc: McReport,
}

fn pair(cfg: &SystemConfig, imp: &ImpairmentProfile) -> Pair {
    let stats = Statistics::build(cfg, imp).unwrap();
    let core = DeCore::new(&stats, cfg, imp, &DeOptions::default()).unwrap();
    let mc = run_monte_carlo_with(&stats, cfg, imp, &McOptions::new(POWER_TRIALS)).unwrap();
    Pair { core, profile: drift_profile(cfg, imp), mc }
}

/// Slot-averaged DE desired and interference powers of user `k` at full private power.
fn de_powers(p: &Pair, rho: f64, k: usize) -> (f64, f64) {
    let load = Loading::nors(rho);
    let n = p.profile.len() as f64;
    p.profile.iter().fold((0.0, 0.0), |(d, i), &psi2| {
        let t = slot_terms(&p.core, psi2, &load, QVariant::Derived);
        (d + t.desired[k] / n, i + t.interference[k] / n)
    })
}

fn mc_interference(mc: &McReport, k: usize) -> f64 {
    mc.interference_mean.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, row)| row[k]).sum()
}

fn check_powers(cfg: &SystemConfig, imp: &ImpairmentProfile) {
    let p = pair(cfg, imp);
    let lam = rel(p.core.lambda_bar, p.mc.lambda_mean);
    assert!(lam < 0.05, "lambda: DE {} MC {}", p.core.lambda_bar, p.mc.lambda_mean);
    for k in 0..2 {
        let (d, i) = de_powers(&p, cfg.rho, k);
        let (md, mi) = (p.mc.desired_mean[k], mc_interference(&p.mc, k));
        println!("user {k}: desired DE {d:.4} MC {md:.4}; interference DE {i:.4} MC {mi:.4}");
        assert!(rel(d, md) < 0.05, "desired user {k}: DE {d} MC {md}");
        assert!(rel(i, mi) < 0.05, "interference user {k}: DE {i} MC {mi}");
    }
}

#[test]
fn powers_match_monte_carlo_imperfect_ideal_hardware() {
    check_powers(&config(64, Csit::Imperfect, Strategy::NoRs, 10.0), &ImpairmentProfile::ideal(Topology::Clo));
}

#[test]
fn powers_match_monte_carlo_imperfect_phase_noise() {
    let imp = ImpairmentProfile::uniform(1e-4, 0.0, 1.0, Topology::Slo);
    check_powers(&config(64, Csit::Imperfect, Strategy::NoRs, 10.0), &imp);
}

#[test]
fn powers_match_monte_carlo_perfect_drift() {
    // Strong drift: the interference is dominated by the decorrelated part.
    let imp = ImpairmentProfile::uniform(2e-2, 0.0, 1.0, Topology::Slo);
    check_powers(&config(64, Csit::Perfect, Strategy::NoRs, 20.0), &imp);
}

fn rs_pair(m: usize) -> (rsmimo::DeReport, McReport, Vec<f64>) {
    let imp = ImpairmentProfile::uniform(1e-4, 0.0, 1.0, Topology::Slo);
    let cfg = config(m, Csit::Imperfect, Strategy::Rs, 20.0);
    let stats = Statistics::build(&cfg, &imp).unwrap();
    let de = de_rates_with(&stats, &cfg, &imp, &DeOptions::default()).unwrap();
    let mc = run_monte_carlo_with(&stats, &cfg, &imp, &McOptions::new(TRIALS)).unwrap();
    // Slot-averaged DE common SINR per user.
    let core = DeCore::new(&stats, &cfg, &imp, &DeOptions::default()).unwrap();
    let load = Loading { rho: cfg.rho, t: de.t, alpha: de.alpha.clone() };
    let profile = drift_profile(&cfg, &imp);
    let mut common = vec![0.0; 2];
    for &psi2 in &profile {
        let (_, c) = sinrs(&slot_terms(&core, psi2, &load, QVariant::Derived), &imp);
        for k in 0..2 {
            common[k] += c[k] / profile.len() as f64;
        }
    }
    (de, mc, common)
}

#[test]
fn private_rates_and_common_sinr_match_monte_carlo() {
    let (de, mc, common) = rs_pair(64);
    assert!(de.t < 1.0);
    for k in 0..2 {
        let (a, b) = (de.report.private_rates[k], mc.report.private_rates[k]);
        assert!(rel(a, b) < 0.05, "private rate user {k}: DE {a} MC {b}");
        let (a, b) = (common[k], mc.common_sinr_mean[k]);
        println!("common SINR user {k}: DE {a:.4} MC {b:.4}");
        assert!(rel(a, b) < 0.05, "common SINR user {k}: DE {a} MC {b}");
    }
}

#[test]
fn common_rate_gap_is_a_finite_size_effect() {
    // The simulated common rate takes the minimum over users slot by slot,
    // which sits below the DE minimum at small M and closes as M grows.
    let gap = |m| {
        let (de, mc, _) = rs_pair(m);
        assert!(mc.report.common_rate <= de.report.common_rate);
        rel(de.report.common_rate, mc.report.common_rate)
    };
    let (small, large) = (gap(64), gap(256));
    println!("common rate gap: M=64 {small:.4}, M=256 {large:.4}");
    assert!(large < 0.7 * small);
}

#[test]
fn confidence_interval_shrinks_with_trials() {
    let imp = ImpairmentProfile::uniform(1e-4, 0.0, 1.0, Topology::Clo);
    let cfg = config(16, Csit::Imperfect, Strategy::NoRs, 10.0);
    let ci = |n| {
        rsmimo::run_monte_carlo(&cfg, &imp, &McOptions::new(n)).unwrap().report.ci_half_width.unwrap()
    };
    let ratio = ci(800) / ci(400);
    let expected = 1.0 / 2f64.sqrt();
    assert!((ratio / expected - 1.0).abs() < 0.2, "ratio {ratio}");
}

#[test]
fn ideal_nors_rates_grow_without_bound() {
    let imp = ImpairmentProfile::ideal(Topology::Clo);
    let sums: Vec<f64> = [10.0, 20.0, 30.0]
        .iter()
        .map(|&db| de_rates(&config(100, Csit::Perfect, Strategy::NoRs, db), &imp, &DeOptions::default()).unwrap().report.sum_rate)
        .collect();
    assert!(sums[0] < sums[1] && sums[1] < sums[2], "{sums:?}");
}

const XVAL: &str = r#"
name = "xval"
trials = 1000
seed = 5

[system]
antennas = 100
users = 2
block_len = 100
rho = "10dB"

[grid]
strategies = ["nors"]
topologies = ["clo"]
csit = ["perfect"]

[xval]
tol_pct = 2
"#;

#[test]
fn crossvalidation_passes_at_ideal_hardware() {
    let m = Manifest::from_toml(XVAL).unwrap();
    let report = crossvalidate(&m, None, None).unwrap();
    print!("{}", report.render());
    assert!(report.pass);
    assert!(report.points[0].deviation_pct < 2.0);
}

#[test]
fn crossvalidation_flags_a_corrupted_de() {
    // The literal interference coefficients are a deliberately wrong DE here.
    let text = XVAL.replace("[\"nors\"]", "[\"rs\"]").replace("[\"perfect\"]", "[\"imperfect\"]");
    let mut m = Manifest::from_toml(&text).unwrap();
    let honest = crossvalidate(&m, Some(5.0), None).unwrap();
    m.de.q_variant = QVariant::Literal;
    let corrupted = crossvalidate(&m, Some(5.0), None).unwrap();
    assert!(honest.pass, "{}", honest.render());
    assert!(!corrupted.pass);
    assert!(corrupted.curves[0].max_deviation_pct > 20.0, "{}", corrupted.render());
}
