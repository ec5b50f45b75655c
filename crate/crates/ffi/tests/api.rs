use std::ffi::{CStr, CString};
use std::ptr;

use rsmimo::{Csit, DeOptions, ImpairmentProfile, Strategy, SystemConfig, Topology};
use rsmimo_ffi::*;

fn last_error() -> String {
    let p = rsmimo_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn new_config(m: usize, k: usize, t: usize, rho: f64) -> *mut RsmimoConfig {
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { rsmimo_config_new(m, k, t, rho, &mut cfg) }, RsmimoStatus::Ok);
    assert!(!cfg.is_null());
    cfg
}

#[test]
fn construction_errors() {
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { rsmimo_config_new(2, 4, 10, 1.0, &mut cfg) }, RsmimoStatus::Dimension);
    assert!(cfg.is_null());
    assert!(last_error().contains("exceeds"));
    assert_eq!(unsafe { rsmimo_config_new(8, 2, 10, 1.0, ptr::null_mut()) }, RsmimoStatus::NullPointer);
    assert_eq!(unsafe { rsmimo_de_rates(ptr::null(), ptr::null_mut(), 0, ptr::null_mut()) }, RsmimoStatus::NullPointer);
    unsafe { rsmimo_config_free(ptr::null_mut()) };
}

#[test]
fn setters_validate() {
    let cfg = new_config(8, 2, 20, 10.0);
    unsafe {
        assert_eq!(rsmimo_config_set_uniform_impairments(cfg, 1e-3, 1e-3, 0.5), RsmimoStatus::Domain);
        assert!(last_error().contains("xi"));
        assert_eq!(rsmimo_config_set_training(cfg, 1, 1.0, 0), RsmimoStatus::Dimension);
        let imp = RsmimoImpairments {
            sigma_phi2: -1.0,
            sigma_varphi2: 0.0,
            kappa_t2_bs: 0.0,
            kappa_r2_bs: 0.0,
            kappa_t2_ue: 0.0,
            kappa_r2_ue: 0.0,
            xi_bs: 1.0,
            xi_ue: 1.0,
        };
        assert_eq!(rsmimo_config_set_impairments(cfg, &imp), RsmimoStatus::Domain);
        assert_eq!(rsmimo_config_set_impairments(cfg, ptr::null()), RsmimoStatus::NullPointer);
        rsmimo_config_free(cfg);
    }
}

#[test]
fn de_rates_match_the_library() {
    let cfg = new_config(32, 2, 100, 100.0);
    let mut rates = [0.0; 2];
    let mut s = RsmimoSummary::default();
    unsafe {
        assert_eq!(
            rsmimo_config_set_mode(cfg, RsmimoCsit::Imperfect, RsmimoStrategy::Rs, RsmimoTopology::Slo),
            RsmimoStatus::Ok
        );
        assert_eq!(rsmimo_config_set_uniform_impairments(cfg, 1e-4, 1e-4, 1.0), RsmimoStatus::Ok);
        assert_eq!(rsmimo_de_rates(cfg, rates.as_mut_ptr(), rates.len(), &mut s), RsmimoStatus::Ok);
        rsmimo_config_free(cfg);
    }
    let mut sys = SystemConfig::new(32, 2, 100, 100.0);
    sys.csit = Csit::Imperfect;
    sys.strategy = Strategy::Rs;
    let imp = ImpairmentProfile::uniform(1e-4, 1e-4, 1.0, Topology::Slo);
    let r = rsmimo::de_rates(&sys, &imp, &DeOptions::default()).unwrap();
    assert_eq!(rates.to_vec(), r.report.private_rates);
    assert_eq!(s.sum_rate, r.report.sum_rate);
    assert_eq!(s.common_rate, r.report.common_rate);
    assert_eq!(s.t, r.t);
    assert_eq!((s.ci95, s.users), (0.0, 2));
}

#[test]
fn output_buffer_is_checked() {
    let cfg = new_config(8, 3, 20, 10.0);
    let mut rates = [0.0; 2];
    unsafe {
        assert_eq!(rsmimo_de_rates(cfg, rates.as_mut_ptr(), rates.len(), ptr::null_mut()), RsmimoStatus::BufferTooSmall);
        let mut s = RsmimoSummary::default();
        assert_eq!(rsmimo_de_rates(cfg, ptr::null_mut(), 0, &mut s), RsmimoStatus::Ok);
        assert_eq!(s.users, 3);
        rsmimo_config_free(cfg);
    }
}

#[test]
fn monte_carlo_is_worker_independent() {
    let cfg = new_config(8, 2, 20, 10.0);
    let run = |workers| {
        let mut rates = [0.0; 2];
        let mut s = RsmimoSummary::default();
        let st = unsafe { rsmimo_mc_rates(cfg, 50, workers, rates.as_mut_ptr(), 2, &mut s) };
        assert_eq!(st, RsmimoStatus::Ok);
        (rates, s)
    };
    unsafe {
        assert_eq!(rsmimo_config_set_uniform_impairments(cfg, 1e-3, 1e-3, 1.2), RsmimoStatus::Ok);
        assert_eq!(rsmimo_config_set_training(cfg, 2, 2.0, 9), RsmimoStatus::Ok);
    }
    let (a, sa) = run(1);
    let (b, sb) = run(3);
    assert_eq!(a, b);
    assert_eq!(sa, sb);
    assert!(sa.ci95 > 0.0);
    unsafe {
        assert_eq!(rsmimo_mc_rates(cfg, 0, 1, ptr::null_mut(), 0, ptr::null_mut()), RsmimoStatus::Domain);
        rsmimo_config_free(cfg);
    }
}

#[test]
fn manifest_runs_to_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().join("r.tsv").to_str().unwrap()).unwrap();
    let text = CString::new(
        "name = \"f\"\nengines = [\"de\"]\n[system]\nantennas = 8\nusers = 2\nblock_len = 20\nrho = \"10dB\"\n",
    )
    .unwrap();
    let mut failures = usize::MAX;
    assert_eq!(unsafe { rsmimo_run_manifest(text.as_ptr(), out.as_ptr(), 1, &mut failures) }, RsmimoStatus::Ok);
    assert_eq!(failures, 0);
    let table = std::fs::read_to_string(dir.path().join("r.tsv")).unwrap();
    assert!(table.starts_with("# schema-version: 1\n"));
    assert_eq!(table.lines().count(), 2 + 8);

    let bad = CString::new("name = 3").unwrap();
    assert_eq!(unsafe { rsmimo_run_manifest(bad.as_ptr(), out.as_ptr(), 1, ptr::null_mut()) }, RsmimoStatus::Parse);
    assert_eq!(unsafe { rsmimo_run_manifest(ptr::null(), out.as_ptr(), 1, ptr::null_mut()) }, RsmimoStatus::NullPointer);
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(rsmimo_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
