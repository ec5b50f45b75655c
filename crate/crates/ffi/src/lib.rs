//! C interface to the rsmimo engines.
//!
//! Every function returns an [`RsmimoStatus`]. On failure a message is kept
//! per thread and can be read with [`rsmimo_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rsmimo::experiment::{run_manifest, Manifest, RunOptions};
use rsmimo::{Csit, DeOptions, Error, ImpairmentProfile, McOptions, RateReport, Strategy, SystemConfig, Topology};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsmimoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    Dimension = 4,
    Domain = 5,
    Numerical = 6,
    NonConvergence = 7,
    Parse = 8,
    Io = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsmimoCsit {
    Perfect = 0,
    Imperfect = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsmimoStrategy {
    NoRs = 0,
    Rs = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsmimoTopology {
    Clo = 0,
    Slo = 1,
}

/// Full impairment profile. Variances are per slot; `xi_*` are relative to
/// the thermal noise floor.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RsmimoImpairments {
    pub sigma_phi2: f64,
    pub sigma_varphi2: f64,
    pub kappa_t2_bs: f64,
    pub kappa_r2_bs: f64,
    pub kappa_t2_ue: f64,
    pub kappa_r2_ue: f64,
    pub xi_bs: f64,
    pub xi_ue: f64,
}

/// Scalar results of one evaluation.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RsmimoSummary {
    pub sum_rate: f64,
    pub common_rate: f64,
    /// Fraction of the power given to the private streams.
    pub t: f64,
    /// 95% confidence half-width of the sum rate; zero for the DE engine.
    pub ci95: f64,
    pub users: usize,
}

/// Opaque system description: link configuration plus impairments.
pub struct RsmimoConfig {
    system: SystemConfig,
    imp: ImpairmentProfile,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> RsmimoStatus {
    match e {
        Error::Dimension(_) => RsmimoStatus::Dimension,
        Error::Domain(_) | Error::Geometry(_) => RsmimoStatus::Domain,
        Error::NonConvergence { .. } => RsmimoStatus::NonConvergence,
        Error::NotPsd { .. } | Error::Numerical(_) | Error::SpectralRadius(_) | Error::Tolerance(_) => {
            RsmimoStatus::Numerical
        }
        Error::Parse(_) => RsmimoStatus::Parse,
        Error::Io(_) => RsmimoStatus::Io,
    }
}

struct Failure(RsmimoStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(RsmimoStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, records any failure or panic, and returns the status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RsmimoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RsmimoStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            RsmimoStatus::Panic
        }
    }
}

unsafe fn config_ref<'a>(cfg: *const RsmimoConfig) -> Result<&'a RsmimoConfig, Failure> {
    cfg.as_ref().ok_or_else(|| null("config"))
}

unsafe fn config_mut<'a>(cfg: *mut RsmimoConfig) -> Result<&'a mut RsmimoConfig, Failure> {
    cfg.as_mut().ok_or_else(|| null("config"))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(RsmimoStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

/// Message of the last failed call on this thread, or null if none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rsmimo_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rsmimo_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a configuration with imperfect CSIT, RS, `tau = users`, ideal
/// CLO hardware and seed 0. `rho` is the linear downlink SNR.
///
/// # Safety
/// `out` must be a valid pointer; on success it receives a handle that must
/// be released with [`rsmimo_config_free`].
#[no_mangle]
pub unsafe extern "C" fn rsmimo_config_new(
    antennas: usize,
    users: usize,
    block_len: usize,
    rho: f64,
    out: *mut *mut RsmimoConfig,
) -> RsmimoStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let system = SystemConfig::new(antennas, users, block_len, rho);
        let imp = ImpairmentProfile::ideal(Topology::Clo);
        let (system, imp) = rsmimo::validate(system, imp)?;
        *out = Box::into_raw(Box::new(RsmimoConfig { system, imp }));
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle from [`rsmimo_config_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rsmimo_config_free(cfg: *mut RsmimoConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rsmimo_config_set_mode(
    cfg: *mut RsmimoConfig,
    csit: RsmimoCsit,
    strategy: RsmimoStrategy,
    topology: RsmimoTopology,
) -> RsmimoStatus {
    guard(|| {
        let c = config_mut(cfg)?;
        c.system.csit = match csit {
            RsmimoCsit::Perfect => Csit::Perfect,
            RsmimoCsit::Imperfect => Csit::Imperfect,
        };
        c.system.strategy = match strategy {
            RsmimoStrategy::NoRs => Strategy::NoRs,
            RsmimoStrategy::Rs => Strategy::Rs,
        };
        c.imp.topology = match topology {
            RsmimoTopology::Clo => Topology::Clo,
            RsmimoTopology::Slo => Topology::Slo,
        };
        Ok(())
    })
}

/// Sets pilot length, uplink pilot power (linear) and the Monte Carlo seed.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rsmimo_config_set_training(
    cfg: *mut RsmimoConfig,
    pilot_len: usize,
    rho_up: f64,
    seed: u64,
) -> RsmimoStatus {
    guard(|| {
        let c = config_mut(cfg)?;
        let mut system = c.system.clone();
        system.pilot_len = pilot_len;
        system.rho_up = rho_up;
        system.seed = seed;
        c.system = rsmimo::validate(system, c.imp.clone())?.0;
        Ok(())
    })
}

/// Shorthand profile: total phase-noise variance `delta` split evenly between
/// the BS and UE oscillators, one EVM factor `kappa2` for all distortions and
/// one amplified-noise level `xi`. Keeps the current topology.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rsmimo_config_set_uniform_impairments(
    cfg: *mut RsmimoConfig,
    delta: f64,
    kappa2: f64,
    xi: f64,
) -> RsmimoStatus {
    guard(|| {
        let c = config_mut(cfg)?;
        let imp = ImpairmentProfile::uniform(delta, kappa2, xi, c.imp.topology);
        c.imp = rsmimo::validate(c.system.clone(), imp)?.1;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live handle and `imp` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rsmimo_config_set_impairments(
    cfg: *mut RsmimoConfig,
    imp: *const RsmimoImpairments,
) -> RsmimoStatus {
    guard(|| {
        let c = config_mut(cfg)?;
        let p = imp.as_ref().ok_or_else(|| null("impairments"))?;
        let profile = ImpairmentProfile {
            sigma_phi2: p.sigma_phi2,
            sigma_varphi2: p.sigma_varphi2,
            kappa_t2_bs: p.kappa_t2_bs,
            kappa_r2_bs: p.kappa_r2_bs,
            kappa_t2_ue: p.kappa_t2_ue,
            kappa_r2_ue: p.kappa_r2_ue,
            xi_bs: p.xi_bs,
            xi_ue: p.xi_ue,
            topology: c.imp.topology,
        };
        c.imp = rsmimo::validate(c.system.clone(), profile)?.1;
        Ok(())
    })
}

unsafe fn write_out(
    report: &RateReport,
    t: f64,
    private_rates: *mut f64,
    len: usize,
    summary: *mut RsmimoSummary,
) -> Result<(), Failure> {
    let users = report.private_rates.len();
    if !private_rates.is_null() {
        if len < users {
            return Err(Failure(
                RsmimoStatus::BufferTooSmall,
                format!("rate buffer holds {len} values, {users} needed"),
            ));
        }
        std::slice::from_raw_parts_mut(private_rates, users).copy_from_slice(&report.private_rates);
    }
    if let Some(s) = summary.as_mut() {
        *s = RsmimoSummary {
            sum_rate: report.sum_rate,
            common_rate: report.common_rate,
            t,
            ci95: report.ci_half_width.unwrap_or(0.0),
            users,
        };
    }
    Ok(())
}

/// Deterministic-equivalent rates.
///
/// `private_rates` may be null; otherwise it must hold `len >= users` values.
/// `summary` may be null.
///
/// # Safety
/// All non-null pointers must be valid for the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn rsmimo_de_rates(
    cfg: *const RsmimoConfig,
    private_rates: *mut f64,
    len: usize,
    summary: *mut RsmimoSummary,
) -> RsmimoStatus {
    guard(|| {
        let c = config_ref(cfg)?;
        let r = rsmimo::de_rates(&c.system, &c.imp, &DeOptions::default())?;
        write_out(&r.report, r.t, private_rates, len, summary)
    })
}

/// Monte Carlo rates over `trials` coherence blocks; `workers = 0` uses all cores.
/// Output conventions as in [`rsmimo_de_rates`].
///
/// # Safety
/// All non-null pointers must be valid for the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn rsmimo_mc_rates(
    cfg: *const RsmimoConfig,
    trials: usize,
    workers: usize,
    private_rates: *mut f64,
    len: usize,
    summary: *mut RsmimoSummary,
) -> RsmimoStatus {
    guard(|| {
        let c = config_ref(cfg)?;
        let mut opts = McOptions::new(trials);
        opts.workers = (workers > 0).then_some(workers);
        let r = rsmimo::run_monte_carlo(&c.system, &c.imp, &opts)?;
        write_out(&r.report, r.t, private_rates, len, summary)
    })
}

/// Runs a TOML manifest and writes the result table to `out_path`.
/// Rows whose engine failed are still written; their count goes to `failures`
/// when it is non-null.
///
/// # Safety
/// `manifest_toml` and `out_path` must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn rsmimo_run_manifest(
    manifest_toml: *const c_char,
    out_path: *const c_char,
    workers: usize,
    failures: *mut usize,
) -> RsmimoStatus {
    guard(|| {
        let text = c_str(manifest_toml, "manifest")?;
        let path = c_str(out_path, "output path")?;
        let m = Manifest::from_toml(text)?;
        let mut w = BufWriter::new(File::create(path).map_err(Error::from)?);
        let summary = run_manifest(&m, &RunOptions { workers: (workers > 0).then_some(workers) }, &mut w)?;
        w.flush().map_err(Error::from)?;
        if let Some(f) = failures.as_mut() {
            *f = summary.failures;
        }
        Ok(())
    })
}
