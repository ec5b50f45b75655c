//! Shared domain types and validation.
//!
//! Unit convention: the thermal noise variance is normalized to one, so `rho`,
//! `rho_up` and the amplified-noise factors `xi_*` are all ratios relative to
//! it. Everything stored here is linear; dB appears only at the manifest/CLI
//! boundary (see [`db_to_linear`]).

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};

/// How the transmitter learns the downlink channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Csit {
    /// The BS knows the slot-`tau` effective channel exactly.
    Perfect,
    /// The BS uses LMMSE estimates from impaired uplink pilots.
    Imperfect,
}

/// Downlink transmission strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Private streams only.
    NoRs,
    /// Common stream superimposed on the private streams.
    Rs,
}

/// Oscillator architecture at the base station.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    /// One common local oscillator drives every antenna.
    Clo,
    /// Every antenna has its own, independent oscillator.
    Slo,
}

/// Which estimator produced a rate report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Mc,
    De,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Geometry {
    /// `R_k = I_M` for every user.
    Iid,
    /// Path loss and log-normal shadowing; all BS antennas co-located.
    Cell {
        side_m: f64,
        user_distance_m: f64,
        /// Variance of the shadowing exponent `s ~ N(0, shadow_var)`.
        shadow_var: f64,
    },
}

impl Geometry {
    /// The 250 m x 250 m cell with users 25 m away from the BS.
    pub fn default_cell() -> Self {
        Geometry::Cell {
            side_m: 250.0,
            user_distance_m: 25.0,
            shadow_var: 3.16,
        }
    }
}

macro_rules! display_lower {
    ($t:ty, $($v:path => $s:expr),+) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($v => $s),+ })
            }
        }
    };
}

display_lower!(Csit, Csit::Perfect => "perfect", Csit::Imperfect => "imperfect");
display_lower!(Strategy, Strategy::NoRs => "nors", Strategy::Rs => "rs");
display_lower!(Topology, Topology::Clo => "clo", Topology::Slo => "slo");
display_lower!(Engine, Engine::Mc => "mc", Engine::De => "de");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// BS antennas `M`.
    pub antennas: usize,
    /// Single-antenna users `K`.
    pub users: usize,
    /// Coherence block length `T` in channel uses.
    pub block_len: usize,
    /// Pilot length `tau`.
    pub pilot_len: usize,
    /// Downlink SNR budget (linear).
    pub rho: f64,
    /// Uplink pilot power per symbol (linear).
    pub rho_up: f64,
    pub csit: Csit,
    pub strategy: Strategy,
    pub geometry: Geometry,
    pub seed: u64,
}

impl SystemConfig {
    /// Iid geometry, imperfect CSIT, RS, `tau = K`, `rho_up` = 2 dB.
    pub fn new(antennas: usize, users: usize, block_len: usize, rho: f64) -> Self {
        SystemConfig {
            antennas,
            users,
            block_len,
            pilot_len: users,
            rho,
            rho_up: db_to_linear(2.0),
            csit: Csit::Imperfect,
            strategy: Strategy::Rs,
            geometry: Geometry::Iid,
            seed: 0,
        }
    }

    /// Number of downlink data slots `T - tau`.
    pub fn data_slots(&self) -> usize {
        self.block_len - self.pilot_len
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpairmentProfile {
    /// BS phase-noise increment variance per slot (rad^2).
    pub sigma_phi2: f64,
    /// UE phase-noise increment variance per slot (rad^2).
    pub sigma_varphi2: f64,
    pub kappa_t2_bs: f64,
    pub kappa_r2_bs: f64,
    pub kappa_t2_ue: f64,
    pub kappa_r2_ue: f64,
    /// Amplified thermal noise at the BS, relative to the thermal floor.
    pub xi_bs: f64,
    /// Amplified thermal noise at the UEs, relative to the thermal floor.
    pub xi_ue: f64,
    pub topology: Topology,
}

impl ImpairmentProfile {
    /// No phase noise, no additive distortion, `xi = 1`.
    pub fn ideal(topology: Topology) -> Self {
        ImpairmentProfile {
            sigma_phi2: 0.0,
            sigma_varphi2: 0.0,
            kappa_t2_bs: 0.0,
            kappa_r2_bs: 0.0,
            kappa_t2_ue: 0.0,
            kappa_r2_ue: 0.0,
            xi_bs: 1.0,
            xi_ue: 1.0,
            topology,
        }
    }

    /// Profile driven by one total phase-noise variance `delta` (split evenly
    /// between the BS and UE oscillators), a common EVM factor `kappa2` for all
    /// four additive distortions, and one `xi` on both link ends.
    pub fn uniform(delta: f64, kappa2: f64, xi: f64, topology: Topology) -> Self {
        ImpairmentProfile {
            sigma_phi2: 0.5 * delta,
            sigma_varphi2: 0.5 * delta,
            kappa_t2_bs: kappa2,
            kappa_r2_bs: kappa2,
            kappa_t2_ue: kappa2,
            kappa_r2_ue: kappa2,
            xi_bs: xi,
            xi_ue: xi,
            topology,
        }
    }

    /// Combined BS+UE increment variance, which drives pilot-to-anchor decorrelation.
    pub fn total_pn(&self) -> f64 {
        self.sigma_phi2 + self.sigma_varphi2
    }

    pub fn is_ideal(&self) -> bool {
        self.sigma_phi2 == 0.0
            && self.sigma_varphi2 == 0.0
            && self.kappa_t2_bs == 0.0
            && self.kappa_r2_bs == 0.0
            && self.kappa_t2_ue == 0.0
            && self.kappa_r2_ue == 0.0
            && self.xi_bs == 1.0
            && self.xi_ue == 1.0
    }
}

/// Wiener phase-noise increment variance from oscillator data:
/// `4 pi^2 f_c c T_s`.
pub fn pn_variance_from_oscillator(carrier_hz: f64, osc_constant: f64, symbol_s: f64) -> f64 {
    4.0 * PI * PI * carrier_hz * osc_constant * symbol_s
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Split of the downlink budget between the common and private streams.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSplit {
    /// Fraction of the budget spent on the private streams.
    pub t: f64,
    pub rho_c: f64,
    pub rho_private_per_user: f64,
}

impl PowerSplit {
    pub fn new(rho: f64, t: f64, users: usize) -> Result<Self> {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::Domain(format!("power split t = {t} not in (0, 1]")));
        }
        if users == 0 {
            return Err(Error::Dimension("power split needs at least one user".into()));
        }
        Ok(PowerSplit {
            t,
            rho_c: rho * (1.0 - t),
            rho_private_per_user: rho * t / users as f64,
        })
    }

    /// All power on the private streams.
    pub fn private_only(rho: f64, users: usize) -> Result<Self> {
        Self::new(rho, 1.0, users)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    /// Per-user private rates in bit per channel use.
    pub private_rates: Vec<f64>,
    pub common_rate: f64,
    pub sum_rate: f64,
    pub strategy: Strategy,
    pub engine: Engine,
    /// 95% confidence half-width of the sum rate (Monte Carlo only).
    pub ci_half_width: Option<f64>,
}

impl RateReport {
    pub fn new(
        private_rates: Vec<f64>,
        common_rate: f64,
        strategy: Strategy,
        engine: Engine,
        ci_half_width: Option<f64>,
    ) -> Self {
        let common = match strategy {
            Strategy::Rs => common_rate,
            Strategy::NoRs => 0.0,
        };
        let sum_rate = common + private_rates.iter().sum::<f64>();
        RateReport {
            private_rates,
            common_rate: common,
            sum_rate,
            strategy,
            engine,
            ci_half_width,
        }
    }
}

fn check_variance(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() || v < 0.0 {
        return Err(Error::Domain(format!("{name} must be a finite nonnegative variance, got {v}")));
    }
    Ok(())
}

/// Checks every invariant of the configuration pair and returns it unchanged.
/// The first violated invariant is reported by name.
pub fn validate(
    config: SystemConfig,
    imp: ImpairmentProfile,
) -> Result<(SystemConfig, ImpairmentProfile)> {
    let (m, k, t, tau) = (config.antennas, config.users, config.block_len, config.pilot_len);
    if m == 0 || k == 0 {
        return Err(Error::Dimension(format!("M = {m} and K = {k} must be positive")));
    }
    if k > m {
        return Err(Error::Dimension(format!("K = {k} exceeds M = {m}")));
    }
    if tau < k {
        return Err(Error::Dimension(format!("tau = {tau} is shorter than K = {k}")));
    }
    if tau >= t {
        return Err(Error::Dimension(format!("tau = {tau} leaves no data slots in T = {t}")));
    }
    if !(config.rho.is_finite() && config.rho > 0.0) {
        return Err(Error::Domain(format!("rho = {} must be positive", config.rho)));
    }
    if !(config.rho_up.is_finite() && config.rho_up > 0.0) {
        return Err(Error::Domain(format!("rho_up = {} must be positive", config.rho_up)));
    }
    if let Geometry::Cell {
        side_m,
        user_distance_m,
        shadow_var,
    } = config.geometry
    {
        if !(user_distance_m > 0.0) {
            return Err(Error::Geometry(format!("user distance {user_distance_m} m must be positive")));
        }
        if !(side_m > 0.0) {
            return Err(Error::Geometry(format!("cell side {side_m} m must be positive")));
        }
        check_variance("shadow_var", shadow_var)?;
    }

    check_variance("sigma_phi2", imp.sigma_phi2)?;
    check_variance("sigma_varphi2", imp.sigma_varphi2)?;
    check_variance("kappa_t2_bs", imp.kappa_t2_bs)?;
    check_variance("kappa_r2_bs", imp.kappa_r2_bs)?;
    check_variance("kappa_t2_ue", imp.kappa_t2_ue)?;
    check_variance("kappa_r2_ue", imp.kappa_r2_ue)?;
    for (name, xi) in [("xi_bs", imp.xi_bs), ("xi_ue", imp.xi_ue)] {
        if !(xi.is_finite() && xi >= 1.0) {
            return Err(Error::Domain(format!("{name} = {xi} is below the thermal floor 1")));
        }
    }
    Ok((config, imp))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> (SystemConfig, ImpairmentProfile) {
        let mut c = SystemConfig::new(100, 2, 500, 10.0);
        c.pilot_len = 2;
        (c, ImpairmentProfile::ideal(Topology::Clo))
    }

    #[test]
    fn reference_setup_validates() {
        let (c, i) = base();
        assert!(validate(c, i).is_ok());
    }

    #[test]
    fn more_users_than_antennas() {
        let (mut c, i) = base();
        c.antennas = 2;
        c.users = 4;
        c.pilot_len = 4;
        assert!(matches!(validate(c, i), Err(Error::Dimension(_))));
    }

    #[test]
    fn short_pilots() {
        let (mut c, i) = base();
        c.pilot_len = 1;
        assert!(matches!(validate(c, i), Err(Error::Dimension(_))));
    }

    #[test]
    fn xi_below_floor() {
        let (c, mut i) = base();
        i.xi_ue = 0.5;
        let err = validate(c, i).unwrap_err();
        assert!(matches!(&err, Error::Domain(msg) if msg.contains("xi_ue")));
    }

    #[test]
    fn negative_variance_named() {
        let (c, mut i) = base();
        i.kappa_r2_ue = -1e-3;
        let err = validate(c, i).unwrap_err();
        assert!(matches!(&err, Error::Domain(msg) if msg.contains("kappa_r2_ue")));
    }

    #[test]
    fn bad_distance() {
        let (mut c, i) = base();
        c.geometry = Geometry::Cell {
            side_m: 250.0,
            user_distance_m: 0.0,
            shadow_var: 3.16,
        };
        assert!(matches!(validate(c, i), Err(Error::Geometry(_))));
    }

    #[test]
    fn validate_idempotent() {
        let (c, i) = base();
        let once = validate(c, i).unwrap();
        let twice = validate(once.0.clone(), once.1.clone()).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn power_split_conserves() {
        for &(rho, t, k) in &[(1.0, 0.3, 2usize), (1e3, 1.0, 10), (31.6, 0.01, 7)] {
            let s = PowerSplit::new(rho, t, k).unwrap();
            let total = s.rho_c + k as f64 * s.rho_private_per_user;
            assert!(((total - rho) / rho).abs() < 1e-12);
        }
        assert!(PowerSplit::new(1.0, 0.0, 2).is_err());
        assert!(PowerSplit::new(1.0, 1.2, 2).is_err());
    }

    #[test]
    fn oscillator_variance() {
        let v = pn_variance_from_oscillator(2e9, 1e-18, 1e-7);
        assert!((v - 4.0 * PI * PI * 2e-16).abs() < 1e-28);
    }

    #[test]
    fn db_roundtrip() {
        assert!((db_to_linear(20.0) - 100.0).abs() < 1e-12);
        assert!((linear_to_db(1000.0) - 30.0).abs() < 1e-12);
    }

    #[test]
    fn nors_report_drops_common() {
        let r = RateReport::new(vec![1.0, 2.0], 5.0, Strategy::NoRs, Engine::De, None);
        assert_eq!(r.sum_rate, 3.0);
        assert_eq!(r.common_rate, 0.0);
        let r = RateReport::new(vec![1.0, 2.0], 5.0, Strategy::Rs, Engine::De, None);
        assert_eq!(r.sum_rate, 8.0);
    }
}
