//! Deterministic equivalents of the downlink SINRs and rates.
//!
//! All per-user quantities are expressed through traces of the resolvent `T`
//! of the normalized RZF Gram matrix and of its derivatives
//! `T'(K) ~ A^{-1} K A^{-1}`. The model matches the Monte Carlo simulator
//! term by term: the same precoder normalization, a unit-norm common beam,
//! and distortion powers taken from the full transmit covariance.

mod solver;

pub use solver::{derivative_system, fixed_point, DeInputs, Derivative, FixedPoint, SolverOptions};

use crate::channel::{campaign_correlation, CorrelationSet};
use crate::config::{
    Csit, Engine, ImpairmentProfile, RateReport, Strategy, SystemConfig, Topology,
};
use crate::error::{Error, Result};
use crate::impairments::pn_trace_magnitude;
use crate::linalg::{c, real_diag, trace_prod, CMat};
use crate::precoding::{common_weights, power_split, SplitInputs, SplitRule};
use crate::training::{build_pilots, TrainingStats};

/// How the interference coefficients `Q_jk` are composed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QVariant {
    /// Rank-one decomposition around the intended user's estimate, with the
    /// estimation error and the phase drift handled as uncorrelated residue.
    #[default]
    Derived,
    /// The three-term closed form with second-derivative traces only. Kept as
    /// a reference; it underestimates interference by a factor of order `M`.
    Literal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeOptions {
    pub solver: SolverOptions,
    pub q_variant: QVariant,
    pub split_rule: SplitRule,
    /// Overrides the default `alpha_reg = K / (M rho)`.
    pub alpha_reg: Option<f64>,
    /// Overrides the power-split rule for RS.
    pub fixed_t: Option<f64>,
}

impl Default for DeOptions {
    fn default() -> Self {
        DeOptions {
            solver: SolverOptions::default(),
            q_variant: QVariant::Derived,
            split_rule: SplitRule::Derived,
            alpha_reg: None,
            fixed_t: None,
        }
    }
}

/// Amplified noise level used in the RZF regularizer.
pub fn regularizer_xi(csit: Csit, imp: &ImpairmentProfile) -> f64 {
    match csit {
        Csit::Imperfect => imp.xi_bs,
        Csit::Perfect => imp.xi_ue,
    }
}

pub fn default_alpha_reg(config: &SystemConfig) -> f64 {
    config.users as f64 / (config.antennas as f64 * config.rho)
}

/// Channel statistics shared by both engines for one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Statistics {
    pub corr: CorrelationSet,
    /// Present for imperfect CSIT.
    pub training: Option<TrainingStats>,
    /// Covariance of what the precoder sees: `R^_k`, or `R_k` with perfect CSIT.
    pub r_hat: Vec<CMat>,
}

impl Statistics {
    pub fn build(config: &SystemConfig, imp: &ImpairmentProfile) -> Result<Self> {
        let corr = campaign_correlation(config)?;
        Self::from_correlation(corr, config, imp)
    }

    pub fn from_correlation(corr: CorrelationSet, config: &SystemConfig, imp: &ImpairmentProfile) -> Result<Self> {
        match config.csit {
            Csit::Perfect => Ok(Statistics {
                r_hat: corr.r.clone(),
                corr,
                training: None,
            }),
            Csit::Imperfect => {
                let pilots = build_pilots(config.users, config.pilot_len, config.rho_up)?;
                let training = TrainingStats::new(&corr, &pilots, imp)?;
                Ok(Statistics {
                    r_hat: training.r_hat.clone(),
                    corr,
                    training: Some(training),
                })
            }
        }
    }
}

/// `lambda = K ((1/M) sum_k delta'_k / (1 + e_k)^2)^{-1}`.
pub fn de_lambda_bar(delta_prime: &[f64], e: &[f64], antennas: usize) -> Result<f64> {
    let s: f64 = delta_prime
        .iter()
        .zip(e)
        .map(|(d, e)| d / (1.0 + e).powi(2))
        .sum::<f64>()
        / antennas as f64;
    if !(s > 0.0) {
        return Err(Error::Numerical(format!("normalization trace {s} is not positive")));
    }
    Ok(delta_prime.len() as f64 / s)
}

/// Everything about the private precoder that does not depend on the slot or
/// on the power split.
#[derive(Debug, Clone, PartialEq)]
pub struct DeCore {
    pub antennas: usize,
    pub users: usize,
    /// `e_k = (1/M) tr D_k T` with `D_k = (1 + kappa_t2_bs) R^_k`.
    pub e: Vec<f64>,
    /// `delta_k = (1/M) tr R^_k T`.
    pub delta: Vec<f64>,
    /// `delta'_k = (1/M) tr R^_k T'(I)`.
    pub delta_prime: Vec<f64>,
    pub t: CMat,
    pub lambda_bar: f64,
    pub iterations: usize,
    pub residual: f64,
    /// Largest spectral radius met in the derivative systems.
    pub max_spectral_radius: f64,
    /// `x_r[j][k] = (1/M) tr R_k T'(R^_j)`.
    pub x_r: Vec<Vec<f64>>,
    /// `x_rhat[j][k] = (1/M) tr R^_k T'(R^_j)`.
    pub x_rhat: Vec<Vec<f64>>,
    /// `x_diag[j][k] = (1/M) tr diag(R_k) T'(R^_j)`.
    pub x_diag: Vec<Vec<f64>>,
    pub tr_r: Vec<f64>,
    pub tr_rhat: Vec<f64>,
    /// `tr R_k R^_j`, indexed `[j][k]`.
    pub cross: Vec<Vec<f64>>,
    /// `tr diag(R_k) R^_j`, indexed `[j][k]`.
    pub cross_diag: Vec<Vec<f64>>,
}

impl DeCore {
    pub fn new(stats: &Statistics, config: &SystemConfig, imp: &ImpairmentProfile, opts: &DeOptions) -> Result<Self> {
        let m = config.antennas;
        let k_users = config.users;
        let mf = m as f64;
        let r = &stats.corr.r;
        let r_hat = &stats.r_hat;
        let kt2 = 1.0 + imp.kappa_t2_bs;
        let alpha_reg = opts.alpha_reg.unwrap_or_else(|| default_alpha_reg(config));
        let mut s = CMat::zeros(m, m);
        for rh in r_hat {
            for i in 0..m {
                s[(i, i)] += c(imp.kappa_r2_ue * rh[(i, i)].re / mf);
            }
        }
        let inputs = DeInputs {
            d: r_hat.iter().map(|x| x * c(kt2)).collect(),
            s,
            rho_arg: alpha_reg * regularizer_xi(config.csit, imp),
        };
        let fp = fixed_point(&inputs, opts.solver)?;
        let delta: Vec<f64> = r_hat.iter().map(|x| trace_prod(x, &fp.t).re / mf).collect();

        let d_id = derivative_system(&inputs, &fp, &CMat::identity(m, m))?;
        let delta_prime: Vec<f64> = r_hat.iter().map(|x| trace_prod(x, &d_id.t_prime).re / mf).collect();
        let lambda_bar = de_lambda_bar(&delta_prime, &fp.e, m)?;
        let mut max_radius = d_id.spectral_radius;

        let diag_r: Vec<Vec<f64>> = r.iter().map(real_diag).collect();
        let mut x_r = vec![vec![0.0; k_users]; k_users];
        let mut x_rhat = vec![vec![0.0; k_users]; k_users];
        let mut x_diag = vec![vec![0.0; k_users]; k_users];
        let mut cross = vec![vec![0.0; k_users]; k_users];
        let mut cross_diag = vec![vec![0.0; k_users]; k_users];
        for j in 0..k_users {
            let der = derivative_system(&inputs, &fp, &r_hat[j])?;
            max_radius = max_radius.max(der.spectral_radius);
            let tp = &der.t_prime;
            for k in 0..k_users {
                x_r[j][k] = trace_prod(&r[k], tp).re / mf;
                x_rhat[j][k] = trace_prod(&r_hat[k], tp).re / mf;
                x_diag[j][k] = (0..m).map(|i| diag_r[k][i] * tp[(i, i)].re).sum::<f64>() / mf;
                cross[j][k] = trace_prod(&r[k], &r_hat[j]).re;
                cross_diag[j][k] = (0..m).map(|i| diag_r[k][i] * r_hat[j][(i, i)].re).sum();
            }
        }
        Ok(DeCore {
            antennas: m,
            users: k_users,
            e: fp.e,
            delta,
            delta_prime,
            t: fp.t,
            lambda_bar,
            iterations: fp.iterations,
            residual: fp.residual,
            max_spectral_radius: max_radius,
            x_r,
            x_rhat,
            x_diag,
            tr_r: r.iter().map(|x| x.trace().re).collect(),
            tr_rhat: r_hat.iter().map(|x| x.trace().re).collect(),
            cross,
            cross_diag,
        })
    }

    /// Interference coefficients `Q[j][k]` for phase-drift power `psi2`.
    pub fn qjk(&self, psi2: f64, variant: QVariant) -> Vec<Vec<f64>> {
        let k_users = self.users;
        let mf = self.antennas as f64;
        let mut q = vec![vec![0.0; k_users]; k_users];
        for j in 0..k_users {
            for k in 0..k_users {
                if j == k {
                    continue;
                }
                q[j][k] = match variant {
                    QVariant::Derived => {
                        let keep = 1.0 - (1.0 + self.e[k]).powi(-2);
                        self.x_r[j][k] - psi2 * keep * self.x_rhat[j][k]
                    }
                    QVariant::Literal => {
                        // Second-derivative traces with K = R^_k.
                        let dj = self.x_rhat[k][j];
                        let dk = self.x_rhat[k][k];
                        let psi = psi2.sqrt();
                        dj / mf + dk.abs().powi(2) * dk / (mf * (1.0 + self.delta[j]).powi(2))
                            - 2.0 * psi * self.delta[k] * dk / (mf * (1.0 + self.delta[j]))
                    }
                };
            }
        }
        q
    }
}

/// Per-user DE powers at one data slot, in the same units as the SINRs.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotTerms {
    pub desired: Vec<f64>,
    pub interference: Vec<f64>,
    /// Received common-stream power.
    pub common: Vec<f64>,
    /// Transmit distortion caused by the private streams.
    pub tx_private: Vec<f64>,
    /// Transmit distortion caused by the common stream.
    pub tx_common: Vec<f64>,
}

/// Power split and common-beam weights used for one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Loading {
    pub rho: f64,
    pub t: f64,
    /// Common weights; empty for NoRS.
    pub alpha: Vec<f64>,
}

impl Loading {
    pub fn nors(rho: f64) -> Self {
        Loading { rho, t: 1.0, alpha: Vec::new() }
    }

    fn rho_c(&self) -> f64 {
        if self.alpha.is_empty() {
            0.0
        } else {
            self.rho * (1.0 - self.t)
        }
    }
}

/// DE powers of every term of the received signal for phase-drift power `psi2`.
pub fn slot_terms(core: &DeCore, psi2: f64, load: &Loading, variant: QVariant) -> SlotTerms {
    let k_users = core.users;
    let mf = core.antennas as f64;
    let p = load.rho * load.t / k_users as f64;
    let lp = core.lambda_bar * p;
    let q = core.qjk(psi2, variant);
    let rho_c = load.rho_c();
    let n_c: f64 = load.alpha.iter().zip(&core.tr_rhat).map(|(a, t)| a * a * t).sum();
    let mut out = SlotTerms {
        desired: vec![0.0; k_users],
        interference: vec![0.0; k_users],
        common: vec![0.0; k_users],
        tx_private: vec![0.0; k_users],
        tx_common: vec![0.0; k_users],
    };
    for k in 0..k_users {
        out.desired[k] = lp * psi2 * (core.delta[k] / (1.0 + core.e[k])).powi(2);
        out.interference[k] = (0..k_users)
            .filter(|&j| j != k)
            .map(|j| lp * q[j][k] / (mf * (1.0 + core.e[j]).powi(2)))
            .sum();
        out.tx_private[k] = (0..k_users)
            .map(|j| lp * core.x_diag[j][k] / (mf * (1.0 + core.e[j]).powi(2)))
            .sum();
        if rho_c > 0.0 && n_c > 0.0 {
            let a = &load.alpha;
            let coherent = a[k] * a[k] * psi2 * core.tr_rhat[k].powi(2);
            let spread: f64 = (0..k_users).map(|j| a[j] * a[j] * core.cross[j][k]).sum();
            out.common[k] = rho_c * (coherent + spread) / n_c;
            out.tx_common[k] = rho_c * (0..k_users).map(|j| a[j] * a[j] * core.cross_diag[j][k]).sum::<f64>() / n_c;
        }
    }
    out
}

/// Private and common SINRs from slot terms.
pub fn sinrs(terms: &SlotTerms, imp: &ImpairmentProfile) -> (Vec<f64>, Vec<f64>) {
    let k_users = terms.desired.len();
    let mut private = vec![0.0; k_users];
    let mut common = vec![0.0; k_users];
    for k in 0..k_users {
        let received = terms.desired[k] + terms.interference[k] + terms.common[k];
        let dist = imp.kappa_t2_bs * (terms.tx_private[k] + terms.tx_common[k]) + imp.kappa_r2_ue * received;
        let base = terms.interference[k] + dist + imp.xi_ue;
        private[k] = terms.desired[k] / base;
        common[k] = terms.common[k] / (base + terms.desired[k]);
    }
    (private, common)
}

/// Phase-drift power `|(1/M) tr Theta~|^2` for every data slot `n = tau+1..=T`.
pub fn drift_profile(config: &SystemConfig, imp: &ImpairmentProfile) -> Vec<f64> {
    (1..=config.data_slots())
        .map(|n| pn_trace_magnitude(imp, n, imp.topology).powi(2))
        .collect()
}

/// DE private SINRs at one slot.
pub fn de_private_sinr(core: &DeCore, imp: &ImpairmentProfile, psi2: f64, load: &Loading, variant: QVariant) -> Vec<f64> {
    sinrs(&slot_terms(core, psi2, load, variant), imp).0
}

/// DE common SINRs at one slot and their minimum.
pub fn de_common_sinr(core: &DeCore, imp: &ImpairmentProfile, psi2: f64, load: &Loading, variant: QVariant) -> (Vec<f64>, f64) {
    let c = sinrs(&slot_terms(core, psi2, load, variant), imp).1;
    let min = c.iter().copied().fold(f64::INFINITY, f64::min);
    (c, min)
}

/// Power split from the deterministic equivalents.
pub fn de_power_split(core: &DeCore, config: &SystemConfig, imp: &ImpairmentProfile, psi2: f64, opts: &DeOptions) -> Result<f64> {
    let inp = SplitInputs {
        antennas: core.antennas,
        rho: config.rho,
        lambda_bar: core.lambda_bar,
        q: core.qjk(psi2, opts.q_variant),
        e: core.e.clone(),
        m_bar: core.tr_rhat.clone(),
        kappa_t2_bs: imp.kappa_t2_bs,
        kappa_r2_ue: imp.kappa_r2_ue,
        xi_ue: imp.xi_ue,
    };
    power_split(&inp, opts.split_rule)
}

/// Common weights that equalize the DE common SINRs, from the slot-averaged
/// denominators that do not depend on the common beam.
pub fn de_common_weights(core: &DeCore, imp: &ImpairmentProfile, profile: &[f64], rho: f64, t: f64, variant: QVariant) -> Result<Vec<f64>> {
    let k_users = core.users;
    // No common weights yet, so slot_terms leaves out every common-stream term.
    let load = Loading { rho, t, alpha: Vec::new() };
    let mut den = vec![0.0; k_users];
    for_each_slot(profile, |psi2, w| {
        let s = slot_terms(core, psi2, &load, variant);
        for k in 0..k_users {
            let received = s.desired[k] + s.interference[k];
            den[k] += w * (received
                + imp.kappa_t2_bs * s.tx_private[k]
                + imp.kappa_r2_ue * received
                + imp.xi_ue);
        }
    });
    let q: Vec<f64> = den.iter().map(|d| 1.0 / d).collect();
    common_weights(&q, &core.tr_rhat, core.antennas)
}

/// Calls `f(psi2, weight)` for every distinct drift value, with weights
/// summing to one. Constant profiles collapse to a single call.
fn for_each_slot(profile: &[f64], mut f: impl FnMut(f64, f64)) {
    if profile.iter().all(|&x| x == profile[0]) {
        f(profile[0], 1.0);
    } else {
        let w = 1.0 / profile.len() as f64;
        for &p in profile {
            f(p, w);
        }
    }
}

fn mean(profile: &[f64]) -> f64 {
    profile.iter().sum::<f64>() / profile.len() as f64
}

/// Rates of one strategy under a given loading.
#[derive(Debug, Clone, PartialEq)]
pub struct DeRates {
    pub private_rates: Vec<f64>,
    pub common_rate: f64,
    /// SINRs at the first data slot.
    pub first_private_sinr: Vec<f64>,
    pub first_common_sinr: Vec<f64>,
    /// Per-slot private rates `log2(1 + SINR)` of user 0, for inspection.
    pub slot_rates_user0: Vec<f64>,
}

pub fn rates_for(core: &DeCore, imp: &ImpairmentProfile, config: &SystemConfig, profile: &[f64], load: &Loading, variant: QVariant) -> DeRates {
    let k_users = core.users;
    let tf = config.block_len as f64;
    let mut private = vec![0.0; k_users];
    let mut common = 0.0;
    let mut slot_rates = Vec::with_capacity(profile.len());
    let mut first = None;
    let mut cache: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    for &psi2 in profile {
        let (p, c) = match &cache {
            Some((x, p, c)) if *x == psi2 => (p.clone(), c.clone()),
            _ => {
                let (p, c) = sinrs(&slot_terms(core, psi2, load, variant), imp);
                cache = Some((psi2, p.clone(), c.clone()));
                (p, c)
            }
        };
        for k in 0..k_users {
            private[k] += (1.0 + p[k]).log2() / tf;
        }
        if !load.alpha.is_empty() {
            let min = c.iter().copied().fold(f64::INFINITY, f64::min);
            common += (1.0 + min).log2() / tf;
        }
        slot_rates.push((1.0 + p[0]).log2());
        if first.is_none() {
            first = Some((p, c));
        }
    }
    let (fp, fc) = first.unwrap_or_default();
    DeRates {
        private_rates: private,
        common_rate: common,
        first_private_sinr: fp,
        first_common_sinr: fc,
        slot_rates_user0: slot_rates,
    }
}

/// Full DE evaluation of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct DeReport {
    pub report: RateReport,
    /// Conventional (private-only) rates at full power.
    pub nors: DeRates,
    /// RS rates; `None` for NoRS configurations.
    pub rs: Option<DeRates>,
    pub t: f64,
    pub alpha: Vec<f64>,
    /// Sum-rate gain of RS over NoRS, `R^c + sum_k (R^p_k - R^NoRS_k)`.
    pub delta_r: Option<f64>,
    pub lambda_bar: f64,
    /// Interference coefficients at the slot-averaged drift power.
    pub q: Vec<Vec<f64>>,
    pub e: Vec<f64>,
    pub delta: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub max_spectral_radius: f64,
}

/// Design quantities the Monte Carlo engine borrows from the DE for RS.
#[derive(Debug, Clone, PartialEq)]
pub struct RsDesign {
    pub t: f64,
    pub alpha: Vec<f64>,
}

pub fn rs_design(core: &DeCore, config: &SystemConfig, imp: &ImpairmentProfile, opts: &DeOptions) -> Result<RsDesign> {
    let profile = drift_profile(config, imp);
    let t = match opts.fixed_t {
        Some(t) => t,
        None => de_power_split(core, config, imp, mean(&profile), opts)?,
    };
    let alpha = de_common_weights(core, imp, &profile, config.rho, t, opts.q_variant)?;
    Ok(RsDesign { t, alpha })
}

/// DE rates for the configured strategy, CSIT mode and topology.
pub fn de_rates(config: &SystemConfig, imp: &ImpairmentProfile, opts: &DeOptions) -> Result<DeReport> {
    let stats = Statistics::build(config, imp)?;
    de_rates_with(&stats, config, imp, opts)
}

pub fn de_rates_with(stats: &Statistics, config: &SystemConfig, imp: &ImpairmentProfile, opts: &DeOptions) -> Result<DeReport> {
    if let Some(t) = opts.fixed_t {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::Domain(format!("power split t = {t} not in (0, 1]")));
        }
    }
    let core = DeCore::new(stats, config, imp, opts)?;
    let profile = drift_profile(config, imp);
    let variant = opts.q_variant;
    let nors = rates_for(&core, imp, config, &profile, &Loading::nors(config.rho), variant);
    let q = core.qjk(mean(&profile), variant);
    let (report, rs, t, alpha, delta_r) = match config.strategy {
        Strategy::NoRs => (
            RateReport::new(nors.private_rates.clone(), 0.0, Strategy::NoRs, Engine::De, None),
            None,
            1.0,
            Vec::new(),
            None,
        ),
        Strategy::Rs => {
            let design = rs_design(&core, config, imp, opts)?;
            let load = Loading { rho: config.rho, t: design.t, alpha: design.alpha.clone() };
            let rs = rates_for(&core, imp, config, &profile, &load, variant);
            let gain = rs.common_rate
                + rs.private_rates.iter().zip(&nors.private_rates).map(|(a, b)| a - b).sum::<f64>();
            (
                RateReport::new(rs.private_rates.clone(), rs.common_rate, Strategy::Rs, Engine::De, None),
                Some(rs),
                design.t,
                design.alpha,
                Some(gain),
            )
        }
    };
    for r in report.private_rates.iter().chain(std::iter::once(&report.common_rate)) {
        if !r.is_finite() || *r < 0.0 {
            return Err(Error::Numerical(format!("DE produced an invalid rate {r}")));
        }
    }
    Ok(DeReport {
        report,
        nors,
        rs,
        t,
        alpha,
        delta_r,
        lambda_bar: core.lambda_bar,
        q,
        e: core.e.clone(),
        delta: core.delta.clone(),
        iterations: core.iterations,
        residual: core.residual,
        max_spectral_radius: core.max_spectral_radius,
    })
}

/// Whether the DE SINRs are slot-independent for this topology.
pub fn slot_invariant(topology: Topology, imp: &ImpairmentProfile) -> bool {
    topology == Topology::Clo || imp.sigma_phi2 == 0.0
}
