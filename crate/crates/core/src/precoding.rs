//! RZF private precoders, the weighted matched-filter common precoder,
//! precoder normalization and the private/common power split.

use crate::config::PowerSplit;
use crate::error::{Error, Result};
use crate::linalg::{c, is_diagonal, real_diag, solve_hpd, CMat, CVec};

/// Regularization of the RZF precoder: `M alpha_reg xi I + Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Regularizer {
    pub alpha_reg: f64,
    /// Amplified noise level that scales the identity part.
    pub xi: f64,
    /// Optional Hermitian PSD matrix added on top.
    pub z: Option<CMat>,
}

impl Regularizer {
    /// `Z = 0` and `alpha_reg = K / (M rho)`.
    pub fn default_for(antennas: usize, users: usize, rho: f64, xi: f64) -> Self {
        Regularizer {
            alpha_reg: users as f64 / (antennas as f64 * rho),
            xi,
            z: None,
        }
    }
}

/// Distortion-aware RZF:
/// `F = (kt2 G G^H + kr2 diag(G G^H) + Z + M alpha_reg xi I)^{-1} G`,
/// with `kt2 = 1 + kappa_t2_bs` and `kr2 = kappa_r2_ue`.
///
/// When the regularizer is diagonal the `M x M` inverse is replaced by a
/// `K x K` solve.
pub fn rzf_private(g: &CMat, kappa_t2_bs: f64, kappa_r2_ue: f64, reg: &Regularizer) -> Result<CMat> {
    let m = g.nrows();
    let kt2 = 1.0 + kappa_t2_bs;
    let base = m as f64 * reg.alpha_reg * reg.xi;
    if !(base >= 0.0) {
        return Err(Error::Domain(format!("regularization {base} is negative")));
    }
    let gram_diag: Vec<f64> = (0..m).map(|i| g.row(i).iter().map(|z| z.norm_sqr()).sum()).collect();
    let z_diag = match &reg.z {
        None => Some(vec![0.0; m]),
        Some(z) if is_diagonal(z) => Some(real_diag(z)),
        Some(_) => None,
    };
    match z_diag {
        Some(zd) => {
            let d: Vec<f64> = (0..m).map(|i| kappa_r2_ue * gram_diag[i] + zd[i] + base).collect();
            if d.iter().any(|&x| !(x > 0.0)) {
                return Err(Error::Numerical("RZF regularizer is singular".into()));
            }
            let dg = CMat::from_fn(m, g.ncols(), |i, j| g[(i, j)] / d[i]);
            let k = g.ncols();
            let inner = CMat::identity(k, k) + (g.adjoint() * &dg) * c(kt2);
            let x = solve_hpd(&inner, &CMat::identity(k, k))?;
            Ok(dg * x)
        }
        None => rzf_private_dense(g, kappa_t2_bs, kappa_r2_ue, reg),
    }
}

/// Direct `M x M` solve; reference path for general `Z`.
pub fn rzf_private_dense(g: &CMat, kappa_t2_bs: f64, kappa_r2_ue: f64, reg: &Regularizer) -> Result<CMat> {
    let m = g.nrows();
    let w = g * g.adjoint();
    let mut a = &w * c(1.0 + kappa_t2_bs);
    for i in 0..m {
        a[(i, i)] += kappa_r2_ue * w[(i, i)].re + m as f64 * reg.alpha_reg * reg.xi;
    }
    if let Some(z) = &reg.z {
        a += z;
    }
    solve_hpd(&a, g)
}

/// `lambda = K / tr(F^H F)`.
pub fn normalize_lambda(f: &CMat, users: usize) -> Result<f64> {
    let tr: f64 = f.iter().map(|z| z.norm_sqr()).sum();
    if !(tr > 0.0) {
        return Err(Error::Numerical("precoder is zero".into()));
    }
    Ok(users as f64 / tr)
}

/// Max-min common weights: `alpha_k^2` proportional to `1 / (q_k tr^2 R^_k)`,
/// scaled so that `sum_k alpha_k^2 = 1/M`.
pub fn common_weights(q: &[f64], tr_r_hat: &[f64], antennas: usize) -> Result<Vec<f64>> {
    if q.len() != tr_r_hat.len() || q.is_empty() {
        return Err(Error::Dimension("common weights need one q and one trace per user".into()));
    }
    if let Some(x) = tr_r_hat.iter().find(|&&x| !(x > 0.0)) {
        return Err(Error::Domain(format!("estimate covariance trace {x} must be positive")));
    }
    if let Some(x) = q.iter().find(|&&x| !(x > 0.0)) {
        return Err(Error::Domain(format!("weight q = {x} must be positive")));
    }
    let inv: Vec<f64> = q.iter().zip(tr_r_hat).map(|(q, t)| 1.0 / (q * t * t)).collect();
    let total: f64 = inv.iter().sum();
    Ok(inv.iter().map(|x| (x / (total * antennas as f64)).sqrt()).collect())
}

/// `f_c = sum_k alpha_k g^_k`, rescaled to unit norm.
pub fn common_precoder(alpha: &[f64], g: &CMat) -> Result<CVec> {
    if alpha.len() != g.ncols() {
        return Err(Error::Dimension(format!("{} weights for {} users", alpha.len(), g.ncols())));
    }
    let mut f = CVec::zeros(g.nrows());
    for (k, &a) in alpha.iter().enumerate() {
        f.axpy(c(a), &g.column(k), c(1.0));
    }
    let n = f.norm();
    if !(n > 0.0) {
        return Err(Error::Numerical("common precoder is zero".into()));
    }
    Ok(f / c(n))
}

/// Coefficient on the amplified noise in the power-split denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitRule {
    /// `K M xi`, as obtained when the split is derived from the interference target.
    #[default]
    Derived,
    /// `M xi`.
    Literal,
}

/// Quantities the power-split rule needs, all from the deterministic equivalents.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitInputs {
    pub antennas: usize,
    pub rho: f64,
    pub lambda_bar: f64,
    /// `q[j][k]`: interference coefficient of beam `j` at user `k`.
    pub q: Vec<Vec<f64>>,
    /// Fixed-point values entering `(1 + e_j)^2`.
    pub e: Vec<f64>,
    /// `tr R^_k` (or `tr R_k` with perfect CSIT).
    pub m_bar: Vec<f64>,
    pub kappa_t2_bs: f64,
    pub kappa_r2_ue: f64,
    pub xi_ue: f64,
}

/// Private-power fraction
/// `t = min_k min{K^2 M / (lambda sum_{j!=k} rho Q_jk/(1+e_j)^2 + m_k rho (kt2 + kr2) + K M xi), 1}`.
pub fn power_split(inp: &SplitInputs, rule: SplitRule) -> Result<f64> {
    let k_users = inp.e.len();
    let (kf, mf) = (k_users as f64, inp.antennas as f64);
    let noise = match rule {
        SplitRule::Derived => kf * mf * inp.xi_ue,
        SplitRule::Literal => mf * inp.xi_ue,
    };
    let mut t: f64 = 1.0;
    for k in 0..k_users {
        let interf: f64 = (0..k_users)
            .filter(|&j| j != k)
            .map(|j| inp.rho * inp.q[j][k] / (1.0 + inp.e[j]).powi(2))
            .sum();
        let den = inp.lambda_bar * interf
            + inp.m_bar[k] * inp.rho * (inp.kappa_t2_bs + inp.kappa_r2_ue)
            + noise;
        if !(den > 0.0) {
            return Err(Error::Numerical(format!("power-split denominator {den} is not positive")));
        }
        t = t.min(kf * kf * mf / den);
    }
    Ok(t)
}

/// Split for the given strategy: NoRS always uses `t = 1`.
pub fn split_for(rho: f64, t: f64, users: usize, rate_splitting: bool) -> Result<PowerSplit> {
    if rate_splitting {
        PowerSplit::new(rho, t, users)
    } else {
        PowerSplit::private_only(rho, users)
    }
}
