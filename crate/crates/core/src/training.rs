//! Uplink pilot training and LMMSE channel estimation under impairments.
//!
//! Pilot slots are `u = 1..=tau` and the estimate targets the effective
//! channel at the last pilot slot `tau`. Stacked observations use slot-major
//! order: entry `(u - 1) * M + m` is antenna `m` in pilot slot `u`.

use num_complex::Complex64;
use rand::Rng;
use std::f64::consts::PI;

use crate::channel::{ChannelRealization, CorrelationSet};
use crate::config::ImpairmentProfile;
use crate::error::{Error, Result};
use crate::impairments::{draw_gaussian_diag, rx_distortion_cov_bs, PhaseTrajectory};
use crate::linalg::{
    c, cdiag, cn01, frobenius, hermitian_eigenvalues, hermitian_part, inv_hpd, solve_hpd, CMat,
    CVec, ZERO,
};

/// Orthogonal pilot sequences, one column per user.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotBook {
    /// `tau x K`, entry `(u - 1, k)` is the symbol user `k` sends in pilot slot `u`.
    pub omega: CMat,
    pub rho_up: f64,
}

impl PilotBook {
    pub fn len(&self) -> usize {
        self.omega.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.nrows() == 0
    }

    pub fn users(&self) -> usize {
        self.omega.ncols()
    }
}

/// First `K` columns of the `tau`-point DFT, scaled so every symbol has power `rho_up`.
pub fn build_pilots(users: usize, tau: usize, rho_up: f64) -> Result<PilotBook> {
    if tau < users {
        return Err(Error::Dimension(format!("tau = {tau} is shorter than K = {users}")));
    }
    let amp = rho_up.sqrt();
    let omega = CMat::from_fn(tau, users, |u, k| {
        let ang = -2.0 * PI * ((u * k) % tau) as f64 / tau as f64;
        Complex64::from_polar(amp, ang)
    });
    Ok(PilotBook { omega, rho_up })
}

/// Stacked pilot observation `psi` for one coherence block.
///
/// Slot `u` receives `sum_k g~_{k,u} (omega_{k,u} + eta_t) + eta_r + noise`, with
/// `g~_{k,u} = Theta_{k,u} h_k`, UE transmit distortion of variance
/// `kappa_t2_ue * rho_up`, BS receive distortion proportional to the received
/// per-antenna signal power, and noise of variance `xi_bs`.
pub fn simulate_uplink<R: Rng + ?Sized>(
    channels: &ChannelRealization,
    traj: &PhaseTrajectory,
    pilots: &PilotBook,
    imp: &ImpairmentProfile,
    rng: &mut R,
) -> CVec {
    let tau = pilots.len();
    let k_users = channels.h.len();
    let m = channels.h.first().map(|h| h.len()).unwrap_or(0);
    let tx_sd = (imp.kappa_t2_ue * pilots.rho_up).sqrt();
    let noise_sd = imp.xi_bs.sqrt();
    let mut psi = CVec::zeros(tau * m);
    for u in 1..=tau {
        let mut g_slot = Vec::with_capacity(k_users);
        let mut y = CVec::zeros(m);
        for k in 0..k_users {
            let rot = traj.rotation_diag(k, u);
            let g = CVec::from_fn(m, |i, _| rot[i] * channels.h[k][i]);
            let sym = pilots.omega[(u - 1, k)] + cn01(rng) * tx_sd;
            y.axpy(sym, &g, c(1.0));
            g_slot.push(g);
        }
        let powers: Vec<f64> = (0..k_users).map(|k| pilots.omega[(u - 1, k)].norm_sqr()).collect();
        let eta_r = draw_gaussian_diag(&rx_distortion_cov_bs(imp.kappa_r2_bs, &g_slot, &powers), rng);
        for i in 0..m {
            psi[(u - 1) * m + i] = y[i] + eta_r[i] + cn01(rng) * noise_sd;
        }
    }
    psi
}

#[derive(Debug, Clone, PartialEq)]
enum Weights {
    /// `W_k = C_k Sigma^{-1}`, each `M x tau M`.
    Dense(Vec<CMat>),
    /// Per antenna `m` and user `k`, the length-`tau` row of `W_k`.
    Diagonal(Vec<Vec<CVec>>),
}

/// Second-order statistics of the training phase and the estimator built from them.
///
/// They depend only on the covariances and the impairment profile, so they
/// are computed once per campaign and shared by every block.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingStats {
    pub antennas: usize,
    pub tau: usize,
    /// Decorrelation rate per slot, `(sigma_phi2 + sigma_varphi2) / 2`.
    pub decay: f64,
    /// Diagonal of `Delta`: `exp(-decay |tau - u|)` for `u = 1..=tau`.
    pub delta: Vec<f64>,
    pub r: Vec<CMat>,
    pub r_hat: Vec<CMat>,
    pub r_tilde: Vec<CMat>,
    x_tilde: Vec<CMat>,
    rx_weight: Vec<Vec<f64>>,
    xi_bs: f64,
    weights: Weights,
}

impl TrainingStats {
    pub fn new(corr: &CorrelationSet, pilots: &PilotBook, imp: &ImpairmentProfile) -> Result<Self> {
        let k_users = corr.users();
        if pilots.users() != k_users {
            return Err(Error::Dimension(format!(
                "{} pilot sequences for {k_users} users",
                pilots.users()
            )));
        }
        let tau = pilots.len();
        let m = corr.antennas();
        let decay = 0.5 * imp.total_pn();
        let delta: Vec<f64> = (1..=tau).map(|u| (-decay * (tau - u) as f64).exp()).collect();
        let om = &pilots.omega;
        let x_tilde: Vec<CMat> = (0..k_users)
            .map(|j| {
                CMat::from_fn(tau, tau, |u, v| {
                    let d = (-decay * (u as f64 - v as f64).abs()).exp();
                    let mut x = om[(u, j)] * om[(v, j)].conj() * d;
                    if u == v {
                        x += imp.kappa_t2_ue * pilots.rho_up;
                    }
                    x
                })
            })
            .collect();
        let rx_weight: Vec<Vec<f64>> = (0..k_users)
            .map(|j| (0..tau).map(|u| imp.kappa_r2_bs * om[(u, j)].norm_sqr()).collect())
            .collect();
        // Row u of omega_k^H Delta.
        let coef = |k: usize, u: usize| om[(u, k)].conj() * delta[u];

        let (weights, r_hat) = match corr.diagonals() {
            Some(diags) => {
                let mut w = vec![Vec::with_capacity(m); k_users];
                let mut rh = vec![vec![0.0; m]; k_users];
                for i in 0..m {
                    let mut s = CMat::identity(tau, tau) * c(imp.xi_bs);
                    for j in 0..k_users {
                        let rj = diags[j][i];
                        s += &x_tilde[j] * c(rj);
                        for u in 0..tau {
                            s[(u, u)] += rx_weight[j][u] * rj;
                        }
                    }
                    let inv = inv_hpd(&s)?;
                    for k in 0..k_users {
                        let ch = CVec::from_fn(tau, |u, _| coef(k, u).conj() * diags[k][i]);
                        let x = &inv * &ch;
                        rh[k][i] = ch.dotc(&x).re;
                        w[k].push(x.map(|z| z.conj()));
                    }
                }
                (Weights::Diagonal(w), rh.iter().map(|d| cdiag(d)).collect::<Vec<_>>())
            }
            None => {
                let sigma = assemble_sigma(&corr.r, &x_tilde, &rx_weight, imp.xi_bs);
                let mut w = Vec::with_capacity(k_users);
                let mut rh = Vec::with_capacity(k_users);
                for k in 0..k_users {
                    let ck = cross_cov(&corr.r[k], &|u| coef(k, u), tau);
                    let x = solve_hpd(&sigma, &ck.adjoint())?;
                    rh.push(hermitian_part(&(&ck * &x)));
                    w.push(x.adjoint());
                }
                (Weights::Dense(w), rh)
            }
        };
        let r_tilde = corr.r.iter().zip(&r_hat).map(|(r, rh)| r - rh).collect();
        Ok(TrainingStats {
            antennas: m,
            tau,
            decay,
            delta,
            r: corr.r.clone(),
            r_hat,
            r_tilde,
            x_tilde,
            rx_weight,
            xi_bs: imp.xi_bs,
            weights,
        })
    }

    pub fn users(&self) -> usize {
        self.r.len()
    }

    /// The `tau M x tau M` covariance of the stacked observation.
    pub fn sigma(&self) -> CMat {
        assemble_sigma(&self.r, &self.x_tilde, &self.rx_weight, self.xi_bs)
    }

    /// `Delta_k` as a `tau x tau` diagonal matrix.
    pub fn delta_matrix(&self) -> CMat {
        cdiag(&self.delta)
    }

    /// LMMSE estimates `g^_k = W_k psi` for all users.
    pub fn apply(&self, psi: &CVec) -> Vec<CVec> {
        let m = self.antennas;
        match &self.weights {
            Weights::Dense(w) => w.iter().map(|wk| wk * psi).collect(),
            Weights::Diagonal(w) => w
                .iter()
                .map(|wk| {
                    CVec::from_fn(m, |i, _| {
                        let mut acc = ZERO;
                        for u in 0..self.tau {
                            acc += wk[i][u] * psi[u * m + i];
                        }
                        acc
                    })
                })
                .collect(),
        }
    }
}

fn assemble_sigma(r: &[CMat], x_tilde: &[CMat], rx_weight: &[Vec<f64>], xi: f64) -> CMat {
    let m = r[0].nrows();
    let tau = x_tilde[0].nrows();
    let mut s = CMat::identity(tau * m, tau * m) * c(xi);
    for (j, rj) in r.iter().enumerate() {
        for u in 0..tau {
            for v in 0..tau {
                let x = x_tilde[j][(u, v)];
                if x != ZERO {
                    let mut blk = s.view_mut((u * m, v * m), (m, m));
                    blk += rj * x;
                }
            }
            for i in 0..m {
                s[(u * m + i, u * m + i)] += rx_weight[j][u] * rj[(i, i)].re;
            }
        }
    }
    s
}

/// `C_k = (omega_k^H Delta) (x) R_k`, an `M x tau M` matrix.
fn cross_cov(rk: &CMat, coef: &dyn Fn(usize) -> Complex64, tau: usize) -> CMat {
    let m = rk.nrows();
    let mut out = CMat::zeros(m, tau * m);
    for u in 0..tau {
        out.view_mut((0, u * m), (m, m)).copy_from(&(rk * coef(u)));
    }
    out
}

/// LMMSE estimates together with the statistics that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSet {
    pub g_hat: Vec<CVec>,
    pub stats: TrainingStats,
}

impl EstimateSet {
    pub fn r_hat(&self) -> &[CMat] {
        &self.stats.r_hat
    }

    pub fn r_tilde(&self) -> &[CMat] {
        &self.stats.r_tilde
    }
}

/// One-shot estimate: builds the statistics and applies them to `psi`.
pub fn lmmse_estimate(
    psi: &CVec,
    corr: &CorrelationSet,
    pilots: &PilotBook,
    imp: &ImpairmentProfile,
) -> Result<EstimateSet> {
    let stats = TrainingStats::new(corr, pilots, imp)?;
    let g_hat = stats.apply(psi);
    Ok(EstimateSet { g_hat, stats })
}

/// Ideal-hardware estimator: correlate with the pilot, then apply
/// `R (R + xi / (tau rho_up) I)^{-1}`.
pub fn ideal_estimate(psi: &CVec, corr: &CorrelationSet, pilots: &PilotBook, xi: f64) -> Result<Vec<CVec>> {
    let tau = pilots.len();
    let m = corr.antennas();
    let rho_p = tau as f64 * pilots.rho_up;
    (0..corr.users())
        .map(|k| {
            let mut comb = CVec::zeros(m);
            for u in 0..tau {
                let w = pilots.omega[(u, k)].conj() / rho_p;
                comb.axpy(w, &psi.rows(u * m, m).into_owned(), c(1.0));
            }
            let r = &corr.r[k];
            let a = r + CMat::identity(m, m) * c(xi / rho_p);
            let x = solve_hpd(&a, &CMat::from_columns(&[comb]))?;
            Ok((r * x).column(0).into_owned())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    /// Largest `||R^ + R~ - R||_F / ||R||_F` over users.
    pub max_residual: f64,
    pub min_eig_hat: f64,
    pub min_eig_tilde: f64,
}

/// Checks `R^ + R~ = R` and that both parts are PSD.
pub fn estimate_stats_consistency(stats: &TrainingStats, corr: &CorrelationSet) -> Result<ConsistencyReport> {
    let mut rep = ConsistencyReport {
        max_residual: 0.0,
        min_eig_hat: f64::INFINITY,
        min_eig_tilde: f64::INFINITY,
    };
    for k in 0..corr.users() {
        let r = &corr.r[k];
        let scale = frobenius(r).max(f64::MIN_POSITIVE);
        let res = frobenius(&(&stats.r_hat[k] + &stats.r_tilde[k] - r)) / scale;
        rep.max_residual = rep.max_residual.max(res);
        rep.min_eig_hat = rep.min_eig_hat.min(hermitian_eigenvalues(&stats.r_hat[k])[0] / scale);
        rep.min_eig_tilde = rep.min_eig_tilde.min(hermitian_eigenvalues(&stats.r_tilde[k])[0] / scale);
    }
    if rep.max_residual > 1e-10 {
        return Err(Error::Tolerance(format!("R^ + R~ deviates from R by {:e}", rep.max_residual)));
    }
    if rep.min_eig_hat < -1e-10 || rep.min_eig_tilde < -1e-10 {
        return Err(Error::Tolerance(format!(
            "estimate covariances not PSD (min eigenvalues {:e}, {:e})",
            rep.min_eig_hat, rep.min_eig_tilde
        )));
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::draw_channel;
    use crate::config::Topology;
    use crate::linalg::cn01_vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_corr(m: usize, k: usize, seed: u64) -> CorrelationSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = (0..k)
            .map(|_| {
                let x = CMat::from_fn(m, m, |_, _| cn01(&mut rng));
                (&x * x.adjoint()) * c(1.0 / m as f64) + CMat::identity(m, m) * c(0.1)
            })
            .collect();
        CorrelationSet::from_matrices(r).unwrap()
    }

    #[test]
    fn pilots_two_point_dft() {
        let p = build_pilots(2, 2, 3.0).unwrap();
        let s = 3f64.sqrt();
        assert!((p.omega[(0, 0)] - c(s)).norm() < 1e-15);
        assert!((p.omega[(1, 0)] - c(s)).norm() < 1e-15);
        assert!((p.omega[(0, 1)] - c(s)).norm() < 1e-15);
        assert!((p.omega[(1, 1)] - c(-s)).norm() < 1e-12);
        let g = p.omega.adjoint() * &p.omega;
        assert!(frobenius(&(g - CMat::identity(2, 2) * c(6.0))) < 1e-12);
    }

    #[test]
    fn pilots_orthogonal_unimodular() {
        for (k, tau) in [(1, 1), (3, 5), (10, 10), (4, 7)] {
            let p = build_pilots(k, tau, 1.7).unwrap();
            let g = p.omega.adjoint() * &p.omega;
            let err = frobenius(&(g - CMat::identity(k, k) * c(tau as f64 * 1.7)));
            assert!(err < 1e-12, "gram error {err}");
            assert!(p.omega.iter().all(|z| (z.norm_sqr() - 1.7).abs() < 1e-12));
        }
        assert!(matches!(build_pilots(3, 2, 1.0), Err(Error::Dimension(_))));
    }

    #[test]
    fn noiseless_scalar_uplink() {
        let imp = ImpairmentProfile {
            xi_bs: 0.0,
            ..ImpairmentProfile::ideal(Topology::Clo)
        };
        let ch = ChannelRealization { h: vec![CVec::from_element(1, c(1.0))] };
        let p = build_pilots(1, 3, 2.0).unwrap();
        let tr = PhaseTrajectory::generate(1, 1, 3, &imp, &mut ChaCha8Rng::seed_from_u64(0));
        let psi = simulate_uplink(&ch, &tr, &p, &imp, &mut ChaCha8Rng::seed_from_u64(1));
        for u in 0..3 {
            assert!((psi[u] - c(2f64.sqrt())).norm() < 1e-15);
        }
    }

    #[test]
    fn zero_channel_is_noise_only() {
        let imp = ImpairmentProfile {
            xi_bs: 2.5,
            ..ImpairmentProfile::ideal(Topology::Clo)
        };
        let ch = ChannelRealization { h: vec![CVec::zeros(50)] };
        let p = build_pilots(1, 2, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tr = PhaseTrajectory::generate(50, 1, 2, &imp, &mut rng);
        let mut acc = 0.0;
        let trials = 1000;
        for _ in 0..trials {
            acc += simulate_uplink(&ch, &tr, &p, &imp, &mut rng).norm_squared();
        }
        let var = acc / (trials * 100) as f64;
        assert!((var - 2.5).abs() / 2.5 < 0.03, "variance {var}");
    }

    #[test]
    fn uplink_power_budget() {
        // E||psi||^2 = sum_u [ sum_k (rho_up (1 + kt) + kr rho_up) tr R_k + M xi ].
        let imp = ImpairmentProfile::uniform(1e-2, 0.05, 1.3, Topology::Slo);
        let m = 6;
        let corr = random_corr(m, 2, 3);
        let p = build_pilots(2, 3, 1.4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let trials = 10_000;
        let mut acc = 0.0;
        for _ in 0..trials {
            let ch = draw_channel(&corr, &mut rng);
            let tr = PhaseTrajectory::generate(m, 2, 3, &imp, &mut rng);
            acc += simulate_uplink(&ch, &tr, &p, &imp, &mut rng).norm_squared();
        }
        acc /= trials as f64;
        let tr_r: f64 = corr.r.iter().map(|r| r.trace().re).sum();
        let per_slot = tr_r * 1.4 * (1.0 + 0.05) + 0.05 * 1.4 * tr_r + m as f64 * 1.3;
        let oracle = 3.0 * per_slot;
        assert!((acc - oracle).abs() / oracle < 0.03, "{acc} vs {oracle}");
    }

    #[test]
    fn scalar_lmmse_halves() {
        let imp = ImpairmentProfile::ideal(Topology::Clo);
        let corr = CorrelationSet::iid(1, 1);
        let p = build_pilots(1, 1, 1.0).unwrap();
        let psi = CVec::from_element(1, Complex64::new(0.8, -0.4));
        let est = lmmse_estimate(&psi, &corr, &p, &imp).unwrap();
        assert!((est.g_hat[0][0] - psi[0] * 0.5).norm() < 1e-15);
        assert!((est.r_hat()[0][(0, 0)].re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_observation_gives_zero_estimate() {
        let imp = ImpairmentProfile::uniform(1e-3, 1e-3, 1.2, Topology::Slo);
        let corr = random_corr(4, 2, 5);
        let p = build_pilots(2, 2, 1.5).unwrap();
        let est = lmmse_estimate(&CVec::zeros(8), &corr, &p, &imp).unwrap();
        assert!(est.g_hat.iter().all(|g| g.iter().all(|z| *z == ZERO)));
    }

    #[test]
    fn ideal_hardware_matches_closed_form() {
        let imp = ImpairmentProfile::ideal(Topology::Clo);
        for (corr, seed) in [(random_corr(5, 3, 6), 7u64), (CorrelationSet::iid(5, 3), 8)] {
            let p = build_pilots(3, 4, 1.6).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let psi = cn01_vec(20, &mut rng);
            let general = lmmse_estimate(&psi, &corr, &p, &imp).unwrap().g_hat;
            let closed = ideal_estimate(&psi, &corr, &p, 1.0).unwrap();
            for (a, b) in general.iter().zip(&closed) {
                assert!((a - b).norm() < 1e-10 * b.norm().max(1.0));
            }
        }
    }

    #[test]
    fn diagonal_fast_path_matches_dense() {
        let imp = ImpairmentProfile::uniform(2e-2, 1e-2, 1.1, Topology::Slo);
        let p = build_pilots(2, 3, 1.5).unwrap();
        let diag = CorrelationSet::from_matrices(vec![
            cdiag(&[1.0, 0.5, 2.0]),
            cdiag(&[0.3, 1.2, 0.9]),
        ])
        .unwrap();
        let fast = TrainingStats::new(&diag, &p, &imp).unwrap();
        // A tiny off-diagonal entry forces the dense path.
        let mut r0 = diag.r[0].clone();
        r0[(0, 1)] = c(1e-13);
        r0[(1, 0)] = c(1e-13);
        let dense_corr = CorrelationSet::from_matrices(vec![r0, diag.r[1].clone()]).unwrap();
        let dense = TrainingStats::new(&dense_corr, &p, &imp).unwrap();
        assert!(matches!(dense.weights, Weights::Dense(_)));
        for k in 0..2 {
            assert!(frobenius(&(&fast.r_hat[k] - &dense.r_hat[k])) < 1e-10);
        }
        let psi = cn01_vec(9, &mut ChaCha8Rng::seed_from_u64(9));
        for (a, b) in fast.apply(&psi).iter().zip(&dense.apply(&psi)) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn consistency_and_limits() {
        let imp = ImpairmentProfile::uniform(1e-3, 1e-3, 1.0, Topology::Clo);
        let corr = random_corr(4, 2, 10);
        let p = build_pilots(2, 2, 1.0).unwrap();
        let s = TrainingStats::new(&corr, &p, &imp).unwrap();
        estimate_stats_consistency(&s, &corr).unwrap();

        let ideal = ImpairmentProfile::ideal(Topology::Clo);
        let hi = TrainingStats::new(&corr, &build_pilots(2, 2, 1e9).unwrap(), &ideal).unwrap();
        assert!(hi.r_tilde.iter().all(|r| frobenius(r) < 1e-6));
        let lo = TrainingStats::new(&corr, &build_pilots(2, 2, 1e-12).unwrap(), &ideal).unwrap();
        assert!(lo.r_hat.iter().all(|r| frobenius(r) < 1e-9));
    }

    #[test]
    fn estimator_is_linear() {
        let imp = ImpairmentProfile::uniform(1e-3, 1e-3, 1.2, Topology::Slo);
        let corr = random_corr(3, 2, 11);
        let s = TrainingStats::new(&corr, &build_pilots(2, 2, 1.5).unwrap(), &imp).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (p1, p2) = (cn01_vec(6, &mut rng), cn01_vec(6, &mut rng));
        let (a, b) = (Complex64::new(0.3, -1.1), Complex64::new(2.0, 0.5));
        let lhs = s.apply(&(&p1 * a + &p2 * b));
        let (e1, e2) = (s.apply(&p1), s.apply(&p2));
        for k in 0..2 {
            assert!((&lhs[k] - (&e1[k] * a + &e2[k] * b)).norm() < 1e-12);
        }
    }

    #[test]
    fn phase_noise_contaminates_orthogonal_pilots() {
        let p = build_pilots(2, 2, 1.5).unwrap();
        let a = CorrelationSet::iid(3, 2);
        let b = CorrelationSet::from_matrices(vec![
            CMat::identity(3, 3),
            CMat::identity(3, 3) * c(3.0),
        ])
        .unwrap();
        let pn = ImpairmentProfile {
            sigma_phi2: 0.05,
            sigma_varphi2: 0.05,
            ..ImpairmentProfile::ideal(Topology::Slo)
        };
        let sens = |imp: &ImpairmentProfile| {
            let ra = TrainingStats::new(&a, &p, imp).unwrap().r_hat[0].clone();
            let rb = TrainingStats::new(&b, &p, imp).unwrap().r_hat[0].clone();
            frobenius(&(ra - rb))
        };
        assert!(sens(&ImpairmentProfile::ideal(Topology::Slo)) < 1e-12);
        assert!(sens(&pn) > 1e-6);
    }
}
