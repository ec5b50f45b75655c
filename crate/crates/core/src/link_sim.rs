//! Monte Carlo link simulator.
//!
//! Each trial draws one coherence block: channels, phase-noise trajectories,
//! impaired pilots and the resulting estimates. Precoders are built once from
//! the slot-`tau` estimates and kept for every data slot. Distortion and noise
//! powers inside the SINRs are conditional expectations given the channel.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::channel::{draw_channel, ChannelRealization};
use crate::config::{Csit, Engine, ImpairmentProfile, RateReport, Strategy, SystemConfig};
use crate::error::{Error, Result};
use crate::impairments::PhaseTrajectory;
use crate::linalg::{CMat, CVec, ZERO};
use crate::precoding::{common_precoder, normalize_lambda, rzf_private, Regularizer};
use crate::rmt::{default_alpha_reg, regularizer_xi, rs_design, DeCore, DeOptions, RsDesign, Statistics};
use crate::training::{build_pilots, simulate_uplink, PilotBook};

/// `g_{k,n} = Theta_{k,n} h_k`, i.e. the slot-`tau` channel rotated by the drift since then.
pub fn effective_channel(h: &CVec, traj: &PhaseTrajectory, k: usize, n: usize) -> CVec {
    let rot = traj.rotation_diag(k, n);
    CVec::from_fn(h.len(), |i, _| rot[i] * h[i])
}

/// Transmit side of one block: precoders, normalization and per-stream powers.
#[derive(Debug, Clone, PartialEq)]
pub struct Transmitter {
    pub f: CMat,
    pub f_c: Option<CVec>,
    pub lambda: f64,
    /// Power per private stream, `rho t / K`.
    pub p_private: f64,
    pub rho_c: f64,
    /// Per-antenna transmit power, the diagonal of the transmit covariance.
    pub q_diag: Vec<f64>,
}

impl Transmitter {
    pub fn new(f: CMat, f_c: Option<CVec>, lambda: f64, p_private: f64, rho_c: f64) -> Self {
        let m = f.nrows();
        let q_diag = (0..m)
            .map(|i| {
                let private: f64 = f.row(i).iter().map(|z| z.norm_sqr()).sum();
                let common = f_c.as_ref().map(|v| v[i].norm_sqr()).unwrap_or(0.0);
                lambda * p_private * private + rho_c * common
            })
            .collect();
        Transmitter { f, f_c, lambda, p_private, rho_c, q_diag }
    }
}

/// SINRs of one user in one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserSinr {
    pub private: f64,
    pub common: f64,
}

/// SINRs of all users in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotSinr {
    pub n: usize,
    pub private: Vec<f64>,
    pub common_per_user: Vec<f64>,
    pub common: f64,
}

/// Private and common SINR of user `k` with channel `g`.
///
/// The common stream is decoded first and removed before the private one, so
/// it appears in the private denominator only through distortion.
pub fn user_sinr(g: &CVec, k: usize, tx: &Transmitter, imp: &ImpairmentProfile) -> UserSinr {
    let lp = tx.lambda * tx.p_private;
    let mut desired = 0.0;
    let mut interference = 0.0;
    for j in 0..tx.f.ncols() {
        let a = g.dotc(&tx.f.column(j)).norm_sqr();
        if j == k {
            desired = lp * a;
        } else {
            interference += lp * a;
        }
    }
    let common = match &tx.f_c {
        Some(fc) => tx.rho_c * g.dotc(fc).norm_sqr(),
        None => 0.0,
    };
    let tx_dist: f64 = imp.kappa_t2_bs * g.iter().zip(&tx.q_diag).map(|(z, q)| q * z.norm_sqr()).sum::<f64>();
    let rx_dist = imp.kappa_r2_ue * (desired + interference + common);
    let base = interference + tx_dist + rx_dist + imp.xi_ue;
    UserSinr {
        private: desired / base,
        common: common / (base + desired),
    }
}

/// Conventional SINR of user `k`: the RS expression with no common stream.
pub fn sinr_nors(g: &CVec, k: usize, tx: &Transmitter, imp: &ImpairmentProfile) -> f64 {
    user_sinr(g, k, tx, imp).private
}

/// All users' SINRs at one slot; `channels[k]` is `g_{k,n}`.
pub fn sinr_rs(channels: &[CVec], n: usize, tx: &Transmitter, imp: &ImpairmentProfile) -> SlotSinr {
    let s: Vec<UserSinr> = channels.iter().enumerate().map(|(k, g)| user_sinr(g, k, tx, imp)).collect();
    let common_per_user: Vec<f64> = s.iter().map(|x| x.common).collect();
    SlotSinr {
        n,
        private: s.iter().map(|x| x.private).collect(),
        common: common_per_user.iter().copied().fold(f64::INFINITY, f64::min),
        common_per_user,
    }
}

/// `(1/T) sum_n log2(1 + SINR_n)` per stream; the common rate uses the
/// per-slot minimum over users.
pub fn accumulate_rates(slots: &[SlotSinr], block_len: usize, strategy: Strategy, engine: Engine) -> RateReport {
    let k_users = slots.first().map(|s| s.private.len()).unwrap_or(0);
    let tf = block_len as f64;
    let mut private = vec![0.0; k_users];
    let mut common = 0.0;
    for s in slots {
        for k in 0..k_users {
            private[k] += (1.0 + s.private[k]).log2() / tf;
        }
        common += (1.0 + s.common).log2() / tf;
    }
    RateReport::new(private, common, strategy, engine, None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct McOptions {
    pub trials: usize,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
    /// Grid-point index mixed into the per-trial seeds.
    pub point: u32,
    /// Options of the DE solve that supplies `t` and the common weights.
    pub de: DeOptions,
}

impl McOptions {
    pub fn new(trials: usize) -> Self {
        McOptions { trials, workers: None, point: 0, de: DeOptions::default() }
    }
}

/// Monte Carlo estimates together with per-term diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub report: RateReport,
    pub t: f64,
    pub alpha: Vec<f64>,
    pub trials: usize,
    /// Mean of `K / tr(F^H F)` over trials.
    pub lambda_mean: f64,
    /// Mean received desired power per user, over data slots and trials.
    pub desired_mean: Vec<f64>,
    /// `interference_mean[j][k]`: mean power of beam `j` at user `k`.
    pub interference_mean: Vec<Vec<f64>>,
    /// Mean common-stream SINR per user over data slots and trials; zero for NoRS.
    pub common_sinr_mean: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Trial {
    private: Vec<f64>,
    common: f64,
    lambda: f64,
    desired: Vec<f64>,
    interference: Vec<Vec<f64>>,
    common_sinr: Vec<f64>,
}

/// Per-trial generator: counter-based, so a trial's draws depend only on the
/// master seed, the grid point and the trial index.
pub fn trial_rng(seed: u64, point: u32, trial: u32) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(((point as u64) << 32) | trial as u64);
    rng
}

struct Setup<'a> {
    config: &'a SystemConfig,
    imp: &'a ImpairmentProfile,
    stats: &'a Statistics,
    pilots: PilotBook,
    reg: Regularizer,
    design: Option<RsDesign>,
}

fn run_trial(s: &Setup<'_>, rng: &mut ChaCha20Rng) -> Result<Trial> {
    let cfg = s.config;
    let (m, k_users, tau, t_len) = (cfg.antennas, cfg.users, cfg.pilot_len, cfg.block_len);
    let ch: ChannelRealization = draw_channel(&s.stats.corr, rng);
    let traj = PhaseTrajectory::generate(m, k_users, t_len, s.imp, rng);

    let g_hat: Vec<CVec> = match (&s.stats.training, cfg.csit) {
        (Some(tr), Csit::Imperfect) => {
            let psi = simulate_uplink(&ch, &traj, &s.pilots, s.imp, rng);
            tr.apply(&psi)
        }
        _ => (0..k_users).map(|k| effective_channel(&ch.h[k], &traj, k, tau)).collect(),
    };
    let g_mat = CMat::from_columns(&g_hat);
    let f = rzf_private(&g_mat, s.imp.kappa_t2_bs, s.imp.kappa_r2_ue, &s.reg)?;
    let lambda = normalize_lambda(&f, k_users)?;
    let (t, f_c) = match &s.design {
        Some(d) if d.t < 1.0 => (d.t, Some(common_precoder(&d.alpha, &g_mat)?)),
        Some(d) => (d.t, None),
        None => (1.0, None),
    };
    let tx = Transmitter::new(f, f_c, lambda, cfg.rho * t / k_users as f64, cfg.rho * (1.0 - t));

    let tf = t_len as f64;
    let mut private = vec![0.0; k_users];
    let mut common = 0.0;
    let mut desired = vec![0.0; k_users];
    let mut interference = vec![vec![0.0; k_users]; k_users];
    let mut common_sinr = vec![0.0; k_users];
    let lp = tx.lambda * tx.p_private;
    let mut bs_rot = vec![ZERO; m];
    let mut g = CVec::zeros(m);
    for n in tau + 1..=t_len {
        // The BS rotation is shared by all users; the UE phase is a scalar per user.
        for (i, r) in bs_rot.iter_mut().enumerate() {
            *r = Complex64::from_polar(1.0, traj.phi[i][n]);
        }
        let mut min_c = f64::INFINITY;
        for k in 0..k_users {
            let ue = Complex64::from_polar(1.0, traj.varphi[k][n]);
            for i in 0..m {
                g[i] = ue * bs_rot[i] * ch.h[k][i];
            }
            let u = user_sinr(&g, k, &tx, s.imp);
            private[k] += (1.0 + u.private).log2() / tf;
            min_c = min_c.min(u.common);
            common_sinr[k] += u.common;
            for j in 0..k_users {
                let pw = lp * g.dotc(&tx.f.column(j)).norm_sqr();
                if j == k {
                    desired[k] += pw;
                } else {
                    interference[j][k] += pw;
                }
            }
        }
        if tx.f_c.is_some() {
            common += (1.0 + min_c).log2() / tf;
        }
    }
    let slots = (t_len - tau) as f64;
    desired.iter_mut().for_each(|x| *x /= slots);
    interference.iter_mut().flatten().chain(common_sinr.iter_mut()).for_each(|x| *x /= slots);
    Ok(Trial { private, common, lambda, desired, interference, common_sinr })
}

/// Ergodic rates by Monte Carlo, reproducible for any worker count.
pub fn run_monte_carlo(config: &SystemConfig, imp: &ImpairmentProfile, opts: &McOptions) -> Result<McReport> {
    let stats = Statistics::build(config, imp)?;
    run_monte_carlo_with(&stats, config, imp, opts)
}

pub fn run_monte_carlo_with(
    stats: &Statistics,
    config: &SystemConfig,
    imp: &ImpairmentProfile,
    opts: &McOptions,
) -> Result<McReport> {
    if opts.trials < 1 {
        return Err(Error::Domain("at least one Monte Carlo trial is required".into()));
    }
    let design = match config.strategy {
        Strategy::Rs => {
            let core = DeCore::new(stats, config, imp, &opts.de)?;
            Some(rs_design(&core, config, imp, &opts.de)?)
        }
        Strategy::NoRs => None,
    };
    let setup = Setup {
        config,
        imp,
        stats,
        pilots: build_pilots(config.users, config.pilot_len, config.rho_up)?,
        reg: Regularizer {
            alpha_reg: opts.de.alpha_reg.unwrap_or_else(|| default_alpha_reg(config)),
            xi: regularizer_xi(config.csit, imp),
            z: None,
        },
        design,
    };
    let work = || -> Result<Vec<Trial>> {
        (0..opts.trials)
            .into_par_iter()
            .map(|i| run_trial(&setup, &mut trial_rng(config.seed, opts.point, i as u32)))
            .collect()
    };
    let trials = match opts.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };

    // Sequential reduction in trial order keeps the sums bit-identical.
    let k_users = config.users;
    let nf = trials.len() as f64;
    let mut private = vec![0.0; k_users];
    let mut common = 0.0;
    let mut lambda = 0.0;
    let mut desired = vec![0.0; k_users];
    let mut interference = vec![vec![0.0; k_users]; k_users];
    let mut common_sinr = vec![0.0; k_users];
    let mut sums = Vec::with_capacity(trials.len());
    for t in &trials {
        for k in 0..k_users {
            private[k] += t.private[k] / nf;
            desired[k] += t.desired[k] / nf;
            common_sinr[k] += t.common_sinr[k] / nf;
            for j in 0..k_users {
                interference[j][k] += t.interference[j][k] / nf;
            }
        }
        common += t.common / nf;
        lambda += t.lambda / nf;
        sums.push(t.private.iter().sum::<f64>() + t.common);
    }
    let mean = sums.iter().sum::<f64>() / nf;
    let ci = if sums.len() > 1 {
        let var = sums.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
        1.96 * var.sqrt() / nf.sqrt()
    } else {
        0.0
    };
    let (t, alpha) = match &setup.design {
        Some(d) => (d.t, d.alpha.clone()),
        None => (1.0, Vec::new()),
    };
    Ok(McReport {
        report: RateReport::new(private, common, config.strategy, Engine::Mc, Some(ci)),
        t,
        alpha,
        trials: trials.len(),
        lambda_mean: lambda,
        desired_mean: desired,
        interference_mean: interference,
        common_sinr_mean: common_sinr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{db_to_linear, Topology};
    use crate::linalg::{c, cn01, cn01_vec};
    use rand_chacha::ChaCha8Rng;

    fn random_tx(m: usize, k: usize, seed: u64, with_common: bool) -> Transmitter {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = CMat::from_fn(m, k, |_, _| cn01(&mut rng));
        let fc = with_common.then(|| {
            let v = cn01_vec(m, &mut rng);
            &v / c(v.norm())
        });
        let lambda = normalize_lambda(&f, k).unwrap();
        Transmitter::new(f, fc, lambda, 3.0, if with_common { 4.0 } else { 0.0 })
    }

    #[test]
    fn scalar_sinr_is_one() {
        let tx = Transmitter::new(CMat::from_element(1, 1, c(1.0)), None, 1.0, 1.0, 0.0);
        let g = CVec::from_element(1, c(1.0));
        let imp = ImpairmentProfile::ideal(Topology::Clo);
        assert_eq!(sinr_nors(&g, 0, &tx, &imp), 1.0);
    }

    #[test]
    fn huge_distortion_kills_sinr() {
        let tx = random_tx(4, 2, 1, true);
        let g = cn01_vec(4, &mut ChaCha8Rng::seed_from_u64(2));
        let imp = ImpairmentProfile::uniform(0.0, 1e12, 1.0, Topology::Clo);
        let s = user_sinr(&g, 0, &tx, &imp);
        assert!(s.private < 1e-9 && s.common < 1e-9);
    }

    #[test]
    fn brute_force_oracle() {
        let m = 8;
        let tx = random_tx(m, 2, 3, true);
        let imp = ImpairmentProfile {
            kappa_t2_bs: 0.02,
            kappa_r2_ue: 0.03,
            xi_ue: 1.4,
            ..ImpairmentProfile::ideal(Topology::Clo)
        };
        let g = cn01_vec(m, &mut ChaCha8Rng::seed_from_u64(4));
        // Independent recomputation from the full transmit covariance.
        let mut qbs = &tx.f * tx.f.adjoint() * c(tx.lambda * tx.p_private);
        let fc = tx.f_c.clone().unwrap();
        qbs += &fc * fc.adjoint() * c(tx.rho_c);
        let mut tx_d = 0.0;
        for i in 0..m {
            tx_d += 0.02 * qbs[(i, i)].re * g[i].norm_sqr();
        }
        let rx_d = 0.03 * (g.adjoint() * &qbs * &g)[(0, 0)].re;
        let amp = |v: CVec| (g.adjoint() * v)[(0, 0)].norm_sqr();
        let d = tx.lambda * tx.p_private * amp(tx.f.column(1).into_owned());
        let i = tx.lambda * tx.p_private * amp(tx.f.column(0).into_owned());
        let cpow = tx.rho_c * amp(fc);
        let s = user_sinr(&g, 1, &tx, &imp);
        let p_oracle = d / (i + tx_d + rx_d + 1.4);
        let c_oracle = cpow / (d + i + tx_d + rx_d + 1.4);
        assert!((s.private - p_oracle).abs() < 1e-12 * p_oracle);
        assert!((s.common - c_oracle).abs() < 1e-12 * c_oracle);
    }

    #[test]
    fn no_common_beam_matches_nors() {
        let tx_rs = random_tx(6, 3, 5, false);
        let g = cn01_vec(6, &mut ChaCha8Rng::seed_from_u64(6));
        let imp = ImpairmentProfile::uniform(0.0, 0.01, 1.2, Topology::Clo);
        let s = user_sinr(&g, 2, &tx_rs, &imp);
        assert_eq!(s.common, 0.0);
        assert_eq!(s.private, sinr_nors(&g, 2, &tx_rs, &imp));
    }

    #[test]
    fn common_min_and_symmetry() {
        let tx = random_tx(6, 2, 7, true);
        let imp = ImpairmentProfile::ideal(Topology::Clo);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let chans = vec![cn01_vec(6, &mut rng), cn01_vec(6, &mut rng)];
        let s = sinr_rs(&chans, 5, &tx, &imp);
        assert!(s.common_per_user.iter().all(|&x| s.common <= x));
        let same = vec![chans[0].clone(), chans[0].clone()];
        let s = sinr_rs(&same, 5, &tx, &imp);
        assert_eq!(s.common_per_user[0], s.common_per_user[1]);
    }

    #[test]
    fn effective_channel_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = cn01_vec(5, &mut rng);
        let ideal = ImpairmentProfile::ideal(Topology::Slo);
        let tr = PhaseTrajectory::generate(5, 1, 20, &ideal, &mut rng);
        assert_eq!(effective_channel(&h, &tr, 0, 13), h);
        let noisy = ImpairmentProfile::uniform(1e-2, 0.0, 1.0, Topology::Slo);
        let tr = PhaseTrajectory::generate(5, 1, 20, &noisy, &mut rng);
        let g = effective_channel(&h, &tr, 0, 13);
        assert!((g.norm() - h.norm()).abs() < 1e-12);
    }

    #[test]
    fn rate_accumulation() {
        let slot = |s: f64| SlotSinr { n: 0, private: vec![s], common_per_user: vec![s], common: s };
        let ones: Vec<SlotSinr> = (0..250).map(|_| slot(1.0)).collect();
        let r = accumulate_rates(&ones, 500, Strategy::NoRs, Engine::Mc);
        assert!((r.private_rates[0] - 0.5).abs() < 1e-12);
        let zeros: Vec<SlotSinr> = (0..250).map(|_| slot(0.0)).collect();
        assert_eq!(accumulate_rates(&zeros, 500, Strategy::Rs, Engine::Mc).sum_rate, 0.0);
        let r2 = accumulate_rates(&ones, 1000, Strategy::NoRs, Engine::Mc);
        assert!((r2.private_rates[0] - 250.0 / 1000.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_clo_sinr_is_slot_invariant() {
        let mut cfg = SystemConfig::new(1, 1, 30, 10.0);
        cfg.csit = Csit::Perfect;
        cfg.strategy = Strategy::NoRs;
        let imp = ImpairmentProfile::uniform(1e-2, 0.0, 1.0, Topology::Clo);
        let stats = Statistics::build(&cfg, &imp).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let ch = draw_channel(&stats.corr, &mut rng);
        let tr = PhaseTrajectory::generate(1, 1, 30, &imp, &mut rng);
        let g0 = effective_channel(&ch.h[0], &tr, 0, 1);
        let f = CMat::from_columns(&[g0.clone()]);
        let tx = Transmitter::new(f.clone(), None, normalize_lambda(&f, 1).unwrap(), 10.0, 0.0);
        let first = sinr_nors(&effective_channel(&ch.h[0], &tr, 0, 2), 0, &tx, &imp);
        for n in 3..=30 {
            let s = sinr_nors(&effective_channel(&ch.h[0], &tr, 0, n), 0, &tx, &imp);
            assert!((s - first).abs() <= 1e-12 * first);
        }
    }

    #[test]
    fn deterministic_across_workers() {
        let mut cfg = SystemConfig::new(8, 2, 40, db_to_linear(10.0));
        cfg.seed = 99;
        let imp = ImpairmentProfile::uniform(1e-3, 1e-3, 1.0, Topology::Slo);
        let mut o = McOptions::new(16);
        o.workers = Some(1);
        let a = run_monte_carlo(&cfg, &imp, &o).unwrap();
        o.workers = Some(4);
        let b = run_monte_carlo(&cfg, &imp, &o).unwrap();
        assert_eq!(a, b);
        o.trials = 1;
        let c1 = run_monte_carlo(&cfg, &imp, &o).unwrap();
        let c2 = run_monte_carlo(&cfg, &imp, &o).unwrap();
        assert_eq!(c1, c2);
    }

    #[test]
    fn zero_trials_rejected() {
        let cfg = SystemConfig::new(4, 1, 10, 1.0);
        let imp = ImpairmentProfile::ideal(Topology::Clo);
        assert!(run_monte_carlo(&cfg, &imp, &McOptions::new(0)).is_err());
    }
}
