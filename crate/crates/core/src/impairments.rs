//! Phase noise, additive transceiver distortion and amplified thermal noise.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::{ImpairmentProfile, Topology};
use crate::error::Result;
use crate::linalg::{cn01, matrix_sqrt, CMat, CVec};

/// Wiener phase processes of the BS oscillators and the UE oscillators.
///
/// `phi[m][n]` is the BS phase seen by antenna `m` in slot `n`, `varphi[k][n]`
/// the phase of user `k`. Slot 0 is the initial state and is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTrajectory {
    pub phi: Vec<Vec<f64>>,
    pub varphi: Vec<Vec<f64>>,
    pub topology: Topology,
}

impl PhaseTrajectory {
    pub fn new(antennas: usize, users: usize, topology: Topology) -> Self {
        PhaseTrajectory {
            phi: vec![vec![0.0]; antennas],
            varphi: vec![vec![0.0]; users],
            topology,
        }
    }

    /// Trajectory with slots `0..=last_slot` populated.
    pub fn generate<R: Rng + ?Sized>(
        antennas: usize,
        users: usize,
        last_slot: usize,
        imp: &ImpairmentProfile,
        rng: &mut R,
    ) -> Self {
        let mut tr = Self::new(antennas, users, imp.topology);
        for v in tr.phi.iter_mut().chain(tr.varphi.iter_mut()) {
            v.reserve(last_slot);
        }
        for _ in 0..last_slot {
            tr.step(imp, rng);
        }
        tr
    }

    /// Number of populated slots.
    pub fn slots(&self) -> usize {
        self.varphi
            .first()
            .or(self.phi.first())
            .map(Vec::len)
            .unwrap_or(0)
    }

    /// Appends one slot in place.
    pub fn step<R: Rng + ?Sized>(&mut self, imp: &ImpairmentProfile, rng: &mut R) {
        let sd_bs = imp.sigma_phi2.sqrt();
        let sd_ue = imp.sigma_varphi2.sqrt();
        match self.topology {
            Topology::Clo => {
                let inc = sd_bs * rng.sample::<f64, _>(StandardNormal);
                for p in &mut self.phi {
                    let last = *p.last().expect("trajectory has slot 0");
                    p.push(last + inc);
                }
            }
            Topology::Slo => {
                for p in &mut self.phi {
                    let inc = sd_bs * rng.sample::<f64, _>(StandardNormal);
                    let last = *p.last().expect("trajectory has slot 0");
                    p.push(last + inc);
                }
            }
        }
        for p in &mut self.varphi {
            let inc = sd_ue * rng.sample::<f64, _>(StandardNormal);
            let last = *p.last().expect("trajectory has slot 0");
            p.push(last + inc);
        }
    }

    /// Total phase `theta_{k,n}^{(m)}` seen on the link between antenna `m` and user `k`.
    pub fn theta(&self, k: usize, m: usize, n: usize) -> f64 {
        self.varphi[k][n] + self.phi[m][n]
    }

    /// Diagonal of `Theta_{k,n}`.
    pub fn rotation_diag(&self, k: usize, n: usize) -> Vec<Complex64> {
        (0..self.phi.len())
            .map(|m| Complex64::from_polar(1.0, self.theta(k, m, n)))
            .collect()
    }

    /// Diagonal of the drift `Theta~_{k,n}` relative to the anchor slot.
    pub fn relative_rotation_diag(&self, k: usize, n: usize, anchor: usize) -> Vec<Complex64> {
        (0..self.phi.len())
            .map(|m| Complex64::from_polar(1.0, -(self.theta(k, m, n) - self.theta(k, m, anchor))))
            .collect()
    }

    /// `(1/M) tr Theta~_{k,n}` for this realization.
    pub fn pn_trace(&self, k: usize, n: usize, anchor: usize) -> Complex64 {
        let d = self.relative_rotation_diag(k, n, anchor);
        d.iter().sum::<Complex64>() / d.len() as f64
    }
}

/// Returns `traj` extended by one slot.
pub fn advance_phase<R: Rng + ?Sized>(
    traj: &PhaseTrajectory,
    imp: &ImpairmentProfile,
    rng: &mut R,
) -> PhaseTrajectory {
    let mut next = traj.clone();
    next.step(imp, rng);
    next
}

/// `Theta_{k,n}` and `Theta~_{k,n}` (relative to `anchor`) as diagonal matrices.
pub fn rotation(traj: &PhaseTrajectory, k: usize, n: usize, anchor: usize) -> (CMat, CMat) {
    let a = CVec::from_vec(traj.rotation_diag(k, n));
    let b = CVec::from_vec(traj.relative_rotation_diag(k, n, anchor));
    (CMat::from_diagonal(&a), CMat::from_diagonal(&b))
}

/// Large-system magnitude of `(1/M) tr Theta~` after `n_elapsed` slots.
///
/// With a common oscillator the trace is a pure rotation, so its magnitude is 1.
/// Independent oscillators average out to `exp(-sigma_phi2 * n / 2)`.
pub fn pn_trace_magnitude(imp: &ImpairmentProfile, n_elapsed: usize, topology: Topology) -> f64 {
    match topology {
        Topology::Clo => 1.0,
        Topology::Slo => (-0.5 * imp.sigma_phi2 * n_elapsed as f64).exp(),
    }
}

/// Limit of `(1/M) tr Theta~` as a complex number with the random UE rotation
/// removed. Only its magnitude is meaningful.
pub fn pn_trace_limit(imp: &ImpairmentProfile, n_elapsed: usize, topology: Topology) -> Complex64 {
    Complex64::new(pn_trace_magnitude(imp, n_elapsed, topology), 0.0)
}

/// Transmit distortion covariance `kappa_t2 * diag(q)`, returned as its diagonal.
pub fn tx_distortion_cov(kappa_t2: f64, q_diag: &[f64]) -> Vec<f64> {
    q_diag.iter().map(|&q| kappa_t2 * q).collect()
}

/// Receive distortion variance at a UE: `kappa_r2 * h^H Q h`.
pub fn rx_distortion_var_ue(kappa_r2: f64, h: &CVec, q_bs: &CMat) -> f64 {
    kappa_r2 * (h.adjoint() * q_bs * h)[(0, 0)].re
}

/// Receive distortion covariance at the BS during training (diagonal):
/// `kappa_r2 * sum_k p_k |h_k^m|^2`.
pub fn rx_distortion_cov_bs(kappa_r2: f64, channels: &[CVec], pilot_powers: &[f64]) -> Vec<f64> {
    let m = channels.first().map(|h| h.len()).unwrap_or(0);
    let mut out = vec![0.0; m];
    for (h, &p) in channels.iter().zip(pilot_powers) {
        for (o, z) in out.iter_mut().zip(h.iter()) {
            *o += kappa_r2 * p * z.norm_sqr();
        }
    }
    out
}

/// Draw from `CN(0, cov)`.
pub fn draw_gaussian<R: Rng + ?Sized>(cov: &CMat, rng: &mut R) -> Result<CVec> {
    let s = matrix_sqrt(cov)?;
    let w = CVec::from_fn(cov.nrows(), |_, _| cn01(rng));
    Ok(s * w)
}

/// Draw from `CN(0, diag(var))`.
pub fn draw_gaussian_diag<R: Rng + ?Sized>(var: &[f64], rng: &mut R) -> CVec {
    CVec::from_iterator(var.len(), var.iter().map(|&v| cn01(rng) * v.max(0.0).sqrt()))
}
