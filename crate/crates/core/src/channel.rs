//! Spatial correlation and block-fading channel draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{Geometry, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::{cdiag, cn01_vec, is_diagonal, matrix_sqrt, real_diag, CMat, CVec};

/// Path-loss intercept of the large-scale gain model, in decades.
const PATHLOSS_INTERCEPT: f64 = 1.53;
const PATHLOSS_EXPONENT: f64 = 3.76;

/// Per-user covariance matrices and their principal square roots.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSet {
    pub r: Vec<CMat>,
    pub r_sqrt: Vec<CMat>,
    /// Diagonal of `r_sqrt` when every covariance is diagonal (fast draw path).
    sqrt_diag: Option<Vec<Vec<f64>>>,
}

impl CorrelationSet {
    pub fn from_matrices(r: Vec<CMat>) -> Result<Self> {
        let m = r.first().map(|x| x.nrows()).unwrap_or(0);
        for (k, rk) in r.iter().enumerate() {
            if rk.nrows() != m || rk.ncols() != m {
                return Err(Error::Dimension(format!(
                    "covariance of user {k} is {}x{}, expected {m}x{m}",
                    rk.nrows(),
                    rk.ncols()
                )));
            }
        }
        let r_sqrt = r.iter().map(matrix_sqrt).collect::<Result<Vec<_>>>()?;
        let sqrt_diag = r_sqrt
            .iter()
            .all(is_diagonal)
            .then(|| r_sqrt.iter().map(real_diag).collect());
        Ok(CorrelationSet { r, r_sqrt, sqrt_diag })
    }

    /// `R_k = I_M` for all users.
    pub fn iid(antennas: usize, users: usize) -> Self {
        let eye = CMat::identity(antennas, antennas);
        CorrelationSet {
            r: vec![eye.clone(); users],
            r_sqrt: vec![eye; users],
            sqrt_diag: Some(vec![vec![1.0; antennas]; users]),
        }
    }

    pub fn antennas(&self) -> usize {
        self.r.first().map(|x| x.nrows()).unwrap_or(0)
    }

    pub fn users(&self) -> usize {
        self.r.len()
    }

    pub fn is_diagonal(&self) -> bool {
        self.sqrt_diag.is_some()
    }

    /// Diagonals of the covariances, when they are all diagonal.
    pub fn diagonals(&self) -> Option<Vec<Vec<f64>>> {
        self.is_diagonal().then(|| self.r.iter().map(real_diag).collect())
    }
}

/// Large-scale gain `10^(s - 1.53) / d^3.76`.
pub fn large_scale_gain(distance_m: f64, shadowing: f64) -> Result<f64> {
    if !(distance_m > 0.0) {
        return Err(Error::Geometry(format!("distance {distance_m} m must be positive")));
    }
    Ok(10f64.powf(shadowing - PATHLOSS_INTERCEPT) / distance_m.powf(PATHLOSS_EXPONENT))
}

/// Builds the per-user covariances for the configured geometry.
///
/// In cell mode every antenna sees the user at the same distance but draws
/// its own shadowing exponent, once per campaign.
pub fn build_correlation<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> Result<CorrelationSet> {
    let (m, k) = (config.antennas, config.users);
    match config.geometry {
        Geometry::Iid => Ok(CorrelationSet::iid(m, k)),
        Geometry::Cell {
            user_distance_m,
            shadow_var,
            ..
        } => {
            if !(user_distance_m > 0.0) {
                return Err(Error::Geometry(format!(
                    "user distance {user_distance_m} m must be positive"
                )));
            }
            if !(shadow_var >= 0.0) {
                return Err(Error::Domain(format!("shadow_var = {shadow_var} is negative")));
            }
            let shadow = Normal::new(0.0, shadow_var.sqrt())
                .map_err(|e| Error::Domain(format!("shadowing distribution: {e}")))?;
            let mut r = Vec::with_capacity(k);
            for _ in 0..k {
                let gains = (0..m)
                    .map(|_| large_scale_gain(user_distance_m, shadow.sample(rng)))
                    .collect::<Result<Vec<_>>>()?;
                r.push(cdiag(&gains));
            }
            CorrelationSet::from_matrices(r)
        }
    }
}

/// Covariances for a whole campaign: shadowing comes from a stream reserved
/// for geometry, so every engine and every grid point sharing the seed sees
/// the same large-scale gains.
pub fn campaign_correlation(config: &SystemConfig) -> Result<CorrelationSet> {
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    rng.set_stream(GEOMETRY_STREAM);
    build_correlation(config, &mut rng)
}

const GEOMETRY_STREAM: u64 = u64::MAX;

/// One coherence block worth of channel vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h: Vec<CVec>,
}

/// `h_k = R_k^{1/2} w_k` with `w_k ~ CN(0, I)`.
pub fn draw_channel<R: Rng + ?Sized>(corr: &CorrelationSet, rng: &mut R) -> ChannelRealization {
    let m = corr.antennas();
    let h = (0..corr.users())
        .map(|k| {
            let w = cn01_vec(m, rng);
            match &corr.sqrt_diag {
                Some(d) => CVec::from_fn(m, |i, _| w[i] * d[k][i]),
                None => &corr.r_sqrt[k] * w,
            }
        })
        .collect();
    ChannelRealization { h }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ZERO;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn iid_is_identity() {
        let cfg = SystemConfig::new(4, 2, 100, 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = build_correlation(&cfg, &mut rng).unwrap();
        assert!(c.r.iter().all(|r| *r == CMat::identity(4, 4)));
    }

    #[test]
    fn cell_gain_at_25m() {
        let g = large_scale_gain(25.0, 0.0).unwrap();
        let oracle = 10f64.powf(-1.53) / 25f64.powf(3.76);
        assert_eq!(g, oracle);
        assert!((g - 1.64e-7).abs() / 1.64e-7 < 0.01);
        assert!(matches!(large_scale_gain(0.0, 0.0), Err(Error::Geometry(_))));
    }

    #[test]
    fn cell_without_shadowing_is_symmetric_and_diagonal() {
        let mut cfg = SystemConfig::new(8, 2, 100, 10.0);
        cfg.geometry = Geometry::Cell {
            side_m: 250.0,
            user_distance_m: 25.0,
            shadow_var: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = build_correlation(&cfg, &mut rng).unwrap();
        assert_eq!(c.r[0], c.r[1]);
        for i in 0..8 {
            for j in 0..8 {
                if i != j {
                    assert_eq!(c.r[0][(i, j)], ZERO);
                }
            }
        }
    }

    #[test]
    fn cell_rejects_bad_distance() {
        let mut cfg = SystemConfig::new(4, 1, 100, 10.0);
        cfg.geometry = Geometry::Cell {
            side_m: 250.0,
            user_distance_m: -1.0,
            shadow_var: 3.16,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(build_correlation(&cfg, &mut rng), Err(Error::Geometry(_))));
    }

    #[test]
    fn same_seed_same_draws() {
        let mut cfg = SystemConfig::new(6, 2, 100, 10.0);
        cfg.geometry = Geometry::default_cell();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(44);
            let c = build_correlation(&cfg, &mut rng).unwrap();
            let h = draw_channel(&c, &mut rng);
            (c, h)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn zero_covariance_gives_zero_channel() {
        let c = CorrelationSet::from_matrices(vec![CMat::zeros(3, 3)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(draw_channel(&c, &mut rng).h[0].iter().all(|z| *z == ZERO));
    }

    #[test]
    fn empirical_covariance_identity() {
        let c = CorrelationSet::iid(3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 100_000;
        let mut acc = CMat::zeros(3, 3);
        for _ in 0..n {
            let h = &draw_channel(&c, &mut rng).h[0];
            acc += h * h.adjoint();
        }
        acc /= crate::linalg::c(n as f64);
        let err = (acc - CMat::identity(3, 3)).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 0.02, "max entry error {err}");
    }

    #[test]
    fn empirical_variance_diag() {
        let c = CorrelationSet::from_matrices(vec![cdiag(&[4.0, 1.0])]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let v: f64 = (0..n).map(|_| draw_channel(&c, &mut rng).h[0][0].norm_sqr()).sum::<f64>() / n as f64;
        assert!((v - 4.0).abs() / 4.0 < 0.03, "variance {v}");
    }

    #[test]
    fn dense_covariance_draw_path() {
        let r = CMat::from_row_slice(2, 2, &[
            crate::linalg::c(2.0), crate::linalg::c(0.5),
            crate::linalg::c(0.5), crate::linalg::c(1.0),
        ]);
        let c = CorrelationSet::from_matrices(vec![r.clone()]).unwrap();
        assert!(!c.is_diagonal());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 100_000;
        let mut acc = CMat::zeros(2, 2);
        for _ in 0..n {
            let h = &draw_channel(&c, &mut rng).h[0];
            acc += h * h.adjoint();
        }
        acc /= crate::linalg::c(n as f64);
        let err = (acc - r).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 0.04, "max entry error {err}");
    }
}
