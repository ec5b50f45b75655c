//! Fixed point and first-derivative system of the RZF resolvent
//! `T = ((1/M) sum_j D_j / (1 + e_j) + S + rho I)^{-1}`, with `e_k = (1/M) tr D_k T`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{c, inv_hpd, is_diagonal, real_diag, spectral_radius, trace_prod, CMat};

#[derive(Debug, Clone, PartialEq)]
pub struct DeInputs {
    pub d: Vec<CMat>,
    pub s: CMat,
    /// Regularization `rho` of the resolvent.
    pub rho_arg: f64,
}

impl DeInputs {
    pub fn antennas(&self) -> usize {
        self.s.nrows()
    }

    fn check(&self) -> Result<()> {
        let m = self.antennas();
        if !(self.rho_arg > 0.0) {
            return Err(Error::Domain(format!("resolvent regularization {} must be positive", self.rho_arg)));
        }
        if self.s.ncols() != m || self.d.iter().any(|d| d.nrows() != m || d.ncols() != m) {
            return Err(Error::Dimension("resolvent inputs must all be M x M".into()));
        }
        Ok(())
    }

    fn all_diagonal(&self) -> bool {
        is_diagonal(&self.s) && self.d.iter().all(is_diagonal)
    }

    /// `T` for a given `e`.
    pub fn resolvent(&self, e: &[f64]) -> Result<CMat> {
        let m = self.antennas();
        let mf = m as f64;
        if self.all_diagonal() {
            let mut acc = real_diag(&self.s);
            for (d, &ek) in self.d.iter().zip(e) {
                for (a, x) in acc.iter_mut().zip(real_diag(d)) {
                    *a += x / (mf * (1.0 + ek));
                }
            }
            let inv: Vec<f64> = acc.iter().map(|a| 1.0 / (a + self.rho_arg)).collect();
            return Ok(crate::linalg::cdiag(&inv));
        }
        let mut a = self.s.clone();
        for (d, &ek) in self.d.iter().zip(e) {
            a += d * c(1.0 / (mf * (1.0 + ek)));
        }
        for i in 0..m {
            a[(i, i)] += self.rho_arg;
        }
        inv_hpd(&a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-10, max_iter: 500 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub e: Vec<f64>,
    pub t: CMat,
    pub iterations: usize,
    /// Last step size, relative to `max(1, e_k)`.
    pub residual: f64,
    /// Step size of every iteration.
    pub history: Vec<f64>,
}

/// Iterates `e_k <- (1/M) tr D_k T(e)` from `e = 1/rho` until the largest
/// step, taken relative to `max(1, e_k)`, drops below `tol`.
pub fn fixed_point(inputs: &DeInputs, opts: SolverOptions) -> Result<FixedPoint> {
    inputs.check()?;
    let mf = inputs.antennas() as f64;
    let mut e = vec![1.0 / inputs.rho_arg; inputs.d.len()];
    let mut history = Vec::new();
    for it in 1..=opts.max_iter {
        let t = inputs.resolvent(&e)?;
        let next: Vec<f64> = inputs.d.iter().map(|d| trace_prod(d, &t).re / mf).collect();
        let res = next
            .iter()
            .zip(&e)
            .map(|(a, b)| (a - b).abs() / a.abs().max(1.0))
            .fold(0.0, f64::max);
        e = next;
        history.push(res);
        if !res.is_finite() {
            break;
        }
        if res < opts.tol {
            let t = inputs.resolvent(&e)?;
            return Ok(FixedPoint { e, t, iterations: it, residual: res, history });
        }
    }
    Err(Error::NonConvergence {
        iterations: history.len(),
        residual: history.last().copied().unwrap_or(f64::NAN),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Derivative {
    pub e_prime: Vec<f64>,
    pub t_prime: CMat,
    pub spectral_radius: f64,
}

/// Solves `(I - J) e' = v` and assembles
/// `T' = T K T + T ((1/M) sum_l D_l e'_l / (1 + e_l)^2) T`.
///
/// `J_kl = (1/M) tr(D_k T D_l T) / (M (1 + e_l)^2)`, `v_k = (1/M) tr(D_k T K T)`.
pub fn derivative_system(inputs: &DeInputs, fp: &FixedPoint, k_mat: &CMat) -> Result<Derivative> {
    let k_users = inputs.d.len();
    let mf = inputs.antennas() as f64;
    let t = &fp.t;
    let dt: Vec<CMat> = inputs.d.iter().map(|d| d * t).collect();
    let tkt = t * k_mat * t;
    let j = DMatrix::from_fn(k_users, k_users, |k, l| {
        trace_prod(&dt[k], &dt[l]).re / (mf * mf * (1.0 + fp.e[l]).powi(2))
    });
    let v = DVector::from_fn(k_users, |k, _| trace_prod(&inputs.d[k], &tkt).re / mf);
    let radius = if k_users == 0 { 0.0 } else { spectral_radius(&j) };
    if !(radius < 1.0) {
        return Err(Error::SpectralRadius(radius));
    }
    let a = DMatrix::identity(k_users, k_users) - &j;
    let e_prime = a
        .lu()
        .solve(&v)
        .ok_or(Error::SpectralRadius(radius))?;
    let mut mid = CMat::zeros(t.nrows(), t.ncols());
    for (l, d) in inputs.d.iter().enumerate() {
        mid += d * c(e_prime[l] / (mf * (1.0 + fp.e[l]).powi(2)));
    }
    let t_prime = tkt + t * mid * t;
    Ok(Derivative {
        e_prime: e_prime.iter().copied().collect(),
        t_prime,
        spectral_radius: radius,
    })
}
