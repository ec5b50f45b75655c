//! Complex dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Real diagonal matrix as a complex matrix.
pub fn cdiag(d: &[f64]) -> CMat {
    CMat::from_diagonal(&CVec::from_iterator(d.len(), d.iter().map(|&x| c(x))))
}

pub fn is_diagonal(a: &CMat) -> bool {
    a.is_square()
        && (0..a.nrows()).all(|i| (0..a.ncols()).all(|j| i == j || a[(i, j)] == ZERO))
}

/// Real parts of the diagonal.
pub fn real_diag(a: &CMat) -> Vec<f64> {
    (0..a.nrows()).map(|i| a[(i, i)].re).collect()
}

/// `tr(A B)` without forming the product.
pub fn trace_prod(a: &CMat, b: &CMat) -> Complex64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = ZERO;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// `(A + A^H)/2`, used to scrub round-off asymmetry.
pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()) * c(0.5)
}

pub fn frobenius(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest absolute deviation from Hermitian symmetry relative to the Frobenius norm.
pub fn hermitian_defect(a: &CMat) -> f64 {
    let n = frobenius(a).max(f64::MIN_POSITIVE);
    frobenius(&(a - a.adjoint())) / n
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(a: &CMat) -> Vec<f64> {
    let mut ev: Vec<f64> = hermitian_part(a).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

/// Principal square root of a Hermitian PSD matrix.
///
/// Eigenvalues below `-1e-10 * ||A||_2` are rejected; smaller negative ones
/// are clipped to zero.
pub fn matrix_sqrt(a: &CMat) -> Result<CMat> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "matrix_sqrt needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if is_diagonal(a) {
        let d = real_diag(a);
        let scale = d.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        let mut out = Vec::with_capacity(d.len());
        for &x in &d {
            if x < -1e-10 * scale {
                return Err(Error::NotPsd { min_eig: x });
            }
            out.push(x.max(0.0).sqrt());
        }
        return Ok(cdiag(&out));
    }
    let eig = hermitian_part(a).symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -1e-10 * scale {
        return Err(Error::NotPsd { min_eig: min });
    }
    let roots = CVec::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&x| c(x.max(0.0).sqrt())),
    );
    let u = &eig.eigenvectors;
    let scaled = CMat::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)] * roots[j]);
    Ok(hermitian_part(&(scaled * u.adjoint())))
}

/// Inverse of a Hermitian positive definite matrix via Cholesky.
pub fn inv_hpd(a: &CMat) -> Result<CMat> {
    let chol = hermitian_part(a)
        .cholesky()
        .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))?;
    Ok(chol.inverse())
}

/// Solves `A X = B` for Hermitian positive definite `A`.
pub fn solve_hpd(a: &CMat, b: &CMat) -> Result<CMat> {
    let chol = hermitian_part(a)
        .cholesky()
        .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))?;
    Ok(chol.solve(b))
}

/// General square solve via LU.
pub fn solve_lu(a: &CMat, b: &CMat) -> Result<CMat> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Numerical("singular matrix".into()))
}

/// One draw of CN(0, 1).
pub fn cn01<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn cn01_vec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CVec {
    CVec::from_fn(n, |_, _| cn01(rng))
}

/// Spectral radius of a small real square matrix (dense, via complex eigenvalues).
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}
