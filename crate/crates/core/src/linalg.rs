//! Small dense complex linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

pub use nalgebra::Complex;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// `tr(A B)` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> C64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = ZERO;
    // a[(i, j)] * b[(j, i)], walking b down its columns.
    for i in 0..a.nrows() {
        let col = b.column(i);
        for j in 0..a.ncols() {
            acc += a[(i, j)] * col[j];
        }
    }
    acc
}

pub fn trace(a: &CMatrix) -> C64 {
    a.diagonal().iter().copied().fold(ZERO, |s, v| s + v)
}

/// Largest `|A - A^H|` entry.
pub fn hermitian_defect(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Eigen-decomposition of a Hermitian matrix. Eigenvalues are real.
pub fn hermitian_eigen(a: &CMatrix) -> SymmetricEigen<C64, Dyn> {
    a.clone().symmetric_eigen()
}

pub fn eigenvalue_range(a: &CMatrix) -> (f64, f64) {
    let eig = hermitian_eigen(a);
    eig.eigenvalues
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

/// `λ_max / λ_min`, infinite when the smallest eigenvalue is not positive.
pub fn condition_number(a: &CMatrix) -> f64 {
    let (lo, hi) = eigenvalue_range(a);
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Factor `F` with `F F^H = A` for a Hermitian PSD `A`.
///
/// Eigenvalues down to `-1e-10 * tr(A)/n` are treated as round-off and
/// clipped to zero; anything more negative is an error.
pub fn psd_factor(a: &CMatrix) -> Result<CMatrix> {
    let n = a.nrows();
    let floor = -1e-10 * trace(a).re.abs() / n.max(1) as f64;
    let eig = hermitian_eigen(a);
    let mut factor = eig.eigenvectors;
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < floor {
            return Err(Error::Numerical(format!(
                "matrix is not PSD: eigenvalue {lambda:e} below floor {floor:e}"
            )));
        }
        let s = lambda.max(0.0).sqrt();
        factor.column_mut(j).scale_mut(s);
    }
    Ok(factor)
}

pub fn cholesky(a: &CMatrix) -> Result<Cholesky<C64, Dyn>> {
    Cholesky::new(a.clone())
        .ok_or_else(|| Error::Numerical("Hermitian matrix is not positive definite".into()))
}

/// `A^{-1} B` for Hermitian positive definite `A`.
pub fn hermitian_solve(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    Ok(cholesky(a)?.solve(b))
}

pub fn real_part(a: &DMatrix<C64>) -> DMatrix<f64> {
    a.map(|v| v.re)
}

/// Frobenius norm of `A - B` relative to `B`.
pub fn relative_frobenius(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).norm() / b.norm()
}
