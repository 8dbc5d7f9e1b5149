//! Dense matrix functions used by the semigroup and the time steppers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `e^{A}` by scaling and squaring with a Padé approximant.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.exp()
}

/// `(e^{hA}, h φ₁(hA), h φ₂(hA))` with `φ₁(z) = (e^z - 1)/z` and
/// `φ₂(z) = (e^z - 1 - z)/z²`, read off the exponential of the block matrix
/// `[[hA, hI, 0], [0, 0, I], [0, 0, 0]]`.
pub fn exp_phi(a: &DMatrix<f64>, h: f64) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut m = DMatrix::<f64>::zeros(3 * n, 3 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&(a * h));
    for i in 0..n {
        m[(i, n + i)] = h;
        m[(n + i, 2 * n + i)] = 1.0;
    }
    let e = m.exp();
    let ea = e.view((0, 0), (n, n)).into_owned();
    let p1 = e.view((0, n), (n, n)).into_owned();
    // top-right block is h φ₂(hA)
    let p2 = e.view((0, 2 * n), (n, n)).into_owned();
    (ea, p1, p2)
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().max()
}

/// `‖M‖` in the inner product `⟨x, y⟩ = Σ w_i x_i y_i`.
pub fn weighted_operator_norm(m: &DMatrix<f64>, weights: &[f64]) -> f64 {
    let n = m.nrows();
    let s = DMatrix::from_fn(n, n, |i, j| m[(i, j)] * (weights[i] / weights[j]).sqrt());
    spectral_norm(&s)
}

/// Largest real part of the spectrum.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest eigenvalue `μ` of `K x = μ G x` for symmetric `K` and SPD `G`.
pub fn generalized_min_eigenvalue(k: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<f64> {
    let l = g
        .clone()
        .cholesky()
        .ok_or_else(|| Error::LinearSolve("Gram matrix is not positive definite".into()))?
        .unpack();
    let li = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::LinearSolve("singular Cholesky factor".into()))?;
    let s = &li * k * li.transpose();
    let s = (&s + s.transpose()) * 0.5;
    Ok(s.symmetric_eigenvalues().min())
}

pub fn to_vector(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}
