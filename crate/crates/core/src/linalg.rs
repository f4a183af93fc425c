//! Dense complex linear algebra helpers shared by the other modules.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
///
/// Only the lower triangle is read. The returned columns are orthonormal
/// eigenvectors matching the eigenvalue order.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Eigenvalues of a real symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Largest singular value.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let gram = m.adjoint() * m;
    let top = hermitian_eigenvalues(&gram).last().copied().unwrap_or(0.0);
    libm::sqrt(top.max(0.0))
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let s: f64 = xs.iter().map(|&x| libm::exp(x - max)).sum();
    max + libm::log(s)
}

pub fn trace(m: &CMatrix) -> Complex64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

/// `tr(a b)` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// `<v| m |v>`
pub fn quadratic_form(m: &CMatrix, v: &CVector) -> Complex64 {
    let mv = m * v;
    v.dotc(&mv)
}

/// Replace `m` by `(m + m^dagger) / 2`.
pub fn hermitize(m: &mut CMatrix) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)] = Complex64::new(m[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

/// Apply `f` to the spectrum of a Hermitian matrix.
pub fn hermitian_function(m: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let (values, vectors) = hermitian_eigen(m);
    let n = m.nrows();
    let mut out = CMatrix::zeros(n, n);
    for (k, &lambda) in values.iter().enumerate() {
        let fk = f(lambda);
        if fk == 0.0 {
            continue;
        }
        let col = vectors.column(k);
        for i in 0..n {
            let ci = col[i] * fk;
            for j in 0..n {
                out[(i, j)] += ci * col[j].conj();
            }
        }
    }
    hermitize(&mut out);
    out
}

/// `½ ‖a − b‖₁` for Hermitian `a`, `b`.
pub fn trace_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    let diff = a - b;
    0.5 * hermitian_eigenvalues(&diff).iter().map(|x| x.abs()).sum::<f64>()
}

/// Uhlmann fidelity `(tr √(√a b √a))²` for positive semidefinite `a`, `b`.
pub fn fidelity(a: &CMatrix, b: &CMatrix) -> f64 {
    let sqrt_a = hermitian_function(a, |x| libm::sqrt(x.max(0.0)));
    let mut inner = &sqrt_a * b * &sqrt_a;
    hermitize(&mut inner);
    let s: f64 = hermitian_eigenvalues(&inner).iter().map(|&x| libm::sqrt(x.max(0.0))).sum();
    (s * s).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn eigen_sorted_and_reconstructs() {
        let m = CMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)]);
        let (vals, vecs) = hermitian_eigen(&m);
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 3.0).abs() < 1e-12);
        let diag = CMatrix::from_diagonal(&CVector::from_iterator(2, vals.iter().map(|&v| c(v, 0.0))));
        let back = &vecs * diag * vecs.adjoint();
        assert!((back - m).norm() < 1e-12);
    }

    #[test]
    fn log_sum_exp_handles_large_values() {
        let v = [1000.0, 1000.0];
        assert!((log_sum_exp(&v) - (1000.0 + libm::log(2.0))).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn trace_distance_and_fidelity_of_orthogonal_projectors() {
        let p0 = CMatrix::from_diagonal(&CVector::from_vec(alloc::vec![ONE, ZERO]));
        let p1 = CMatrix::from_diagonal(&CVector::from_vec(alloc::vec![ZERO, ONE]));
        assert!((trace_distance(&p0, &p1) - 1.0).abs() < 1e-12);
        assert!(fidelity(&p0, &p1).abs() < 1e-12);
        assert!((fidelity(&p0, &p0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let m = CMatrix::from_diagonal(&CVector::from_vec(alloc::vec![c(0.0, 0.0), c(-3.0, 0.0)]));
        assert!((spectral_norm(&m) - 3.0).abs() < 1e-12);
    }
}
