//! Expectation maps from pure states and weighted ensembles.
//!
//! A projective point `x` determines the classical field `A(x)_m =
//! <x|A_m|x>/<x|x>`. An ensemble is a batch of uniform draws with importance
//! weights; its density matrix and linear expectations are self-normalised
//! weighted averages, with standard errors from a 20-block jackknife in index
//! order.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::LadderOperators;
use crate::linalg::{hermitian_eigenvalues, quadratic_form, trace, trace_product, CMatrix, CVector, ZERO};
use crate::projective::{ProjectivePoint, SampleBatch};
use crate::stats::{block_ranges, effective_sample_size, jackknife, JACKKNIFE_BLOCKS};

/// Tolerances for the density matrix invariants.
pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-10;

/// Default minimum effective sample size, as a fraction of the batch size.
pub const DEFAULT_ESS_FRACTION: f64 = 0.01;

/// One complex amplitude per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalField(pub Vec<Complex64>);

impl ClassicalField {
    pub fn new(components: Vec<Complex64>) -> Self {
        Self(components)
    }

    pub fn zeros(num_modes: usize) -> Self {
        Self(vec![ZERO; num_modes])
    }

    /// Single-mode field with a real amplitude.
    pub fn real(value: f64) -> Self {
        Self(vec![Complex64::new(value, 0.0)])
    }

    pub fn num_modes(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[Complex64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.0.iter().map(Complex64::norm_sqr).sum())
    }

    pub fn conj(&self) -> Self {
        Self(self.0.iter().map(Complex64::conj).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn distance(&self, other: &Self) -> f64 {
        libm::sqrt(self.0.iter().zip(&other.0).map(|(a, b)| (a - b).norm_sqr()).sum())
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self(self.0.iter().map(|z| z * factor).collect())
    }
}

/// Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    /// Validate the density matrix invariants.
    pub fn new(rho: CMatrix) -> Result<Self> {
        if !rho.is_square() {
            return Err(Error::InvalidArgument("a density matrix must be square".into()));
        }
        let n = rho.nrows();
        for i in 0..n {
            for j in i..n {
                let gap = (rho[(i, j)] - rho[(j, i)].conj()).norm();
                if !(gap <= HERMITIAN_TOL) {
                    return Err(Error::Numerical(format!("density matrix is not Hermitian at ({i},{j}): {gap:e}")));
                }
            }
        }
        let tr = trace(&rho);
        if !((tr - Complex64::new(1.0, 0.0)).norm() <= TRACE_TOL) {
            return Err(Error::Numerical(format!("density matrix trace is {tr}")));
        }
        let lowest = hermitian_eigenvalues(&rho).first().copied().unwrap_or(0.0);
        if lowest < -PSD_TOL {
            return Err(Error::Numerical(format!("density matrix has eigenvalue {lowest:e}")));
        }
        Ok(Self(rho))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(CMatrix::identity(dim, dim).unscale(dim as f64))
    }

    pub fn pure(x: &ProjectivePoint) -> Self {
        let v = x.representative();
        Self(v * v.adjoint())
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// `tr(ρ op)`
    pub fn expectation(&self, op: &CMatrix) -> Complex64 {
        trace_product(&self.0, op)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.0)
    }
}

fn check_dim(x: &ProjectivePoint, ops: &LadderOperators) -> Result<()> {
    if x.dim() != ops.dim() {
        return Err(Error::DimensionMismatch { expected: ops.dim(), found: x.dim() });
    }
    Ok(())
}

/// Field components `<v|A_m|v>/<v|v>` of an arbitrary nonzero vector.
pub fn field_of_vector(v: &CVector, ops: &LadderOperators) -> ClassicalField {
    let norm2 = v.norm_squared();
    ClassicalField((0..ops.num_modes()).map(|m| ops.annihilation_form(m, v) / norm2).collect())
}

/// The classical field carried by a pure state.
pub fn expectation_field(x: &ProjectivePoint, ops: &LadderOperators) -> Result<ClassicalField> {
    check_dim(x, ops)?;
    Ok(field_of_vector(x.representative(), ops))
}

/// `<x|C_m|x>`, the complex conjugate of [`expectation_field`].
pub fn creation_expectation(x: &ProjectivePoint, ops: &LadderOperators) -> Result<ClassicalField> {
    Ok(expectation_field(x, ops)?.conj())
}

/// A batch of uniform draws together with importance weights.
///
/// Weights are held as `exp(log_weight − max)` so that any finite log
/// weights can be combined without overflow.
#[derive(Debug, Clone)]
pub struct WeightedBatch<'a> {
    batch: &'a SampleBatch,
    log_weights: Vec<f64>,
    shift: f64,
    scaled: Vec<f64>,
    total: f64,
    ess: f64,
    min_ess: f64,
}

impl<'a> WeightedBatch<'a> {
    pub fn uniform(batch: &'a SampleBatch) -> Self {
        Self::from_log_weights(batch, vec![0.0; batch.count()]).expect("zero log weights are valid")
    }

    pub fn from_log_weights(batch: &'a SampleBatch, log_weights: Vec<f64>) -> Result<Self> {
        if log_weights.len() != batch.count() {
            return Err(Error::DimensionMismatch { expected: batch.count(), found: log_weights.len() });
        }
        if log_weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument("log weights must be finite".into()));
        }
        let shift = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let scaled: Vec<f64> = log_weights.iter().map(|&l| libm::exp(l - shift)).collect();
        let total = scaled.iter().sum();
        let ess = effective_sample_size(&scaled);
        let min_ess = DEFAULT_ESS_FRACTION * batch.count() as f64;
        Ok(Self { batch, log_weights, shift, scaled, total, ess, min_ess })
    }

    /// Minimum ESS as a fraction of the batch size.
    pub fn with_ess_fraction(mut self, fraction: f64) -> Self {
        self.min_ess = fraction * self.batch.count() as f64;
        self
    }

    pub fn batch(&self) -> &SampleBatch {
        self.batch
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn ess(&self) -> f64 {
        self.ess
    }

    pub fn min_ess(&self) -> f64 {
        self.min_ess
    }

    pub fn normalized_weight(&self, i: usize) -> f64 {
        self.scaled[i] / self.total
    }

    /// `ln( mean_i exp(log_weight_i) )`
    pub fn log_mean_weight(&self) -> f64 {
        self.shift + libm::log(self.total / self.scaled.len() as f64)
    }

    pub fn check_ess(&self) -> Result<()> {
        if self.ess < self.min_ess {
            return Err(Error::DegenerateWeights { ess: self.ess, threshold: self.min_ess });
        }
        Ok(())
    }

    /// Accumulate `[w, w·f(i)…]` per jackknife block, `f` writing `width` values.
    fn block_sums(&self, width: usize, f: impl Fn(usize, &mut [f64])) -> Vec<Vec<f64>> {
        let mut scratch = vec![0.0; width];
        block_ranges(self.batch.count(), self.batch.group(), JACKKNIFE_BLOCKS)
            .into_iter()
            .map(|range| {
                let mut sums = vec![0.0; width + 1];
                for i in range {
                    let w = self.scaled[i];
                    f(i, &mut scratch);
                    sums[0] += w;
                    for (s, v) in sums[1..].iter_mut().zip(&scratch) {
                        *s += w * v;
                    }
                }
                sums
            })
            .collect()
    }
}

/// Monte Carlo density matrix with per-entry jackknife standard errors.
#[derive(Debug, Clone)]
pub struct DensityEstimate {
    pub rho: DensityMatrix,
    /// Standard error of the real part in `re`, of the imaginary part in `im`.
    pub stderr: CMatrix,
    pub ess: f64,
}

/// Self-normalised average of the projectors `|x><x|` over the batch.
pub fn density_matrix_mc(w: &WeightedBatch<'_>) -> Result<DensityEstimate> {
    w.check_ess()?;
    let d = w.batch.dim();
    let points = w.batch.points();
    let blocks = w.block_sums(2 * d * d, |i, out| {
        let v = points[i].representative();
        for r in 0..d {
            for c in 0..d {
                let z = v[r] * v[c].conj();
                out[2 * (r * d + c)] = z.re;
                out[2 * (r * d + c) + 1] = z.im;
            }
        }
    });
    let (est, se) = jackknife(&blocks, |t| t[1..].iter().map(|v| v / t[0]).collect());
    let mut rho = CMatrix::from_fn(d, d, |r, c| Complex64::new(est[2 * (r * d + c)], est[2 * (r * d + c) + 1]));
    crate::linalg::hermitize(&mut rho);
    let stderr = CMatrix::from_fn(d, d, |r, c| Complex64::new(se[2 * (r * d + c)], se[2 * (r * d + c) + 1]));
    Ok(DensityEstimate { rho: DensityMatrix::new(rho)?, stderr, ess: w.ess })
}

/// Jackknife estimate of a scalar functional of the Monte Carlo density matrix.
///
/// `f` receives the (Hermitian, unit-trace) weighted average of projectors
/// for the full batch and for every delete-one-block subset.
pub fn density_functional_mc(w: &WeightedBatch<'_>, f: impl Fn(&CMatrix) -> f64) -> Result<(f64, f64)> {
    w.check_ess()?;
    let d = w.batch.dim();
    let points = w.batch.points();
    let blocks = w.block_sums(2 * d * d, |i, out| {
        let v = points[i].representative();
        for r in 0..d {
            for c in 0..d {
                let z = v[r] * v[c].conj();
                out[2 * (r * d + c)] = z.re;
                out[2 * (r * d + c) + 1] = z.im;
            }
        }
    });
    let (est, se) = jackknife(&blocks, |t| {
        let mut rho = CMatrix::from_fn(d, d, |r, c| Complex64::new(t[1 + 2 * (r * d + c)], t[2 + 2 * (r * d + c)]) / t[0]);
        crate::linalg::hermitize(&mut rho);
        vec![f(&rho)]
    });
    Ok((est[0], se[0]))
}

/// A complex estimate with separate standard errors for both parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexEstimate {
    pub value: Complex64,
    pub stderr: Complex64,
}

/// Self-normalised average of `<x|op|x>` over the batch.
pub fn ensemble_expectation(w: &WeightedBatch<'_>, op: &CMatrix) -> Result<ComplexEstimate> {
    w.check_ess()?;
    let d = w.batch.dim();
    if op.nrows() != d || op.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, found: op.nrows() });
    }
    let points = w.batch.points();
    let blocks = w.block_sums(2, |i, out| {
        let z = quadratic_form(op, points[i].representative());
        out[0] = z.re;
        out[1] = z.im;
    });
    let (est, se) = jackknife(&blocks, |t| vec![t[1] / t[0], t[2] / t[0]]);
    Ok(ComplexEstimate { value: Complex64::new(est[0], est[1]), stderr: Complex64::new(se[0], se[1]) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{build_basis, ladder_matrices};
    use crate::projective::sample_uniform;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn ops(m: usize, n: u32) -> LadderOperators {
        ladder_matrices(&build_basis(m, n).unwrap())
    }

    #[test]
    fn vacuum_has_zero_field() {
        let ops = ops(1, 2);
        let f = expectation_field(&ProjectivePoint::basis(3, 0), &ops).unwrap();
        assert_eq!(f, ClassicalField::zeros(1));
        assert_eq!(creation_expectation(&ProjectivePoint::basis(3, 0), &ops).unwrap(), ClassicalField::zeros(1));
    }

    #[test]
    fn two_level_superposition() {
        let ops = ops(1, 2);
        let x = ProjectivePoint::from_amplitudes(vec![c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        let f = expectation_field(&x, &ops).unwrap();
        assert!((f.0[0] - c(0.5, 0.0)).norm() < 1e-15);

        // (|0> + i|1>)/√2: <a> = conj(c0) c1 = i/2, <a†> = -i/2
        let y = ProjectivePoint::from_amplitudes(vec![c(1.0, 0.0), c(0.0, 1.0), c(0.0, 0.0)]).unwrap();
        let a = expectation_field(&y, &ops).unwrap();
        let cr = creation_expectation(&y, &ops).unwrap();
        assert!((a.0[0] - c(0.0, 0.5)).norm() < 1e-15);
        assert!((cr.0[0] - c(0.0, -0.5)).norm() < 1e-15);
        // dense route agrees
        let dense = quadratic_form(ops.creation(0), y.representative());
        assert!((dense - cr.0[0]).norm() < 1e-15);
    }

    #[test]
    fn field_is_scale_and_phase_invariant() {
        let ops = ops(2, 3);
        let x = crate::projective::sample_point(ops.dim(), 5, 0);
        let base = expectation_field(&x, &ops).unwrap();
        let scaled = x.representative().map(|z| z * c(-3.5, 2.0));
        let f = field_of_vector(&scaled, &ops);
        assert!(f.distance(&base) < 1e-14);
        assert!(expectation_field(&ProjectivePoint::basis(4, 0), &ops).is_err());
    }

    #[test]
    fn single_point_batch_gives_projector() {
        let x = ProjectivePoint::basis(3, 0);
        let batch = SampleBatch::from_points(3, 0, 0, vec![x.clone()]).unwrap();
        let w = WeightedBatch::uniform(&batch);
        let est = density_matrix_mc(&w).unwrap();
        assert_eq!(est.rho, DensityMatrix::pure(&x));
    }

    #[test]
    fn identity_expectation_is_exactly_one() {
        let batch = sample_uniform(4, 2, 500).unwrap();
        let lw: Vec<f64> = (0..500).map(|i| (i as f64 * 0.37).sin()).collect();
        let w = WeightedBatch::from_log_weights(&batch, lw).unwrap();
        let e = ensemble_expectation(&w, &CMatrix::identity(4, 4)).unwrap();
        assert!((e.value - c(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn degenerate_weights_are_refused() {
        let batch = sample_uniform(3, 2, 1000).unwrap();
        let mut lw = vec![0.0; 1000];
        lw[7] = 100.0;
        let w = WeightedBatch::from_log_weights(&batch, lw).unwrap();
        assert!(w.ess() < 1.01);
        let err = density_matrix_mc(&w).unwrap_err();
        assert!(matches!(err, Error::DegenerateWeights { threshold, .. } if threshold == 10.0));
        assert!(ensemble_expectation(&w, &CMatrix::identity(3, 3)).is_err());
        let lenient = w.clone().with_ess_fraction(0.0);
        assert!(density_matrix_mc(&lenient).is_ok());
    }

    #[test]
    fn both_expectation_routes_agree() {
        let ops = ops(1, 3);
        let batch = sample_uniform(4, 8, 2000).unwrap();
        let lw: Vec<f64> = batch.points().iter().map(|p| -expectation_field(p, &ops).unwrap().0[0].re).collect();
        let w = WeightedBatch::from_log_weights(&batch, lw).unwrap();
        let rho = density_matrix_mc(&w).unwrap().rho;
        let direct = ensemble_expectation(&w, ops.annihilation(0)).unwrap().value;
        let via_rho = rho.expectation(ops.annihilation(0));
        assert!((direct - via_rho).norm() <= 1e-10 * direct.norm().max(1e-300));
    }

    #[test]
    fn density_matrix_validation() {
        assert!(DensityMatrix::new(CMatrix::identity(2, 2)).is_err());
        let mut m = CMatrix::identity(2, 2).unscale(2.0);
        m[(0, 1)] = c(0.1, 0.0);
        assert!(DensityMatrix::new(m.clone()).is_err());
        m[(1, 0)] = c(0.1, 0.0);
        assert!(DensityMatrix::new(m).is_ok());
        let neg = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.5, 0.0), c(-0.5, 0.0)]));
        assert!(DensityMatrix::new(neg).is_err());
    }
}
