//! Truncated multi-mode bosonic Fock spaces.
//!
//! The space holds every occupation multi-index `n = (n_0, …, n_{M-1})` with
//! total photon number `|n| ≤ N`, so its dimension is `C(N + M, M)`. States
//! are graded by total number (vacuum first) and ordered lexicographically
//! descending within each grade, e.g. `(1,0)` before `(0,1)`.
//!
//! Amplitudes are taken in the orthonormal occupation basis. A rank-`k`
//! symmetric tensor `ψ^{(α…β)}` corresponds to occupation amplitudes
//! `c_n = sqrt(k! / Π n_m!) · ψ^{(n)}`, which absorbs the multinomial weights
//! so that the graded tensor inner product becomes the plain Hermitian dot
//! product of amplitude vectors.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, CMatrix, CVector, ONE};

/// Default upper bound on the truncated dimension.
pub const DEFAULT_MAX_DIM: usize = 4096;

/// `C(n, k)` or `None` on overflow.
pub fn binomial(n: u64, k: u64) -> Option<u128> {
    let k = k.min(n - k.min(n));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeSpace {
    num_modes: usize,
    cutoff: u32,
    basis: Vec<Vec<u32>>,
    totals: Vec<u32>,
    index: BTreeMap<Vec<u32>, usize>,
}

impl ModeSpace {
    pub fn new(num_modes: usize, cutoff: u32) -> Result<Self> {
        Self::with_max_dim(num_modes, cutoff, DEFAULT_MAX_DIM)
    }

    pub fn with_max_dim(num_modes: usize, cutoff: u32, max_dim: usize) -> Result<Self> {
        if num_modes == 0 {
            return Err(Error::InvalidArgument("the number of modes must be positive".into()));
        }
        let dim = binomial(cutoff as u64 + num_modes as u64, num_modes as u64).unwrap_or(u128::MAX);
        if dim > max_dim as u128 {
            return Err(Error::Capacity { modes: num_modes, cutoff, dim, cap: max_dim });
        }

        let mut basis = Vec::with_capacity(dim as usize);
        let mut current = vec![0u32; num_modes];
        for total in 0..=cutoff {
            compositions(total, 0, &mut current, &mut basis);
        }
        let totals = basis.iter().map(|n| n.iter().sum()).collect();
        let index = basis.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Ok(Self { num_modes, cutoff, basis, totals, index })
    }

    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    pub fn cutoff(&self) -> u32 {
        self.cutoff
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Vec<u32>] {
        &self.basis
    }

    pub fn occupation(&self, i: usize) -> &[u32] {
        &self.basis[i]
    }

    /// Total photon number of basis state `i`.
    pub fn total(&self, i: usize) -> u32 {
        self.totals[i]
    }

    pub fn index_of(&self, occupation: &[u32]) -> Option<usize> {
        self.index.get(occupation).copied()
    }

    /// Indices of states with total photon number strictly below the cutoff.
    pub fn sub_cutoff_indices(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.totals[i] < self.cutoff).collect()
    }
}

/// Append all compositions of `remaining` into the modes `pos..`, first mode
/// largest first.
fn compositions(remaining: u32, pos: usize, current: &mut [u32], out: &mut Vec<Vec<u32>>) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(current.to_vec());
        return;
    }
    for k in (0..=remaining).rev() {
        current[pos] = k;
        compositions(remaining - k, pos + 1, current, out);
    }
    current[pos] = 0;
}

/// Enumerate the truncated basis for `num_modes` modes and total cutoff `cutoff`.
pub fn build_basis(num_modes: usize, cutoff: u32) -> Result<ModeSpace> {
    ModeSpace::new(num_modes, cutoff)
}

/// A (not necessarily normalised) vector of occupation amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct FockVector(pub CVector);

impl FockVector {
    pub fn from_vec(amplitudes: Vec<Complex64>) -> Self {
        Self(CVector::from_vec(amplitudes))
    }

    /// The basis state `e_i` of a `dim`-dimensional space.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = CVector::zeros(dim);
        v[i] = ONE;
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.0
    }
}

/// `<phi|psi>`, conjugate-linear in `phi`.
pub fn inner_product(phi: &FockVector, psi: &FockVector) -> Result<Complex64> {
    if phi.dim() != psi.dim() {
        return Err(Error::DimensionMismatch { expected: phi.dim(), found: psi.dim() });
    }
    Ok(phi.0.dotc(&psi.0))
}

/// One nonzero entry of a lowering operator: column `from` maps to row `to`
/// with coefficient `sqrt(n_m)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lowering {
    pub to: usize,
    pub coeff: f64,
}

/// Annihilation and creation matrices for every mode.
///
/// The dense matrices are kept alongside a column-sparse form of each
/// annihilation operator (every column holds at most one nonzero), which is
/// what the hot expectation loops use.
#[derive(Debug, Clone)]
pub struct LadderOperators {
    annihilation: Vec<CMatrix>,
    creation: Vec<CMatrix>,
    lowering: Vec<Vec<Option<Lowering>>>,
    occupations: Vec<Vec<u32>>,
    totals: Vec<u32>,
    cutoff: u32,
}

impl LadderOperators {
    pub fn new(space: &ModeSpace) -> Self {
        let d = space.dim();
        let m_count = space.num_modes();
        let mut annihilation = Vec::with_capacity(m_count);
        let mut lowering = Vec::with_capacity(m_count);
        for m in 0..m_count {
            let mut a = CMatrix::zeros(d, d);
            let mut low = vec![None; d];
            for (j, n) in space.basis().iter().enumerate() {
                if n[m] == 0 {
                    continue;
                }
                let mut lowered = n.clone();
                lowered[m] -= 1;
                let i = space.index_of(&lowered).expect("lowered state lies in the truncated basis");
                let coeff = libm::sqrt(n[m] as f64);
                a[(i, j)] = Complex64::new(coeff, 0.0);
                low[j] = Some(Lowering { to: i, coeff });
            }
            annihilation.push(a);
            lowering.push(low);
        }
        let creation = annihilation.iter().map(CMatrix::adjoint).collect();
        Self {
            annihilation,
            creation,
            lowering,
            occupations: space.basis().to_vec(),
            totals: (0..d).map(|i| space.total(i)).collect(),
            cutoff: space.cutoff(),
        }
    }

    pub fn num_modes(&self) -> usize {
        self.annihilation.len()
    }

    pub fn dim(&self) -> usize {
        self.totals.len()
    }

    pub fn cutoff(&self) -> u32 {
        self.cutoff
    }

    pub fn annihilation(&self, m: usize) -> &CMatrix {
        &self.annihilation[m]
    }

    pub fn creation(&self, m: usize) -> &CMatrix {
        &self.creation[m]
    }

    pub fn lowering(&self, m: usize) -> &[Option<Lowering>] {
        &self.lowering[m]
    }

    pub fn occupation(&self, i: usize) -> &[u32] {
        &self.occupations[i]
    }

    pub fn total(&self, i: usize) -> u32 {
        self.totals[i]
    }

    /// Diagonal number operator `C_m A_m`.
    pub fn number_operator(&self, m: usize) -> CMatrix {
        let d = self.dim();
        CMatrix::from_fn(d, d, |i, j| if i == j { Complex64::new(self.occupations[i][m] as f64, 0.0) } else { Complex64::new(0.0, 0.0) })
    }

    /// Total number operator `Σ_m C_m A_m`.
    pub fn total_number_operator(&self) -> CMatrix {
        let d = self.dim();
        CMatrix::from_fn(d, d, |i, j| if i == j { Complex64::new(self.totals[i] as f64, 0.0) } else { Complex64::new(0.0, 0.0) })
    }

    /// `A_m psi` using the sparse form.
    pub fn apply_annihilation(&self, m: usize, psi: &CVector) -> CVector {
        let mut out = CVector::zeros(psi.len());
        for (j, low) in self.lowering[m].iter().enumerate() {
            if let Some(l) = low {
                out[l.to] += psi[j] * l.coeff;
            }
        }
        out
    }

    /// `<psi| A_m |psi>` (unnormalised).
    pub fn annihilation_form(&self, m: usize, psi: &CVector) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, low) in self.lowering[m].iter().enumerate() {
            if let Some(l) = low {
                acc += psi[l.to].conj() * psi[j] * l.coeff;
            }
        }
        acc
    }

    /// `<psi| Σ_m n_m |psi>` (unnormalised).
    pub fn total_number_form(&self, psi: &CVector) -> f64 {
        psi.iter().zip(&self.totals).map(|(c, &n)| c.norm_sqr() * n as f64).sum()
    }
}

pub fn ladder_matrices(space: &ModeSpace) -> LadderOperators {
    LadderOperators::new(space)
}

/// Violation of `[A_m, C_m'] = δ_{mm'} I`, measured in operator norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommutatorDefect {
    /// Restricted to states with total photon number below the cutoff.
    pub restricted: f64,
    /// Over the whole truncated space; nonzero at the cutoff edge.
    pub unrestricted: f64,
}

pub fn commutator_defect(ops: &LadderOperators, m: usize, m_prime: usize) -> CommutatorDefect {
    let defect = commutator_defect_matrix(ops, m, m_prime);
    let keep: Vec<usize> = (0..ops.dim()).filter(|&i| ops.total(i) < ops.cutoff()).collect();
    let sub = CMatrix::from_fn(keep.len(), keep.len(), |r, c| defect[(keep[r], keep[c])]);
    CommutatorDefect { restricted: spectral_norm(&sub), unrestricted: spectral_norm(&defect) }
}

/// `[A_m, C_m'] − δ_{mm'} I`.
pub fn commutator_defect_matrix(ops: &LadderOperators, m: usize, m_prime: usize) -> CMatrix {
    let a = ops.annihilation(m);
    let c = ops.creation(m_prime);
    let mut out = a * c - c * a;
    if m == m_prime {
        for i in 0..ops.dim() {
            out[(i, i)] -= ONE;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn single_mode_basis() {
        let s = build_basis(1, 2).unwrap();
        assert_eq!(s.dim(), 3);
        assert_eq!(s.basis(), &[vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn two_mode_basis_is_graded_lexicographic() {
        let s = build_basis(2, 1).unwrap();
        assert_eq!(s.basis(), &[vec![0, 0], vec![1, 0], vec![0, 1]]);
        let s = build_basis(2, 2).unwrap();
        assert_eq!(s.dim(), 6);
        assert_eq!(s.basis()[3..], [vec![2, 0], vec![1, 1], vec![0, 2]]);
    }

    #[test]
    fn dimension_matches_binomial_and_cap_is_enforced() {
        for (m, n) in [(1, 0), (1, 7), (2, 5), (3, 4), (4, 3)] {
            let s = build_basis(m, n).unwrap();
            assert_eq!(s.dim() as u128, binomial(n as u64 + m as u64, m as u64).unwrap());
            for (i, occ) in s.basis().iter().enumerate() {
                assert_eq!(s.index_of(occ), Some(i));
            }
        }
        let err = ModeSpace::with_max_dim(2, 20, 100).unwrap_err();
        assert!(matches!(err, Error::Capacity { dim: 231, cap: 100, .. }));
        assert!(ModeSpace::new(0, 3).is_err());
        assert!(matches!(ModeSpace::new(40, 40), Err(Error::Capacity { .. })));
    }

    #[test]
    fn single_mode_annihilation_matrix() {
        let ops = ladder_matrices(&build_basis(1, 2).unwrap());
        let s2 = libm::sqrt(2.0);
        let expected = CMatrix::from_row_slice(
            3,
            3,
            &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(s2, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
        );
        assert_eq!(ops.annihilation(0), &expected);
        assert_eq!(ops.creation(0), &expected.adjoint());
    }

    #[test]
    fn commutator_below_cutoff_and_at_edge() {
        let ops = ladder_matrices(&build_basis(1, 2).unwrap());
        let defect = commutator_defect_matrix(&ops, 0, 0);
        // Hand arithmetic: AC = diag(1,2,0), CA = diag(0,1,2), minus I.
        for i in 0..3 {
            for j in 0..3 {
                let want = if (i, j) == (2, 2) { -3.0 } else { 0.0 };
                assert!((defect[(i, j)] - c(want, 0.0)).norm() < 1e-15);
            }
        }
        let d = commutator_defect(&ops, 0, 0);
        assert!(d.restricted < 1e-12);
        assert!((d.unrestricted - 3.0).abs() < 1e-12);

        let ops2 = ladder_matrices(&build_basis(2, 1).unwrap());
        assert!(commutator_defect(&ops2, 0, 1).restricted < 1e-12);
    }

    #[test]
    fn number_operator_is_exact_diagonal() {
        let space = build_basis(2, 3).unwrap();
        let ops = ladder_matrices(&space);
        for m in 0..2 {
            let exact = ops.number_operator(m);
            for (i, n) in space.basis().iter().enumerate() {
                assert_eq!(exact[(i, i)].re, n[m] as f64);
            }
            let product = ops.creation(m) * ops.annihilation(m);
            assert!((product - exact).norm() < 1e-14);
        }
    }

    #[test]
    fn inner_product_examples() {
        let e0 = FockVector::basis(3, 0);
        let e1 = FockVector::basis(3, 1);
        assert_eq!(inner_product(&e0, &e0).unwrap(), c(1.0, 0.0));
        assert_eq!(inner_product(&e0, &e1).unwrap(), c(0.0, 0.0));
        let v = FockVector::from_vec(vec![c(1.0, 0.0), c(0.0, 1.0), c(0.0, 0.0)]);
        assert_eq!(inner_product(&v, &v).unwrap(), c(2.0, 0.0));
        // conjugate-linear in the first slot
        let iv = FockVector(v.0.map(|z| z * c(0.0, 1.0)));
        assert_eq!(inner_product(&iv, &v).unwrap(), c(0.0, -2.0));
        assert!(matches!(inner_product(&e0, &FockVector::basis(2, 0)), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn sparse_and_dense_actions_agree() {
        let space = build_basis(2, 3).unwrap();
        let ops = ladder_matrices(&space);
        let psi = CVector::from_fn(space.dim(), |i, _| c(i as f64 * 0.3 - 1.0, 0.7 - i as f64 * 0.1));
        for m in 0..2 {
            let dense = ops.annihilation(m) * &psi;
            assert!((dense - ops.apply_annihilation(m, &psi)).norm() < 1e-14);
            let form = psi.dotc(&(ops.annihilation(m) * &psi));
            assert!((form - ops.annihilation_form(m, &psi)).norm() < 1e-12);
        }
    }
}
