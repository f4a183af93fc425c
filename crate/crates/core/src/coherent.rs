//! Coherent states and the level surfaces of the field map `x ↦ A(x)`.
//!
//! The Gibbs density is constant on every level surface because it depends
//! on `x` only through `A(x)`. Each surface contains one coherent state; in
//! the truncated space it is characterised here as the surface point with the
//! smallest mean photon number (for a unit vector, `<n̂> = ‖Aψ‖² ≥ |<A>|²`
//! with equality only for eigenvectors of `A`).

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fields::{field_of_vector, ClassicalField};
use crate::fock::{LadderOperators, ModeSpace};
use crate::linalg::CVector;
use crate::maxent::{feasibility_bound, log_weight_of_field, ChemicalPotential};
use crate::projective::{fs_distance, sample_point, ProjectivePoint};

#[derive(Debug, Clone, PartialEq)]
pub struct CoherentPoint {
    pub field: ClassicalField,
    pub point: ProjectivePoint,
    /// Weight of the amplitude discarded by the truncation, `P(Poisson(‖ξ‖²) > N)`.
    pub truncation_tail: f64,
}

/// `P(K > cutoff)` for `K ~ Poisson(mean)`.
pub fn poisson_upper_tail(mean: f64, cutoff: u32) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    let log_term = |k: u32| -mean + k as f64 * libm::log(mean) - libm::lgamma(k as f64 + 1.0);
    if mean < cutoff as f64 + 1.0 {
        // terms decrease past the cutoff; sum them directly
        let mut sum = 0.0;
        let mut k = cutoff + 1;
        loop {
            let t = libm::exp(log_term(k));
            sum += t;
            if t < sum * 1e-17 || t == 0.0 {
                break;
            }
            k += 1;
        }
        sum.min(1.0)
    } else {
        let lower: f64 = (0..=cutoff).map(|k| libm::exp(log_term(k))).sum();
        (1.0 - lower).clamp(0.0, 1.0)
    }
}

/// Truncated, normalised coherent expansion `Π_m ξ_m^{n_m} / √(n_m!)`.
pub fn coherent_point(field: &ClassicalField, space: &ModeSpace) -> Result<CoherentPoint> {
    if field.num_modes() != space.num_modes() {
        return Err(Error::DimensionMismatch { expected: space.num_modes(), found: field.num_modes() });
    }
    if !field.is_finite() {
        return Err(Error::InvalidArgument("coherent field must be finite".into()));
    }
    let amps = CVector::from_fn(space.dim(), |i, _| {
        let mut a = Complex64::new(1.0, 0.0);
        for (xi, &n) in field.0.iter().zip(space.occupation(i)) {
            for k in 1..=n {
                a *= xi / libm::sqrt(k as f64);
            }
        }
        a
    });
    let mean = field.0.iter().map(Complex64::norm_sqr).sum();
    Ok(CoherentPoint {
        field: field.clone(),
        point: ProjectivePoint::new(amps)?,
        truncation_tail: poisson_upper_tail(mean, space.cutoff()),
    })
}

/// `(Σ_m ‖A_m ψ − ξ_m ψ‖²)^{1/2}` for the unit representative `ψ` of `x`.
pub fn eigen_residual(x: &ProjectivePoint, field: &ClassicalField, ops: &LadderOperators) -> Result<f64> {
    if x.dim() != ops.dim() {
        return Err(Error::DimensionMismatch { expected: ops.dim(), found: x.dim() });
    }
    if field.num_modes() != ops.num_modes() {
        return Err(Error::DimensionMismatch { expected: ops.num_modes(), found: field.num_modes() });
    }
    let psi = x.representative();
    let mut sq = 0.0;
    for (m, xi) in field.0.iter().enumerate() {
        let r = ops.apply_annihilation(m, psi) - psi * *xi;
        sq += r.norm_squared();
    }
    Ok(libm::sqrt(sq))
}

/// `<x| Σ_m n̂_m |x>`
pub fn mean_photon_number(x: &ProjectivePoint, ops: &LadderOperators) -> f64 {
    ops.total_number_form(x.representative())
}

/// Multiply by the phase that makes the first nonzero amplitude real and positive.
pub fn fix_gauge(v: &mut CVector) {
    if let Some(first) = v.iter().copied().find(|z| z.norm() > 1e-12) {
        let phase = first.conj() / first.norm();
        v.apply(|z| *z *= phase);
    }
}

/// Residual `(Re(A(ψ) − ξ), Im(A(ψ) − ξ))` and its Jacobian in the real
/// coordinates `(Re ψ, Im ψ)` of an unnormalised representative.
fn residual_and_jacobian(psi: &CVector, field: &ClassicalField, ops: &LadderOperators) -> (DVector<f64>, DMatrix<f64>) {
    let d = psi.len();
    let m = field.num_modes();
    let n = psi.norm_squared();
    let mut r = DVector::zeros(2 * m);
    let mut jac = DMatrix::zeros(2 * m, 2 * d);
    for (mode, xi) in field.0.iter().enumerate() {
        let f = ops.annihilation_form(mode, psi) / n;
        r[mode] = f.re - xi.re;
        r[m + mode] = f.im - xi.im;
        let a_psi = ops.apply_annihilation(mode, psi);
        // (C ψ)_k = coeff_k ψ[to_k]
        let mut c_psi = CVector::zeros(d);
        for (k, low) in ops.lowering(mode).iter().enumerate() {
            if let Some(l) = low {
                c_psi[k] = psi[l.to] * l.coeff;
            }
        }
        let i = Complex64::new(0.0, 1.0);
        for k in 0..d {
            let du = (a_psi[k] + c_psi[k].conj() - f * (2.0 * psi[k].re)) / n;
            let dv = (-i * a_psi[k] + i * c_psi[k].conj() - f * (2.0 * psi[k].im)) / n;
            jac[(mode, k)] = du.re;
            jac[(m + mode, k)] = du.im;
            jac[(mode, d + k)] = dv.re;
            jac[(m + mode, d + k)] = dv.im;
        }
    }
    (r, jac)
}

/// Damped Gauss–Newton (Levenberg–Marquardt, minimum-norm step) towards the
/// level surface `A(x) = field`, renormalising and fixing the gauge after
/// every step. Returns the final point and residual norm.
pub fn project_to_surface(
    start: &ProjectivePoint,
    field: &ClassicalField,
    ops: &LadderOperators,
    max_iters: usize,
) -> (ProjectivePoint, f64) {
    let d = start.dim();
    let mut psi = start.representative().clone();
    fix_gauge(&mut psi);
    let (mut r, mut jac) = residual_and_jacobian(&psi, field, ops);
    let mut cost = r.norm();
    let mut lambda = 1e-3;
    for _ in 0..max_iters {
        if cost < 1e-14 {
            break;
        }
        let k = r.len();
        let jjt = &jac * jac.transpose() + DMatrix::identity(k, k) * lambda;
        let Some(y) = jjt.cholesky().map(|ch| ch.solve(&r)) else {
            lambda *= 10.0;
            continue;
        };
        let step = -(jac.transpose() * y);
        let mut trial = CVector::from_fn(d, |j, _| psi[j] + Complex64::new(step[j], step[d + j]));
        let norm = trial.norm();
        if !(norm.is_finite() && norm > 0.0) {
            lambda *= 10.0;
            continue;
        }
        trial.unscale_mut(norm);
        fix_gauge(&mut trial);
        let (r_new, jac_new) = residual_and_jacobian(&trial, field, ops);
        let c = r_new.norm();
        if c < cost {
            psi = trial;
            r = r_new;
            jac = jac_new;
            cost = c;
            lambda = (lambda / 3.0).max(1e-15);
        } else {
            lambda *= 4.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    let point = ProjectivePoint::new(psi).expect("iterates stay normalised");
    (point, cost)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoliationConfig {
    /// Number of distinct surface points to collect.
    pub points: usize,
    /// Give up after this many random starts.
    pub max_starts: usize,
    pub seed: u64,
    /// Number of random chemical potentials used for the constancy check.
    pub test_mus: usize,
    /// Accept a projection when `‖A(x) − ξ‖² < accept`.
    pub accept: f64,
    pub max_iters: usize,
}

impl Default for FoliationConfig {
    fn default() -> Self {
        Self { points: 50, max_starts: 500, seed: 0, test_mus: 5, accept: 1e-8, max_iters: 500 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfacePoint {
    pub start_index: u64,
    pub point: ProjectivePoint,
    pub residual: f64,
    pub photon_number: f64,
    pub eigen_residual: f64,
    pub distance_to_coherent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionFailure {
    pub start_index: u64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoherentSummary {
    pub point: ProjectivePoint,
    pub truncation_tail: f64,
    /// `‖A(coherent) − ξ‖`, nonzero only through truncation.
    pub surface_residual: f64,
    pub photon_number: f64,
    pub eigen_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoliationReport {
    pub field: ClassicalField,
    pub points: Vec<SurfacePoint>,
    pub failures: Vec<ProjectionFailure>,
    pub coherent: CoherentSummary,
    pub test_mus: Vec<ChemicalPotential>,
    /// Largest spread of Gibbs log-weights across the surface points, over the test potentials.
    pub log_weight_spread: f64,
    pub min_surface_photon_number: f64,
    pub coherent_minimizes_photon_number: bool,
    /// Surface points that are themselves eigenvectors of `A` (residual below 1e-6).
    pub coherent_like_points: usize,
    pub max_coherent_like_distance: f64,
}

/// Collect points on the level surface of `field` from random starts and
/// check the foliation properties on them.
pub fn foliation_probe(
    field: &ClassicalField,
    space: &ModeSpace,
    ops: &LadderOperators,
    cfg: &FoliationConfig,
) -> Result<FoliationReport> {
    if field.num_modes() != ops.num_modes() || ops.dim() != space.dim() {
        return Err(Error::DimensionMismatch { expected: ops.num_modes(), found: field.num_modes() });
    }
    let bound = feasibility_bound(ops, field);
    if field.norm() >= bound {
        return Err(Error::Infeasible { target_norm: field.norm(), bound, mu_norm: 0.0 });
    }
    let d = space.dim();
    let coherent = coherent_point(field, space)?;
    let coh_field = field_of_vector(coherent.point.representative(), ops);
    let coherent_summary = CoherentSummary {
        point: coherent.point.clone(),
        truncation_tail: coherent.truncation_tail,
        surface_residual: coh_field.distance(field),
        photon_number: mean_photon_number(&coherent.point, ops),
        eigen_residual: eigen_residual(&coherent.point, field, ops)?,
    };

    let mut points: Vec<SurfacePoint> = Vec::new();
    let mut failures = Vec::new();
    let mut index = 0u64;
    while points.len() < cfg.points && (index as usize) < cfg.max_starts {
        let start = sample_point(d, cfg.seed, index);
        let (p, residual) = project_to_surface(&start, field, ops, cfg.max_iters);
        if residual * residual < cfg.accept {
            let duplicate = points.iter().any(|q| fs_distance(&q.point, &p).map_or(false, |dist| dist < 1e-6));
            if !duplicate {
                points.push(SurfacePoint {
                    start_index: index,
                    photon_number: mean_photon_number(&p, ops),
                    eigen_residual: eigen_residual(&p, field, ops)?,
                    distance_to_coherent: fs_distance(&p, &coherent.point)?,
                    residual,
                    point: p,
                });
            }
        } else {
            failures.push(ProjectionFailure { start_index: index, residual });
        }
        index += 1;
    }

    let m = field.num_modes();
    let test_mus: Vec<ChemicalPotential> = (0..cfg.test_mus as u64)
        .map(|k| {
            let r = sample_point(2 * m, cfg.seed ^ 0x6d75_5f74_6573_7473, k);
            ChemicalPotential((0..m).map(|j| r.representative()[j] * 2.0 + r.representative()[m + j]).collect())
        })
        .collect();
    let mut spread: f64 = 0.0;
    for mu in &test_mus {
        let lw: Vec<f64> = points.iter().map(|p| log_weight_of_field(mu, &field_of_vector(p.point.representative(), ops).0)).collect();
        if let (Some(lo), Some(hi)) = (lw.iter().copied().reduce(f64::min), lw.iter().copied().reduce(f64::max)) {
            spread = spread.max(hi - lo);
        }
    }

    let min_photons = points.iter().map(|p| p.photon_number).fold(f64::INFINITY, f64::min);
    let coherent_like: Vec<&SurfacePoint> = points.iter().filter(|p| p.eigen_residual < 1e-6).collect();
    Ok(FoliationReport {
        field: field.clone(),
        coherent_minimizes_photon_number: coherent_summary.photon_number <= min_photons + 1e-9,
        coherent_like_points: coherent_like.len(),
        max_coherent_like_distance: coherent_like.iter().map(|p| p.distance_to_coherent).fold(0.0, f64::max),
        min_surface_photon_number: min_photons,
        log_weight_spread: spread,
        test_mus,
        coherent: coherent_summary,
        failures,
        points,
    })
}

/// Explicit members of the `ξ = 0` surface of a single mode with cutoff ≥ 2:
/// `|0>`, `|2>` and `(|0> + e^{iφ}|2>)/√2` for each phase in `phases`.
pub fn zero_field_family(space: &ModeSpace, phases: &[f64]) -> Vec<ProjectivePoint> {
    let d = space.dim();
    let mut out = vec![ProjectivePoint::basis(d, 0)];
    if let Some(two) = space.index_of(&[2]) {
        out.push(ProjectivePoint::basis(d, two));
        for &phi in phases {
            let mut v = CVector::zeros(d);
            v[0] = Complex64::new(1.0, 0.0);
            v[two] = Complex64::from_polar(1.0, phi);
            out.push(ProjectivePoint::new(v).expect("nonzero"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::expectation_field;
    use crate::fock::{build_basis, ladder_matrices};

    #[test]
    fn vacuum_is_the_zero_field_coherent_state() {
        let space = build_basis(1, 4).unwrap();
        let cp = coherent_point(&ClassicalField::zeros(1), &space).unwrap();
        assert_eq!(cp.point, ProjectivePoint::basis(5, 0));
        assert_eq!(cp.truncation_tail, 0.0);
        let ops = ladder_matrices(&space);
        assert_eq!(eigen_residual(&cp.point, &ClassicalField::zeros(1), &ops).unwrap(), 0.0);
    }

    #[test]
    fn three_term_expansion() {
        let space = build_basis(1, 2).unwrap();
        let cp = coherent_point(&ClassicalField::real(0.3), &space).unwrap();
        let raw = [1.0, 0.3, 0.09 / libm::sqrt(2.0)];
        let norm = libm::sqrt(raw.iter().map(|x| x * x).sum());
        for (a, r) in cp.point.representative().iter().zip(raw) {
            assert!((a.re - r / norm).abs() < 1e-15 && a.im == 0.0);
        }
        assert!((raw[2] - 0.0636396).abs() < 1e-6);
    }

    #[test]
    fn tail_matches_direct_ratio() {
        // 1 − retained/exp(|ξ|²) evaluated directly where it is well conditioned
        for (xi, n) in [(1.5f64, 3u32), (0.8, 2), (2.0, 10), (3.0, 1)] {
            let space = build_basis(1, n).unwrap();
            let cp = coherent_point(&ClassicalField::real(xi), &space).unwrap();
            let mut retained = 0.0;
            let mut term = 1.0;
            for k in 0..=n {
                if k > 0 {
                    term *= xi * xi / k as f64;
                }
                retained += term;
            }
            let direct = 1.0 - retained / libm::exp(xi * xi);
            assert!((cp.truncation_tail - direct).abs() < 1e-12, "{xi} {n}");
        }
    }

    #[test]
    fn top_state_residual() {
        let space = build_basis(1, 6).unwrap();
        let ops = ladder_matrices(&space);
        let r = eigen_residual(&ProjectivePoint::basis(7, 6), &ClassicalField::zeros(1), &ops).unwrap();
        assert!((r - libm::sqrt(6.0)).abs() < 1e-14);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let space = build_basis(2, 2).unwrap();
        let ops = ladder_matrices(&space);
        let field = ClassicalField::new(vec![Complex64::new(0.1, 0.2), Complex64::new(-0.3, 0.0)]);
        let psi = sample_point(space.dim(), 4, 2).representative().clone();
        let (_, jac) = residual_and_jacobian(&psi, &field, &ops);
        let d = psi.len();
        let h = 1e-6;
        for c in 0..2 * d {
            let bump = |s: f64| {
                let mut p = psi.clone();
                if c < d {
                    p[c].re += s;
                } else {
                    p[c - d].im += s;
                }
                residual_and_jacobian(&p, &field, &ops).0
            };
            let fd = (bump(h) - bump(-h)) / (2.0 * h);
            for r in 0..4 {
                assert!((fd[r] - jac[(r, c)]).abs() < 1e-7, "({r},{c}) {} vs {}", fd[r], jac[(r, c)]);
            }
        }
    }

    #[test]
    fn projection_lands_on_surface() {
        let space = build_basis(1, 4).unwrap();
        let ops = ladder_matrices(&space);
        let field = ClassicalField::new(vec![Complex64::new(0.2, -0.1)]);
        let (p, res) = project_to_surface(&sample_point(5, 1, 0), &field, &ops, 500);
        assert!(res < 1e-10);
        assert!(expectation_field(&p, &ops).unwrap().distance(&field) < 1e-10);
    }

    #[test]
    fn zero_field_family_lies_on_surface() {
        let space = build_basis(1, 2).unwrap();
        let ops = ladder_matrices(&space);
        for p in zero_field_family(&space, &[0.0, 1.0, 2.0]) {
            assert_eq!(expectation_field(&p, &ops).unwrap(), ClassicalField::zeros(1));
        }
    }

    #[test]
    fn probe_rejects_unattainable_field() {
        let space = build_basis(1, 2).unwrap();
        let ops = ladder_matrices(&space);
        let err = foliation_probe(&ClassicalField::real(1.0), &space, &ops, &FoliationConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Infeasible { .. }));
    }
}
