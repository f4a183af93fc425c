//! The operator-exponential density matrix `ρ = exp(−H)/Q` with
//! `H = Σ_m (μ_m A_m + μ̄_m C_m)`, and its comparison with the ensemble
//! construction.
//!
//! On the untruncated space `H` is unbounded below as well as above and
//! `exp(−H)` is not trace class. In a truncated space `Q` is finite but grows
//! with the cutoff; [`compare_constructions`] reports that growth instead of
//! hiding it.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fields::{density_functional_mc, density_matrix_mc, ClassicalField, DensityMatrix, WeightedBatch};
use crate::fock::{commutator_defect, LadderOperators, ModeSpace};
use crate::linalg::{fidelity, hermitian_eigen, hermitize, log_sum_exp, trace_distance, CMatrix, ZERO};
use crate::maxent::{feasibility_bound, solve_chemical_potential, ChemicalPotential, FieldSamples, SolverConfig};
use crate::projective::SampleBatch;

/// Finite-difference step for the operator solver's Jacobian.
pub const JACOBIAN_STEP: f64 = 1e-5;

/// `Σ_m (μ_m A_m + μ̄_m C_m)`
pub fn hamiltonian(mu: &ChemicalPotential, ops: &LadderOperators) -> CMatrix {
    let d = ops.dim();
    let mut h = CMatrix::zeros(d, d);
    for (m, z) in mu.components().iter().enumerate() {
        if *z != ZERO {
            h += ops.annihilation(m) * *z + ops.creation(m) * z.conj();
        }
    }
    hermitize(&mut h);
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorGibbsState {
    pub mu: ChemicalPotential,
    pub rho: DensityMatrix,
    /// `ln tr exp(−H)`
    pub log_q: f64,
}

/// Spectral construction of `exp(−H)/Q`, shifted by the smallest eigenvalue.
pub fn operator_gibbs(mu: &ChemicalPotential, ops: &LadderOperators) -> Result<OperatorGibbsState> {
    if mu.num_modes() != ops.num_modes() {
        return Err(Error::DimensionMismatch { expected: ops.num_modes(), found: mu.num_modes() });
    }
    if !mu.is_finite() {
        return Err(Error::InvalidArgument("chemical potential must be finite".into()));
    }
    let d = ops.dim();
    if mu.components().iter().all(|z| *z == ZERO) {
        return Ok(OperatorGibbsState {
            mu: mu.clone(),
            rho: DensityMatrix::maximally_mixed(d),
            log_q: libm::log(d as f64),
        });
    }
    let h = hamiltonian(mu, ops);
    let (values, vectors) = hermitian_eigen(&h);
    let neg: Vec<f64> = values.iter().map(|l| -l).collect();
    let log_q = log_sum_exp(&neg);
    let mut rho = CMatrix::zeros(d, d);
    for (k, l) in neg.iter().enumerate() {
        let p = libm::exp(l - log_q);
        let col = vectors.column(k);
        for i in 0..d {
            let ci = col[i] * p;
            for j in 0..d {
                rho[(i, j)] += ci * col[j].conj();
            }
        }
    }
    hermitize(&mut rho);
    Ok(OperatorGibbsState { mu: mu.clone(), rho: DensityMatrix::new(rho)?, log_q })
}

/// `tr(ρ A_m)` for every mode.
pub fn operator_moment(rho: &DensityMatrix, ops: &LadderOperators) -> ClassicalField {
    ClassicalField((0..ops.num_modes()).map(|m| rho.expectation(ops.annihilation(m))).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSolution {
    pub state: OperatorGibbsState,
    pub achieved_field: ClassicalField,
    pub residual_norm: f64,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
}

fn moment_vector(mu: &ChemicalPotential, ops: &LadderOperators) -> Result<(OperatorGibbsState, DVector<f64>)> {
    let state = operator_gibbs(mu, ops)?;
    let f = operator_moment(&state.rho, ops);
    let m = f.num_modes();
    let v = DVector::from_fn(2 * m, |r, _| if r < m { f.0[r].re } else { f.0[r - m].im });
    Ok((state, v))
}

/// Newton iteration on `tr(ρ(μ) A) = target` with a central-difference Jacobian.
pub fn solve_mu_operator(target: &ClassicalField, ops: &LadderOperators, cfg: &SolverConfig) -> Result<OperatorSolution> {
    let m = ops.num_modes();
    if target.num_modes() != m {
        return Err(Error::DimensionMismatch { expected: m, found: target.num_modes() });
    }
    if !target.is_finite() {
        return Err(Error::InvalidArgument("target field must be finite".into()));
    }
    let target_norm = target.norm();
    let bound = feasibility_bound(ops, target);
    if target_norm >= bound {
        return Err(Error::Infeasible { target_norm, bound, mu_norm: 0.0 });
    }

    let k = 2 * m;
    let goal = DVector::from_fn(k, |r, _| if r < m { target.0[r].re } else { target.0[r - m].im });
    let mut theta = vec![0.0; k];
    let mut history = Vec::new();
    let mut iterations = 0;
    let polish = cfg.operator_tolerance.min(1e-12);

    let (mut state, mut value) = moment_vector(&ChemicalPotential::from_real(&theta), ops)?;
    loop {
        let residual = (&value - &goal).norm();
        history.push(residual);
        if residual <= polish || iterations >= cfg.max_iters {
            break;
        }
        let mu_norm = libm::sqrt(theta.iter().map(|t| t * t).sum());
        if mu_norm > cfg.mu_cap {
            return Err(Error::Infeasible { target_norm, bound, mu_norm });
        }

        let mut jac = DMatrix::zeros(k, k);
        for c in 0..k {
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            plus[c] += JACOBIAN_STEP;
            minus[c] -= JACOBIAN_STEP;
            let (_, fp) = moment_vector(&ChemicalPotential::from_real(&plus), ops)?;
            let (_, fm) = moment_vector(&ChemicalPotential::from_real(&minus), ops)?;
            jac.set_column(c, &((fp - fm) / (2.0 * JACOBIAN_STEP)));
        }
        let rhs = &goal - &value;
        let Some(step) = jac.lu().solve(&rhs) else { break };

        let mut t = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, b)| a + t * b).collect();
            let (s, v) = moment_vector(&ChemicalPotential::from_real(&trial), ops)?;
            if (&v - &goal).norm() < (1.0 - 1e-4 * t) * residual {
                break Some((trial, s, v));
            }
            t *= 0.5;
            if t < 1e-10 {
                break None;
            }
        };
        let Some((next, s, v)) = accepted else { break };
        theta = next;
        state = s;
        value = v;
        iterations += 1;
    }

    let residual = *history.last().expect("at least one residual");
    let mu_norm = libm::sqrt(theta.iter().map(|t| t * t).sum());
    if residual > cfg.operator_tolerance {
        if mu_norm > cfg.mu_cap {
            return Err(Error::Infeasible { target_norm, bound, mu_norm });
        }
        return Err(Error::NonConvergence { iterations, residual_history: history });
    }
    Ok(OperatorSolution {
        achieved_field: operator_moment(&state.rho, ops),
        state,
        residual_norm: residual,
        iterations,
        residual_history: history,
    })
}

/// `−Σ λ ln λ` over the spectrum, with `0 ln 0 = 0`.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> f64 {
    let s: f64 = rho.eigenvalues().iter().filter(|&&l| l > 0.0).map(|&l| -l * libm::log(l)).sum();
    s.max(0.0)
}

/// Both constructions at one cutoff.
///
/// The two entropies are different functionals (a differential entropy on
/// projective space relative to the uniform measure, and the spectral
/// entropy of a density matrix) and are only ever reported side by side.
#[derive(Debug, Clone, PartialEq)]
pub struct CutoffComparison {
    pub cutoff: u32,
    pub dim: usize,
    pub ensemble_mu: ChemicalPotential,
    pub operator_mu: ChemicalPotential,
    pub ensemble_log_z: f64,
    pub operator_log_q: f64,
    pub differential_entropy: f64,
    pub von_neumann_entropy: f64,
    pub trace_distance: f64,
    pub trace_distance_stderr: f64,
    pub fidelity: f64,
    pub ensemble_residual: f64,
    pub operator_residual: f64,
    pub ess: f64,
    /// Unrestricted `[A_0, C_0]` defect at this cutoff.
    pub commutator_defect: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub target: ClassicalField,
    pub rows: Vec<CutoffComparison>,
}

/// Solve both constructions at one cutoff on a given batch.
pub fn compare_at_cutoff(
    target: &ClassicalField,
    cfg: &SolverConfig,
    space: &ModeSpace,
    batch: &SampleBatch,
) -> Result<CutoffComparison> {
    let ops = LadderOperators::new(space);
    let samples = FieldSamples::new(batch, &ops)?;
    let ens = solve_chemical_potential(target, cfg, &samples, &ops)?;
    let op = solve_mu_operator(target, &ops, cfg)?;

    let w = WeightedBatch::from_log_weights(batch, samples.log_weights(&ens.mu))?.with_ess_fraction(cfg.ess_fraction);
    let rho_mc = density_matrix_mc(&w)?.rho;
    let rho_op = op.state.rho.matrix();
    let (td, td_se) = density_functional_mc(&w, |rho| trace_distance(rho, rho_op))?;

    Ok(CutoffComparison {
        cutoff: space.cutoff(),
        dim: space.dim(),
        ensemble_mu: ens.mu.clone(),
        operator_mu: op.state.mu.clone(),
        ensemble_log_z: ens.log_z,
        operator_log_q: op.state.log_q,
        differential_entropy: ens.entropy,
        von_neumann_entropy: von_neumann_entropy(&op.state.rho),
        trace_distance: td,
        trace_distance_stderr: td_se,
        fidelity: fidelity(rho_mc.matrix(), rho_op),
        ensemble_residual: ens.residual_norm,
        operator_residual: op.residual_norm,
        ess: w.ess(),
        commutator_defect: commutator_defect(&ops, 0, 0).unrestricted,
    })
}

/// Run [`compare_at_cutoff`] for each cutoff, drawing batches with `sampler`.
pub fn compare_constructions<F>(
    target: &ClassicalField,
    cfg: &SolverConfig,
    num_modes: usize,
    cutoffs: &[u32],
    mut sampler: F,
) -> Result<ComparisonReport>
where
    F: FnMut(&ModeSpace) -> Result<SampleBatch>,
{
    let mut rows = Vec::with_capacity(cutoffs.len());
    for &n in cutoffs {
        let space = ModeSpace::new(num_modes, n)?;
        let batch = sampler(&space)?;
        rows.push(compare_at_cutoff(target, cfg, &space, &batch)?);
    }
    Ok(ComparisonReport { target: target.clone(), rows })
}
