//! The grand canonical ensemble on projective Fock space.
//!
//! For a chemical potential `μ` the density relative to the uniform
//! probability measure is
//!
//! ```text
//! ρ_μ(x) = exp(−μ·A(x) − μ̄·C(x)) / Z(μ) = exp(−2 Re Σ_m μ_m A_m(x)) / Z(μ)
//! ```
//!
//! using `C_m(x) = conj(A_m(x))`. It depends on `x` only through the field
//! `A(x)`, so every estimator here works on the per-point fields of a fixed
//! batch ([`FieldSamples`]).
//!
//! Sign convention: with this density `∂ ln Z / ∂μ = −<A>_ρ`. In the real
//! coordinates `θ = (Re μ, Im μ)` the gradient of `ln Z` is
//! `(−2 Re<A>, +2 Im<A>)`. The moment constraint `<A>_ρ = ξ` is the defining
//! condition; the solver minimises the convex dual
//! `D(μ) = ln Z(μ) + 2 Re(μ·ξ)`, whose gradient vanishes exactly there.
//!
//! All sums over the batch use the same points for every `μ` (common random
//! numbers), so the sample-average `ln Ẑ` is an exact log-sum-exp of linear
//! functions and therefore exactly convex in `θ`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fields::{expectation_field, field_of_vector, ClassicalField, DEFAULT_ESS_FRACTION};
use crate::fock::LadderOperators;
use crate::linalg::{hermitian_eigenvalues, symmetric_eigenvalues, CMatrix, ZERO};
use crate::projective::{ProjectivePoint, SampleBatch};
use crate::stats::{block_ranges, effective_sample_size, jackknife, JACKKNIFE_BLOCKS};

/// The solver keeps iterating until the batch residual drops below this,
/// well past the acceptance tolerance, so that the returned `μ` does not
/// depend on the starting point.
pub const POLISH_TOLERANCE: f64 = 1e-10;

/// Newton is abandoned for a gradient step above this Hessian condition number.
pub const MAX_CONDITION: f64 = 1e8;

const ARMIJO: f64 = 1e-4;

/// Lagrange multiplier dual to the field constraint, one entry per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ChemicalPotential(pub Vec<Complex64>);

impl ChemicalPotential {
    pub fn new(components: Vec<Complex64>) -> Self {
        Self(components)
    }

    pub fn zeros(num_modes: usize) -> Self {
        Self(vec![ZERO; num_modes])
    }

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

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Real coordinates `(Re μ_0, …, Re μ_{M−1}, Im μ_0, …, Im μ_{M−1})`.
    pub fn to_real(&self) -> Vec<f64> {
        self.0.iter().map(|z| z.re).chain(self.0.iter().map(|z| z.im)).collect()
    }

    pub fn from_real(theta: &[f64]) -> Self {
        let m = theta.len() / 2;
        Self((0..m).map(|k| Complex64::new(theta[k], theta[m + k])).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Accepted residual `‖<A> − ξ‖` for the ensemble solver.
    pub tolerance: f64,
    /// Accepted residual for the operator-state solver.
    pub operator_tolerance: f64,
    pub max_iters: usize,
    /// `‖μ‖` beyond which the iteration is declared divergent.
    pub mu_cap: f64,
    /// Minimum effective sample size as a fraction of the batch size.
    pub ess_fraction: f64,
    /// Added to the Hessian diagonal before solving for the Newton step.
    pub ridge: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-3,
            operator_tolerance: 1e-8,
            max_iters: 100,
            mu_cap: 50.0,
            ess_fraction: DEFAULT_ESS_FRACTION,
            ridge: 1e-10,
        }
    }
}

/// `−2 Re Σ_m μ_m ξ_m`, the Gibbs exponent at a point carrying field `ξ`.
pub fn log_weight_of_field(mu: &ChemicalPotential, field: &[Complex64]) -> f64 {
    -2.0 * mu.0.iter().zip(field).map(|(m, a)| (m * a).re).sum::<f64>()
}

/// Unnormalised Gibbs log-density at `x`.
pub fn log_weight(mu: &ChemicalPotential, x: &ProjectivePoint, ops: &LadderOperators) -> Result<f64> {
    check_modes(mu.num_modes(), ops.num_modes())?;
    Ok(log_weight_of_field(mu, &expectation_field(x, ops)?.0))
}

fn check_modes(found: usize, expected: usize) -> Result<()> {
    if found != expected {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Per-point fields `A(x_i)` of a batch, in batch order.
#[derive(Debug, Clone)]
pub struct FieldSamples {
    num_modes: usize,
    group: usize,
    fields: Vec<Complex64>,
}

impl FieldSamples {
    pub fn new(batch: &SampleBatch, ops: &LadderOperators) -> Result<Self> {
        if batch.dim() != ops.dim() {
            return Err(Error::DimensionMismatch { expected: ops.dim(), found: batch.dim() });
        }
        let num_modes = ops.num_modes();
        let mut fields = Vec::with_capacity(batch.count() * num_modes);
        for p in batch.points() {
            fields.extend(field_of_vector(p.representative(), ops).0);
        }
        Ok(Self { num_modes, group: batch.group(), fields })
    }

    /// Build from precomputed fields (e.g. by a parallel driver).
    pub fn from_fields(num_modes: usize, group: usize, fields: Vec<Complex64>) -> Result<Self> {
        if num_modes == 0 || fields.is_empty() || fields.len() % num_modes != 0 {
            return Err(Error::InvalidArgument("field table shape does not match the mode count".into()));
        }
        Ok(Self { num_modes, group: group.max(1), fields })
    }

    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    pub fn count(&self) -> usize {
        self.fields.len() / self.num_modes
    }

    pub fn field(&self, i: usize) -> &[Complex64] {
        &self.fields[i * self.num_modes..(i + 1) * self.num_modes]
    }

    pub fn log_weights(&self, mu: &ChemicalPotential) -> Vec<f64> {
        (0..self.count()).map(|i| log_weight_of_field(mu, self.field(i))).collect()
    }

    fn blocks(&self) -> Vec<core::ops::Range<usize>> {
        block_ranges(self.count(), self.group, JACKKNIFE_BLOCKS)
    }

    /// `ln Ẑ(μ)` with its jackknife error; never fails.
    pub fn log_partition(&self, mu: &ChemicalPotential) -> LogPartition {
        let lw = self.log_weights(mu);
        let shift = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let scaled: Vec<f64> = lw.iter().map(|&l| libm::exp(l - shift)).collect();
        let blocks: Vec<Vec<f64>> = self
            .blocks()
            .into_iter()
            .map(|r| vec![r.clone().map(|i| scaled[i]).sum(), r.len() as f64])
            .collect();
        let (est, se) = jackknife(&blocks, |t| vec![shift + libm::log(t[0] / t[1])]);
        LogPartition { log_z: est[0], stderr: se[0], ess: effective_sample_size(&scaled) }
    }

    /// Sample-average dual objective `ln Ẑ(μ) + 2 Re(μ·ξ)`.
    pub fn dual_objective(&self, mu: &ChemicalPotential, target: &ClassicalField) -> f64 {
        self.log_partition(mu).log_z - log_weight_of_field(mu, &target.0)
    }

    /// Weighted field mean and covariance under `ρ_μ`, refusing degenerate weights.
    pub fn moments(&self, mu: &ChemicalPotential, ess_fraction: f64) -> Result<MomentEstimate> {
        check_modes(mu.num_modes(), self.num_modes)?;
        let m = self.num_modes;
        let k = 2 * m;
        let lw = self.log_weights(mu);
        let shift = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let scaled: Vec<f64> = lw.iter().map(|&l| libm::exp(l - shift)).collect();
        let ess = effective_sample_size(&scaled);
        let threshold = ess_fraction * self.count() as f64;
        if ess < threshold {
            return Err(Error::DegenerateWeights { ess, threshold });
        }

        // Layout per block: [Σw, Σw·y (k), Σw·y yᵀ (k·k)] with y = (Re A, Im A).
        let width = 1 + k + k * k;
        let mut y = vec![0.0; k];
        let blocks: Vec<Vec<f64>> = self
            .blocks()
            .into_iter()
            .map(|range| {
                let mut s = vec![0.0; width];
                for i in range {
                    let w = scaled[i];
                    for (j, a) in self.field(i).iter().enumerate() {
                        y[j] = a.re;
                        y[m + j] = a.im;
                    }
                    s[0] += w;
                    for r in 0..k {
                        let wy = w * y[r];
                        s[1 + r] += wy;
                        for c in 0..k {
                            s[1 + k + r * k + c] += wy * y[c];
                        }
                    }
                }
                s
            })
            .collect();
        let (est, se) = jackknife(&blocks, |t| {
            let mean: Vec<f64> = (0..k).map(|r| t[1 + r] / t[0]).collect();
            let mut out = mean.clone();
            for r in 0..k {
                for c in 0..k {
                    out.push(t[1 + k + r * k + c] / t[0] - mean[r] * mean[c]);
                }
            }
            out
        });

        let field = ClassicalField((0..m).map(|j| Complex64::new(est[j], est[m + j])).collect());
        let field_stderr = (0..m).map(|j| Complex64::new(se[j], se[m + j])).collect();
        let mut covariance = DMatrix::from_fn(k, k, |r, c| est[k + r * k + c]);
        covariance = (&covariance + covariance.transpose()) * 0.5;
        let covariance_stderr = DMatrix::from_fn(k, k, |r, c| se[k + r * k + c]);
        Ok(MomentEstimate { field, field_stderr, covariance, covariance_stderr, ess })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogPartition {
    pub log_z: f64,
    pub stderr: f64,
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    pub field: ClassicalField,
    pub field_stderr: Vec<Complex64>,
    /// Covariance of `(Re A_0, …, Re A_{M−1}, Im A_0, …, Im A_{M−1})`.
    pub covariance: DMatrix<f64>,
    pub covariance_stderr: DMatrix<f64>,
    pub ess: f64,
}

/// `ln Z(μ)` estimated on a batch, failing when the weights are degenerate.
pub fn partition_function(mu: &ChemicalPotential, samples: &FieldSamples, ess_fraction: f64) -> Result<LogPartition> {
    check_modes(mu.num_modes(), samples.num_modes())?;
    let lp = samples.log_partition(mu);
    let threshold = ess_fraction * samples.count() as f64;
    if lp.ess < threshold {
        return Err(Error::DegenerateWeights { ess: lp.ess, threshold });
    }
    Ok(lp)
}

pub fn mean_field_and_covariance(
    mu: &ChemicalPotential,
    samples: &FieldSamples,
    ess_fraction: f64,
) -> Result<MomentEstimate> {
    samples.moments(mu, ess_fraction)
}

/// A chemical potential together with its estimated normaliser and moments.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsEnsemble {
    pub mu: ChemicalPotential,
    pub log_z: LogPartition,
    pub moments: MomentEstimate,
}

impl GibbsEnsemble {
    pub fn new(mu: ChemicalPotential, samples: &FieldSamples, ess_fraction: f64) -> Result<Self> {
        let moments = samples.moments(&mu, ess_fraction)?;
        let log_z = samples.log_partition(&mu);
        Ok(Self { mu, log_z, moments })
    }

    /// `ln ρ_μ` at a point carrying `field`, relative to the uniform measure.
    pub fn log_density(&self, field: &[Complex64]) -> f64 {
        log_weight_of_field(&self.mu, field) - self.log_z.log_z
    }
}

/// Support function of the attainable field set in the direction of `direction`.
///
/// Returns `max_ρ Re(ū·<A>_ρ)` over all density matrices, with `u` the unit
/// vector along `direction`, which equals the top eigenvalue of
/// `Σ_m (ū_m A_m + u_m C_m) / 2`. A target with `‖ξ‖` at or beyond this value
/// cannot be the mean field of any full-support density. For a single mode
/// the attainable set is a disc and the bound is exact in every direction.
pub fn feasibility_bound(ops: &LadderOperators, direction: &ClassicalField) -> f64 {
    let m = ops.num_modes();
    let norm = direction.norm();
    let u: Vec<Complex64> = if norm > 0.0 {
        direction.0.iter().map(|z| z / norm).collect()
    } else {
        let mut e = vec![ZERO; m];
        e[0] = Complex64::new(1.0, 0.0);
        e
    };
    let d = ops.dim();
    let mut k = CMatrix::zeros(d, d);
    for (j, uj) in u.iter().enumerate().take(m) {
        k += ops.annihilation(j) * (uj.conj() * 0.5) + ops.creation(j) * (uj * 0.5);
    }
    hermitian_eigenvalues(&k).last().copied().unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveDiagnostics {
    pub count: usize,
    pub ess: f64,
    pub field_stderr: Vec<Complex64>,
    /// Covariance of `(Re A, Im A)` at the solution.
    pub covariance: DMatrix<f64>,
    pub residual_history: Vec<f64>,
    pub gradient_fallback_steps: usize,
    pub feasibility_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxEntSolution {
    pub mu: ChemicalPotential,
    pub achieved_field: ClassicalField,
    pub target_field: ClassicalField,
    pub log_z: f64,
    pub log_z_stderr: f64,
    /// Differential entropy relative to the uniform measure.
    pub entropy: f64,
    pub residual_norm: f64,
    pub iterations: usize,
    pub diagnostics: SolveDiagnostics,
}

/// Solve `<A>_{ρ_μ} = target` starting from `μ = 0`.
pub fn solve_chemical_potential(
    target: &ClassicalField,
    cfg: &SolverConfig,
    samples: &FieldSamples,
    ops: &LadderOperators,
) -> Result<MaxEntSolution> {
    solve_chemical_potential_from(target, cfg, samples, ops, ChemicalPotential::zeros(target.num_modes()))
}

/// Damped Newton on the dual with the weighted field covariance as Hessian.
pub fn solve_chemical_potential_from(
    target: &ClassicalField,
    cfg: &SolverConfig,
    samples: &FieldSamples,
    ops: &LadderOperators,
    initial: ChemicalPotential,
) -> Result<MaxEntSolution> {
    let m = samples.num_modes();
    check_modes(target.num_modes(), m)?;
    check_modes(ops.num_modes(), m)?;
    check_modes(initial.num_modes(), m)?;
    if !target.is_finite() || !initial.is_finite() {
        return Err(Error::InvalidArgument("target field and initial mu must be finite".into()));
    }

    let target_norm = target.norm();
    let bound = feasibility_bound(ops, target);
    if target_norm >= bound {
        return Err(Error::Infeasible { target_norm, bound, mu_norm: initial.norm() });
    }

    let k = 2 * m;
    let mut theta = initial.to_real();
    let mut history = Vec::new();
    let mut fallback = 0;
    let mut iterations = 0;
    let mut mu = ChemicalPotential::from_real(&theta);
    let mut mom;
    loop {
        mom = samples.moments(&mu, cfg.ess_fraction).map_err(|e| match e {
            Error::DegenerateWeights { ess, threshold } => Error::EssCollapse { mu: mu.0.clone(), ess, threshold },
            other => other,
        })?;
        let residual = mom.field.distance(target);
        history.push(residual);
        if residual <= POLISH_TOLERANCE || iterations >= cfg.max_iters {
            break;
        }
        if mu.norm() > cfg.mu_cap {
            return Err(Error::Infeasible { target_norm, bound, mu_norm: mu.norm() });
        }

        // Gradient and Hessian of the dual in θ, with φ = (Re A, −Im A).
        let grad = DVector::from_fn(k, |r, _| {
            if r < m {
                2.0 * (target.0[r].re - mom.field.0[r].re)
            } else {
                -2.0 * (target.0[r - m].im - mom.field.0[r - m].im)
            }
        });
        let sign = |r: usize| if r < m { 1.0 } else { -1.0 };
        let hessian = DMatrix::from_fn(k, k, |r, c| 4.0 * sign(r) * sign(c) * mom.covariance[(r, c)])
            + DMatrix::identity(k, k) * cfg.ridge;
        let eig = symmetric_eigenvalues(&hessian);
        let (lo, hi) = (eig[0], eig[k - 1]);
        let newton = if hi > 0.0 && lo > 0.0 && hi / lo <= MAX_CONDITION {
            hessian.clone().cholesky().map(|ch| -ch.solve(&grad))
        } else {
            None
        };
        let direction = match newton {
            Some(d) => d,
            None => {
                fallback += 1;
                -&grad / hi.max(cfg.ridge).max(f64::MIN_POSITIVE)
            }
        };

        let d0 = samples.dual_objective(&mu, target);
        let slope = grad.dot(&direction);
        let slack = 1e-14 * (1.0 + d0.abs());
        let mut t = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = theta.iter().zip(direction.iter()).map(|(a, b)| a + t * b).collect();
            let d1 = samples.dual_objective(&ChemicalPotential::from_real(&trial), target);
            if d1 <= d0 + ARMIJO * t * slope + slack {
                break Some(trial);
            }
            t *= 0.5;
            if t < 1e-12 {
                break None;
            }
        };
        let Some(next) = accepted else { break };
        let step: f64 = next.iter().zip(&theta).map(|(a, b)| (a - b) * (a - b)).sum();
        if libm::sqrt(step) < 1e-15 {
            break;
        }
        theta = next;
        mu = ChemicalPotential::from_real(&theta);
        iterations += 1;
    }

    let residual = *history.last().expect("at least one residual");
    if residual > cfg.tolerance {
        if mu.norm() > cfg.mu_cap {
            return Err(Error::Infeasible { target_norm, bound, mu_norm: mu.norm() });
        }
        return Err(Error::NonConvergence { iterations, residual_history: history });
    }

    let lp = samples.log_partition(&mu);
    let mut sol = MaxEntSolution {
        mu,
        achieved_field: mom.field.clone(),
        target_field: target.clone(),
        log_z: lp.log_z,
        log_z_stderr: lp.stderr,
        entropy: 0.0,
        residual_norm: residual,
        iterations,
        diagnostics: SolveDiagnostics {
            count: samples.count(),
            ess: mom.ess,
            field_stderr: mom.field_stderr,
            covariance: mom.covariance,
            residual_history: history,
            gradient_fallback_steps: fallback,
            feasibility_bound: bound,
        },
    };
    sol.entropy = ensemble_entropy(&sol);
    Ok(sol)
}

/// `S = ln Z + 2 Re(μ·<A>)`, relative to the uniform measure; never positive.
pub fn ensemble_entropy(sol: &MaxEntSolution) -> f64 {
    sol.log_z - log_weight_of_field(&sol.mu, &sol.achieved_field.0)
}

/// Mean field of a solved ensemble re-estimated on an independent batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    pub field: ClassicalField,
    pub field_stderr: Vec<Complex64>,
    pub residual: f64,
    pub ess: f64,
}

pub fn validate_solution(sol: &MaxEntSolution, fresh: &FieldSamples, ess_fraction: f64) -> Result<Validation> {
    let mom = fresh.moments(&sol.mu, ess_fraction)?;
    Ok(Validation {
        residual: mom.field.distance(&sol.target_field),
        field: mom.field,
        field_stderr: mom.field_stderr,
        ess: mom.ess,
    })
}

/// Entropy comparison between the Gibbs solution and a competing density.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalReport {
    pub gibbs_entropy: f64,
    pub alternative_entropy: f64,
    /// `gibbs_entropy − alternative_entropy`.
    pub gap: f64,
    pub gap_stderr: f64,
    /// Batch mean of the alternative density (should be 1).
    pub normalization: f64,
    pub constraint_residual: f64,
    /// `alternative_entropy ≤ gibbs_entropy + sigmas · gap_stderr`.
    pub holds: bool,
}

/// Compare the entropy of `alternative` against the Gibbs solution on `batch`.
///
/// `alternative` returns the log-density relative to the uniform measure.
/// It must integrate to one and reproduce the target field, both within
/// Monte Carlo error (five standard errors, plus `cfg.tolerance` for the
/// field); otherwise it is rejected.
pub fn gibbs_variational_check(
    sol: &MaxEntSolution,
    alternative: &dyn Fn(&ProjectivePoint) -> f64,
    batch: &SampleBatch,
    ops: &LadderOperators,
    cfg: &SolverConfig,
    sigmas: f64,
) -> Result<VariationalReport> {
    let samples = FieldSamples::new(batch, ops)?;
    check_modes(sol.mu.num_modes(), samples.num_modes())?;
    let m = samples.num_modes();
    let lw = samples.log_weights(&sol.mu);
    let shift = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    // Layout: [n, Σe^{l−s}, Σe^{l−s}·l, Σq, Σq ln q, Σq Re A (m), Σq Im A (m)]
    let width = 5 + 2 * m;
    let mut blocks = Vec::new();
    for range in samples.blocks() {
        let mut s = vec![0.0; width];
        for i in range {
            let g = libm::exp(lw[i] - shift);
            let log_q = alternative(&batch.points()[i]);
            if !log_q.is_finite() {
                return Err(Error::Rejected { reason: format!("alternative log-density is not finite at point {i}"), discrepancy: f64::INFINITY });
            }
            let q = libm::exp(log_q);
            s[0] += 1.0;
            s[1] += g;
            s[2] += g * lw[i];
            s[3] += q;
            s[4] += q * log_q;
            for (j, a) in samples.field(i).iter().enumerate() {
                s[5 + j] += q * a.re;
                s[5 + m + j] += q * a.im;
            }
        }
        blocks.push(s);
    }
    let (est, se) = jackknife(&blocks, |t| {
        let gibbs = shift + libm::log(t[1] / t[0]) - t[2] / t[1];
        let alt = -t[4] / t[0];
        let mut out = vec![gibbs, alt, gibbs - alt, t[3] / t[0]];
        out.extend((0..2 * m).map(|j| t[5 + j] / t[0]));
        out
    });

    let normalization = est[3];
    if (normalization - 1.0).abs() > 5.0 * se[3] + 1e-9 {
        return Err(Error::Rejected { reason: String::from("alternative density is not normalised"), discrepancy: normalization - 1.0 });
    }
    let achieved: Vec<Complex64> = (0..m).map(|j| Complex64::new(est[4 + j], est[4 + m + j])).collect();
    let constraint_residual = ClassicalField(achieved).distance(&sol.target_field);
    let constraint_se = libm::sqrt(se[4..4 + 2 * m].iter().map(|s| s * s).sum());
    if constraint_residual > cfg.tolerance + 5.0 * constraint_se {
        return Err(Error::Rejected { reason: String::from("alternative density violates the field constraint"), discrepancy: constraint_residual });
    }

    Ok(VariationalReport {
        gibbs_entropy: est[0],
        alternative_entropy: est[1],
        gap: est[2],
        gap_stderr: se[2],
        normalization,
        constraint_residual,
        holds: est[1] <= est[0] + sigmas * se[2],
    })
}
