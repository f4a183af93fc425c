use alloc::string::String;
use alloc::vec::Vec;

use num_complex::Complex64;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("Fock space with {modes} modes and cutoff {cutoff} has dimension {dim} which exceeds the cap of {cap}")]
    Capacity { modes: usize, cutoff: u32, dim: u128, cap: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Importance weights are too concentrated for a self-normalised estimate.
    #[error("effective sample size {ess:.3} is below the threshold {threshold:.3}")]
    DegenerateWeights { ess: f64, threshold: f64 },

    #[error("target field norm {target_norm:.6} is not attainable: estimated achievable bound {bound:.6} (|mu| reached {mu_norm:.3})")]
    Infeasible { target_norm: f64, bound: f64, mu_norm: f64 },

    #[error("effective sample size collapsed to {ess:.3} (threshold {threshold:.3}) at mu = {mu:?}")]
    EssCollapse { mu: Vec<Complex64>, ess: f64, threshold: f64 },

    #[error("no convergence after {iterations} iterations, residual history {residual_history:?}")]
    NonConvergence { iterations: usize, residual_history: Vec<f64> },

    /// A candidate density offered for comparison failed normalisation or the moment constraint.
    #[error("alternative density rejected: {reason} (discrepancy {discrepancy:.3e})")]
    Rejected { reason: String, discrepancy: f64 },

    #[error("linear algebra failure: {0}")]
    Numerical(String),
}
