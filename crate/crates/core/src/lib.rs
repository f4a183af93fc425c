//! Maximum-entropy statistical states on truncated projective Fock space.
//!
//! A classical field is modelled as a probability density over pure states of
//! a bosonic Fock space, chosen to maximise entropy subject to a prescribed
//! expectation of the annihilation operators. The crate provides:
//!
//! - [`fock`]: truncated multi-mode Fock spaces and ladder operators,
//! - [`projective`]: projective points and counter-based uniform sampling,
//! - [`fields`]: expectation maps, Monte Carlo density matrices,
//! - [`maxent`]: the grand canonical ensemble and its dual solver,
//! - [`opstate`]: the operator-exponential density matrix and comparisons,
//! - [`coherent`]: coherent states and level-surface probes.
//!
//! The crate is `no_std` with `alloc`; the `std` feature (default) only adds
//! `std::error::Error` plumbing through `thiserror`.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod coherent;
pub mod error;
pub mod fields;
pub mod fock;
pub mod linalg;
pub mod maxent;
pub mod opstate;
pub mod projective;
pub mod stats;

pub use error::{Error, Result};
pub use nalgebra;
pub use num_complex::Complex64;

pub use coherent::{coherent_point, eigen_residual, foliation_probe, CoherentPoint, FoliationConfig, FoliationReport};
pub use fields::{
    creation_expectation, density_matrix_mc, ensemble_expectation, expectation_field, ClassicalField, DensityMatrix,
    WeightedBatch,
};
pub use fock::{build_basis, commutator_defect, inner_product, ladder_matrices, FockVector, LadderOperators, ModeSpace};
pub use maxent::{
    ensemble_entropy, gibbs_variational_check, log_weight, mean_field_and_covariance, partition_function,
    solve_chemical_potential, ChemicalPotential, FieldSamples, GibbsEnsemble, MaxEntSolution, SolverConfig,
};
pub use opstate::{
    compare_constructions, operator_gibbs, solve_mu_operator, von_neumann_entropy, ComparisonReport,
    OperatorGibbsState,
};
pub use projective::{fs_distance, sample_uniform, ProjectivePoint, SampleBatch};
