//! Finite delayed multi-type branching processes.
//!
//! An individual of type `i` born at time `t` produces offspring of every
//! type at the ages in a finite delay set, until a random lifetime ends
//! either in recovery or in death. The crate computes the exact mean
//! evolution of the incidence (`X`), symptomatic (`Z`) and asymptomatic
//! (`Y`) processes, the Perron-Frobenius data of the censored mean
//! matrices, the Malthusian parameter, closed-form asymptotic limits when
//! the mean matrices share eigenvectors, path combinatorics of the mean
//! kernel, and a seeded individual-level simulator.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod config;
pub mod error;
pub mod generate;
pub mod malthusian;
pub mod model;
pub mod paths;
pub mod recursion;
pub mod rng;
pub mod simulate;
pub mod spectral;

pub use config::{parse_config, RunConfig};
pub use error::{Error, Result};
pub use malthusian::{build_companion, critical_limit, solve_malthusian, MalthusianSolution, Regime};
pub use model::{censored_mean_matrices, validate, MeanMatrixFamily, ModelSpec};
pub use recursion::{evolve_means, theorem_limits, xi_kernel, MeanTrajectory};
pub use spectral::{pf_decompose, shared_pf_check, PFData};
