//! Overcomplete Independent Components Analysis with pluggable
//! degeneracy-control costs.
//!
//! The crate is organized around a [`Basis`] of unit-norm rows:
//!
//! * [`costs`]: L2, L4, Coulomb and random-prior costs on the Gram matrix,
//!   their gradients, and the quasi-orthogonality update.
//! * [`objective`]: degeneracy cost plus a log-cosh sparsity prior on data.
//! * [`optimizer`]: projected L-BFGS over unit-norm rows.
//! * [`analytic2d`]: closed-form costs, gradients and Hessians for the
//!   two-dimensional, twice-overcomplete configuration.
//! * [`highdim`]: tiled orthonormal configurations, symmetry and
//!   stationarity checks, gradient profiles.
//! * [`data`]: patches, whitening, synthetic sources and the Amari index.
//! * [`gabor`]: Gabor kernels and a staged kernel fit for learned filters.
//! * [`experiments`]: the end-to-end runs behind the `oica` binary.

// `!(x > y)` comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic2d;
pub mod basis;
pub mod costs;
pub mod data;
pub mod error;
pub mod experiments;
pub mod gabor;
pub mod highdim;
pub mod io;
pub mod linalg;
pub mod objective;
pub mod optimizer;
pub mod parallel;

pub use basis::{Basis, CostKind, Gram};
pub use costs::CostEval;
pub use data::DataMatrix;
pub use error::{OicaError, Result};
pub use objective::{IcaObjective, Objective};
pub use optimizer::{minimize, OptimOptions, OptimTrace, Termination};
pub use parallel::Parallelism;
