//! Sliced inverse regression for spatially distributed functional data.
//!
//! The crate estimates the mean and covariance structure of functional
//! observations collected at irregular spatial sites, separates the spatial
//! covariance `R(0)` from the functional nugget, and extracts effective
//! dimension reduction (e.d.r.) directions from the inverse regression
//! covariance `R_e(0)` by a regularized generalized eigen-analysis.
//!
//! Module map:
//!
//! - [`kernels`]: univariate kernels and their moments.
//! - [`data`]: datasets, CSV I/O, time grids, site geometry.
//! - [`smoothing`]: weighted local linear regression in one to three covariates.
//! - [`covariance`]: weighting schemes and the `μ`, `Γ`, `R`, `Λ` estimators.
//! - [`inverse_regression`]: `m(t, y)` and `R_e(0)`.
//! - [`edr`]: truncated inverse square roots, e.d.r. directions, link smoothing.
//! - [`simulate`]: Matérn random fields and the synthetic study design.
//! - [`evaluate`]: cross-validation, ISB/IVAR/MISE, and the comparison study.
//! - [`pipeline`]: the end-to-end fit shared by the CLI and the study.
//! - [`cli`]: the `sfsir` command line.

pub mod cli;
pub mod covariance;
pub mod data;
pub mod edr;
mod error;
pub mod evaluate;
pub mod inverse_regression;
pub mod kernels;
pub mod pipeline;
pub mod quadrature;
pub mod simulate;
pub mod smoothing;

pub use error::{Error, Result};
