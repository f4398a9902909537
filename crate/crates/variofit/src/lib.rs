//! Likelihood-free hyperparameter estimation for stationary Gaussian
//! processes.
//!
//! The idea: instead of maximizing the (cubic-cost) GP likelihood, project a
//! cheap data-driven statistic — the binned empirical covariance or an
//! estimated power spectral density — onto a parametric kernel family under
//! a divergence. For location-scale spectral families (exp-cos, sinc) under
//! the squared 2-Wasserstein distance the projection has a closed form and
//! costs a single pass over the data; everything else is a small
//! derivative-free search over a fixed-size grid, still linear in the number
//! of observations.
//!
//! The resulting hyperparameters are usable directly or as initial
//! conditions for maximum-likelihood refinement, for which a dense reference
//! GP core (exact sampling, Cholesky likelihood, Gaussian KL) is included.
//!
//! ```
//! use variofit::kernels::{FamilyId, KernelFamily, KernelModel};
//! use variofit::estimators::{periodogram, FrequencyGrid, Window};
//! use variofit::gp::sample_stationary;
//! use variofit::solvers::fit_w2_location_scale;
//!
//! // A GP with an exp-cos kernel: spectral bump at 0.05 cycles/unit.
//! let truth = KernelModel::single(FamilyId::ExpCos, 1.0, 0.05, 0.01)?;
//! let times: Vec<f64> = (0..4000).map(|i| i as f64 * 0.25).collect();
//! let series = sample_stationary(&truth, &times, 7)?;
//!
//! // Estimate the spectrum and project it back onto the family.
//! let spec = periodogram(&series, &FrequencyGrid::default_for(&series), Window::None)?;
//! let fit = fit_w2_location_scale(&spec, &KernelFamily::single(FamilyId::ExpCos))?;
//! let c = &fit.model.components[0];
//! assert!((c.location - 0.05).abs() / 0.05 < 0.2);
//! # Ok::<(), variofit::Error>(())
//! ```
//!
//! The accompanying book under `book/` walks through the concepts; its code
//! snippets compile and run as part of `cargo test --doc`.

pub mod divergences;
pub mod error;
pub mod estimators;
pub mod gp;
pub mod kernels;
mod linalg;
pub mod multiinput;
pub mod solvers;
pub mod studies;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book_snippets;
