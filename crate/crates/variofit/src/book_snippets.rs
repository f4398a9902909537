//! Runs every code block in the book as a doc-test, keeping the guide and
//! the library in sync.

#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}
#[doc = include_str!("../../../book/src/kernels-and-spectra.md")]
mod kernels_and_spectra {}
#[doc = include_str!("../../../book/src/estimating-from-data.md")]
mod estimating_from_data {}
#[doc = include_str!("../../../book/src/divergences.md")]
mod divergences {}
#[doc = include_str!("../../../book/src/exact-wasserstein-fit.md")]
mod exact_wasserstein_fit {}
#[doc = include_str!("../../../book/src/general-fitting.md")]
mod general_fitting {}
#[doc = include_str!("../../../book/src/gp-validation.md")]
mod gp_validation {}
#[doc = include_str!("../../../book/src/command-line.md")]
mod command_line {}
