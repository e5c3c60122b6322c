//! Largest-particle distribution Q_σ(L,s) of the finite-temperature discrete
//! Bessel process, and numerical checks of the integrable structure around it.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod continuum;
pub mod diff;
pub mod drhp;
pub mod error;
pub mod fredholm;
pub mod integrable;
pub mod kernels;
pub mod par;
pub mod plancherel;
pub mod specfun;

pub use error::{Error, Result};
pub use kernels::{HalfInt, SigmaProfile};
