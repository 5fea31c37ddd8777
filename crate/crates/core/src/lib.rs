//! Composable Bayesian structural time-series models.
//!
//! A model is an expression tree over trend and seasonality components
//! (see [`model::ModelExpr`]) that compiles into a log-posterior with exact
//! gradients. The same posterior can be handed to any of the inference
//! engines:
//!
//! * [`mcmc`]: random-walk Metropolis-Hastings, DEMetropolis-Z and NUTS
//! * [`vi`]: mean-field and full-rank ADVI
//! * [`map`]: L-BFGS-B maximum a posteriori
//!
//! [`diagnostics`] and [`forecast`] turn the results into convergence
//! statistics and holdout metrics.

// `!(x > 0.0)` is written on purpose so that NaN takes the failure branch,
// and index loops read better than zipped iterators in the numeric kernels.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod density;
pub mod diagnostics;
pub mod error;
pub mod forecast;
pub mod map;
pub mod mcmc;
pub mod model;
pub mod optim;
pub mod series;
pub mod vi;

pub use density::LogDensity;
pub use error::{Error, Result};
