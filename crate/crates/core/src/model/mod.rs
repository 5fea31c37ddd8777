//! Composable structural time-series models.
//!
//! Components combine with `+` and `*` into a [`ModelExpr`]:
//!
//! ```
//! use prophecy::model::ModelExpr;
//!
//! let trend = ModelExpr::linear_trend(25);
//! let yearly = ModelExpr::fourier("yearly", 365.25, 10);
//! let weekly = ModelExpr::fourier("weekly", 7.0, 3);
//! let multiplicative = trend * (1.0 + yearly + weekly);
//! assert_eq!(
//!     multiplicative.to_string(),
//!     "LinearTrend(25) * (1 + FourierSeasonality(yearly, 365.25, 10) + FourierSeasonality(weekly, 7, 3))"
//! );
//! ```
//!
//! [`CompiledModel::compile`] binds every component to a block of the flat
//! parameter vector and [`Posterior`] pairs the compiled model with data and
//! priors to give a [`LogDensity`](crate::LogDensity).

mod compiled;
mod expr;
mod layout;
mod posterior;
mod prior;

pub use compiled::{fourier_features, trend_eval, CompiledModel, Design};
pub use expr::{build_default_model, ComponentSpec, ModelExpr, DEFAULT_CHANGEPOINTS};
pub use layout::{Block, BlockKind, ParamLayout, ParamValues, ParamVector};
pub use posterior::Posterior;
pub use prior::{prior_to_regularization, Penalty, Prior, PriorSpec, Regularization};
