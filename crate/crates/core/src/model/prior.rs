use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::layout::{BlockKind, ParamLayout};
use crate::error::{Error, Result};

/// Prior on each coordinate of a coefficient block. Coordinates are i.i.d.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum Prior {
    Normal { mu: f64, sigma: f64 },
    Laplace { mu: f64, b: f64 },
}

impl Prior {
    pub fn log_pdf(&self, x: f64) -> f64 {
        match *self {
            Prior::Normal { mu, sigma } => {
                let z = (x - mu) / sigma;
                -(sigma * (2.0 * PI).sqrt()).ln() - 0.5 * z * z
            }
            Prior::Laplace { mu, b } => -(2.0 * b).ln() - (x - mu).abs() / b,
        }
    }

    /// Derivative of [`Prior::log_pdf`]. The Laplace kink gets the zero
    /// subgradient.
    pub fn grad_log_pdf(&self, x: f64) -> f64 {
        match *self {
            Prior::Normal { mu, sigma } => -(x - mu) / (sigma * sigma),
            Prior::Laplace { mu, b } => {
                let r = x - mu;
                if r > 0.0 {
                    -1.0 / b
                } else if r < 0.0 {
                    1.0 / b
                } else {
                    0.0
                }
            }
        }
    }

    fn scale(&self) -> f64 {
        match *self {
            Prior::Normal { sigma, .. } => sigma,
            Prior::Laplace { b, .. } => b,
        }
    }

    /// Equivalent penalty for MAP estimation: Laplace(b) is L1 with
    /// strength `1/b`, Normal(sigma) is L2 with strength `1/(2 sigma^2)`.
    pub fn regularization(&self) -> Result<(Penalty, f64)> {
        if !(self.scale() > 0.0) {
            return Err(Error::Prior(format!("improper prior scale in {self:?}")));
        }
        Ok(match *self {
            Prior::Normal { sigma, .. } => (Penalty::L2, 1.0 / (2.0 * sigma * sigma)),
            Prior::Laplace { b, .. } => (Penalty::L1, 1.0 / b),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Penalty {
    L1,
    L2,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Regularization {
    pub block: String,
    pub penalty: Penalty,
    pub lambda: f64,
}

/// Priors by block kind, with optional per-block overrides.
///
/// The observation noise gets `sigma ~ HalfNormal(noise_scale)` and is
/// sampled as `log_sigma`, so the log-Jacobian `log_sigma` is part of the
/// prior density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorSpec {
    pub slope: Prior,
    pub intercept: Prior,
    pub changepoints: Prior,
    pub seasonality: Prior,
    pub noise_scale: f64,
    pub overrides: BTreeMap<String, Prior>,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            slope: Prior::Normal { mu: 0.0, sigma: 5.0 },
            intercept: Prior::Normal { mu: 0.0, sigma: 5.0 },
            changepoints: Prior::Laplace { mu: 0.0, b: 0.05 },
            seasonality: Prior::Normal { mu: 0.0, sigma: 10.0 },
            noise_scale: 0.5,
            overrides: BTreeMap::new(),
        }
    }
}

impl PriorSpec {
    /// Coefficient prior for a block, or `None` for the noise block.
    pub fn for_block(&self, name: &str, kind: BlockKind) -> Option<Prior> {
        if kind == BlockKind::LogSigma {
            return None;
        }
        if let Some(p) = self.overrides.get(name) {
            return Some(*p);
        }
        Some(match kind {
            BlockKind::Slope => self.slope,
            BlockKind::Intercept => self.intercept,
            BlockKind::Changepoints => self.changepoints,
            BlockKind::Seasonality => self.seasonality,
            BlockKind::LogSigma => unreachable!(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        for p in [self.slope, self.intercept, self.changepoints, self.seasonality]
            .iter()
            .chain(self.overrides.values())
        {
            p.regularization()?;
        }
        if !(self.noise_scale > 0.0) {
            return Err(Error::Prior(format!("noise scale {} must be positive", self.noise_scale)));
        }
        Ok(())
    }

    /// `log HalfNormal(exp(log_sigma) | noise_scale) + log_sigma` and its
    /// derivative in `log_sigma`.
    pub fn noise_log_pdf(&self, log_sigma: f64) -> (f64, f64) {
        let s = self.noise_scale;
        let sigma = log_sigma.exp();
        let ratio = sigma * sigma / (s * s);
        let value = 2f64.ln() - (s * (2.0 * PI).sqrt()).ln() - 0.5 * ratio + log_sigma;
        (value, 1.0 - ratio)
    }
}

/// Maps each coefficient block's prior to its equivalent penalty strength.
pub fn prior_to_regularization(priors: &PriorSpec, layout: &ParamLayout) -> Result<Vec<Regularization>> {
    layout
        .blocks()
        .iter()
        .filter_map(|b| priors.for_block(&b.name, b.kind).map(|p| (b, p)))
        .map(|(b, p)| {
            let (penalty, lambda) = p.regularization()?;
            Ok(Regularization {
                block: b.name.clone(),
                penalty,
                lambda,
            })
        })
        .collect()
}
