//! Forecasts over a holdout horizon and their accuracy metrics.
//!
//! Curves are produced on the model's scaled axis and unscaled only when a
//! point forecast or interval is formed. Beyond the training range the trend
//! keeps the slope of its last segment, because every changepoint is already
//! active there.

use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

use crate::error::{Error, Result};
use crate::model::{CompiledModel, Design};
use crate::series::ScalingParams;

/// Default central interval level.
pub const DEFAULT_LEVEL: f64 = 0.8;

/// One mean curve per parameter draw, in scaled units.
///
/// `draws` holds parameter vectors back to back (row-major `n x dim`). With
/// `include_noise`, each point gets independent `N(0, sigma)` noise where
/// `sigma` comes from the same draw.
pub fn posterior_predictive<R: Rng + ?Sized>(
    draws: &[f64],
    model: &CompiledModel,
    design: &Design,
    include_noise: bool,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let d = model.dim();
    if draws.is_empty() {
        return Err(Error::Forecast("no parameter draws".into()));
    }
    if !draws.len().is_multiple_of(d) {
        return Err(Error::Shape {
            expected: d,
            got: draws.len() % d,
        });
    }
    let mut curves = draws
        .par_chunks_exact(d)
        .map(|p| model.eval_mean(p, design))
        .collect::<Result<Vec<_>>>()?;
    if include_noise {
        // noise is added sequentially so the result does not depend on thread scheduling
        let ls = model.log_sigma_index();
        for (curve, p) in curves.iter_mut().zip(draws.chunks_exact(d)) {
            let noise = Normal::new(0.0, p[ls].exp())
                .map_err(|e| Error::Forecast(format!("noise scale exp({}): {e}", p[ls])))?;
            curve.iter_mut().for_each(|v| *v += noise.sample(rng));
        }
    }
    Ok(curves)
}

/// Per-time mean of the curves, unscaled to original units.
pub fn point_forecast(curves: &[Vec<f64>], scaling: &ScalingParams) -> Result<Vec<f64>> {
    let n = check_curves(curves, 1)?;
    let mut mean = vec![0.0; n];
    for c in curves {
        mean.iter_mut().zip(c).for_each(|(m, v)| *m += v);
    }
    let k = curves.len() as f64;
    mean.iter_mut().for_each(|m| *m /= k);
    Ok(scaling.unscale_y(&mean))
}

/// Per-time empirical quantiles at `(1 - level) / 2` and `(1 + level) / 2`,
/// unscaled to original units.
pub fn interval(curves: &[Vec<f64>], level: f64, scaling: &ScalingParams) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Forecast(format!("interval level {level} outside (0, 1)")));
    }
    let n = check_curves(curves, 2)?;
    let (lo_q, hi_q) = ((1.0 - level) / 2.0, (1.0 + level) / 2.0);
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    let mut column = vec![0.0; curves.len()];
    for t in 0..n {
        column.iter_mut().zip(curves).for_each(|(v, c)| *v = c[t]);
        column.sort_by(f64::total_cmp);
        lower.push(quantile_sorted(&column, lo_q));
        upper.push(quantile_sorted(&column, hi_q));
    }
    Ok((scaling.unscale_y(&lower), scaling.unscale_y(&upper)))
}

/// Linear interpolation between order statistics at `q * (n - 1)`.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn check_curves(curves: &[Vec<f64>], min: usize) -> Result<usize> {
    if curves.len() < min {
        return Err(Error::Forecast(format!("need at least {min} curve(s), got {}", curves.len())));
    }
    let n = curves[0].len();
    if let Some(bad) = curves.iter().find(|c| c.len() != n) {
        return Err(Error::Shape {
            expected: n,
            got: bad.len(),
        });
    }
    Ok(n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecastSettings {
    pub level: f64,
    /// Add observation noise to the curves used for the interval.
    pub include_noise: bool,
    /// Keep the per-draw curves in the result.
    pub retain_curves: bool,
}

impl Default for ForecastSettings {
    fn default() -> Self {
        ForecastSettings {
            level: DEFAULT_LEVEL,
            include_noise: true,
            retain_curves: false,
        }
    }
}

/// Point forecast with a central interval, all in original units.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastResult {
    pub dates: Vec<NaiveDate>,
    pub point: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
    /// Scaled noise-free curves, when retained.
    pub curves: Option<Vec<Vec<f64>>>,
}

impl ForecastResult {
    /// Mean of the noise-free curves as the point, with the interval taken
    /// from the (optionally noisy) predictive curves.
    ///
    /// The interval is widened to contain the point where a skewed ensemble
    /// would otherwise leave the mean outside it.
    pub fn from_draws<R: Rng + ?Sized>(
        draws: &[f64],
        model: &CompiledModel,
        scaling: &ScalingParams,
        dates: &[NaiveDate],
        settings: &ForecastSettings,
        rng: &mut R,
    ) -> Result<Self> {
        let design = model.design(&scaling.times(dates));
        let curves = posterior_predictive(draws, model, &design, false, rng)?;
        let point = point_forecast(&curves, scaling)?;
        let (mut lower, mut upper) = if settings.include_noise {
            let noisy = posterior_predictive(draws, model, &design, true, rng)?;
            interval(&noisy, settings.level, scaling)?
        } else {
            interval(&curves, settings.level, scaling)?
        };
        for ((l, u), p) in lower.iter_mut().zip(&mut upper).zip(&point) {
            *l = l.min(*p);
            *u = u.max(*p);
        }
        Self::assemble(dates, point, lower, upper, settings.level, settings.retain_curves.then_some(curves))
    }

    /// Plug-in forecast from a single parameter vector: the noise-free curve
    /// as the point and a Gaussian observation-noise band around it.
    pub fn plug_in(
        params: &[f64],
        model: &CompiledModel,
        scaling: &ScalingParams,
        dates: &[NaiveDate],
        level: f64,
    ) -> Result<Self> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::Forecast(format!("interval level {level} outside (0, 1)")));
        }
        let design = model.design(&scaling.times(dates));
        let point = scaling.unscale_y(&model.eval_mean(params, &design)?);
        let z = StdNormal::standard().inverse_cdf((1.0 + level) / 2.0);
        let half = z * params[model.log_sigma_index()].exp() * scaling.y_absmax;
        let lower = point.iter().map(|p| p - half).collect();
        let upper = point.iter().map(|p| p + half).collect();
        Self::assemble(dates, point, lower, upper, level, None)
    }

    fn assemble(
        dates: &[NaiveDate],
        point: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        level: f64,
        curves: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let ok = point.len() == dates.len()
            && point
                .iter()
                .zip(&lower)
                .zip(&upper)
                .all(|((p, l), u)| p.is_finite() && l.is_finite() && u.is_finite() && l <= p && p <= u);
        if !ok {
            return Err(Error::Forecast("forecast is not finite or its interval does not contain the point".into()));
        }
        Ok(ForecastResult {
            dates: dates.to_vec(),
            point,
            lower,
            upper,
            level,
            curves,
        })
    }

    pub fn len(&self) -> usize {
        self.point.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point.is_empty()
    }

    /// Fraction of `y` inside `[lower, upper]`.
    pub fn coverage(&self, y: &[f64]) -> f64 {
        let inside = y
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .filter(|(v, (l, u))| *l <= *v && *v <= *u)
            .count();
        inside as f64 / y.len().max(1) as f64
    }

    /// Writes `date,point,lower,upper` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |e| Error::io(path, e);
        let file = std::fs::File::create(path).map_err(io)?;
        let mut w = std::io::BufWriter::new(file);
        writeln!(w, "date,point,lower,upper").map_err(io)?;
        for i in 0..self.len() {
            writeln!(w, "{},{},{},{}", self.dates[i], self.point[i], self.lower[i], self.upper[i]).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

/// Holdout accuracy. MAPE is a fraction, not a percentage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    /// Mean over the points with nonzero `y_true`; `NaN` if there are none.
    pub mape: f64,
    /// Points left out of the MAPE because `y_true` is zero.
    pub mape_excluded: usize,
}

pub fn metrics(y_true: &[f64], y_pred: &[f64]) -> Result<Metrics> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Shape {
            expected: y_true.len(),
            got: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::Forecast("metrics need at least one point".into()));
    }
    let n = y_true.len() as f64;
    let (mut se, mut ae, mut pe, mut counted) = (0.0, 0.0, 0.0, 0usize);
    for (y, p) in y_true.iter().zip(y_pred) {
        let e = y - p;
        se += e * e;
        ae += e.abs();
        if *y != 0.0 {
            pe += (e / y).abs();
            counted += 1;
        }
    }
    let mse = se / n;
    Ok(Metrics {
        mse,
        rmse: mse.sqrt(),
        mae: ae / n,
        mape: if counted == 0 { f64::NAN } else { pe / counted as f64 },
        mape_excluded: y_true.len() - counted,
    })
}
