use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{default_names, initial_point, metropolis_accept, run_chains, Chain, ChainConfig, ChainSet, ChainStats};
use crate::density::LogDensity;
use crate::error::{Error, Result};

/// Gaussian random-walk Metropolis settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MhSettings {
    /// Initial proposal standard deviation for every coordinate.
    pub initial_scale: f64,
    /// Per-coordinate proposal scales; overrides `initial_scale` when set.
    pub scales: Option<Vec<f64>>,
    /// Tune the global scale factor during warm-up.
    pub adapt: bool,
    pub tune_interval: usize,
}

impl Default for MhSettings {
    fn default() -> Self {
        MhSettings {
            initial_scale: 0.1,
            scales: None,
            adapt: true,
            tune_interval: 100,
        }
    }
}

/// Random-walk Metropolis-Hastings.
///
/// During warm-up the proposal scales are multiplied by 1.1 after every
/// `tune_interval` steps whose acceptance rate exceeded 0.5 and divided by
/// 1.1 when it fell below 0.2. They are frozen once warm-up ends.
pub fn mh_sample<T: LogDensity + ?Sized>(
    target: &T,
    init: Option<&[f64]>,
    config: &ChainConfig,
    settings: &MhSettings,
    names: Option<Vec<String>>,
) -> Result<ChainSet> {
    let d = target.dim();
    let base_scales = match &settings.scales {
        Some(s) if s.len() != d => {
            return Err(Error::Shape {
                expected: d,
                got: s.len(),
            })
        }
        Some(s) => s.clone(),
        None => vec![settings.initial_scale; d],
    };
    if base_scales.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::Sampler("proposal scales must be finite and non-negative".into()));
    }
    let interval = settings.tune_interval.max(1);
    run_chains(config, names.unwrap_or_else(|| default_names(d)), |_, rng| {
        let mut x = initial_point(target, init, rng)?;
        let mut lp = target.log_density(&x);
        let mut scales = base_scales.clone();
        let mut proposal = vec![0.0; d];
        let mut window_accepts = 0usize;
        let mut accepted = 0usize;
        let mut draws = Vec::with_capacity(config.n_draws * d);
        let mut draw_seconds = Vec::with_capacity(config.n_draws);
        let mut warmup_seconds = 0.0;
        let start = Instant::now();
        let mut sampling_start = start;

        for it in 0..config.n_warmup + config.n_draws {
            let warmup = it < config.n_warmup;
            if it == config.n_warmup {
                warmup_seconds = start.elapsed().as_secs_f64();
                sampling_start = Instant::now();
            }
            for ((p, x), s) in proposal.iter_mut().zip(&x).zip(&scales) {
                let z: f64 = StandardNormal.sample(rng);
                *p = x + s * z;
            }
            let lp_new = target.log_density(&proposal);
            let accept = lp_new.is_finite() && metropolis_accept(lp_new - lp, rng);
            if accept {
                x.copy_from_slice(&proposal);
                lp = lp_new;
            }
            if warmup {
                window_accepts += accept as usize;
                if settings.adapt && (it + 1) % interval == 0 {
                    let rate = window_accepts as f64 / interval as f64;
                    let factor = if rate < 0.2 {
                        1.0 / 1.1
                    } else if rate > 0.5 {
                        1.1
                    } else {
                        1.0
                    };
                    scales.iter_mut().for_each(|s| *s *= factor);
                    window_accepts = 0;
                }
            } else {
                accepted += accept as usize;
                draws.extend_from_slice(&x);
                draw_seconds.push(sampling_start.elapsed().as_secs_f64());
            }
        }
        Ok(Chain {
            draws,
            stats: ChainStats {
                acceptance: accepted as f64 / config.n_draws as f64,
                divergences: 0,
                step_size: None,
                warmup_seconds,
                draw_seconds,
                gradient_evals: 0,
            },
        })
    })
}
