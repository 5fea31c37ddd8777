//! Markov chain Monte Carlo engines.
//!
//! All engines run `n_chains` independent chains, each with its own RNG
//! stream derived from `(seed, chain index)`, so results are bit-identical
//! for a fixed configuration whether chains run sequentially or in parallel.

mod adapt;
mod chains;
mod dmz;
mod hmc;
mod mh;
mod nuts;

pub use chains::{Chain, ChainSet, ChainStats};
pub use dmz::{dmz_sample, DmzSettings};
pub use hmc::{kinetic_energy, leapfrog, PhasePoint};
pub use mh::{mh_sample, MhSettings};
pub use nuts::{nuts_sample, NutsSettings};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::LogDensity;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n_chains: usize,
    pub n_draws: usize,
    pub n_warmup: usize,
    pub seed: u64,
    /// Run chains on the rayon pool instead of one after another.
    #[serde(default)]
    pub parallel: bool,
}

impl ChainConfig {
    /// 4 chains of 2000 draws after 1000 warm-up iterations.
    pub fn nuts_default() -> Self {
        ChainConfig {
            n_chains: 4,
            n_draws: 2000,
            n_warmup: 1000,
            seed: 0,
            parallel: false,
        }
    }

    /// 4 chains of 10^6 draws after 10^4 warm-up iterations.
    pub fn random_walk_default() -> Self {
        ChainConfig {
            n_chains: 4,
            n_draws: 1_000_000,
            n_warmup: 10_000,
            seed: 0,
            parallel: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_chains == 0 || self.n_draws == 0 {
            return Err(Error::Sampler("need at least one chain and one draw".into()));
        }
        Ok(())
    }
}

pub(crate) fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

/// Chain start: `init` (or the zero vector) jittered uniformly in `[-1, 1]`
/// per coordinate. Retries a few times if the density is not finite there.
pub(crate) fn initial_point<T: LogDensity + ?Sized>(
    target: &T,
    init: Option<&[f64]>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let d = target.dim();
    if let Some(init) = init {
        if init.len() != d {
            return Err(Error::Shape {
                expected: d,
                got: init.len(),
            });
        }
        if init.iter().any(|v| !v.is_finite()) {
            return Err(Error::Sampler("initial point is not finite".into()));
        }
    }
    for _ in 0..100 {
        let x: Vec<f64> = (0..d)
            .map(|i| init.map_or(0.0, |v| v[i]) + rng.random_range(-1.0..=1.0))
            .collect();
        if target.log_density(&x).is_finite() {
            return Ok(x);
        }
    }
    Err(Error::Sampler("log density is not finite at any initial point".into()))
}

pub(crate) fn run_chains<F>(config: &ChainConfig, names: Vec<String>, run: F) -> Result<ChainSet>
where
    F: Fn(usize, &mut ChaCha8Rng) -> Result<Chain> + Sync,
{
    config.validate()?;
    let one = |c: usize| {
        let mut rng = chain_rng(config.seed, c);
        run(c, &mut rng)
    };
    let chains: Vec<Chain> = if config.parallel {
        (0..config.n_chains).into_par_iter().map(one).collect::<Result<_>>()?
    } else {
        (0..config.n_chains).map(one).collect::<Result<_>>()?
    };
    ChainSet::new(names, chains, config.parallel)
}

pub(crate) fn default_names(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("x{i}")).collect()
}

/// Metropolis accept step shared by the random-walk engines.
pub(crate) fn metropolis_accept(log_ratio: f64, rng: &mut impl Rng) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
}
