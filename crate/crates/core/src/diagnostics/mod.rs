//! Convergence diagnostics for MCMC chains and variational traces.

mod acf;
mod elbo;
mod ess;
mod rhat;
mod transform;

pub use acf::{autocorrelation, autocovariance};
pub use elbo::{elbo_plateau, scale_unit, smooth_elbo, PLATEAU_TOLERANCE, PLATEAU_WINDOW};
pub use ess::{ess, ess_with, EssMode};
pub use rhat::{split_rhat, split_rhat_with, RhatMode};

use serde::Serialize;

use crate::mcmc::ChainSet;
use crate::model::ParamLayout;

/// R-hat at or below this counts as converged.
pub const RHAT_THRESHOLD: f64 = 1.01;
/// ESS strictly above this counts as enough independent draws.
pub const ESS_THRESHOLD: f64 = 400.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub names: Vec<String>,
    /// `+inf` for parameters whose chains have zero variance.
    pub r_hat: Vec<f64>,
    /// `NaN` where ESS is undefined (constant chains).
    pub ess: Vec<f64>,
    /// Chain-averaged autocorrelation up to the requested lag; `None` for
    /// constant chains.
    pub autocorrelation: Vec<Option<Vec<f64>>>,
    pub degenerate: Vec<bool>,
    pub total_draws: usize,
}

/// Worst-case diagnostics over one parameter block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockDiagnostics {
    pub block: String,
    pub max_r_hat: f64,
    pub min_ess: f64,
}

impl DiagnosticsReport {
    pub fn max_r_hat(&self) -> f64 {
        self.r_hat.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_ess(&self) -> f64 {
        self.ess
            .iter()
            .map(|e| if e.is_nan() { 0.0 } else { *e })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn converged(&self) -> bool {
        self.max_r_hat() <= RHAT_THRESHOLD && self.min_ess() > ESS_THRESHOLD
    }

    pub fn by_block(&self, layout: &ParamLayout) -> Vec<BlockDiagnostics> {
        layout
            .blocks()
            .iter()
            .map(|b| BlockDiagnostics {
                block: b.name.clone(),
                max_r_hat: self.r_hat[b.range()].iter().copied().fold(f64::NEG_INFINITY, f64::max),
                min_ess: self.ess[b.range()]
                    .iter()
                    .map(|e| if e.is_nan() { 0.0 } else { *e })
                    .fold(f64::INFINITY, f64::min),
            })
            .collect()
    }
}

/// Diagnoses every parameter of `chains`. `max_lag` is clamped to the
/// chain length.
pub fn diagnose(chains: &ChainSet, max_lag: usize) -> DiagnosticsReport {
    let n = chains.n_draws();
    let lag = max_lag.min(n.saturating_sub(1));
    let mut report = DiagnosticsReport {
        names: chains.names().to_vec(),
        r_hat: Vec::with_capacity(chains.dim()),
        ess: Vec::with_capacity(chains.dim()),
        autocorrelation: Vec::with_capacity(chains.dim()),
        degenerate: Vec::with_capacity(chains.dim()),
        total_draws: n * chains.n_chains(),
    };
    for p in 0..chains.dim() {
        let values = chains.param(p);
        let r = split_rhat(&values).unwrap_or(f64::INFINITY);
        let e = ess(&values).unwrap_or(f64::NAN);
        let acfs: Option<Vec<Vec<f64>>> = values.iter().map(|c| autocorrelation(c, lag).ok()).collect();
        let acf = acfs.map(|curves| {
            (0..=lag)
                .map(|k| curves.iter().map(|c| c[k]).sum::<f64>() / curves.len() as f64)
                .collect()
        });
        report.degenerate.push(r.is_infinite() || e.is_nan() || acf.is_none());
        report.r_hat.push(r);
        report.ess.push(e);
        report.autocorrelation.push(acf);
    }
    report
}

/// Smallest post-warm-up prefix length (a multiple of `grid_step`) at which
/// every parameter has R-hat <= 1.01 and ESS > 400, or `None`.
pub fn convergence_scan(chains: &ChainSet, grid_step: usize) -> Option<usize> {
    let step = grid_step.max(1);
    let n = chains.n_draws();
    // Start with the parameter that failed last time; it usually fails again.
    let mut order: Vec<usize> = (0..chains.dim()).collect();
    let mut len = step;
    while len <= n {
        if len >= 4 {
            let failing = order.iter().position(|&p| {
                let values = chains.param_prefix(p, len);
                let r = split_rhat(&values).unwrap_or(f64::INFINITY);
                if r > RHAT_THRESHOLD {
                    return true;
                }
                !(ess(&values).unwrap_or(0.0) > ESS_THRESHOLD)
            });
            match failing {
                None => return Some(len),
                Some(pos) => order[..=pos].rotate_right(1),
            }
        }
        len += step;
    }
    None
}

/// Minimum ESS across parameters per second of sampling.
pub fn ess_per_second(ess: &[f64], wall_seconds: f64) -> f64 {
    let min = ess
        .iter()
        .map(|e| if e.is_nan() { 0.0 } else { *e })
        .fold(f64::INFINITY, f64::min);
    min / wall_seconds
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcmc::{Chain, ChainStats};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn iid_set(chains: usize, draws: usize, dim: usize, seed: u64) -> ChainSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chains = (0..chains)
            .map(|_| Chain {
                draws: (0..draws * dim).map(|_| StandardNormal.sample(&mut rng)).collect(),
                stats: ChainStats {
                    draw_seconds: (1..=draws).map(|i| i as f64 * 0.01).collect(),
                    warmup_seconds: 1.0,
                    ..Default::default()
                },
            })
            .collect();
        ChainSet::new((0..dim).map(|i| format!("x{i}")).collect(), chains, false).unwrap()
    }

    #[test]
    fn iid_chains_converge_at_first_grid_point_with_enough_ess() {
        let set = iid_set(4, 2000, 3, 10);
        let at = convergence_scan(&set, 50).unwrap();
        // 4 chains x 100 draws = 400 draws is the first point where ESS can exceed 400
        assert!((100..=200).contains(&at), "{at}");
        let report = diagnose(&set, 20);
        assert!(report.converged());
        assert_eq!(report.autocorrelation[0].as_ref().unwrap().len(), 21);
    }

    #[test]
    fn stuck_chains_never_converge() {
        let mut set = iid_set(4, 400, 1, 11);
        // make one chain constant-offset so R-hat blows up
        let mut chains = set.chains().to_vec();
        chains[0].draws.iter_mut().for_each(|v| *v += 5.0);
        set = ChainSet::new(set.names().to_vec(), chains, false).unwrap();
        assert_eq!(convergence_scan(&set, 50), None);
    }

    #[test]
    fn ess_rate() {
        assert_eq!(ess_per_second(&[8000.0, 9000.0], 40.0), 200.0);
    }

    #[test]
    fn timing_accounting() {
        let set = iid_set(2, 10, 1, 12);
        assert!((set.wall_seconds() - 2.0 * 1.1).abs() < 1e-12);
        assert!((set.seconds_until(5) - 2.0 * 1.05).abs() < 1e-12);
    }
}
