use super::acf::autocovariance;
use super::transform::{mean, rank_normalize, sample_variance, split, trimmed};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EssMode {
    /// rank-normalized split chains ("bulk" ESS)
    #[default]
    Bulk,
    /// split chains on the raw values
    Classic,
}

/// Bulk effective sample size. A single chain is accepted; it is split in
/// half like every other chain.
pub fn ess<C: AsRef<[f64]>>(chains: &[C]) -> Result<f64> {
    ess_with(chains, EssMode::Bulk)
}

pub fn ess_with<C: AsRef<[f64]>>(chains: &[C], mode: EssMode) -> Result<f64> {
    let chains = trimmed(chains, 1)?;
    let halves = split(&chains);
    match mode {
        EssMode::Classic => geyer_ess(&halves),
        EssMode::Bulk => {
            geyer_ess(&halves)?;
            geyer_ess(&rank_normalize(&halves))
        }
    }
}

/// Multi-chain ESS with Geyer's initial monotone sequence truncation.
fn geyer_ess(chains: &[Vec<f64>]) -> Result<f64> {
    let m = chains.len();
    let n = chains[0].len();
    let nf = n as f64;
    let acov: Vec<Vec<f64>> = chains.iter().map(|c| autocovariance(c)).collect();
    let chain_means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let mean_var = acov.iter().map(|a| a[0]).sum::<f64>() / m as f64 * nf / (nf - 1.0);
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        var_plus += sample_variance(&chain_means);
    }
    if !(var_plus > 0.0) {
        return Err(Error::Diagnostics("ESS undefined for constant chains".into()));
    }
    let rho = |t: usize| 1.0 - (mean_var - acov.iter().map(|a| a[t]).sum::<f64>() / m as f64) / var_plus;

    let mut rho_hat = vec![0.0; n];
    let mut rho_even = 1.0;
    let mut rho_odd = rho(1);
    rho_hat[0] = rho_even;
    rho_hat[1] = rho_odd;

    // initial positive sequence
    let mut t = 1;
    while t + 3 < n && rho_even + rho_odd > 0.0 {
        rho_even = rho(t + 1);
        rho_odd = rho(t + 2);
        if rho_even + rho_odd >= 0.0 {
            rho_hat[t + 1] = rho_even;
            rho_hat[t + 2] = rho_odd;
        }
        t += 2;
    }
    let max_t = t.saturating_sub(2);
    // keeps the antithetic tail term
    if rho_even > 0.0 && max_t + 1 < n {
        rho_hat[max_t + 1] = rho_even;
    }

    // initial monotone sequence
    let mut t = 1;
    while t + 2 <= max_t {
        if rho_hat[t + 1] + rho_hat[t + 2] > rho_hat[t - 1] + rho_hat[t] {
            rho_hat[t + 1] = (rho_hat[t - 1] + rho_hat[t]) / 2.0;
            rho_hat[t + 2] = rho_hat[t + 1];
        }
        t += 2;
    }

    let total = (m * n) as f64;
    let tail = if max_t + 1 < n { rho_hat[max_t + 1] } else { 0.0 };
    let tau = -1.0 + 2.0 * rho_hat[..=max_t].iter().sum::<f64>() + tail;
    let tau = tau.max(1.0 / total.log10());
    Ok(total / tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn ar1(rho: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = vec![0.0f64; n];
        x[0] = StandardNormal.sample(&mut rng);
        let scale = (1.0 - rho * rho).sqrt();
        for i in 1..n {
            let e: f64 = StandardNormal.sample(&mut rng);
            x[i] = rho * x[i - 1] + scale * e;
        }
        x
    }

    #[test]
    fn iid_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let e = ess(&chains).unwrap();
        assert!((0.8 * 8000.0..=1.25 * 8000.0).contains(&e), "{e}");
    }

    #[test]
    fn ar1_matches_closed_form() {
        let n = 100_000;
        let x = ar1(0.9, n, 9);
        for mode in [EssMode::Bulk, EssMode::Classic] {
            let r = ess_with(&[&x], mode).unwrap() / n as f64;
            assert!((0.04..=0.07).contains(&r), "{mode:?}: {r}");
        }
    }

    #[test]
    fn affine_invariance() {
        let chains = vec![ar1(0.5, 500, 1), ar1(0.5, 500, 2)];
        let moved: Vec<Vec<f64>> = chains
            .iter()
            .map(|c| c.iter().map(|v| -2.0 * v + 7.0).collect())
            .collect();
        for mode in [EssMode::Bulk, EssMode::Classic] {
            let a = ess_with(&chains, mode).unwrap();
            let b = ess_with(&moved, mode).unwrap();
            assert!((a - b).abs() < 1e-8 * a, "{a} {b}");
        }
    }

    #[test]
    fn constant_chain_errors() {
        assert!(ess(&[vec![1.0; 20]]).is_err());
        assert!(ess(&[vec![1.0, 2.0, 3.0]]).is_err());
    }
}
