use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Truncates chains to a common length and checks the minimum size.
pub(crate) fn trimmed<C: AsRef<[f64]>>(chains: &[C], min_chains: usize) -> Result<Vec<&[f64]>> {
    if chains.len() < min_chains {
        return Err(Error::Diagnostics(format!(
            "need at least {min_chains} chains, got {}",
            chains.len()
        )));
    }
    let n = chains.iter().map(|c| c.as_ref().len()).min().unwrap_or(0);
    if n < 4 {
        return Err(Error::Diagnostics(format!("need at least 4 draws per chain, got {n}")));
    }
    if chains.iter().any(|c| c.as_ref()[..n].iter().any(|v| !v.is_finite())) {
        return Err(Error::Diagnostics("non-finite draw".into()));
    }
    Ok(chains.iter().map(|c| &c.as_ref()[..n]).collect())
}

/// Splits each chain into halves, dropping the middle draw of odd chains.
pub(crate) fn split(chains: &[&[f64]]) -> Vec<Vec<f64>> {
    chains
        .iter()
        .flat_map(|c| {
            let half = c.len() / 2;
            [c[..half].to_vec(), c[c.len() - half..].to_vec()]
        })
        .collect()
}

/// Replaces pooled values with normal scores of their average ranks,
/// `Phi^-1((r - 3/8) / (S + 1/4))`.
pub(crate) fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let total: usize = chains.iter().map(Vec::len).sum();
    let mut idx: Vec<(f64, usize, usize)> = chains
        .iter()
        .enumerate()
        .flat_map(|(c, ch)| ch.iter().enumerate().map(move |(i, v)| (*v, c, i)))
        .collect();
    idx.sort_by(|a, b| a.0.total_cmp(&b.0));

    let normal = Normal::standard();
    let mut out: Vec<Vec<f64>> = chains.iter().map(|c| vec![0.0; c.len()]).collect();
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && idx[end].0 == idx[start].0 {
            end += 1;
        }
        // average 1-based rank of the tie group
        let rank = (start + 1 + end) as f64 / 2.0;
        let z = normal.inverse_cdf((rank - 0.375) / (total as f64 + 0.25));
        for &(_, c, i) in &idx[start..end] {
            out[c][i] = z;
        }
        start = end;
    }
    out
}

pub(crate) fn fold_around_median(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut all: Vec<f64> = chains.iter().flatten().copied().collect();
    all.sort_by(f64::total_cmp);
    let n = all.len();
    let median = if n % 2 == 1 {
        all[n / 2]
    } else {
        0.5 * (all[n / 2 - 1] + all[n / 2])
    };
    chains
        .iter()
        .map(|c| c.iter().map(|v| (v - median).abs()).collect())
        .collect()
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub(crate) fn sample_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_drops_middle() {
        let a = [1.0, 2.0, 3.0, 4.0, 4.5];
        let s = split(&[&a]);
        assert_eq!(s, vec![vec![1.0, 2.0], vec![4.0, 4.5]]);
    }

    #[test]
    fn rank_normalize_handles_ties_symmetrically() {
        let z = rank_normalize(&[vec![1.0, 2.0, 2.0, 3.0]]);
        assert_eq!(z[0][1], z[0][2]);
        assert!((z[0][0] + z[0][3]).abs() < 1e-12);
        assert!(z[0][1].abs() < 1e-12);
    }
}
