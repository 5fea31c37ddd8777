use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{reparameterized_draw, AdviSettings, Approximation, DivergenceGuard, ElboTrace, StepSchedule, LOG_2PI};
use crate::density::LogDensity;
use crate::error::{Error, Result};

/// Gaussian `N(mu, L L^T)` with lower-triangular `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct FullRankApprox {
    pub mu: Vec<f64>,
    /// Row-major `d x d`, zero above the diagonal, positive diagonal.
    pub l: Vec<f64>,
}

impl FullRankApprox {
    pub fn new(mu: Vec<f64>, l: Vec<f64>) -> Result<Self> {
        let d = mu.len();
        if l.len() != d * d {
            return Err(Error::Shape {
                expected: d * d,
                got: l.len(),
            });
        }
        for i in 0..d {
            if !(l[i * d + i] > 0.0) {
                return Err(Error::Variational(format!("L[{i},{i}] must be positive")));
            }
            if l[i * d + i + 1..(i + 1) * d].iter().any(|v| *v != 0.0) {
                return Err(Error::Variational("L must be lower triangular".into()));
            }
        }
        if mu.iter().chain(&l).any(|v| !v.is_finite()) {
            return Err(Error::Variational("full-rank parameters must be finite".into()));
        }
        Ok(FullRankApprox { mu, l })
    }

    /// Free entries of a `d x d` lower-triangular factor.
    pub fn n_free(d: usize) -> usize {
        d * (d + 1) / 2
    }

    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        let d = self.mu.len();
        let cov = self.covariance();
        cov[i * d + j] / (cov[i * d + i] * cov[j * d + j]).sqrt()
    }
}

impl Approximation for FullRankApprox {
    fn dim(&self) -> usize {
        self.mu.len()
    }

    fn mean(&self) -> &[f64] {
        &self.mu
    }

    fn transform(&self, eta: &[f64], out: &mut [f64]) {
        let d = self.mu.len();
        for i in 0..d {
            let row = &self.l[i * d..i * d + i + 1];
            out[i] = self.mu[i] + row.iter().zip(eta).map(|(l, e)| l * e).sum::<f64>();
        }
    }

    fn entropy(&self) -> f64 {
        let d = self.mu.len();
        (0..d).map(|i| self.l[i * d + i].ln()).sum::<f64>() + 0.5 * d as f64 * (1.0 + LOG_2PI)
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let d = self.mu.len();
        // forward substitution L z = x - mu
        let mut z = vec![0.0; d];
        for i in 0..d {
            let mut s = x[i] - self.mu[i];
            for k in 0..i {
                s -= self.l[i * d + k] * z[k];
            }
            z[i] = s / self.l[i * d + i];
        }
        let log_det: f64 = (0..d).map(|i| self.l[i * d + i].ln()).sum();
        -0.5 * z.iter().map(|v| v * v).sum::<f64>() - log_det - 0.5 * d as f64 * LOG_2PI
    }

    fn covariance(&self) -> Vec<f64> {
        let d = self.mu.len();
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..=i {
                let v: f64 = (0..=j).map(|k| self.l[i * d + k] * self.l[j * d + k]).sum();
                cov[i * d + j] = v;
                cov[j * d + i] = v;
            }
        }
        cov
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FullRankSettings {
    /// `L` starts as `init_scale * I`.
    pub init_scale: f64,
    /// Freeze the off-diagonal of `L` at zero (a mean-field fit in full-rank
    /// clothing, used for comparisons).
    pub diagonal_only: bool,
}

impl Default for FullRankSettings {
    fn default() -> Self {
        FullRankSettings {
            init_scale: 0.1,
            diagonal_only: false,
        }
    }
}

/// Full-rank ADVI from `mu = 0`, `L = init_scale * I`.
///
/// The diagonal of `L` is optimized on the log scale so it stays positive.
pub fn fullrank_fit<T: LogDensity + ?Sized>(
    target: &T,
    settings: &AdviSettings,
    fr: &FullRankSettings,
) -> Result<(FullRankApprox, ElboTrace)> {
    settings.validate()?;
    if !(fr.init_scale > 0.0 && fr.init_scale.is_finite()) {
        return Err(Error::Variational("init_scale must be positive".into()));
    }
    let d = target.dim();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);

    // Packed as [mu; rows of L], where the last entry of row i is log L_ii.
    let tri = FullRankApprox::n_free(d);
    let row_start = |i: usize| d + i * (i + 1) / 2;
    let mut params: Vec<f64> = vec![0.0; d + tri];
    for i in 0..d {
        params[row_start(i) + i] = fr.init_scale.ln();
    }
    let mut step = StepSchedule::new(settings, d + tri);
    let mut guard = DivergenceGuard::new(settings.divergence_window);
    let mut eta = vec![0.0; d];
    let mut theta = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut vgrad = vec![0.0; d + tri];
    let mut trace = Vec::with_capacity(settings.n_iters);

    for it in 1..=settings.n_iters {
        let p = &params;
        let lp = reparameterized_draw(target, &mut rng, &mut eta, &mut theta, &mut g, |e, out| {
            for i in 0..d {
                let row = &p[row_start(i)..row_start(i) + i + 1];
                let off: f64 = row[..i].iter().zip(e).map(|(l, e)| l * e).sum();
                out[i] = p[i] + off + row[i].exp() * e[i];
            }
        })
        .map_err(|e| Error::Variational(format!("iteration {it}: {e}")))?;
        let log_det: f64 = (0..d).map(|i| params[row_start(i) + i]).sum();
        let neg_elbo = -(lp + log_det + 0.5 * d as f64 * (1.0 + LOG_2PI));
        guard.check(it, neg_elbo)?;
        trace.push(neg_elbo);

        vgrad[..d].copy_from_slice(&g);
        for i in 0..d {
            let r = row_start(i);
            for j in 0..i {
                vgrad[r + j] = if fr.diagonal_only { 0.0 } else { g[i] * eta[j] };
            }
            vgrad[r + i] = g[i] * eta[i] * params[r + i].exp() + 1.0;
        }
        step.apply(&mut params, &vgrad);
    }

    let mut l = vec![0.0; d * d];
    for i in 0..d {
        let r = row_start(i);
        l[i * d..i * d + i].copy_from_slice(&params[r..r + i]);
        l[i * d + i] = params[r + i].exp();
    }
    params.truncate(d);
    let approx = FullRankApprox::new(params, l)?;
    Ok((
        approx,
        ElboTrace {
            negative_elbo: trace,
            seconds: start.elapsed().as_secs_f64(),
        },
    ))
}
