use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{reparameterized_draw, AdviSettings, Approximation, DivergenceGuard, ElboTrace, StepSchedule, LOG_2PI};
use crate::density::LogDensity;
use crate::error::{Error, Result};

/// Factorized Gaussian `N(mu, diag(exp(omega))^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldApprox {
    pub mu: Vec<f64>,
    /// Log standard deviations.
    pub omega: Vec<f64>,
}

impl MeanFieldApprox {
    pub fn new(mu: Vec<f64>, omega: Vec<f64>) -> Result<Self> {
        if mu.len() != omega.len() {
            return Err(Error::Shape {
                expected: mu.len(),
                got: omega.len(),
            });
        }
        if mu.iter().chain(&omega).any(|v| !v.is_finite()) {
            return Err(Error::Variational("mean-field parameters must be finite".into()));
        }
        Ok(MeanFieldApprox { mu, omega })
    }
}

impl Approximation for MeanFieldApprox {
    fn dim(&self) -> usize {
        self.mu.len()
    }

    fn mean(&self) -> &[f64] {
        &self.mu
    }

    fn transform(&self, eta: &[f64], out: &mut [f64]) {
        for i in 0..self.mu.len() {
            out[i] = self.mu[i] + self.omega[i].exp() * eta[i];
        }
    }

    fn entropy(&self) -> f64 {
        self.omega.iter().sum::<f64>() + 0.5 * self.mu.len() as f64 * (1.0 + LOG_2PI)
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.mu)
            .zip(&self.omega)
            .map(|((x, m), w)| {
                let z = (x - m) / w.exp();
                -0.5 * z * z - w - 0.5 * LOG_2PI
            })
            .sum()
    }

    fn covariance(&self) -> Vec<f64> {
        let d = self.mu.len();
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            cov[i * d + i] = (2.0 * self.omega[i]).exp();
        }
        cov
    }

    fn std_devs(&self) -> Vec<f64> {
        self.omega.iter().map(|w| w.exp()).collect()
    }
}

/// Mean-field ADVI from `mu = 0`, `omega = -2.3`.
pub fn advi_fit<T: LogDensity + ?Sized>(target: &T, settings: &AdviSettings) -> Result<(MeanFieldApprox, ElboTrace)> {
    settings.validate()?;
    let d = target.dim();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    // variational parameters packed as [mu; omega]
    let mut params: Vec<f64> = vec![0.0; 2 * d];
    params[d..].iter_mut().for_each(|w| *w = -2.3);
    let mut step = StepSchedule::new(settings, 2 * d);
    let mut guard = DivergenceGuard::new(settings.divergence_window);
    let mut eta = vec![0.0; d];
    let mut theta = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut vgrad = vec![0.0; 2 * d];
    let mut trace = Vec::with_capacity(settings.n_iters);

    for it in 1..=settings.n_iters {
        let (mu, omega) = params.split_at(d);
        let lp = reparameterized_draw(target, &mut rng, &mut eta, &mut theta, &mut g, |e, out| {
            for i in 0..d {
                out[i] = mu[i] + omega[i].exp() * e[i];
            }
        })
        .map_err(|e| Error::Variational(format!("iteration {it}: {e}")))?;
        let entropy = omega.iter().sum::<f64>() + 0.5 * d as f64 * (1.0 + LOG_2PI);
        let neg_elbo = -(lp + entropy);
        guard.check(it, neg_elbo)?;
        trace.push(neg_elbo);

        for i in 0..d {
            vgrad[i] = g[i];
            vgrad[d + i] = g[i] * eta[i] * omega[i].exp() + 1.0;
        }
        step.apply(&mut params, &vgrad);
    }

    let omega = params.split_off(d);
    let approx = MeanFieldApprox::new(params, omega)?;
    Ok((
        approx,
        ElboTrace {
            negative_elbo: trace,
            seconds: start.elapsed().as_secs_f64(),
        },
    ))
}
