//! Automatic differentiation variational inference.
//!
//! Both families are fitted by stochastic gradient ascent on the ELBO with
//! one reparameterized Monte-Carlo draw per iteration and the adaptive
//! step-size sequence
//!
//! ```text
//! rho_k = eta * k^(-1/2 + xi) / (tau + sqrt(s_k)),   s_k = alpha g_k^2 + (1 - alpha) s_{k-1}
//! ```
//!
//! applied per coordinate of the variational parameters.

mod fullrank;
mod meanfield;

pub use fullrank::{fullrank_fit, FullRankApprox, FullRankSettings};
pub use meanfield::{advi_fit, MeanFieldApprox};

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::density::LogDensity;
use crate::error::{Error, Result};

const LOG_2PI: f64 = 1.8378770664093453;

/// A Gaussian variational approximation over the unconstrained parameters.
pub trait Approximation {
    fn dim(&self) -> usize;
    fn mean(&self) -> &[f64];
    /// Writes `mu + S eta` into `out`, where `S` is the scale factor.
    fn transform(&self, eta: &[f64], out: &mut [f64]);
    /// Differential entropy of the approximation.
    fn entropy(&self) -> f64;
    fn log_density(&self, x: &[f64]) -> f64;
    /// Row-major `d x d` covariance.
    fn covariance(&self) -> Vec<f64>;

    /// Marginal standard deviations.
    fn std_devs(&self) -> Vec<f64> {
        let d = self.dim();
        let cov = self.covariance();
        (0..d).map(|i| cov[i * d + i].sqrt()).collect()
    }
}

/// Optimizer settings shared by both families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdviSettings {
    pub n_iters: usize,
    pub eta: f64,
    pub xi: f64,
    pub tau: f64,
    pub alpha: f64,
    pub seed: u64,
    /// Abort when the negative ELBO rises on this many consecutive iterations.
    pub divergence_window: usize,
}

impl Default for AdviSettings {
    fn default() -> Self {
        AdviSettings {
            n_iters: 100_000,
            eta: 0.1,
            xi: 1e-16,
            tau: 1.0,
            alpha: 0.1,
            seed: 0,
            divergence_window: 1000,
        }
    }
}

impl AdviSettings {
    fn validate(&self) -> Result<()> {
        if self.n_iters == 0 {
            return Err(Error::Variational("need at least one iteration".into()));
        }
        if !(self.eta > 0.0 && self.tau >= 0.0 && self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Variational(format!("invalid step-size settings {self:?}")));
        }
        Ok(())
    }
}

/// Noisy per-iteration negative ELBO of one fit.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ElboTrace {
    pub negative_elbo: Vec<f64>,
    pub seconds: f64,
}

impl ElboTrace {
    pub fn len(&self) -> usize {
        self.negative_elbo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.negative_elbo.is_empty()
    }

    /// Writes `iteration,negative_elbo` rows, iterations counted from 1.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |e| Error::io(path, e);
        let file = std::fs::File::create(path).map_err(io)?;
        let mut w = std::io::BufWriter::new(file);
        writeln!(w, "iteration,negative_elbo").map_err(io)?;
        for (i, v) in self.negative_elbo.iter().enumerate() {
            writeln!(w, "{},{v}", i + 1).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

/// Monte-Carlo ELBO estimate `mean(log p(theta_s)) + H(q)`.
///
/// A draw where `log p` is not finite is replaced once; a second failure is
/// an error.
pub fn elbo_estimate<A, T, R>(approx: &A, target: &T, n_mc: usize, rng: &mut R) -> Result<f64>
where
    A: Approximation + ?Sized,
    T: LogDensity + ?Sized,
    R: Rng + ?Sized,
{
    if n_mc == 0 {
        return Err(Error::Variational("n_mc must be at least 1".into()));
    }
    let d = approx.dim();
    let mut eta = vec![0.0; d];
    let mut theta = vec![0.0; d];
    let mut total = 0.0;
    for _ in 0..n_mc {
        let mut lp = f64::NAN;
        for _ in 0..2 {
            eta.iter_mut().for_each(|e| *e = StandardNormal.sample(rng));
            approx.transform(&eta, &mut theta);
            lp = target.log_density(&theta);
            if lp.is_finite() {
                break;
            }
        }
        if !lp.is_finite() {
            return Err(Error::Variational("log density not finite at two consecutive draws".into()));
        }
        total += lp;
    }
    Ok(total / n_mc as f64 + approx.entropy())
}

/// `n` independent draws, row-major `n x d`.
pub fn draw_from_approx<A, R>(approx: &A, n: usize, rng: &mut R) -> Vec<f64>
where
    A: Approximation + ?Sized,
    R: Rng + ?Sized,
{
    let d = approx.dim();
    let mut out = vec![0.0; n * d];
    let mut eta = vec![0.0; d];
    for row in out.chunks_exact_mut(d) {
        eta.iter_mut().for_each(|e| *e = StandardNormal.sample(rng));
        approx.transform(&eta, row);
    }
    out
}

/// Per-coordinate adaptive step sizes.
#[derive(Debug, Clone)]
pub(crate) struct StepSchedule {
    eta: f64,
    xi: f64,
    tau: f64,
    alpha: f64,
    s: Vec<f64>,
    k: usize,
}

impl StepSchedule {
    pub(crate) fn new(settings: &AdviSettings, n: usize) -> Self {
        StepSchedule {
            eta: settings.eta,
            xi: settings.xi,
            tau: settings.tau,
            alpha: settings.alpha,
            s: vec![0.0; n],
            k: 0,
        }
    }

    /// Ascent step: `params += rho .* grad`.
    pub(crate) fn apply(&mut self, params: &mut [f64], grad: &[f64]) {
        self.k += 1;
        let decay = self.eta * (self.k as f64).powf(-0.5 + self.xi);
        for ((p, g), s) in params.iter_mut().zip(grad).zip(&mut self.s) {
            *s = if self.k == 1 {
                g * g
            } else {
                self.alpha * g * g + (1.0 - self.alpha) * *s
            };
            *p += decay / (self.tau + s.sqrt()) * g;
        }
    }
}

/// Detects a negative ELBO that keeps rising.
#[derive(Debug, Clone)]
pub(crate) struct DivergenceGuard {
    window: usize,
    rising: usize,
    last: f64,
}

impl DivergenceGuard {
    pub(crate) fn new(window: usize) -> Self {
        DivergenceGuard {
            window,
            rising: 0,
            last: f64::INFINITY,
        }
    }

    pub(crate) fn check(&mut self, iteration: usize, negative_elbo: f64) -> Result<()> {
        if !negative_elbo.is_finite() {
            return Err(Error::Variational(format!(
                "negative ELBO is not finite at iteration {iteration}"
            )));
        }
        self.rising = if negative_elbo > self.last { self.rising + 1 } else { 0 };
        self.last = negative_elbo;
        if self.window > 0 && self.rising >= self.window {
            return Err(Error::Variational(format!(
                "negative ELBO rose on {} consecutive iterations up to iteration {iteration}; \
                 the optimization is diverging (try a smaller eta)",
                self.rising
            )));
        }
        Ok(())
    }
}

/// Draws `eta`, maps it through `transform` and evaluates the target with
/// gradient, redrawing once if the density is not finite.
pub(crate) fn reparameterized_draw<R: Rng + ?Sized, T: LogDensity + ?Sized>(
    target: &T,
    rng: &mut R,
    eta: &mut [f64],
    theta: &mut [f64],
    grad: &mut [f64],
    transform: impl Fn(&[f64], &mut [f64]),
) -> Result<f64> {
    for _ in 0..2 {
        eta.iter_mut().for_each(|e| *e = StandardNormal.sample(rng));
        transform(eta, theta);
        let lp = target.log_density_and_grad(theta, grad);
        if lp.is_finite() && grad.iter().all(|g| g.is_finite()) {
            return Ok(lp);
        }
    }
    Err(Error::Variational("log density not finite at two consecutive draws".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::GaussianTarget;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn elbo_of_exact_approximation_is_zero() {
        let q = MeanFieldApprox::new(vec![0.0], vec![0.0]).unwrap();
        let target = GaussianTarget::standard(1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let small = elbo_estimate(&q, &target, 10, &mut rng).unwrap();
        let large = elbo_estimate(&q, &target, 200_000, &mut rng).unwrap();
        assert!(large.abs() < 0.01, "{large}");
        assert!(large.abs() <= small.abs() + 0.05);
    }

    #[test]
    fn elbo_is_a_lower_bound() {
        // q narrower than the target: ELBO = -KL(q || p) < 0
        let q = MeanFieldApprox::new(vec![0.5], vec![-1.0]).unwrap();
        let target = GaussianTarget::standard(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let elbo = elbo_estimate(&q, &target, 100_000, &mut rng).unwrap();
        let s2 = (-2.0f64).exp();
        let kl = 0.5 * (s2 + 0.25 - 1.0 - s2.ln());
        assert!((elbo + kl).abs() < 0.01, "{elbo} vs {}", -kl);
    }

    #[test]
    fn step_schedule_first_steps() {
        let settings = AdviSettings::default();
        let mut sched = StepSchedule::new(&settings, 1);
        let mut p = [0.0];
        sched.apply(&mut p, &[3.0]);
        // s_1 = 9, rho_1 = 0.1 / (1 + 3)
        assert!((p[0] - 0.1 / 4.0 * 3.0).abs() < 1e-15);
        sched.apply(&mut p, &[1.0]);
        let s2: f64 = 0.1 * 1.0 + 0.9 * 9.0;
        let rho2 = 0.1 * 2f64.powf(-0.5 + 1e-16) / (1.0 + s2.sqrt());
        assert!((p[0] - (0.075 + rho2)).abs() < 1e-15);
    }

    #[test]
    fn guard_trips_on_steady_rise() {
        let mut g = DivergenceGuard::new(5);
        for i in 0..5 {
            assert!(g.check(i, i as f64).is_ok());
        }
        assert!(g.check(5, 10.0).is_err());
        let mut g = DivergenceGuard::new(5);
        assert!(g.check(0, f64::NAN).is_err());
    }

    #[test]
    fn trace_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("elbo.csv");
        let trace = ElboTrace {
            negative_elbo: vec![3.5, 2.25],
            seconds: 0.1,
        };
        trace.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "iteration,negative_elbo\n1,3.5\n2,2.25\n");
    }
}
