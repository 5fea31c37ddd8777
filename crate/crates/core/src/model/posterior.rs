use std::f64::consts::PI;

use super::compiled::{CompiledModel, Design};
use super::layout::ParamLayout;
use super::prior::{Prior, PriorSpec};
use crate::density::LogDensity;
use crate::error::{Error, Result};
use crate::series::TimePoints;

/// Joint log-posterior of a compiled model given scaled observations.
#[derive(Debug, Clone)]
pub struct Posterior {
    model: CompiledModel,
    design: Design,
    y: Vec<f64>,
    priors: PriorSpec,
    block_priors: Vec<Option<Prior>>,
}

impl Posterior {
    pub fn new(model: CompiledModel, times: &TimePoints, y: Vec<f64>, priors: PriorSpec) -> Result<Self> {
        if times.len() != y.len() {
            return Err(Error::Shape {
                expected: times.len(),
                got: y.len(),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries("non-finite observation".into()));
        }
        priors.validate()?;
        let design = model.design(times);
        let block_priors = model
            .layout()
            .blocks()
            .iter()
            .map(|b| priors.for_block(&b.name, b.kind))
            .collect();
        Ok(Posterior {
            model,
            design,
            y,
            priors,
            block_priors,
        })
    }

    pub fn model(&self) -> &CompiledModel {
        &self.model
    }

    pub fn layout(&self) -> &ParamLayout {
        self.model.layout()
    }

    pub fn priors(&self) -> &PriorSpec {
        &self.priors
    }

    pub fn observations(&self) -> &[f64] {
        &self.y
    }

    /// Per-block log-prior contributions, in layout order. The noise block
    /// includes the log-transform Jacobian.
    pub fn log_prior_terms(&self, params: &[f64]) -> Vec<(String, f64)> {
        self.model
            .layout()
            .blocks()
            .iter()
            .zip(&self.block_priors)
            .map(|(b, prior)| {
                let v = match prior {
                    Some(p) => params[b.range()].iter().map(|x| p.log_pdf(*x)).sum(),
                    None => self.priors.noise_log_pdf(params[b.offset]).0,
                };
                (b.name.clone(), v)
            })
            .collect()
    }

    pub fn log_prior(&self, params: &[f64]) -> f64 {
        self.log_prior_terms(params).iter().map(|(_, v)| v).sum()
    }

    pub fn log_likelihood(&self, params: &[f64]) -> f64 {
        let mu = self.model.forward(params, &self.design).pop().unwrap_or_default();
        let log_sigma = params[self.model.log_sigma_index()];
        gaussian_log_likelihood(&self.y, &mu, log_sigma).0
    }

    pub fn log_posterior_and_grad(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.dim()];
        let v = self.log_density_and_grad(params, &mut grad);
        (v, grad)
    }
}

/// Log-likelihood of `y` under `N(mu, exp(log_sigma)^2)`, with its
/// derivative in `log_sigma`.
fn gaussian_log_likelihood(y: &[f64], mu: &[f64], log_sigma: f64) -> (f64, f64) {
    let inv_var = (-2.0 * log_sigma).exp();
    let ss: f64 = y.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum();
    let n = y.len() as f64;
    let value = -0.5 * n * (2.0 * PI).ln() - n * log_sigma - 0.5 * ss * inv_var;
    (value, -n + ss * inv_var)
}

impl LogDensity for Posterior {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn log_density(&self, params: &[f64]) -> f64 {
        self.log_prior(params) + self.log_likelihood(params)
    }

    fn log_density_and_grad(&self, params: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut lp = 0.0;
        for (b, prior) in self.model.layout().blocks().iter().zip(&self.block_priors) {
            match prior {
                Some(p) => {
                    for i in b.range() {
                        lp += p.log_pdf(params[i]);
                        grad[i] += p.grad_log_pdf(params[i]);
                    }
                }
                None => {
                    let (v, g) = self.priors.noise_log_pdf(params[b.offset]);
                    lp += v;
                    grad[b.offset] += g;
                }
            }
        }

        let values = self.model.forward(params, &self.design);
        let ls_index = self.model.log_sigma_index();
        let log_sigma = params[ls_index];
        let zero = vec![0.0; self.y.len()];
        let mu = values.last().unwrap_or(&zero);
        let (ll, d_log_sigma) = gaussian_log_likelihood(&self.y, mu, log_sigma);
        grad[ls_index] += d_log_sigma;
        let inv_var = (-2.0 * log_sigma).exp();
        let adjoint: Vec<f64> = self.y.iter().zip(mu).map(|(a, b)| (a - b) * inv_var).collect();
        self.model.backward(&self.design, &values, adjoint, grad);
        lp + ll
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_default_model, ModelExpr};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn times(n: usize) -> TimePoints {
        TimePoints::from_scaled((0..n).map(|i| i as f64 / (n - 1) as f64).collect(), 729.0)
    }

    fn default_posterior(n: usize) -> Posterior {
        let t = times(n);
        let y: Vec<f64> = t.t_days.iter().map(|d| 0.7 + 0.05 * (d / 50.0).sin()).collect();
        let model = CompiledModel::compile(&build_default_model(), &t).unwrap();
        Posterior::new(model, &t, y, PriorSpec::default()).unwrap()
    }

    #[test]
    fn table_prior_sum_at_zero() {
        let post = default_posterior(20);
        let terms = post.log_prior_terms(&vec![0.0; 54]);
        let without_noise: f64 = terms.iter().filter(|(n, _)| n != "log_sigma").map(|(_, v)| v).sum();
        assert!((without_noise - (-31.2517)).abs() < 1e-4, "{without_noise}");
    }

    #[test]
    fn likelihood_examples() {
        let t = times(3);
        let model = CompiledModel::compile(&ModelExpr::flat_trend(), &t).unwrap();
        let post = Posterior::new(model.clone(), &t, vec![0.5; 3], PriorSpec::default()).unwrap();
        let ll0 = post.log_likelihood(&[0.5, 0.0]);
        assert!((ll0 - (-1.5 * (2.0 * PI).ln())).abs() < 1e-12);
        let ll1 = post.log_likelihood(&[0.5, 2f64.ln()]);
        assert!((ll0 - ll1 - 3.0 * 2f64.ln()).abs() < 1e-12);

        let t1 = times(2);
        let model = CompiledModel::compile(&ModelExpr::flat_trend(), &t1).unwrap();
        let post = Posterior::new(model, &t1, vec![1.0, 0.0], PriorSpec::default()).unwrap();
        // residual 1 at the first point, 0 at the second
        let ll = post.log_likelihood(&[0.0, 0.0]);
        let one_point = ll + 0.5 * (2.0 * PI).ln();
        assert!((one_point - (-1.418939)).abs() < 1e-6);
    }

    #[test]
    fn flat_trend_intercept_gradient() {
        let t = times(5);
        let y = vec![0.1, 0.4, -0.2, 0.3, 0.0];
        let model = CompiledModel::compile(&ModelExpr::flat_trend(), &t).unwrap();
        let post = Posterior::new(model, &t, y.clone(), PriorSpec::default()).unwrap();
        let m = 0.2;
        let sigma: f64 = 0.3;
        let (_, g) = post.log_posterior_and_grad(&[m, sigma.ln()]);
        let lik: f64 = y.iter().map(|v| (v - m) / (sigma * sigma)).sum();
        let prior = -m / 25.0;
        assert!((g[0] - (lik + prior)).abs() < 1e-10);
    }

    #[test]
    fn changepoint_prior_gradient() {
        let post = default_posterior(10);
        let mut p = vec![0.0; 54];
        p[2] = 0.1;
        let (_, g) = post.log_posterior_and_grad(&p);
        let h = 1e-6;
        let mut a = p.clone();
        a[2] += h;
        let mut b = p.clone();
        b[2] -= h;
        let lik_grad = (post.log_likelihood(&a) - post.log_likelihood(&b)) / (2.0 * h);
        assert!((g[2] - lik_grad + 20.0).abs() < 1e-4, "{}", g[2] - lik_grad);
    }

    fn assert_gradient_matches(post: &Posterior, points: usize, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = post.dim();
        let h = 1e-5;
        for _ in 0..points {
            let p: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (_, g) = post.log_posterior_and_grad(&p);
            for i in 0..d {
                let mut a = p.clone();
                a[i] += h;
                let mut b = p.clone();
                b[i] -= h;
                let fd = (post.log_density(&a) - post.log_density(&b)) / (2.0 * h);
                let abs = (g[i] - fd).abs();
                let rel = abs / g[i].abs().max(fd.abs());
                assert!(abs < 1e-8 || rel < 1e-6, "coord {i}: analytic {} fd {fd}", g[i]);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        assert_gradient_matches(&default_posterior(60), 20, 7);
    }

    #[test]
    fn multiplicative_gradient_matches_finite_differences() {
        let t = times(40);
        let expr = ModelExpr::linear_trend(6)
            * (1.0 + ModelExpr::fourier("yearly", 365.25, 3) + ModelExpr::fourier("weekly", 7.0, 2));
        let y: Vec<f64> = t.t_days.iter().map(|d| 0.5 + 0.1 * (d / 30.0).cos()).collect();
        let model = CompiledModel::compile(&expr, &t).unwrap();
        let post = Posterior::new(model, &t, y, PriorSpec::default()).unwrap();
        assert_gradient_matches(&post, 10, 11);
    }

    #[test]
    fn prior_mode_dominates_per_block() {
        let post = default_posterior(10);
        let zero = vec![0.0; 54];
        let base = post.log_prior_terms(&zero);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let p: Vec<f64> = (0..54).map(|_| rng.random_range(-1.0..1.0)).collect();
            for ((name, a), (_, b)) in base.iter().zip(post.log_prior_terms(&p)) {
                if name != "log_sigma" {
                    assert!(*a >= b);
                }
            }
        }
    }
}
