//! Maximum a posteriori estimation.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use crate::density::LogDensity;
use crate::error::{Error, Result};
use crate::model::{ParamLayout, ParamVector};
use crate::optim::{lbfgsb_minimize, Bounds, LbfgsbConfig, Termination};

#[derive(Debug, Clone, PartialEq)]
pub struct MapResult {
    pub point: ParamVector,
    pub log_posterior: f64,
    pub iterations: usize,
    /// The projected gradient reached the tolerance.
    pub converged: bool,
    /// Infinity norm of the projected gradient at `point`.
    pub gradient_norm: f64,
    pub termination: Termination,
    pub evaluations: usize,
    pub seconds: f64,
}

impl MapResult {
    /// Writes `block,coordinate,value` rows.
    pub fn write_csv(&self, layout: &ParamLayout, path: &Path) -> Result<()> {
        layout.check(&self.point)?;
        let io = |e| Error::io(path, e);
        let file = std::fs::File::create(path).map_err(io)?;
        let mut w = std::io::BufWriter::new(file);
        writeln!(w, "block,coordinate,value").map_err(io)?;
        for block in layout.blocks() {
            for (j, v) in self.point[block.range()].iter().enumerate() {
                writeln!(w, "{},{j},{v}", block.name).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }
}

/// Maximizes `f` by minimizing `-f`.
pub fn lbfgsb_maximize<F>(mut f: F, init: &[f64], bounds: Option<&Bounds>, config: &LbfgsbConfig) -> Result<MapResult>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let start = Instant::now();
    let unbounded;
    let bounds = match bounds {
        Some(b) => b,
        None => {
            unbounded = Bounds::unbounded(init.len());
            &unbounded
        }
    };
    let negated = |x: &[f64], g: &mut [f64]| {
        let v = f(x, g);
        g.iter_mut().for_each(|g| *g = -*g);
        -v
    };
    let m = lbfgsb_minimize(negated, init, bounds, config)?;
    Ok(MapResult {
        converged: m.converged(),
        point: ParamVector(m.x),
        log_posterior: -m.f,
        iterations: m.iterations,
        gradient_norm: m.projected_gradient,
        termination: m.termination,
        evaluations: m.evaluations,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Posterior mode from the zero vector.
pub fn map_fit<T: LogDensity + ?Sized>(target: &T, config: &LbfgsbConfig) -> Result<MapResult> {
    let init = vec![0.0; target.dim()];
    lbfgsb_maximize(|x, g| target.log_density_and_grad(x, g), &init, None, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::GaussianTarget;
    use crate::model::{CompiledModel, ModelExpr, Posterior, Prior, PriorSpec};
    use crate::series::TimePoints;

    #[test]
    fn maximizes_concave_quadratic() {
        let r = lbfgsb_maximize(
            |x, g| {
                g[0] = -2.0 * (x[0] - 3.0);
                -(x[0] - 3.0).powi(2)
            },
            &[0.0],
            None,
            &LbfgsbConfig::default(),
        )
        .unwrap();
        assert!((r.point[0] - 3.0).abs() < 1e-9);
        assert!(r.log_posterior.abs() < 1e-16);
        assert!(r.converged && r.gradient_norm <= 1e-8);
    }

    #[test]
    fn negated_rosenbrock() {
        let r = lbfgsb_maximize(
            |x, g| {
                let (a, b) = (x[0], x[1]);
                g[0] = 2.0 * (1.0 - a) + 400.0 * a * (b - a * a);
                g[1] = -200.0 * (b - a * a);
                -((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2))
            },
            &[-1.2, 1.0],
            None,
            &LbfgsbConfig::default(),
        )
        .unwrap();
        assert!((r.point[0] - 1.0).abs() < 1e-6 && (r.point[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn boundary_optimum() {
        let bounds = Bounds {
            lower: vec![1.0],
            upper: vec![2.0],
        };
        let r = lbfgsb_maximize(
            |x, g| {
                g[0] = -2.0 * x[0];
                -x[0] * x[0]
            },
            &[1.5],
            Some(&bounds),
            &LbfgsbConfig::default(),
        )
        .unwrap();
        assert_eq!(r.point[0], 1.0);
    }

    #[test]
    fn quadratics_converge_quickly() {
        for d in [2, 5, 10, 20] {
            let mut cov = vec![0.0; d * d];
            for i in 0..d {
                for j in 0..d {
                    cov[i * d + j] = 0.5f64.powi((i as i32 - j as i32).abs()) * (1.0 + i as f64 * 0.3);
                }
            }
            // symmetrize the scaled matrix
            for i in 0..d {
                for j in 0..i {
                    let v = 0.5 * (cov[i * d + j] + cov[j * d + i]);
                    cov[i * d + j] = v;
                    cov[j * d + i] = v;
                }
            }
            let mean: Vec<f64> = (0..d).map(|i| i as f64 - 2.0).collect();
            let target = GaussianTarget::new(mean.clone(), &cov);
            let r = map_fit(&target, &LbfgsbConfig::default()).unwrap();
            assert!(r.iterations <= 50, "d={d}: {} iterations", r.iterations);
            // the relative-change stop leaves x accurate to about sqrt(1e-12) here
            for i in 0..d {
                assert!((r.point[i] - mean[i]).abs() < 1e-5, "d={d} {r:?}");
            }
        }
    }

    #[test]
    fn monotone_objective_sequence() {
        let mut values = Vec::new();
        let f = |x: &[f64], g: &mut [f64]| {
            let (a, b) = (x[0], x[1]);
            g[0] = 2.0 * (1.0 - a) + 400.0 * a * (b - a * a);
            g[1] = -200.0 * (b - a * a);
            -((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2))
        };
        // record the objective after each accepted iteration
        let mut x = vec![-1.2, 1.0];
        for _ in 0..40 {
            let cfg = LbfgsbConfig {
                max_iters: 1,
                ..Default::default()
            };
            let r = lbfgsb_maximize(f, &x, None, &cfg).unwrap();
            values.push(r.log_posterior);
            x = r.point.0;
        }
        for w in values.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
    }

    fn flat_posterior(y: Vec<f64>, sigma0: f64) -> Posterior {
        let n = y.len();
        let t = TimePoints::from_scaled((0..n).map(|i| i as f64 / (n - 1) as f64).collect(), n as f64);
        let model = CompiledModel::compile(&ModelExpr::flat_trend(), &t).unwrap();
        let priors = PriorSpec {
            intercept: Prior::Normal { mu: 0.0, sigma: sigma0 },
            ..Default::default()
        };
        Posterior::new(model, &t, y, priors).unwrap()
    }

    #[test]
    fn conjugate_normal_mode() {
        let y = vec![0.3, 0.9, 0.4, 1.2, 0.7, 0.5];
        let sigma0: f64 = 0.5;
        let sigma: f64 = 0.2;
        let post = flat_posterior(y.clone(), sigma0);
        // hold log_sigma fixed by optimizing over m alone
        let r = lbfgsb_maximize(
            |x, g| {
                let mut full = [0.0; 2];
                let v = post.log_density_and_grad(&[x[0], sigma.ln()], &mut full);
                g[0] = full[0];
                v
            },
            &[0.0],
            None,
            &LbfgsbConfig::default(),
        )
        .unwrap();
        let n = y.len() as f64;
        let expected = sigma0 * sigma0 * y.iter().sum::<f64>() / (n * sigma0 * sigma0 + sigma * sigma);
        assert!((r.point[0] - expected).abs() < 1e-9, "{} vs {expected}", r.point[0]);
    }

    #[test]
    fn constant_series_is_tolerated() {
        let post = flat_posterior(vec![0.5; 30], 5.0);
        let r = map_fit(&post, &LbfgsbConfig::default()).unwrap();
        assert!(r.point.iter().all(|v| v.is_finite()));
        assert!((r.point[0] - 0.5).abs() < 1e-3);
        // sigma collapses towards zero until the Jacobian term balances it
        assert!(r.point[1] < -5.0);
    }
}
