use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::adapt::{DualAveraging, VarianceEstimator, WindowSchedule};
use super::hmc::{leapfrog, PhasePoint};
use super::{default_names, initial_point, run_chains, Chain, ChainConfig, ChainSet, ChainStats};
use crate::density::LogDensity;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NutsSettings {
    /// Mean acceptance statistic targeted by step-size adaptation.
    pub target_accept: f64,
    pub max_depth: usize,
    /// Energy error beyond which a trajectory is flagged divergent.
    pub max_energy_error: f64,
    /// Starting guess for the step-size search.
    pub initial_step_size: f64,
    /// Estimate a diagonal mass matrix during warm-up (otherwise identity).
    pub adapt_mass: bool,
}

impl Default for NutsSettings {
    fn default() -> Self {
        NutsSettings {
            target_accept: 0.8,
            max_depth: 10,
            max_energy_error: 1000.0,
            initial_step_size: 1.0,
            adapt_mass: true,
        }
    }
}

/// Multinomial No-U-Turn sampling with a diagonal metric.
///
/// Warm-up adapts the step size by dual averaging and the metric from the
/// draws of the slow-phase windows; both are frozen for the kept draws.
pub fn nuts_sample<T: LogDensity + ?Sized>(
    target: &T,
    init: Option<&[f64]>,
    config: &ChainConfig,
    settings: &NutsSettings,
    names: Option<Vec<String>>,
) -> Result<ChainSet> {
    if !(settings.target_accept > 0.0 && settings.target_accept < 1.0) {
        return Err(Error::Sampler(format!(
            "target acceptance {} must lie in (0, 1)",
            settings.target_accept
        )));
    }
    if !(settings.initial_step_size > 0.0 && settings.initial_step_size.is_finite()) {
        return Err(Error::Sampler("initial step size must be positive".into()));
    }
    let d = target.dim();
    run_chains(config, names.unwrap_or_else(|| default_names(d)), |chain, rng| {
        let q = initial_point(target, init, rng)?;
        let point = PhasePoint::new(target, q, vec![0.0; d]);
        if !point.is_finite() {
            return Err(Error::Sampler(format!("chain {chain}: gradient is not finite at the initial point")));
        }
        let mut sampler = Sampler {
            target,
            settings,
            inv_mass: vec![1.0; d],
            step: settings.initial_step_size,
            point,
        };
        sampler.run(config, rng).map_err(|e| match e {
            Error::Sampler(msg) => Error::Sampler(format!("chain {chain}: {msg}")),
            other => other,
        })
    })
}

struct Sampler<'a, T: ?Sized> {
    target: &'a T,
    settings: &'a NutsSettings,
    inv_mass: Vec<f64>,
    step: f64,
    point: PhasePoint,
}

/// Outcome of one NUTS transition.
struct Transition {
    accept_stat: f64,
    diverged: bool,
    leapfrogs: usize,
}

/// A subtree of the trajectory. `left` and `right` are its ends in
/// integration time, regardless of the direction it was built in.
struct Tree {
    left: PhasePoint,
    right: PhasePoint,
    sample: PhasePoint,
    log_weight: f64,
    sum_accept: f64,
    leapfrogs: usize,
    turning: bool,
    diverged: bool,
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

impl<T: LogDensity + ?Sized> Sampler<'_, T> {
    fn run(&mut self, config: &ChainConfig, rng: &mut ChaCha8Rng) -> Result<Chain> {
        let d = self.inv_mass.len();
        let start = Instant::now();
        self.step = self.find_step_size(self.settings.initial_step_size, rng);
        let mut dual = DualAveraging::new(self.settings.target_accept, self.step);
        let mut schedule = WindowSchedule::new(config.n_warmup);
        let mut variance = VarianceEstimator::new(d);
        let mut warmup_divergences = 0usize;
        let mut gradient_evals = 0usize;

        for it in 0..config.n_warmup {
            self.step = dual.current();
            let t = self.transition(rng);
            gradient_evals += t.leapfrogs;
            warmup_divergences += t.diverged as usize;
            dual.update(t.accept_stat);
            if self.settings.adapt_mass && schedule.in_slow_phase(it) {
                variance.add(&self.point.q);
            }
            if self.settings.adapt_mass && schedule.window_ends(it) {
                self.inv_mass = variance.regularized();
                variance = VarianceEstimator::new(d);
                let guess = dual.current();
                self.step = self.find_step_size(guess, rng);
                dual = DualAveraging::new(self.settings.target_accept, self.step);
            }
        }
        if config.n_warmup > 0 {
            if warmup_divergences == config.n_warmup {
                return Err(Error::Sampler(format!(
                    "all {} warm-up transitions diverged (final step size {:.3e}); \
                     the posterior is likely badly scaled or improper",
                    config.n_warmup,
                    dual.current()
                )));
            }
            self.step = dual.final_step();
        }
        let warmup_seconds = start.elapsed().as_secs_f64();

        let sampling_start = Instant::now();
        let mut draws = Vec::with_capacity(config.n_draws * d);
        let mut draw_seconds = Vec::with_capacity(config.n_draws);
        let mut accept_sum = 0.0;
        let mut divergences = 0usize;
        for _ in 0..config.n_draws {
            let t = self.transition(rng);
            gradient_evals += t.leapfrogs;
            accept_sum += t.accept_stat;
            divergences += t.diverged as usize;
            draws.extend_from_slice(&self.point.q);
            draw_seconds.push(sampling_start.elapsed().as_secs_f64());
        }
        Ok(Chain {
            draws,
            stats: ChainStats {
                acceptance: accept_sum / config.n_draws as f64,
                divergences,
                step_size: Some(self.step),
                warmup_seconds,
                draw_seconds,
                gradient_evals,
            },
        })
    }

    fn resample_momentum(&mut self, rng: &mut ChaCha8Rng) {
        for (p, m) in self.point.p.iter_mut().zip(&self.inv_mass) {
            let z: f64 = StandardNormal.sample(rng);
            *p = z / m.sqrt();
        }
    }

    /// Doubles or halves `eps` until a single leapfrog step crosses an
    /// acceptance probability of 0.8.
    fn find_step_size(&mut self, eps: f64, rng: &mut ChaCha8Rng) -> f64 {
        let threshold = 0.8f64.ln();
        let mut eps = eps;
        let mut direction = 0.0;
        for _ in 0..100 {
            self.resample_momentum(rng);
            let h0 = self.point.hamiltonian(&self.inv_mass);
            let next = leapfrog(self.target, &self.point, eps, &self.inv_mass);
            let delta = h0 - next.hamiltonian(&self.inv_mass);
            let good = next.is_finite() && delta > threshold;
            if direction == 0.0 {
                direction = if good { 1.0 } else { -1.0 };
            } else if (direction > 0.0) != good {
                break;
            }
            let candidate = if direction > 0.0 { eps * 2.0 } else { eps * 0.5 };
            if !(candidate > 1e-12 && candidate < 1e7) {
                break;
            }
            eps = candidate;
        }
        eps
    }

    fn transition(&mut self, rng: &mut ChaCha8Rng) -> Transition {
        self.resample_momentum(rng);
        let h0 = self.point.hamiltonian(&self.inv_mass);
        let mut left = self.point.clone();
        let mut right = self.point.clone();
        let mut sample = self.point.clone();
        let mut log_weight = 0.0;
        let mut sum_accept = 0.0;
        let mut leapfrogs = 0usize;
        let mut diverged = false;

        for depth in 0..self.settings.max_depth {
            let forward = rng.random::<bool>();
            let tree = if forward {
                self.build_tree(&right, 1.0, depth, h0, rng)
            } else {
                self.build_tree(&left, -1.0, depth, h0, rng)
            };
            sum_accept += tree.sum_accept;
            leapfrogs += tree.leapfrogs;
            if tree.diverged {
                diverged = true;
                break;
            }
            if tree.turning {
                break;
            }
            // biased progressive sampling favours the new subtree
            if rng.random::<f64>().ln() < tree.log_weight - log_weight {
                sample = tree.sample;
            }
            log_weight = log_add_exp(log_weight, tree.log_weight);
            if forward {
                right = tree.right;
            } else {
                left = tree.left;
            }
            if self.is_turning(&left, &right) {
                break;
            }
        }
        self.point = sample;
        Transition {
            accept_stat: if leapfrogs == 0 { 0.0 } else { sum_accept / leapfrogs as f64 },
            diverged,
            leapfrogs,
        }
    }

    fn is_turning(&self, left: &PhasePoint, right: &PhasePoint) -> bool {
        let v_left = left.velocity(&self.inv_mass);
        let v_right = right.velocity(&self.inv_mass);
        let (mut a, mut b) = (0.0, 0.0);
        for i in 0..left.q.len() {
            let dq = right.q[i] - left.q[i];
            a += dq * v_left[i];
            b += dq * v_right[i];
        }
        a < 0.0 || b < 0.0
    }

    fn build_tree(&self, from: &PhasePoint, direction: f64, depth: usize, h0: f64, rng: &mut ChaCha8Rng) -> Tree {
        if depth == 0 {
            let next = leapfrog(self.target, from, direction * self.step, &self.inv_mass);
            let h = if next.is_finite() {
                next.hamiltonian(&self.inv_mass)
            } else {
                f64::INFINITY
            };
            let error = h - h0;
            let diverged = !(error <= self.settings.max_energy_error);
            let accept = if error.is_nan() { 0.0 } else { (-error).exp().min(1.0) };
            return Tree {
                left: next.clone(),
                right: next.clone(),
                sample: next,
                log_weight: if error.is_nan() { f64::NEG_INFINITY } else { -error },
                sum_accept: accept,
                leapfrogs: 1,
                turning: false,
                diverged,
            };
        }

        let first = self.build_tree(from, direction, depth - 1, h0, rng);
        if first.turning || first.diverged {
            return first;
        }
        let outer = if direction > 0.0 { &first.right } else { &first.left };
        let second = self.build_tree(outer, direction, depth - 1, h0, rng);
        let sum_accept = first.sum_accept + second.sum_accept;
        let leapfrogs = first.leapfrogs + second.leapfrogs;
        if second.turning || second.diverged {
            return Tree {
                sum_accept,
                leapfrogs,
                ..second
            };
        }

        let log_weight = log_add_exp(first.log_weight, second.log_weight);
        let take_second = rng.random::<f64>().ln() < second.log_weight - log_weight;
        let (left, right, sample) = if direction > 0.0 {
            let sample = if take_second { second.sample } else { first.sample };
            (first.left, second.right, sample)
        } else {
            let sample = if take_second { second.sample } else { first.sample };
            (second.left, first.right, sample)
        };
        let turning = self.is_turning(&left, &right);
        Tree {
            left,
            right,
            sample,
            log_weight,
            sum_accept,
            leapfrogs,
            turning,
            diverged: false,
        }
    }
}
