//! Box-constrained limited-memory BFGS.
//!
//! A projected variant of L-BFGS-B: variables sitting at a bound whose
//! gradient points outward are held fixed for the iteration, the two-loop
//! recursion runs on the remaining free subspace, and the strong-Wolfe line
//! search is capped at the largest step that stays feasible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LbfgsbConfig {
    /// Number of correction pairs kept.
    pub memory: usize,
    /// Stop when the projected gradient's infinity norm falls to this.
    pub pg_tol: f64,
    /// Stop when the relative objective change falls to this.
    pub f_tol: f64,
    pub max_iters: usize,
    /// Sufficient-decrease constant of the Wolfe conditions.
    pub c1: f64,
    /// Curvature constant of the Wolfe conditions.
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsbConfig {
    fn default() -> Self {
        LbfgsbConfig {
            memory: 10,
            pg_tol: 1e-8,
            f_tol: 1e-12,
            max_iters: 1000,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    FunctionTolerance,
    MaxIterations,
    /// The line search could not improve the objective any further, which
    /// typically happens at a kink or at machine precision.
    LineSearchStalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    /// Infinity norm of the projected gradient at `x`.
    pub projected_gradient: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

impl Minimum {
    pub fn converged(&self) -> bool {
        self.termination == Termination::GradientTolerance
    }
}

/// Per-coordinate bounds; infinite entries mean unbounded.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn unbounded(d: usize) -> Self {
        Bounds {
            lower: vec![f64::NEG_INFINITY; d],
            upper: vec![f64::INFINITY; d],
        }
    }

    fn check(&self, d: usize) -> Result<()> {
        if self.lower.len() != d || self.upper.len() != d {
            return Err(Error::Shape {
                expected: d,
                got: self.lower.len().min(self.upper.len()),
            });
        }
        for (i, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l.is_nan() || u.is_nan() || l > u {
                return Err(Error::Optimizer(format!("infeasible bounds [{l}, {u}] on coordinate {i}")));
            }
        }
        Ok(())
    }

    fn project(&self, x: &mut [f64]) {
        for ((v, l), u) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*l, *u);
        }
    }

    /// `|| P(x - g) - x ||_inf`.
    fn projected_gradient_norm(&self, x: &[f64], g: &[f64]) -> f64 {
        let mut norm: f64 = 0.0;
        for i in 0..x.len() {
            let moved = (x[i] - g[i]).clamp(self.lower[i], self.upper[i]);
            norm = norm.max((moved - x[i]).abs());
        }
        norm
    }
}

struct Evaluator<F> {
    f: F,
    count: usize,
}

impl<F: FnMut(&[f64], &mut [f64]) -> f64> Evaluator<F> {
    fn eval(&mut self, x: &[f64], g: &mut [f64]) -> f64 {
        self.count += 1;
        (self.f)(x, g)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f` (which writes its gradient into the second argument)
/// from `init`, projected into `bounds`.
pub fn lbfgsb_minimize<F>(f: F, init: &[f64], bounds: &Bounds, config: &LbfgsbConfig) -> Result<Minimum>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let d = init.len();
    bounds.check(d)?;
    if config.memory == 0 || !(0.0 < config.c1 && config.c1 < config.c2 && config.c2 < 1.0) {
        return Err(Error::Optimizer(format!("invalid optimizer settings {config:?}")));
    }
    let mut ev = Evaluator { f, count: 0 };
    let mut x = init.to_vec();
    bounds.project(&mut x);
    let mut g = vec![0.0; d];
    let mut fx = ev.eval(&x, &mut g);
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Optimizer("objective or gradient not finite at the initial point".into()));
    }

    let mut s_hist: Vec<Vec<f64>> = Vec::with_capacity(config.memory);
    let mut y_hist: Vec<Vec<f64>> = Vec::with_capacity(config.memory);
    let mut iterations = 0;
    let mut fresh_memory = true;
    let termination = loop {
        let pg = bounds.projected_gradient_norm(&x, &g);
        if pg <= config.pg_tol {
            break Termination::GradientTolerance;
        }
        if iterations >= config.max_iters {
            break Termination::MaxIterations;
        }
        iterations += 1;

        let free: Vec<bool> = (0..d)
            .map(|i| !((x[i] <= bounds.lower[i] && g[i] > 0.0) || (x[i] >= bounds.upper[i] && g[i] < 0.0)))
            .collect();
        if s_hist.is_empty() {
            fresh_memory = true;
        }
        let mut dir = two_loop(&g, &free, &s_hist, &y_hist);
        if !(dot(&dir, &g) < 0.0) {
            // lost descent; restart from steepest descent
            s_hist.clear();
            y_hist.clear();
            dir = two_loop(&g, &free, &s_hist, &y_hist);
        }

        let mut alpha_max = f64::INFINITY;
        for i in 0..d {
            if dir[i] > 0.0 && bounds.upper[i].is_finite() {
                alpha_max = alpha_max.min((bounds.upper[i] - x[i]) / dir[i]);
            } else if dir[i] < 0.0 && bounds.lower[i].is_finite() {
                alpha_max = alpha_max.min((bounds.lower[i] - x[i]) / dir[i]);
            }
        }
        let alpha0 = if s_hist.is_empty() {
            (1.0 / dir.iter().fold(0.0f64, |m, v| m.max(v.abs()))).min(1.0)
        } else {
            1.0
        };
        let step = line_search(&mut ev, &x, fx, &g, &dir, alpha0.min(alpha_max), alpha_max, config)?;
        let Some((alpha, f_new, g_new)) = step else {
            if s_hist.is_empty() {
                break Termination::LineSearchStalled;
            }
            // retry once along steepest descent before giving up
            s_hist.clear();
            y_hist.clear();
            continue;
        };

        let mut x_new: Vec<f64> = x.iter().zip(&dir).map(|(x, d)| x + alpha * d).collect();
        bounds.project(&mut x_new);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * dot(&y, &y) && sy > 0.0 {
            if s_hist.len() == config.memory {
                s_hist.remove(0);
                y_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
        }
        let rel = (fx - f_new) / fx.abs().max(f_new.abs()).max(1.0);
        x = x_new;
        fx = f_new;
        g = g_new;
        if rel <= config.f_tol {
            if bounds.projected_gradient_norm(&x, &g) <= config.pg_tol {
                break Termination::GradientTolerance;
            }
            if !fresh_memory {
                // Curvature pairs collected across a kink (an L1 prior at zero)
                // can stall the quasi-Newton step far from the optimum, so
                // drop them and require a steepest-descent step to stall too.
                s_hist.clear();
                y_hist.clear();
                fresh_memory = true;
                continue;
            }
            break Termination::FunctionTolerance;
        }
        fresh_memory = false;
    };
    Ok(Minimum {
        projected_gradient: bounds.projected_gradient_norm(&x, &g),
        x,
        f: fx,
        iterations,
        evaluations: ev.count,
        termination,
    })
}

/// `-H g` on the free coordinates, zero on the fixed ones.
fn two_loop(g: &[f64], free: &[bool], s_hist: &[Vec<f64>], y_hist: &[Vec<f64>]) -> Vec<f64> {
    let masked_dot = |a: &[f64], b: &[f64]| -> f64 { (0..a.len()).filter(|&i| free[i]).map(|i| a[i] * b[i]).sum() };
    let mut q: Vec<f64> = g.iter().zip(free).map(|(g, f)| if *f { *g } else { 0.0 }).collect();
    let m = s_hist.len();
    let mut alphas = vec![0.0; m];
    let mut rhos = vec![0.0; m];
    for k in (0..m).rev() {
        let sy = masked_dot(&s_hist[k], &y_hist[k]);
        if sy <= 0.0 {
            continue;
        }
        rhos[k] = 1.0 / sy;
        alphas[k] = rhos[k] * masked_dot(&s_hist[k], &q);
        for i in 0..q.len() {
            if free[i] {
                q[i] -= alphas[k] * y_hist[k][i];
            }
        }
    }
    if let Some(k) = (0..m).rev().find(|&k| rhos[k] > 0.0) {
        let gamma = masked_dot(&s_hist[k], &y_hist[k]) / masked_dot(&y_hist[k], &y_hist[k]);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for k in 0..m {
        if rhos[k] == 0.0 {
            continue;
        }
        let beta = rhos[k] * masked_dot(&y_hist[k], &q);
        for i in 0..q.len() {
            if free[i] {
                q[i] += (alphas[k] - beta) * s_hist[k][i];
            }
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

type LineStep = Option<(f64, f64, Vec<f64>)>;

/// Strong-Wolfe line search along `dir`, never stepping past `alpha_max`.
/// Returns `None` when no step with sufficient decrease was found.
#[allow(clippy::too_many_arguments)]
fn line_search<F: FnMut(&[f64], &mut [f64]) -> f64>(
    ev: &mut Evaluator<F>,
    x: &[f64],
    f0: f64,
    g0: &[f64],
    dir: &[f64],
    alpha_init: f64,
    alpha_max: f64,
    config: &LbfgsbConfig,
) -> Result<LineStep> {
    let d = x.len();
    let dphi0 = dot(g0, dir);
    let mut g = vec![0.0; d];
    let mut xa = vec![0.0; d];
    let mut phi = |alpha: f64, g: &mut Vec<f64>, xa: &mut Vec<f64>| -> (f64, f64) {
        for i in 0..d {
            xa[i] = x[i] + alpha * dir[i];
        }
        let f = ev.eval(xa, g);
        if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return (f64::NAN, f64::NAN);
        }
        (f, dot(g, dir))
    };

    let armijo = |alpha: f64, f: f64| f <= f0 + config.c1 * alpha * dphi0;
    let curvature = |dphi: f64| dphi.abs() <= -config.c2 * dphi0;

    let mut alpha = alpha_init;
    let (mut a_prev, mut f_prev, mut d_prev) = (0.0, f0, dphi0);
    // best point with sufficient decrease, kept as a fallback
    let mut best: LineStep = None;
    let mut bracket = None;
    let mut shrinks = 0;
    let mut iter = 0;
    while iter < config.max_line_search {
        iter += 1;
        let (f, dphi) = phi(alpha, &mut g, &mut xa);
        if f.is_nan() {
            shrinks += 1;
            if shrinks > config.max_line_search {
                return Err(Error::Optimizer(
                    "objective not finite along the search direction even for tiny steps".into(),
                ));
            }
            alpha = a_prev + 0.1 * (alpha - a_prev);
            continue;
        }
        if armijo(alpha, f) && best.as_ref().is_none_or(|b| f < b.1) {
            best = Some((alpha, f, g.clone()));
        }
        if !armijo(alpha, f) || (iter > 1 && f >= f_prev) {
            bracket = Some(((a_prev, f_prev, d_prev), (alpha, f, dphi)));
            break;
        }
        if curvature(dphi) {
            return Ok(Some((alpha, f, g)));
        }
        if dphi >= 0.0 {
            bracket = Some(((alpha, f, dphi), (a_prev, f_prev, d_prev)));
            break;
        }
        if alpha >= alpha_max {
            // blocked by a bound; sufficient decrease is enough there
            return Ok(Some((alpha, f, g)));
        }
        a_prev = alpha;
        f_prev = f;
        d_prev = dphi;
        alpha = (2.0 * alpha).min(alpha_max);
    }

    let Some((mut lo, mut hi)) = bracket else {
        return Ok(best);
    };
    for _ in 0..config.max_line_search {
        let alpha = interpolate(lo, hi);
        let (f, dphi) = phi(alpha, &mut g, &mut xa);
        if f.is_nan() {
            hi = (alpha, f64::INFINITY, f64::NAN);
            continue;
        }
        if armijo(alpha, f) && best.as_ref().is_none_or(|b| f < b.1) {
            best = Some((alpha, f, g.clone()));
        }
        if !armijo(alpha, f) || f >= lo.1 {
            hi = (alpha, f, dphi);
        } else {
            if curvature(dphi) {
                return Ok(Some((alpha, f, g)));
            }
            if dphi * (hi.0 - lo.0) >= 0.0 {
                hi = lo;
            }
            lo = (alpha, f, dphi);
        }
        if (hi.0 - lo.0).abs() <= 1e-16 * lo.0.abs().max(1.0) {
            break;
        }
    }
    Ok(best)
}

/// Cubic interpolation between the bracket ends, safeguarded to the middle
/// 80% of the interval.
fn interpolate(lo: (f64, f64, f64), hi: (f64, f64, f64)) -> f64 {
    let (a, fa, da) = lo;
    let (b, fb, db) = hi;
    let (left, right) = if a < b { (a, b) } else { (b, a) };
    let margin = 0.1 * (right - left);
    let bisect = 0.5 * (a + b);
    if !(fb.is_finite() && db.is_finite()) {
        return bisect;
    }
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if disc < 0.0 {
        return bisect;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    if t.is_finite() && t > left + margin && t < right - margin {
        t
    } else {
        bisect
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(x: &[f64], g: &mut [f64]) -> f64 {
        g[0] = 2.0 * (x[0] - 3.0);
        (x[0] - 3.0).powi(2)
    }

    fn rosenbrock(x: &[f64], g: &mut [f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
        g[1] = 200.0 * (b - a * a);
        (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
    }

    #[test]
    fn one_dimensional_quadratic() {
        let m = lbfgsb_minimize(quad, &[0.0], &Bounds::unbounded(1), &LbfgsbConfig::default()).unwrap();
        assert!((m.x[0] - 3.0).abs() < 1e-9);
        assert!(m.f.abs() < 1e-16);
        assert!(m.converged());
    }

    #[test]
    fn rosenbrock_valley() {
        let m = lbfgsb_minimize(rosenbrock, &[-1.2, 1.0], &Bounds::unbounded(2), &LbfgsbConfig::default()).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{:?}", m);
    }

    #[test]
    fn active_lower_bound() {
        let bounds = Bounds {
            lower: vec![1.0],
            upper: vec![2.0],
        };
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = 2.0 * x[0];
            x[0] * x[0]
        };
        let m = lbfgsb_minimize(f, &[1.7], &bounds, &LbfgsbConfig::default()).unwrap();
        assert_eq!(m.x[0], 1.0);
        assert!(m.converged());
    }

    #[test]
    fn mixed_bounds_in_several_dimensions() {
        // minimize sum (x_i - c_i)^2 with some targets outside the box
        let c = [-2.0, 0.5, 4.0, 1.0];
        let bounds = Bounds {
            lower: vec![-1.0, -1.0, -1.0, f64::NEG_INFINITY],
            upper: vec![1.0, 1.0, 1.0, f64::INFINITY],
        };
        let f = |x: &[f64], g: &mut [f64]| {
            let mut v = 0.0;
            for i in 0..4 {
                g[i] = 2.0 * (x[i] - c[i]);
                v += (x[i] - c[i]).powi(2);
            }
            v
        };
        let m = lbfgsb_minimize(f, &[0.0; 4], &bounds, &LbfgsbConfig::default()).unwrap();
        let expected = [-1.0, 0.5, 1.0, 1.0];
        for i in 0..4 {
            assert!((m.x[i] - expected[i]).abs() < 1e-9, "{:?}", m.x);
        }
    }

    #[test]
    fn infeasible_bounds_rejected() {
        let bounds = Bounds {
            lower: vec![2.0],
            upper: vec![1.0],
        };
        assert!(lbfgsb_minimize(quad, &[0.0], &bounds, &LbfgsbConfig::default()).is_err());
    }

    #[test]
    fn non_finite_start_rejected() {
        let f = |_: &[f64], g: &mut [f64]| {
            g[0] = 0.0;
            f64::NAN
        };
        assert!(lbfgsb_minimize(f, &[0.0], &Bounds::unbounded(1), &LbfgsbConfig::default()).is_err());
    }

    #[test]
    fn recovers_from_non_finite_region() {
        // log barrier: undefined for x <= 0, so long steps overshoot into NaN
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = 1.0 - 1.0 / x[0];
            x[0] - x[0].ln()
        };
        let m = lbfgsb_minimize(f, &[5.0], &Bounds::unbounded(1), &LbfgsbConfig::default()).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-8, "{m:?}");
    }
}
