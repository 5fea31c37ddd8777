use crate::error::{Error, Result};

/// Window used by [`elbo_plateau`] by default.
pub const PLATEAU_WINDOW: usize = 5000;
/// Relative change (w.r.t. the curve's range) below which the curve counts as flat.
pub const PLATEAU_TOLERANCE: f64 = 1e-3;

/// Exponential smoothing `s_i = alpha x_i + (1 - alpha) s_{i-1}`, `s_0 = x_0`.
pub fn smooth_elbo(trace: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if trace.is_empty() {
        return Err(Error::Diagnostics("empty ELBO trace".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Diagnostics(format!("smoothing coefficient {alpha} outside (0, 1]")));
    }
    let mut out = Vec::with_capacity(trace.len());
    let mut s = trace[0];
    out.push(s);
    for x in &trace[1..] {
        s = alpha * x + (1.0 - alpha) * s;
        out.push(s);
    }
    Ok(out)
}

/// Min-max scales into `[0, 1]`. A flat curve maps to zeros and the
/// returned flag is `true`.
pub fn scale_unit(curve: &[f64]) -> (Vec<f64>, bool) {
    let (lo, hi) = min_max(curve);
    let range = hi - lo;
    if !(range > 0.0) {
        return (vec![0.0; curve.len()], true);
    }
    (curve.iter().map(|v| (v - lo) / range).collect(), false)
}

/// First index `i >= window` with `|s_i - s_{i-window}| / (max - min) < tol`.
pub fn elbo_plateau(curve: &[f64], window: usize, tol: f64) -> Option<usize> {
    if window == 0 || curve.len() <= window {
        return None;
    }
    let (lo, hi) = min_max(curve);
    let range = hi - lo;
    if !(range > 0.0) {
        return Some(window);
    }
    (window..curve.len()).find(|&i| (curve[i] - curve[i - window]).abs() / range < tol)
}

fn min_max(x: &[f64]) -> (f64, f64) {
    x.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothing_examples() {
        assert_eq!(smooth_elbo(&[4.0, 2.0, 1.0], 0.5).unwrap(), vec![4.0, 3.0, 2.0]);
        assert_eq!(smooth_elbo(&[4.0, 2.0, 1.0], 1.0).unwrap(), vec![4.0, 2.0, 1.0]);
        assert!(smooth_elbo(&[], 0.5).is_err());
        assert!(smooth_elbo(&[1.0], 0.0).is_err());
    }

    #[test]
    fn scaling() {
        assert_eq!(scale_unit(&[3.0, 1.0, 2.0]), (vec![1.0, 0.0, 0.5], false));
        assert_eq!(scale_unit(&[2.0; 3]), (vec![0.0; 3], true));
    }

    #[test]
    fn plateau_detection() {
        let flattening: Vec<f64> = (0..100_000).map(|i| (-(i as f64) / 10_000.0).exp()).collect();
        let i = elbo_plateau(&flattening, PLATEAU_WINDOW, PLATEAU_TOLERANCE).unwrap();
        // |e^{-i/1e4}(e^{0.5} - 1)| < 1e-3  <=>  i > 1e4 ln(648.7)
        assert!((64_000..66_000).contains(&i), "{i}");

        let line: Vec<f64> = (0..20_000).map(|i| -(i as f64)).collect();
        assert_eq!(elbo_plateau(&line, PLATEAU_WINDOW, PLATEAU_TOLERANCE), None);
        assert_eq!(elbo_plateau(&[1.0; 6000], PLATEAU_WINDOW, PLATEAU_TOLERANCE), Some(PLATEAU_WINDOW));
    }
}
