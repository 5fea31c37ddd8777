use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Biased (`1/N`) autocovariance at every lag `0..N`, computed by
/// zero-padded FFT.
pub fn autocovariance(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .map(|v| Complex::new(v - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    buf.iter_mut().for_each(|c| *c = Complex::new(c.norm_sqr(), 0.0));
    planner.plan_fft_inverse(size).process(&mut buf);
    let scale = 1.0 / (size as f64 * n as f64);
    buf[..n].iter().map(|c| c.re * scale).collect()
}

/// Normalized autocorrelation for lags `0..=max_lag`.
///
/// Errors on a constant chain, where the autocorrelation is undefined.
pub fn autocorrelation(chain: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if max_lag >= chain.len() {
        return Err(Error::Diagnostics(format!(
            "max_lag {max_lag} must be below chain length {}",
            chain.len()
        )));
    }
    let acov = autocovariance(chain);
    if !(acov[0] > 0.0) {
        return Err(Error::Diagnostics("autocorrelation undefined for a constant chain".into()));
    }
    let mut out: Vec<f64> = acov[..=max_lag].iter().map(|c| c / acov[0]).collect();
    out[0] = 1.0;
    Ok(out)
}
