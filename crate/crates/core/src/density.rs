//! The log-density interface shared by every inference engine.

/// An unnormalized log-density over an unconstrained real vector.
///
/// Implementations must be pure: chains call them concurrently.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Writes the gradient into `grad` and returns the log-density.
    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;

    fn log_density(&self, x: &[f64]) -> f64 {
        let mut grad = vec![0.0; self.dim()];
        self.log_density_and_grad(x, &mut grad)
    }
}

impl<T: LogDensity + ?Sized> LogDensity for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        (**self).log_density_and_grad(x, grad)
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        (**self).log_density(x)
    }
}

/// Normalized multivariate Gaussian, handy as an analytic test target.
#[derive(Debug, Clone)]
pub struct GaussianTarget {
    mean: Vec<f64>,
    precision: Vec<f64>,
    log_norm: f64,
}

impl GaussianTarget {
    /// `cov` is row-major `d x d` and must be symmetric positive definite.
    pub fn new(mean: Vec<f64>, cov: &[f64]) -> Self {
        let d = mean.len();
        assert_eq!(cov.len(), d * d, "covariance must be d x d");
        let chol = cholesky(cov, d).expect("covariance must be positive definite");
        let log_det: f64 = (0..d).map(|i| 2.0 * chol[i * d + i].ln()).sum();
        let precision = spd_inverse(&chol, d);
        GaussianTarget {
            mean,
            precision,
            log_norm: -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det),
        }
    }

    pub fn standard(d: usize) -> Self {
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            cov[i * d + i] = 1.0;
        }
        Self::new(vec![0.0; d], &cov)
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }
}

impl LogDensity for GaussianTarget {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.mean.len();
        let r: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        let mut quad = 0.0;
        for i in 0..d {
            let row = &self.precision[i * d..(i + 1) * d];
            let pr: f64 = row.iter().zip(&r).map(|(p, v)| p * v).sum();
            grad[i] = -pr;
            quad += r[i] * pr;
        }
        self.log_norm - 0.5 * quad
    }
}

/// Lower Cholesky factor of a row-major SPD matrix.
pub(crate) fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

fn spd_inverse(chol: &[f64], d: usize) -> Vec<f64> {
    // Solve L L^T X = I column by column.
    let mut inv = vec![0.0; d * d];
    for c in 0..d {
        let mut z = vec![0.0; d];
        for i in 0..d {
            let mut s = if i == c { 1.0 } else { 0.0 };
            for k in 0..i {
                s -= chol[i * d + k] * z[k];
            }
            z[i] = s / chol[i * d + i];
        }
        for i in (0..d).rev() {
            let mut s = z[i];
            for k in i + 1..d {
                s -= chol[k * d + i] * inv[k * d + c];
            }
            inv[i * d + c] = s / chol[i * d + i];
        }
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_normal_logpdf() {
        let g = GaussianTarget::standard(1);
        let v = g.log_density(&[1.0]);
        assert!((v - (-0.5 - 0.5 * (2.0 * std::f64::consts::PI).ln())).abs() < 1e-14);
    }

    #[test]
    fn correlated_inverse() {
        let cov = [1.0, 0.8, 0.8, 1.0];
        let g = GaussianTarget::new(vec![0.0, 0.0], &cov);
        let det = 1.0 - 0.64;
        let expected = [1.0 / det, -0.8 / det, -0.8 / det, 1.0 / det];
        for (a, b) in g.precision.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut grad = [0.0; 2];
        g.log_density_and_grad(&[1.0, 0.0], &mut grad);
        assert!((grad[0] + expected[0]).abs() < 1e-12);
        assert!((grad[1] + expected[2]).abs() < 1e-12);
    }
}
