use crate::density::LogDensity;

/// Position, momentum and the cached log-density and gradient at the position.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub grad: Vec<f64>,
    pub log_density: f64,
}

impl PhasePoint {
    pub fn new<T: LogDensity + ?Sized>(target: &T, q: Vec<f64>, p: Vec<f64>) -> Self {
        let mut grad = vec![0.0; q.len()];
        let log_density = target.log_density_and_grad(&q, &mut grad);
        PhasePoint {
            q,
            p,
            grad,
            log_density,
        }
    }

    /// `-log p(q) + K(p)`.
    pub fn hamiltonian(&self, inv_mass: &[f64]) -> f64 {
        -self.log_density + kinetic_energy(&self.p, inv_mass)
    }

    pub(crate) fn is_finite(&self) -> bool {
        self.log_density.is_finite() && self.grad.iter().all(|g| g.is_finite())
    }

    /// Velocity `M^{-1} p`.
    pub(crate) fn velocity(&self, inv_mass: &[f64]) -> Vec<f64> {
        self.p.iter().zip(inv_mass).map(|(p, m)| p * m).collect()
    }
}

/// `p^T M^{-1} p / 2` for a diagonal inverse mass matrix.
pub fn kinetic_energy(p: &[f64], inv_mass: &[f64]) -> f64 {
    0.5 * p.iter().zip(inv_mass).map(|(p, m)| p * p * m).sum::<f64>()
}

/// One leapfrog step of size `epsilon` (negative steps integrate backwards).
///
/// `inv_mass` is the diagonal of `M^{-1}`; positions move by
/// `epsilon * M^{-1} p`.
pub fn leapfrog<T: LogDensity + ?Sized>(target: &T, point: &PhasePoint, epsilon: f64, inv_mass: &[f64]) -> PhasePoint {
    let half = 0.5 * epsilon;
    let p_half: Vec<f64> = point.p.iter().zip(&point.grad).map(|(p, g)| p + half * g).collect();
    let q: Vec<f64> = point
        .q
        .iter()
        .zip(&p_half)
        .zip(inv_mass)
        .map(|((q, p), m)| q + epsilon * m * p)
        .collect();
    let mut grad = vec![0.0; q.len()];
    let log_density = target.log_density_and_grad(&q, &mut grad);
    let p = p_half.iter().zip(&grad).map(|(p, g)| p + half * g).collect();
    PhasePoint {
        q,
        p,
        grad,
        log_density,
    }
}
