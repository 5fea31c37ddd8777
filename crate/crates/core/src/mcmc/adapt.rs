//! Warm-up adaptation for NUTS: dual-averaging step size and windowed
//! diagonal mass-matrix estimation.

#[derive(Debug, Clone)]
pub(crate) struct DualAveraging {
    target: f64,
    mu: f64,
    gamma: f64,
    t0: f64,
    kappa: f64,
    h_bar: f64,
    log_eps: f64,
    log_eps_bar: f64,
    m: f64,
}

impl DualAveraging {
    pub(crate) fn new(target: f64, epsilon: f64) -> Self {
        DualAveraging {
            target,
            mu: (10.0 * epsilon).ln(),
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
            h_bar: 0.0,
            log_eps: epsilon.ln(),
            log_eps_bar: 0.0,
            m: 0.0,
        }
    }

    pub(crate) fn update(&mut self, accept_stat: f64) {
        self.m += 1.0;
        let eta = 1.0 / (self.m + self.t0);
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target - accept_stat);
        self.log_eps = self.mu - self.m.sqrt() / self.gamma * self.h_bar;
        let w = self.m.powf(-self.kappa);
        self.log_eps_bar = w * self.log_eps + (1.0 - w) * self.log_eps_bar;
    }

    /// Step size to use for the next iteration.
    pub(crate) fn current(&self) -> f64 {
        self.log_eps.exp()
    }

    /// Averaged step size, used once warm-up ends.
    pub(crate) fn final_step(&self) -> f64 {
        if self.m == 0.0 {
            self.current()
        } else {
            self.log_eps_bar.exp()
        }
    }
}

/// Welford running variance per coordinate.
#[derive(Debug, Clone)]
pub(crate) struct VarianceEstimator {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl VarianceEstimator {
    pub(crate) fn new(d: usize) -> Self {
        VarianceEstimator {
            n: 0.0,
            mean: vec![0.0; d],
            m2: vec![0.0; d],
        }
    }

    pub(crate) fn add(&mut self, x: &[f64]) {
        self.n += 1.0;
        for ((m, s), v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let delta = v - *m;
            *m += delta / self.n;
            *s += delta * (v - *m);
        }
    }

    /// Sample variance shrunk towards `1e-3`, as `n/(n+5) var + 1e-3 * 5/(n+5)`.
    pub(crate) fn regularized(&self) -> Vec<f64> {
        let n = self.n;
        self.m2
            .iter()
            .map(|s| {
                let var = s / (n - 1.0).max(1.0);
                (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            })
            .collect()
    }
}

/// Slow-phase windows for mass-matrix estimation: an initial fast buffer of
/// 75 iterations, doubling windows starting at 25, and a terminal fast
/// buffer of 50. Short warm-ups shrink the buffers to 15% / 75% / 10%.
#[derive(Debug, Clone)]
pub(crate) struct WindowSchedule {
    n_warmup: usize,
    init_buffer: usize,
    term_buffer: usize,
    window: usize,
    next_end: usize,
}

impl WindowSchedule {
    pub(crate) fn new(n_warmup: usize) -> Self {
        let (mut init_buffer, mut term_buffer, mut window) = (75, 50, 25);
        if n_warmup < 20 {
            // too short to adapt the metric at all
            return WindowSchedule {
                n_warmup,
                init_buffer: n_warmup,
                term_buffer: 0,
                window: 0,
                next_end: usize::MAX,
            };
        }
        if init_buffer + term_buffer + window > n_warmup {
            init_buffer = (0.15 * n_warmup as f64) as usize;
            term_buffer = (0.1 * n_warmup as f64) as usize;
            window = n_warmup - init_buffer - term_buffer;
        }
        let mut s = WindowSchedule {
            n_warmup,
            init_buffer,
            term_buffer,
            window,
            next_end: init_buffer + window - 1,
        };
        s.stretch_if_last();
        s
    }

    fn last_end(&self) -> usize {
        self.n_warmup - self.term_buffer - 1
    }

    fn stretch_if_last(&mut self) {
        if self.next_end != self.last_end() && self.next_end + 2 * self.window >= self.n_warmup - self.term_buffer {
            self.next_end = self.last_end();
        }
    }

    /// Whether iteration `i` (0-based) contributes to the variance estimate.
    pub(crate) fn in_slow_phase(&self, i: usize) -> bool {
        self.window > 0 && i >= self.init_buffer && i < self.n_warmup - self.term_buffer
    }

    /// Whether a window closes at iteration `i`; advances the schedule if so.
    pub(crate) fn window_ends(&mut self, i: usize) -> bool {
        if !self.in_slow_phase(i) || i != self.next_end {
            return false;
        }
        if self.next_end != self.last_end() {
            self.window *= 2;
            self.next_end = i + self.window;
            self.stretch_if_last();
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window_ends(n: usize) -> Vec<usize> {
        let mut s = WindowSchedule::new(n);
        (0..n).filter(|&i| s.window_ends(i)).collect()
    }

    #[test]
    fn standard_schedule_for_1000() {
        // windows of 25, 50, 100, 200 and a stretched final 500
        assert_eq!(window_ends(1000), vec![99, 149, 249, 449, 949]);
    }

    #[test]
    fn short_warmup_uses_one_window() {
        assert_eq!(window_ends(100), vec![89]);
        assert!(window_ends(10).is_empty());
    }

    #[test]
    fn dual_averaging_moves_towards_target() {
        let mut da = DualAveraging::new(0.8, 1.0);
        // always accepting: step size must grow
        for _ in 0..50 {
            da.update(1.0);
        }
        assert!(da.final_step() > 1.0);
        let mut da = DualAveraging::new(0.8, 1.0);
        for _ in 0..50 {
            da.update(0.1);
        }
        assert!(da.final_step() < 1.0);
    }

    #[test]
    fn regularized_variance() {
        let mut v = VarianceEstimator::new(1);
        for x in [1.0, 2.0, 3.0, 4.0, 5.0] {
            v.add(&[x]);
        }
        // var = 2.5, n = 5
        let expected = 0.5 * 2.5 + 1e-3 * 0.5;
        assert!((v.regularized()[0] - expected).abs() < 1e-15);
    }
}
