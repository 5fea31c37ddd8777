use std::f64::consts::PI;
use std::ops::Range;

use super::expr::{ComponentSpec, ModelExpr};
use super::layout::{BlockKind, ParamLayout};
use crate::error::{Error, Result};
use crate::series::TimePoints;

/// Share of the training range that receives changepoints.
const CHANGEPOINT_RANGE: f64 = 0.8;

#[derive(Debug, Clone)]
enum Node {
    Trend {
        k: usize,
        m: usize,
        delta: Range<usize>,
    },
    Flat {
        m: usize,
    },
    Fourier {
        beta: Range<usize>,
        period_days: f64,
        order: usize,
    },
    Constant(f64),
    Sum(Vec<usize>),
    Product(Vec<usize>),
}

/// An expression tree bound to a parameter layout.
///
/// Nodes are stored in post-order so a forward sweep over indices always
/// sees children before parents.
#[derive(Debug, Clone)]
pub struct CompiledModel {
    expr: ModelExpr,
    layout: ParamLayout,
    nodes: Vec<Node>,
    changepoints: Vec<f64>,
    log_sigma: usize,
}

#[derive(Debug, Clone)]
enum Features {
    None,
    /// Number of changepoints at or before each time point.
    ActiveChangepoints(Vec<usize>),
    /// Row-major `n x 2*order` Fourier matrix.
    Fourier(Vec<f64>),
}

/// Per-time-point features for one set of evaluation times.
#[derive(Debug, Clone)]
pub struct Design {
    times: TimePoints,
    features: Vec<Features>,
}

impl Design {
    pub fn times(&self) -> &TimePoints {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

impl CompiledModel {
    /// Binds `expr` to parameter blocks and places changepoints uniformly
    /// over the first 80% of the training time range.
    pub fn compile(expr: &ModelExpr, train_times: &TimePoints) -> Result<Self> {
        let (t_min, t_max) = train_times
            .t_scaled
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| (lo.min(*t), hi.max(*t)));
        let mut builder = Builder {
            layout: ParamLayout::default(),
            nodes: Vec::new(),
            changepoints: Vec::new(),
            t_range: (t_min, t_max),
        };
        builder.visit(expr)?;
        let log_sigma = builder.layout.push("log_sigma".into(), BlockKind::LogSigma, 1)?.start;
        Ok(CompiledModel {
            expr: expr.clone(),
            layout: builder.layout,
            nodes: builder.nodes,
            changepoints: builder.changepoints,
            log_sigma,
        })
    }

    pub fn expr(&self) -> &ModelExpr {
        &self.expr
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.len()
    }

    /// Changepoint locations in scaled trend-time (empty without a linear trend).
    pub fn changepoints(&self) -> &[f64] {
        &self.changepoints
    }

    pub fn log_sigma_index(&self) -> usize {
        self.log_sigma
    }

    pub fn design(&self, times: &TimePoints) -> Design {
        let features = self
            .nodes
            .iter()
            .map(|node| match node {
                Node::Trend { .. } => Features::ActiveChangepoints(
                    times
                        .t_scaled
                        .iter()
                        .map(|t| self.changepoints.partition_point(|s| s <= t))
                        .collect(),
                ),
                Node::Fourier {
                    period_days, order, ..
                } => Features::Fourier(fourier_rows(&times.t_days, *period_days, *order)),
                _ => Features::None,
            })
            .collect();
        Design {
            times: times.clone(),
            features,
        }
    }

    /// Changepoint indicator matrix `A[i][j] = 1 iff t_i >= s_j`.
    pub fn indicator_matrix(&self, design: &Design) -> Vec<Vec<u8>> {
        design
            .times
            .t_scaled
            .iter()
            .map(|t| self.changepoints.iter().map(|s| u8::from(t >= s)).collect())
            .collect()
    }

    /// Noise-free mean of the model at the design's time points.
    pub fn eval_mean(&self, params: &[f64], design: &Design) -> Result<Vec<f64>> {
        self.layout.check(params)?;
        let mut values = self.forward(params, design);
        Ok(values.pop().unwrap_or_else(|| vec![0.0; design.len()]))
    }

    pub(crate) fn forward(&self, params: &[f64], design: &Design) -> Vec<Vec<f64>> {
        let n = design.len();
        let t = &design.times.t_scaled;
        let mut values: Vec<Vec<f64>> = Vec::with_capacity(self.nodes.len());
        for (id, node) in self.nodes.iter().enumerate() {
            let v = match node {
                Node::Trend { k, m, delta } => {
                    let counts = match &design.features[id] {
                        Features::ActiveChangepoints(c) => c,
                        _ => unreachable!("trend node without changepoint features"),
                    };
                    let delta = &params[delta.clone()];
                    // cumulative slope and offset adjustments by active count
                    let mut slope = Vec::with_capacity(delta.len() + 1);
                    let mut offset = Vec::with_capacity(delta.len() + 1);
                    slope.push(params[*k]);
                    offset.push(params[*m]);
                    for (j, d) in delta.iter().enumerate() {
                        slope.push(slope[j] + d);
                        offset.push(offset[j] - self.changepoints[j] * d);
                    }
                    (0..n).map(|i| slope[counts[i]] * t[i] + offset[counts[i]]).collect()
                }
                Node::Flat { m } => vec![params[*m]; n],
                Node::Fourier { beta, .. } => {
                    let x = match &design.features[id] {
                        Features::Fourier(x) => x,
                        _ => unreachable!("fourier node without features"),
                    };
                    let beta = &params[beta.clone()];
                    x.chunks_exact(beta.len())
                        .map(|row| row.iter().zip(beta).map(|(a, b)| a * b).sum())
                        .collect()
                }
                Node::Constant(c) => vec![*c; n],
                Node::Sum(children) => {
                    let mut acc = vec![0.0; n];
                    for c in children {
                        acc.iter_mut().zip(&values[*c]).for_each(|(a, v)| *a += v);
                    }
                    acc
                }
                Node::Product(children) => {
                    let mut acc = vec![1.0; n];
                    for c in children {
                        acc.iter_mut().zip(&values[*c]).for_each(|(a, v)| *a *= v);
                    }
                    acc
                }
            };
            values.push(v);
        }
        values
    }

    /// Reverse sweep: accumulates `d(objective)/d(params)` into `grad` given
    /// the adjoint of the root's output.
    pub(crate) fn backward(
        &self,
        design: &Design,
        values: &[Vec<f64>],
        root_adjoint: Vec<f64>,
        grad: &mut [f64],
    ) {
        let n = design.len();
        let t = &design.times.t_scaled;
        let mut adjoints: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if let Some(last) = adjoints.last_mut() {
            *last = Some(root_adjoint);
        }
        for id in (0..self.nodes.len()).rev() {
            let Some(adj) = adjoints[id].take() else {
                continue;
            };
            match &self.nodes[id] {
                Node::Trend { k, m, delta } => {
                    let counts = match &design.features[id] {
                        Features::ActiveChangepoints(c) => c,
                        _ => unreachable!(),
                    };
                    let s = delta.len();
                    let mut g_by_count = vec![0.0; s + 1];
                    let mut gt_by_count = vec![0.0; s + 1];
                    for i in 0..n {
                        g_by_count[counts[i]] += adj[i];
                        gt_by_count[counts[i]] += adj[i] * t[i];
                    }
                    let total_g: f64 = g_by_count.iter().sum();
                    let total_gt: f64 = gt_by_count.iter().sum();
                    grad[*k] += total_gt;
                    grad[*m] += total_g;
                    // d/d delta_j sums over points with more than j active changepoints
                    let (mut tail_g, mut tail_gt) = (0.0, 0.0);
                    for j in (0..s).rev() {
                        tail_g += g_by_count[j + 1];
                        tail_gt += gt_by_count[j + 1];
                        grad[delta.start + j] += tail_gt - self.changepoints[j] * tail_g;
                    }
                }
                Node::Flat { m } => grad[*m] += adj.iter().sum::<f64>(),
                Node::Fourier { beta, .. } => {
                    let x = match &design.features[id] {
                        Features::Fourier(x) => x,
                        _ => unreachable!(),
                    };
                    let g = &mut grad[beta.clone()];
                    for (row, a) in x.chunks_exact(g.len()).zip(&adj) {
                        g.iter_mut().zip(row).for_each(|(gj, xj)| *gj += a * xj);
                    }
                }
                Node::Constant(_) => {}
                Node::Sum(children) => {
                    for c in children {
                        accumulate(&mut adjoints[*c], &adj);
                    }
                }
                Node::Product(children) => {
                    for (pos, c) in children.iter().enumerate() {
                        let mut local = adj.clone();
                        for (other_pos, other) in children.iter().enumerate() {
                            if other_pos != pos {
                                local.iter_mut().zip(&values[*other]).for_each(|(a, v)| *a *= v);
                            }
                        }
                        accumulate(&mut adjoints[*c], &local);
                    }
                }
            }
        }
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, add: &[f64]) {
    match slot {
        Some(v) => v.iter_mut().zip(add).for_each(|(a, b)| *a += b),
        None => *slot = Some(add.to_vec()),
    }
}

struct Builder {
    layout: ParamLayout,
    nodes: Vec<Node>,
    changepoints: Vec<f64>,
    t_range: (f64, f64),
}

impl Builder {
    fn visit(&mut self, expr: &ModelExpr) -> Result<usize> {
        let node = match expr {
            ModelExpr::Leaf(spec) => self.leaf(spec)?,
            ModelExpr::Sum(children) | ModelExpr::Product(children) => {
                if children.is_empty() {
                    return Err(Error::Model("empty sum or product".into()));
                }
                let ids = children
                    .iter()
                    .map(|c| self.visit(c))
                    .collect::<Result<Vec<_>>>()?;
                match expr {
                    ModelExpr::Sum(_) => Node::Sum(ids),
                    _ => Node::Product(ids),
                }
            }
        };
        self.nodes.push(node);
        Ok(self.nodes.len() - 1)
    }

    fn leaf(&mut self, spec: &ComponentSpec) -> Result<Node> {
        Ok(match spec {
            ComponentSpec::LinearTrend { n_changepoints } => {
                let k = self.layout.push("k".into(), BlockKind::Slope, 1)?.start;
                let m = self.layout.push("m".into(), BlockKind::Intercept, 1)?.start;
                let delta = self
                    .layout
                    .push("delta".into(), BlockKind::Changepoints, *n_changepoints)?;
                let (lo, hi) = self.t_range;
                if !(hi > lo) && *n_changepoints > 0 {
                    return Err(Error::Model("changepoints need a non-degenerate time range".into()));
                }
                let span = CHANGEPOINT_RANGE * (hi - lo);
                let n = *n_changepoints as f64;
                self.changepoints = (1..=*n_changepoints)
                    .map(|j| lo + span * j as f64 / (n + 1.0))
                    .collect();
                Node::Trend { k, m, delta }
            }
            ComponentSpec::FlatTrend => Node::Flat {
                m: self.layout.push("m".into(), BlockKind::Intercept, 1)?.start,
            },
            ComponentSpec::FourierSeasonality {
                name,
                period_days,
                order,
            } => {
                if !(*period_days > 0.0) || !period_days.is_finite() {
                    return Err(Error::Model(format!(
                        "seasonality `{name}` needs a positive period, got {period_days}"
                    )));
                }
                if *order == 0 {
                    return Err(Error::Model(format!("seasonality `{name}` needs order >= 1")));
                }
                let beta = self
                    .layout
                    .push(format!("beta_{name}"), BlockKind::Seasonality, 2 * order)?;
                Node::Fourier {
                    beta,
                    period_days: *period_days,
                    order: *order,
                }
            }
            ComponentSpec::Constant(v) => Node::Constant(*v),
        })
    }
}

fn fourier_rows(t_days: &[f64], period_days: f64, order: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(t_days.len() * 2 * order);
    for t in t_days {
        for h in 1..=order {
            let arg = 2.0 * PI * h as f64 * t / period_days;
            out.push(arg.sin());
            out.push(arg.cos());
        }
    }
    out
}

/// Fourier feature rows: columns `(sin, cos)` of `2 pi n t / period` for
/// harmonics `n = 1..=order`.
pub fn fourier_features(t_days: &[f64], period_days: f64, order: usize) -> Result<Vec<Vec<f64>>> {
    if !(period_days > 0.0) {
        return Err(Error::Model(format!("non-positive period {period_days}")));
    }
    if order == 0 {
        return Err(Error::Model("order must be at least 1".into()));
    }
    Ok(fourier_rows(t_days, period_days, order)
        .chunks_exact(2 * order)
        .map(<[f64]>::to_vec)
        .collect())
}

/// Piecewise-linear trend `(k + A delta) t + (m + A gamma)` with
/// `gamma_j = -s_j delta_j`, continuous at every changepoint.
pub fn trend_eval(k: f64, m: f64, delta: &[f64], t_scaled: &[f64], changepoints: &[f64]) -> Result<Vec<f64>> {
    if delta.len() != changepoints.len() {
        return Err(Error::Shape {
            expected: changepoints.len(),
            got: delta.len(),
        });
    }
    if changepoints.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Model("changepoints must be strictly increasing".into()));
    }
    Ok(t_scaled
        .iter()
        .map(|&t| {
            let mut slope = k;
            let mut offset = m;
            for (s, d) in changepoints.iter().zip(delta) {
                if t >= *s {
                    slope += d;
                    offset -= s * d;
                }
            }
            slope * t + offset
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_default_model;

    fn unit_times(n: usize) -> TimePoints {
        TimePoints::from_scaled((0..n).map(|i| i as f64 / (n - 1) as f64).collect(), 730.0)
    }

    #[test]
    fn fourier_examples() {
        let r = fourier_features(&[0.0], 7.0, 2).unwrap();
        assert_eq!(r[0], vec![0.0, 1.0, 0.0, 1.0]);
        let r = fourier_features(&[3.5], 7.0, 1).unwrap();
        assert!(r[0][0].abs() < 1e-15 && (r[0][1] + 1.0).abs() < 1e-15);
        let r = fourier_features(&[7.0 / 4.0], 7.0, 2).unwrap();
        let expected = [1.0, 0.0, 0.0, -1.0];
        for (a, b) in r[0].iter().zip(expected) {
            assert!((a - b).abs() < 1e-15, "{:?}", r[0]);
        }
        assert!(fourier_features(&[0.0], 0.0, 1).is_err());
        assert!(fourier_features(&[0.0], -3.0, 1).is_err());
    }

    #[test]
    fn trend_examples() {
        let t = [0.0, 0.25, 0.9];
        assert_eq!(trend_eval(2.0, 1.0, &[0.0, 0.0], &t, &[0.3, 0.6]).unwrap(), vec![1.0, 1.5, 2.8]);
        let g = trend_eval(0.0, 0.0, &[1.0], &[0.75], &[0.5]).unwrap();
        assert_eq!(g, vec![0.25]);
        assert!(trend_eval(0.0, 0.0, &[1.0, 2.0], &[0.75], &[0.5]).is_err());
        // continuity at the changepoint
        let eps = 1e-13;
        let left = trend_eval(0.0, 0.0, &[1.0], &[0.5 - eps], &[0.5]).unwrap()[0];
        let at = trend_eval(0.0, 0.0, &[1.0], &[0.5], &[0.5]).unwrap()[0];
        assert!((left - at).abs() < 1e-12);
    }

    #[test]
    fn default_layout() {
        let model = CompiledModel::compile(&build_default_model(), &unit_times(50)).unwrap();
        assert_eq!(model.dim(), 54);
        let names: Vec<_> = model.layout().blocks().iter().map(|b| (b.name.as_str(), b.len)).collect();
        assert_eq!(
            names,
            vec![("k", 1), ("m", 1), ("delta", 25), ("beta_yearly", 20), ("beta_weekly", 6), ("log_sigma", 1)]
        );
        let cps = model.changepoints();
        assert_eq!(cps.len(), 25);
        assert!(cps[0] > 0.0 && cps[24] < 0.8 + 1e-12);
        assert!(cps.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn flat_only_layout() {
        let model = CompiledModel::compile(&ModelExpr::flat_trend(), &unit_times(5)).unwrap();
        assert_eq!(model.dim(), 2);
    }

    #[test]
    fn duplicate_blocks_rejected() {
        let e = ModelExpr::linear_trend(3) + ModelExpr::flat_trend();
        assert!(CompiledModel::compile(&e, &unit_times(5)).is_err());
        let e = ModelExpr::fourier("a", 7.0, 1) + ModelExpr::fourier("a", 30.0, 1);
        assert!(CompiledModel::compile(&e, &unit_times(5)).is_err());
        assert!(CompiledModel::compile(&ModelExpr::fourier("a", 0.0, 1), &unit_times(5)).is_err());
    }

    #[test]
    fn eval_mean_examples() {
        let times = unit_times(4);
        let m = CompiledModel::compile(&(ModelExpr::constant(2.0) + ModelExpr::constant(3.0)), &times).unwrap();
        let d = m.design(&times);
        assert_eq!(m.eval_mean(&[0.0], &d).unwrap(), vec![5.0; 4]);

        let m = CompiledModel::compile(&(2.0 * ModelExpr::flat_trend()), &times).unwrap();
        let d = m.design(&times);
        assert_eq!(m.eval_mean(&[3.0, 0.0], &d).unwrap(), vec![6.0; 4]);
        assert!(m.eval_mean(&[3.0], &d).is_err());

        let m = CompiledModel::compile(&build_default_model(), &times).unwrap();
        let d = m.design(&times);
        assert_eq!(m.eval_mean(&vec![0.0; 54], &d).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn indicator_matrix_matches_definition() {
        let times = unit_times(30);
        let m = CompiledModel::compile(&ModelExpr::linear_trend(5), &times).unwrap();
        let d = m.design(&times);
        let a = m.indicator_matrix(&d);
        for (i, row) in a.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert_eq!(*v == 1, times.t_scaled[i] >= m.changepoints()[j]);
            }
        }
    }

    #[test]
    fn compiled_trend_matches_closed_form() {
        let times = unit_times(40);
        let m = CompiledModel::compile(&ModelExpr::linear_trend(4), &times).unwrap();
        let d = m.design(&times);
        let params = [0.3, -0.2, 0.5, -1.0, 0.25, 2.0, 0.0];
        let got = m.eval_mean(&params, &d).unwrap();
        let want = trend_eval(0.3, -0.2, &params[2..6], &times.t_scaled, m.changepoints()).unwrap();
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn multiplicative_equals_expanded_additive() {
        let times = unit_times(60);
        let trend = ModelExpr::linear_trend(5);
        let seas = ModelExpr::fourier("s", 30.0, 2);
        let mult = CompiledModel::compile(&(trend.clone() * (1.0 + seas.clone())), &times).unwrap();
        let trend_only = CompiledModel::compile(&trend, &times).unwrap();
        let seas_only = CompiledModel::compile(&seas, &times).unwrap();
        let p: Vec<f64> = (0..mult.dim()).map(|i| ((i * 7 % 11) as f64 - 5.0) / 7.0).collect();
        let tr = trend_only.eval_mean(&[&p[..7], &[0.0]].concat(), &trend_only.design(&times)).unwrap();
        let s = seas_only.eval_mean(&[&p[7..11], &[0.0]].concat(), &seas_only.design(&times)).unwrap();
        let got = mult.eval_mean(&p, &mult.design(&times)).unwrap();
        for i in 0..times.len() {
            assert!((got[i] - (tr[i] + tr[i] * s[i])).abs() < 1e-12);
        }
    }
}
