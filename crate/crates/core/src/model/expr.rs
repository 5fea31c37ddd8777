use std::fmt;
use std::ops::{Add, Mul};

/// Changepoint count used by [`ModelExpr::linear_trend`] callers that want
/// the conventional default.
pub const DEFAULT_CHANGEPOINTS: usize = 25;

#[derive(Debug, Clone, PartialEq)]
pub enum ComponentSpec {
    /// Piecewise-linear trend with slope `k`, offset `m` and one slope
    /// adjustment per changepoint.
    LinearTrend { n_changepoints: usize },
    /// Constant offset `m`.
    FlatTrend,
    /// Truncated Fourier series with `2 * order` coefficients.
    FourierSeasonality {
        name: String,
        period_days: f64,
        order: usize,
    },
    Constant(f64),
}

/// Expression tree over components, closed under sum and product.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelExpr {
    Leaf(ComponentSpec),
    Sum(Vec<ModelExpr>),
    Product(Vec<ModelExpr>),
}

impl ModelExpr {
    pub fn linear_trend(n_changepoints: usize) -> Self {
        ModelExpr::Leaf(ComponentSpec::LinearTrend { n_changepoints })
    }

    pub fn flat_trend() -> Self {
        ModelExpr::Leaf(ComponentSpec::FlatTrend)
    }

    pub fn fourier(name: impl Into<String>, period_days: f64, order: usize) -> Self {
        ModelExpr::Leaf(ComponentSpec::FourierSeasonality {
            name: name.into(),
            period_days,
            order,
        })
    }

    pub fn constant(value: f64) -> Self {
        ModelExpr::Leaf(ComponentSpec::Constant(value))
    }

    /// Leaves in left-to-right order.
    pub fn leaves(&self) -> Vec<&ComponentSpec> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a ComponentSpec>) {
        match self {
            ModelExpr::Leaf(c) => out.push(c),
            ModelExpr::Sum(ch) | ModelExpr::Product(ch) => {
                ch.iter().for_each(|c| c.collect_leaves(out))
            }
        }
    }
}

/// Linear trend with the default changepoint count plus yearly (order 10)
/// and weekly (order 3) seasonality, combined additively.
pub fn build_default_model() -> ModelExpr {
    ModelExpr::linear_trend(DEFAULT_CHANGEPOINTS)
        + ModelExpr::fourier("yearly", 365.25, 10)
        + ModelExpr::fourier("weekly", 7.0, 3)
}

impl Add for ModelExpr {
    type Output = ModelExpr;

    fn add(self, rhs: ModelExpr) -> ModelExpr {
        let mut children = match self {
            ModelExpr::Sum(ch) => ch,
            other => vec![other],
        };
        match rhs {
            ModelExpr::Sum(ch) => children.extend(ch),
            other => children.push(other),
        }
        ModelExpr::Sum(children)
    }
}

impl Mul for ModelExpr {
    type Output = ModelExpr;

    fn mul(self, rhs: ModelExpr) -> ModelExpr {
        let mut children = match self {
            ModelExpr::Product(ch) => ch,
            other => vec![other],
        };
        match rhs {
            ModelExpr::Product(ch) => children.extend(ch),
            other => children.push(other),
        }
        ModelExpr::Product(children)
    }
}

impl Add<f64> for ModelExpr {
    type Output = ModelExpr;

    fn add(self, rhs: f64) -> ModelExpr {
        self + ModelExpr::constant(rhs)
    }
}

impl Add<ModelExpr> for f64 {
    type Output = ModelExpr;

    fn add(self, rhs: ModelExpr) -> ModelExpr {
        ModelExpr::constant(self) + rhs
    }
}

impl Mul<f64> for ModelExpr {
    type Output = ModelExpr;

    fn mul(self, rhs: f64) -> ModelExpr {
        self * ModelExpr::constant(rhs)
    }
}

impl Mul<ModelExpr> for f64 {
    type Output = ModelExpr;

    fn mul(self, rhs: ModelExpr) -> ModelExpr {
        ModelExpr::constant(self) * rhs
    }
}

impl fmt::Display for ComponentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ComponentSpec::LinearTrend { n_changepoints } => write!(f, "LinearTrend({n_changepoints})"),
            ComponentSpec::FlatTrend => write!(f, "FlatTrend()"),
            ComponentSpec::FourierSeasonality {
                name,
                period_days,
                order,
            } => write!(f, "FourierSeasonality({name}, {period_days}, {order})"),
            ComponentSpec::Constant(v) => write!(f, "{v}"),
        }
    }
}

impl fmt::Display for ModelExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelExpr::Leaf(c) => write!(f, "{c}"),
            ModelExpr::Sum(ch) => {
                for (i, c) in ch.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" + ")?;
                    }
                    write!(f, "{c}")?;
                }
                Ok(())
            }
            ModelExpr::Product(ch) => {
                for (i, c) in ch.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" * ")?;
                    }
                    match c {
                        ModelExpr::Sum(_) => write!(f, "({c})")?,
                        _ => write!(f, "{c}")?,
                    }
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_model_shape() {
        let m = build_default_model();
        match &m {
            ModelExpr::Sum(ch) => assert_eq!(ch.len(), 3),
            other => panic!("expected sum, got {other:?}"),
        }
        assert_eq!(
            m.to_string(),
            "LinearTrend(25) + FourierSeasonality(yearly, 365.25, 10) + FourierSeasonality(weekly, 7, 3)"
        );
    }

    #[test]
    fn operators_build_multiplicative_tree() {
        let m = ModelExpr::linear_trend(25)
            * (1.0
                + ModelExpr::fourier("yearly", 365.25, 10)
                + ModelExpr::fourier("monthly", 30.5, 5)
                + ModelExpr::fourier("weekly", 7.0, 3));
        let expected = ModelExpr::Product(vec![
            ModelExpr::linear_trend(25),
            ModelExpr::Sum(vec![
                ModelExpr::constant(1.0),
                ModelExpr::fourier("yearly", 365.25, 10),
                ModelExpr::fourier("monthly", 30.5, 5),
                ModelExpr::fourier("weekly", 7.0, 3),
            ]),
        ]);
        assert_eq!(m, expected);
        assert_eq!(m.leaves().len(), 5);
    }
}
