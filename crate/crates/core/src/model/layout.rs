use std::collections::BTreeMap;
use std::ops::{Deref, DerefMut, Range};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Slope,
    Intercept,
    Changepoints,
    Seasonality,
    LogSigma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub kind: BlockKind,
    pub offset: usize,
    pub len: usize,
}

impl Block {
    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Named blocks of the flat parameter vector, in compile order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamLayout {
    blocks: Vec<Block>,
}

impl ParamLayout {
    pub(crate) fn push(&mut self, name: String, kind: BlockKind, len: usize) -> Result<Range<usize>> {
        if self.block(&name).is_some() {
            return Err(Error::Model(format!("duplicate parameter block `{name}`")));
        }
        let offset = self.len();
        self.blocks.push(Block {
            name,
            kind,
            offset,
            len,
        });
        Ok(offset..offset + len)
    }

    pub fn len(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.offset + b.len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    /// Per-coordinate labels, e.g. `k`, `delta[3]`.
    pub fn coordinate_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.len());
        for b in &self.blocks {
            if b.len == 1 && b.kind != BlockKind::Seasonality && b.kind != BlockKind::Changepoints {
                names.push(b.name.clone());
            } else {
                names.extend((0..b.len).map(|j| format!("{}[{j}]", b.name)));
            }
        }
        names
    }

    pub fn check(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.len() {
            return Err(Error::Shape {
                expected: self.len(),
                got: params.len(),
            });
        }
        Ok(())
    }

    pub fn unflatten(&self, params: &[f64]) -> Result<ParamValues> {
        self.check(params)?;
        Ok(ParamValues(
            self.blocks
                .iter()
                .map(|b| (b.name.clone(), params[b.range()].to_vec()))
                .collect(),
        ))
    }

    pub fn flatten(&self, values: &ParamValues) -> Result<ParamVector> {
        let mut out = vec![0.0; self.len()];
        for b in &self.blocks {
            let v = values
                .0
                .get(&b.name)
                .ok_or_else(|| Error::Model(format!("unbound parameter block `{}`", b.name)))?;
            if v.len() != b.len {
                return Err(Error::Shape {
                    expected: b.len,
                    got: v.len(),
                });
            }
            out[b.range()].copy_from_slice(v);
        }
        if values.0.len() != self.blocks.len() {
            let extra: Vec<_> = values
                .0
                .keys()
                .filter(|k| self.block(k).is_none())
                .cloned()
                .collect();
            return Err(Error::Model(format!("unknown parameter blocks {extra:?}")));
        }
        Ok(ParamVector(out))
    }
}

/// Parameters keyed by block name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamValues(pub BTreeMap<String, Vec<f64>>);

/// The flat unconstrained parameter vector every engine works on.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamVector(pub Vec<f64>);

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        ParamVector(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn layout() -> ParamLayout {
        let mut l = ParamLayout::default();
        l.push("k".into(), BlockKind::Slope, 1).unwrap();
        l.push("m".into(), BlockKind::Intercept, 1).unwrap();
        l.push("delta".into(), BlockKind::Changepoints, 3).unwrap();
        l.push("log_sigma".into(), BlockKind::LogSigma, 1).unwrap();
        l
    }

    #[test]
    fn names_and_duplicates() {
        let mut l = layout();
        assert_eq!(l.len(), 6);
        assert_eq!(
            l.coordinate_names(),
            vec!["k", "m", "delta[0]", "delta[1]", "delta[2]", "log_sigma"]
        );
        assert!(l.push("k".into(), BlockKind::Slope, 1).is_err());
    }

    #[test]
    fn flatten_rejects_missing_blocks() {
        let l = layout();
        let mut v = l.unflatten(&[0.0; 6]).unwrap();
        v.0.remove("m");
        assert!(l.flatten(&v).is_err());
        assert!(l.unflatten(&[0.0; 5]).is_err());
    }

    proptest! {
        #[test]
        fn unflatten_flatten_roundtrip(p in prop::collection::vec(-1e3f64..1e3, 6)) {
            let l = layout();
            let back = l.flatten(&l.unflatten(&p).unwrap()).unwrap();
            prop_assert_eq!(back.0, p);
        }
    }
}
