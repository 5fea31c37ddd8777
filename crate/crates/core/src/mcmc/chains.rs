use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::ParamLayout;

/// Per-chain sampler statistics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChainStats {
    /// Mean acceptance probability (NUTS: mean tree acceptance statistic).
    pub acceptance: f64,
    pub divergences: usize,
    /// Final step size, for gradient-based samplers.
    pub step_size: Option<f64>,
    pub warmup_seconds: f64,
    /// Seconds since the end of warm-up at which each draw was produced.
    pub draw_seconds: Vec<f64>,
    /// Leapfrog steps taken, warm-up included (gradient-based samplers only).
    pub gradient_evals: usize,
}

/// Post-warm-up draws of one chain, row-major `n_draws x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub draws: Vec<f64>,
    pub stats: ChainStats,
}

/// Draws from several independent chains over the same parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSet {
    names: Vec<String>,
    chains: Vec<Chain>,
    /// Whether the chains ran concurrently (affects wall-clock accounting).
    pub parallel: bool,
}

impl ChainSet {
    pub fn new(names: Vec<String>, chains: Vec<Chain>, parallel: bool) -> Result<Self> {
        let d = names.len();
        if d == 0 {
            return Err(Error::Sampler("chain set needs at least one parameter".into()));
        }
        for c in &chains {
            if c.draws.len() % d != 0 {
                return Err(Error::Shape {
                    expected: d,
                    got: c.draws.len() % d,
                });
            }
            if c.draws.iter().any(|v| !v.is_finite()) {
                return Err(Error::Sampler("non-finite draw".into()));
            }
        }
        Ok(ChainSet {
            names,
            chains,
            parallel,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    /// Draws per chain (shortest chain).
    pub fn n_draws(&self) -> usize {
        self.chains
            .iter()
            .map(|c| c.draws.len() / self.dim())
            .min()
            .unwrap_or(0)
    }

    pub fn chains(&self) -> &[Chain] {
        &self.chains
    }

    pub fn draw(&self, chain: usize, i: usize) -> &[f64] {
        let d = self.dim();
        &self.chains[chain].draws[i * d..(i + 1) * d]
    }

    /// All draws of all chains, chain-major.
    pub fn iter_draws(&self) -> impl Iterator<Item = &[f64]> + '_ {
        let d = self.dim();
        self.chains.iter().flat_map(move |c| c.draws.chunks_exact(d))
    }

    /// Values of parameter `p` for each chain, truncated to `len` draws.
    pub fn param_prefix(&self, p: usize, len: usize) -> Vec<Vec<f64>> {
        let d = self.dim();
        self.chains
            .iter()
            .map(|c| c.draws.chunks_exact(d).take(len).map(|row| row[p]).collect())
            .collect()
    }

    pub fn param(&self, p: usize) -> Vec<Vec<f64>> {
        self.param_prefix(p, usize::MAX)
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// The first `len` draws of every chain.
    pub fn prefix(&self, len: usize) -> ChainSet {
        let d = self.dim();
        ChainSet {
            names: self.names.clone(),
            chains: self
                .chains
                .iter()
                .map(|c| {
                    let keep = len.min(c.draws.len() / d);
                    let mut stats = c.stats.clone();
                    stats.draw_seconds.truncate(keep);
                    Chain {
                        draws: c.draws[..keep * d].to_vec(),
                        stats,
                    }
                })
                .collect(),
            parallel: self.parallel,
        }
    }

    /// Sampling wall time including warm-up.
    pub fn wall_seconds(&self) -> f64 {
        self.seconds_until(usize::MAX)
    }

    /// Wall time needed to produce warm-up plus the first `len` draws of each chain.
    pub fn seconds_until(&self, len: usize) -> f64 {
        let per_chain = self.chains.iter().map(|c| {
            let s = &c.stats;
            let sampling = match len.min(s.draw_seconds.len()) {
                0 => 0.0,
                k => s.draw_seconds[k - 1],
            };
            s.warmup_seconds + sampling
        });
        if self.parallel {
            per_chain.fold(0.0, f64::max)
        } else {
            per_chain.sum()
        }
    }

    pub fn mean_acceptance(&self) -> f64 {
        self.chains.iter().map(|c| c.stats.acceptance).sum::<f64>() / self.chains.len().max(1) as f64
    }

    pub fn divergences(&self) -> usize {
        self.chains.iter().map(|c| c.stats.divergences).sum()
    }

    /// Writes one CSV per layout block into `dir`, named `{prefix}_{block}.csv`.
    ///
    /// Columns are `draw` followed by `chain{c}` (scalar blocks) or
    /// `chain{c}[{j}]` (vector blocks).
    pub fn write_block_csvs(&self, layout: &ParamLayout, dir: &Path, prefix: &str) -> Result<Vec<std::path::PathBuf>> {
        if layout.len() != self.dim() {
            return Err(Error::Shape {
                expected: layout.len(),
                got: self.dim(),
            });
        }
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        for block in layout.blocks() {
            let path = dir.join(format!("{prefix}_{}.csv", block.name));
            let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut w = std::io::BufWriter::new(file);
            let scalar = block.len == 1;
            let mut header = vec!["draw".to_string()];
            for c in 0..self.n_chains() {
                for j in 0..block.len {
                    header.push(if scalar {
                        format!("chain{c}")
                    } else {
                        format!("chain{c}[{j}]")
                    });
                }
            }
            let io = |e| Error::io(&path, e);
            writeln!(w, "{}", header.join(",")).map_err(io)?;
            for i in 0..self.n_draws() {
                write!(w, "{i}").map_err(io)?;
                for c in 0..self.n_chains() {
                    for v in &self.draw(c, i)[block.range()] {
                        write!(w, ",{v}").map_err(io)?;
                    }
                }
                writeln!(w).map_err(io)?;
            }
            w.flush().map_err(io)?;
            written.push(path);
        }
        Ok(written)
    }
}
