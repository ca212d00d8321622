//! Retained posterior draws and their on-disk format.
//!
//! A draws directory holds:
//!
//! - `meta.json`: model and chain settings, person ids, parameter names,
//!   content hashes and retained counts;
//! - `columns.txt`: one column name per line;
//! - `chain_<c>.bin`: retained rows of chain `c`, row-major little-endian
//!   `f64`;
//! - `chain_<c>_trace.bin`: per-iteration `loglik, rho, acceptance`.
//!
//! Row layout: for every block and component `pi, zeta[R], omega` (lower
//! triangle, row by row) `, a[R]`; a `dp_alpha` column after the components
//! of a DP block; then every person's parameters; then the total
//! log-likelihood.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::to_csv_string;
use crate::error::{Error, Result};
use crate::io::{sha256_hex, write_dir_atomic};
use crate::stats::CovMatrix;

use super::chain::Problem;
use super::state::SamplerState;
use super::{BlockModel, McmcConfig, MixingKind, ModelSpec};

pub const TRACE_COLUMNS: [&str; 3] = ["loglik", "rho", "acceptance"];
pub const FORMAT_VERSION: u32 = 1;

/// Position of one block's population parameters inside a row.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockLayout {
    pub indices: Vec<usize>,
    pub kind: MixingKind,
    pub dim: usize,
    pub components: usize,
    pub offset: usize,
    pub component_width: usize,
    pub dp_alpha_column: Option<usize>,
}

/// Decoded population parameters of one block at one retained draw.
#[derive(Clone, Debug)]
pub struct BlockPopulation {
    pub weights: Vec<f64>,
    pub zeta: Vec<Vec<f64>>,
    pub omega: Vec<CovMatrix>,
    pub dp_alpha: Option<f64>,
}

impl BlockPopulation {
    /// Mixture density `Σ_k π_k φ(x | ζ_k, Ω_k)`.
    pub fn density(&self, x: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(self.zeta.iter().zip(&self.omega))
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, (z, o))| w * o.log_density(x, z).exp())
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DrawLayout {
    pub blocks: Vec<BlockLayout>,
    pub n_persons: usize,
    pub n_params: usize,
    pub person_offset: usize,
    pub loglik_column: usize,
}

fn tri(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

impl DrawLayout {
    pub fn new(blocks: &[BlockModel], n_persons: usize, n_params: usize) -> Self {
        let mut offset = 0;
        let mut out = Vec::with_capacity(blocks.len());
        for b in blocks {
            let dim = b.dim();
            let component_width = 1 + 2 * dim + tri(dim);
            let k = b.components();
            let dp = b.mixing.kind == MixingKind::Dpmon;
            out.push(BlockLayout {
                indices: b.indices.clone(),
                kind: b.mixing.kind,
                dim,
                components: k,
                offset,
                component_width,
                dp_alpha_column: dp.then_some(offset + k * component_width),
            });
            offset += k * component_width + usize::from(dp);
        }
        Self {
            blocks: out,
            n_persons,
            n_params,
            person_offset: offset,
            loglik_column: offset + n_persons * n_params,
        }
    }

    pub fn width(&self) -> usize {
        self.loglik_column + 1
    }

    pub fn column_names(&self, param_names: &[String], person_ids: &[String]) -> Vec<String> {
        let mut names = Vec::with_capacity(self.width());
        for (b, bl) in self.blocks.iter().enumerate() {
            for k in 0..bl.components {
                let p = format!("block{b}.comp{k}");
                names.push(format!("{p}.pi"));
                names.extend((0..bl.dim).map(|r| format!("{p}.zeta[{r}]")));
                for i in 0..bl.dim {
                    names.extend((0..=i).map(|j| format!("{p}.omega[{i},{j}]")));
                }
                names.extend((0..bl.dim).map(|r| format!("{p}.a[{r}]")));
            }
            if bl.dp_alpha_column.is_some() {
                names.push(format!("block{b}.dp_alpha"));
            }
        }
        for id in person_ids {
            names.extend(param_names.iter().map(|p| format!("{id}.{p}")));
        }
        names.push("loglik".into());
        names
    }

    /// Appends the projection of `state` as one row.
    pub fn push_row(&self, state: &SamplerState, out: &mut Vec<f64>) {
        let start = out.len();
        for (bl, bs) in self.blocks.iter().zip(&state.blocks) {
            for (w, c) in bs.weights.iter().zip(&bs.components) {
                out.push(*w);
                out.extend_from_slice(&c.zeta);
                let m = c.omega.matrix();
                for i in 0..bl.dim {
                    out.extend((0..=i).map(|j| m[(i, j)]));
                }
                out.extend_from_slice(&c.a);
            }
            if bl.dp_alpha_column.is_some() {
                out.push(bs.dp_alpha);
            }
        }
        out.extend_from_slice(&state.params);
        out.push(state.total_log_likelihood());
        debug_assert_eq!(out.len() - start, self.width());
    }

    pub fn population(&self, row: &[f64], block: usize) -> Result<BlockPopulation> {
        let bl = &self.blocks[block];
        let d = bl.dim;
        let mut pop = BlockPopulation {
            weights: Vec::with_capacity(bl.components),
            zeta: Vec::with_capacity(bl.components),
            omega: Vec::with_capacity(bl.components),
            dp_alpha: bl.dp_alpha_column.map(|c| row[c]),
        };
        for k in 0..bl.components {
            let c = &row[bl.offset + k * bl.component_width..][..bl.component_width];
            pop.weights.push(c[0]);
            pop.zeta.push(c[1..1 + d].to_vec());
            let mut m = DMatrix::zeros(d, d);
            let mut pos = 1 + d;
            for i in 0..d {
                for j in 0..=i {
                    m[(i, j)] = c[pos];
                    m[(j, i)] = c[pos];
                    pos += 1;
                }
            }
            pop.omega.push(CovMatrix::named(m, &format!("block {block} Omega[{k}]"))?);
        }
        Ok(pop)
    }

    pub fn person<'r>(&self, row: &'r [f64], n: usize) -> &'r [f64] {
        &row[self.person_offset + n * self.n_params..][..self.n_params]
    }

    pub fn log_likelihood(&self, row: &[f64]) -> f64 {
        row[self.loglik_column]
    }
}

/// Retained rows and per-iteration trace of one chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainDraws {
    pub chain: usize,
    /// Row-major retained draws.
    pub rows: Vec<f64>,
    /// Row-major `iterations × TRACE_COLUMNS`.
    pub trace: Vec<f64>,
    pub final_rho: f64,
}

impl ChainDraws {
    pub fn n_rows(&self, width: usize) -> usize {
        self.rows.len() / width
    }

    pub fn trace_column(&self, column: usize) -> Vec<f64> {
        self.trace
            .chunks_exact(TRACE_COLUMNS.len())
            .map(|r| r[column])
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainFile {
    pub chain: usize,
    pub rows: usize,
    pub draws_sha256: String,
    pub trace_sha256: String,
    pub final_rho: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrawsMeta {
    pub format_version: u32,
    pub model: ModelSpec,
    pub mcmc: McmcConfig,
    pub person_ids: Vec<String>,
    pub attribute_names: Vec<String>,
    pub param_names: Vec<String>,
    pub data_sha256: String,
    pub model_sha256: String,
    pub retained_per_chain: usize,
    pub width: usize,
    #[serde(default)]
    pub chains: Vec<ChainFile>,
}

impl DrawsMeta {
    pub fn new(problem: &Problem, config: &McmcConfig) -> Self {
        let data = problem.data;
        let model_json = serde_json::to_vec(problem.model).unwrap_or_default();
        let width = problem
            .model
            .blocks()
            .map(|b| DrawLayout::new(&b, data.n_persons(), problem.model.n_params()).width())
            .unwrap_or(0);
        Self {
            format_version: FORMAT_VERSION,
            model: problem.model.clone(),
            mcmc: config.clone(),
            person_ids: data.persons.iter().map(|p| p.person_id.clone()).collect(),
            attribute_names: data.attribute_names.clone(),
            param_names: problem.model.utility.param_names(&data.attribute_names),
            data_sha256: sha256_hex(to_csv_string(data).as_bytes()),
            model_sha256: sha256_hex(&model_json),
            retained_per_chain: config.retained_per_chain(),
            width,
            chains: Vec::new(),
        }
    }
}

/// Retained draws of all chains with their metadata.
#[derive(Clone, Debug)]
pub struct PosteriorDraws {
    pub meta: DrawsMeta,
    pub layout: DrawLayout,
    pub chains: Vec<ChainDraws>,
}

fn to_le_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn from_le_bytes(bytes: &[u8], what: &str) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::Format(format!("{what} is not a whole number of f64 values")));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

impl PosteriorDraws {
    pub fn width(&self) -> usize {
        self.layout.width()
    }

    pub fn n_draws(&self) -> usize {
        self.chains.iter().map(|c| c.n_rows(self.width())).sum()
    }

    /// All retained rows, chain by chain.
    pub fn rows(&self) -> impl Iterator<Item = (usize, &[f64])> + '_ {
        let w = self.width();
        self.chains
            .iter()
            .flat_map(move |c| c.rows.chunks_exact(w).map(move |r| (c.chain, r)))
    }

    pub fn row(&self, index: usize) -> &[f64] {
        let w = self.width();
        let mut i = index;
        for c in &self.chains {
            let n = c.n_rows(w);
            if i < n {
                return &c.rows[i * w..(i + 1) * w];
            }
            i -= n;
        }
        panic!("draw index {index} out of range");
    }

    pub fn mixing_kind(&self) -> MixingKind {
        self.meta.model.mixing.kind
    }

    /// Index of the block carrying the mixing distribution.
    pub fn mixing_block(&self) -> usize {
        self.layout.blocks.len() - 1
    }

    /// Fails unless the draws were produced under `model`.
    pub fn check_model(&self, model: &ModelSpec) -> Result<()> {
        if self.meta.model.mixing.kind != model.mixing.kind
            || self.meta.model.mixing.components != model.mixing.components
        {
            return Err(Error::SpecMismatch(format!(
                "draws were produced with {} (K={}), requested {} (K={})",
                self.meta.model.mixing.kind.name(),
                self.meta.model.mixing.components,
                model.mixing.kind.name(),
                model.mixing.components
            )));
        }
        if self.meta.model.utility != model.utility {
            return Err(Error::SpecMismatch(
                "draws were produced with a different utility specification".into(),
            ));
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut meta = self.meta.clone();
        let mut payloads = Vec::with_capacity(self.chains.len());
        meta.chains.clear();
        for c in &self.chains {
            let rows = to_le_bytes(&c.rows);
            let trace = to_le_bytes(&c.trace);
            meta.chains.push(ChainFile {
                chain: c.chain,
                rows: c.n_rows(self.width()),
                draws_sha256: sha256_hex(&rows),
                trace_sha256: sha256_hex(&trace),
                final_rho: c.final_rho,
            });
            payloads.push((c.chain, rows, trace));
        }
        let meta_json = serde_json::to_string_pretty(&meta)?;
        let columns = self
            .layout
            .column_names(&meta.param_names, &meta.person_ids)
            .join("\n")
            + "\n";
        write_dir_atomic(dir, |tmp| {
            let put = |name: &str, bytes: &[u8]| {
                let p = tmp.join(name);
                fs::write(&p, bytes).map_err(|e| Error::io(p, e))
            };
            put("meta.json", meta_json.as_bytes())?;
            put("columns.txt", columns.as_bytes())?;
            for (c, rows, trace) in &payloads {
                put(&format!("chain_{c}.bin"), rows)?;
                put(&format!("chain_{c}_trace.bin"), trace)?;
            }
            Ok(())
        })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let p = dir.join(name);
            fs::read(&p).map_err(|e| Error::io(p, e))
        };
        let meta: DrawsMeta = serde_json::from_slice(&read("meta.json")?)?;
        if meta.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format version {}",
                meta.format_version
            )));
        }
        let blocks = meta.model.blocks()?;
        let layout = DrawLayout::new(&blocks, meta.person_ids.len(), meta.model.n_params());
        if layout.width() != meta.width {
            return Err(Error::Format(format!(
                "row width {} does not match the model layout {}",
                meta.width,
                layout.width()
            )));
        }
        let mut chains = Vec::with_capacity(meta.chains.len());
        for cf in &meta.chains {
            let rows_bytes = read(&format!("chain_{}.bin", cf.chain))?;
            let trace_bytes = read(&format!("chain_{}_trace.bin", cf.chain))?;
            if sha256_hex(&rows_bytes) != cf.draws_sha256 || sha256_hex(&trace_bytes) != cf.trace_sha256 {
                return Err(Error::Format(format!("chain {} fails its checksum", cf.chain)));
            }
            let rows = from_le_bytes(&rows_bytes, "draws")?;
            if rows.len() != cf.rows * layout.width() {
                return Err(Error::Format(format!(
                    "chain {} holds {} values, expected {}",
                    cf.chain,
                    rows.len(),
                    cf.rows * layout.width()
                )));
            }
            chains.push(ChainDraws {
                chain: cf.chain,
                rows,
                trace: from_le_bytes(&trace_bytes, "trace")?,
                final_rho: cf.final_rho,
            });
        }
        Ok(Self {
            meta,
            layout,
            chains,
        })
    }
}

/// Split-mean stationarity statistic: compares the means of the first 10%
/// and the last 50% of `series`, with variances from batch means to
/// absorb autocorrelation.
pub fn geweke_z(series: &[f64]) -> f64 {
    fn mean_and_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let batches = 10.min(n).max(1);
        let size = n / batches;
        let means: Vec<f64> = (0..batches)
            .map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
            .collect();
        let bm = means.iter().sum::<f64>() / batches as f64;
        let var = means.iter().map(|m| (m - bm).powi(2)).sum::<f64>()
            / (batches.saturating_sub(1).max(1)) as f64
            / batches as f64;
        (mean, var)
    }
    let n = series.len();
    let head = &series[..n / 10];
    let tail = &series[n / 2..];
    let (m1, v1) = mean_and_var(head);
    let (m2, v2) = mean_and_var(tail);
    let denom = (v1 + v2).sqrt();
    if denom == 0.0 {
        if m1 == m2 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (m1 - m2) / denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::{HyperPriors, MixingSpec};

    #[test]
    fn layout_widths() {
        let blocks = vec![
            BlockModel::new(vec![0], MixingSpec::mvn(), HyperPriors::weakly_informative(1)).unwrap(),
            BlockModel::new(vec![1, 2], MixingSpec::dpmon(4), HyperPriors::dp_base(2)).unwrap(),
        ];
        let l = DrawLayout::new(&blocks, 3, 3);
        // block 0: 1 + 1 + 1 + 1 = 4; block 1: 4 × (1 + 2 + 3 + 2) + 1 = 33
        assert_eq!(l.person_offset, 37);
        assert_eq!(l.width(), 37 + 9 + 1);
        let names = l.column_names(&["a".into(), "b".into(), "c".into()], &["p1".into(), "p2".into(), "p3".into()]);
        assert_eq!(names.len(), l.width());
        assert_eq!(names[36], "block1.dp_alpha");
        assert_eq!(names[37], "p1.a");
    }

    #[test]
    fn geweke_flags_trend_only() {
        let flat: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 101) as f64).collect();
        assert!(geweke_z(&flat).abs() < 3.0);
        let trend: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert!(geweke_z(&trend).abs() > 3.0);
    }
}
