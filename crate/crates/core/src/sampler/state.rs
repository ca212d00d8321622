use crate::error::Result;
use crate::stats::{sample_mvn, CovMatrix, RandomStream};

use super::{BlockModel, MixingKind};

/// One normal mixture component.
#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub zeta: Vec<f64>,
    pub omega: CovMatrix,
    /// Half-t auxiliary variables `a_kr`.
    pub a: Vec<f64>,
}

/// Latent state of one parameter block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockState {
    pub components: Vec<Component>,
    pub weights: Vec<f64>,
    /// Stick-breaking fractions; empty unless the block is a DP mixture.
    pub sticks: Vec<f64>,
    /// DP concentration; unused for other mixing kinds.
    pub dp_alpha: f64,
    /// 0-based component index per person.
    pub assignments: Vec<usize>,
}

/// All latent quantities of one Markov chain.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplerState {
    pub blocks: Vec<BlockState>,
    /// Person-level parameters, row-major `persons × params`.
    pub params: Vec<f64>,
    /// Cached panel log-likelihood per person at `params`.
    pub log_lik: Vec<f64>,
    pub n_params: usize,
    pub rho: f64,
    pub iteration: usize,
}

impl SamplerState {
    pub fn n_persons(&self) -> usize {
        self.log_lik.len()
    }

    pub fn person(&self, n: usize) -> &[f64] {
        &self.params[n * self.n_params..(n + 1) * self.n_params]
    }

    pub fn person_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.params[n * self.n_params..(n + 1) * self.n_params]
    }

    /// Gathers the block's parameters into a row-major `persons × dim` buffer.
    pub fn block_values(&self, block: &BlockModel) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_persons() * block.dim());
        for n in 0..self.n_persons() {
            let p = self.person(n);
            out.extend(block.indices.iter().map(|&i| p[i]));
        }
        out
    }

    pub fn total_log_likelihood(&self) -> f64 {
        self.log_lik.iter().sum()
    }
}

impl BlockState {
    /// Recomputes weights from the sticks: `π_k = η_k Π_{l<k}(1 − η_l)` with
    /// the last weight closing the simplex.
    pub fn weights_from_sticks(&mut self) {
        let k = self.sticks.len();
        let mut remaining = 1.0;
        let mut partial = 0.0;
        for i in 0..k.saturating_sub(1) {
            let w = self.sticks[i] * remaining;
            self.weights[i] = w;
            partial += w;
            remaining *= 1.0 - self.sticks[i];
        }
        if k > 0 {
            self.weights[k - 1] = (1.0 - partial).max(0.0);
        }
    }
}

/// Starting state: `ζ_k ~ N(0, 0.1·I)`, `Ω_k = I`, `a_kr = 1`, uniform
/// assignments and weights, DP concentration 1, `β_n = ζ_{q_n}`.
pub fn initial_state(
    blocks: &[BlockModel],
    n_params: usize,
    n_persons: usize,
    rho0: f64,
    rng: &mut RandomStream,
) -> Result<SamplerState> {
    let mut states = Vec::with_capacity(blocks.len());
    for block in blocks {
        let dim = block.dim();
        let k = block.components();
        let init_cov = CovMatrix::scaled_identity(dim, 0.1);
        let components = (0..k)
            .map(|_| {
                Ok(Component {
                    zeta: sample_mvn(&vec![0.0; dim], &init_cov, rng)?,
                    omega: CovMatrix::identity(dim),
                    a: vec![1.0; dim],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let assignments = if k > 1 {
            (0..n_persons).map(|_| rng.index(k)).collect()
        } else {
            vec![0; n_persons]
        };
        let sticks = if block.mixing.kind == MixingKind::Dpmon {
            // uniform weights: η_k = 1 / (K − k)
            (0..k).map(|i| 1.0 / (k - i) as f64).collect()
        } else {
            Vec::new()
        };
        states.push(BlockState {
            components,
            weights: vec![1.0 / k as f64; k],
            sticks,
            dp_alpha: 1.0,
            assignments,
        });
    }
    let mut params = vec![0.0; n_persons * n_params];
    for (block, state) in blocks.iter().zip(&states) {
        for n in 0..n_persons {
            let zeta = &state.components[state.assignments[n]].zeta;
            for (&i, z) in block.indices.iter().zip(zeta) {
                params[n * n_params + i] = *z;
            }
        }
    }
    Ok(SamplerState {
        blocks: states,
        params,
        log_lik: vec![0.0; n_persons],
        n_params,
        rho: rho0,
        iteration: 0,
    })
}
