//! Metropolis-within-Gibbs estimation of mixed logit models whose
//! random parameters follow a multivariate normal, a finite mixture of
//! normals, or a truncated Dirichlet-process mixture of normals.
//!
//! Each sweep updates, for every parameter block, the component means,
//! the half-t auxiliary scales, the component covariances, the mixture
//! weights (Dirichlet for finite mixtures, concentration then sticks for the
//! Dirichlet process) and the component assignments. The person-level
//! parameters are then moved jointly by a random-walk Metropolis step and
//! the step size is adapted towards the target acceptance rate.

mod chain;
mod draws;
mod state;
mod updates;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::CovMatrix;
use crate::utility::{BlockRole, ParamPartition, UtilitySpec};

pub use chain::{
    run_chain, run_chain_from, run_estimation, run_estimation_with, Problem, SweepOptions,
};
pub use draws::{
    geweke_z, BlockLayout, BlockPopulation, ChainDraws, ChainFile, DrawLayout, DrawsMeta,
    PosteriorDraws, FORMAT_VERSION, TRACE_COLUMNS,
};
pub use state::{initial_state, BlockState, Component, SamplerState};
pub use updates::{
    adapt_step_size, component_counts, update_a, update_alpha_dp, update_assignments,
    update_beta_mh, update_omega, update_pi_finite, update_sticks, update_zeta, MhStats,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixingKind {
    Mvn,
    Fmon,
    Dpmon,
}

impl MixingKind {
    pub fn name(self) -> &'static str {
        match self {
            MixingKind::Mvn => "mvn",
            MixingKind::Fmon => "fmon",
            MixingKind::Dpmon => "dpmon",
        }
    }
}

/// Gamma prior written with an explicit rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

/// Heterogeneity distribution of the mixing parameter block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixingSpec {
    pub kind: MixingKind,
    /// Number of components (finite mixture) or truncation level (DP).
    pub components: usize,
    /// Symmetric Dirichlet concentration of the finite-mixture weights.
    pub dirichlet_alpha: f64,
    /// Prior on the DP concentration, matched to its conditional update.
    pub dp_alpha_prior: GammaPrior,
}

pub const DEFAULT_FMON_COMPONENTS: usize = 2;
pub const DEFAULT_DP_TRUNCATION: usize = 100;

impl MixingSpec {
    pub fn mvn() -> Self {
        Self {
            kind: MixingKind::Mvn,
            components: 1,
            dirichlet_alpha: 1.0,
            dp_alpha_prior: GammaPrior {
                shape: 2.0,
                rate: 2.0,
            },
        }
    }

    pub fn fmon(components: usize) -> Self {
        Self {
            kind: MixingKind::Fmon,
            components,
            ..Self::mvn()
        }
    }

    pub fn dpmon(truncation: usize) -> Self {
        Self {
            kind: MixingKind::Dpmon,
            components: truncation,
            ..Self::mvn()
        }
    }

    pub fn is_mixture(&self) -> bool {
        self.kind != MixingKind::Mvn
    }

    pub fn check(&self) -> Result<()> {
        match self.kind {
            MixingKind::Mvn if self.components != 1 => Err(Error::Config(
                "a multivariate normal mixing distribution has exactly one component".into(),
            )),
            MixingKind::Fmon | MixingKind::Dpmon if self.components < 2 => Err(Error::Config(
                format!("{} needs at least 2 components", self.kind.name()),
            )),
            _ if !(self.dirichlet_alpha > 0.0) => {
                Err(Error::Config("dirichlet_alpha must be positive".into()))
            }
            _ if !(self.dp_alpha_prior.shape > 0.0 && self.dp_alpha_prior.rate > 0.0) => {
                Err(Error::Config("dp_alpha_prior parameters must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Hyper-parameters of one parameter block: normal prior `N(mu0, sigma0)` on
/// component means and the half-t construction (`nu`, scales `A_r`) on
/// component covariances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperPriors {
    pub mu0: Vec<f64>,
    pub sigma0: CovMatrix,
    pub nu: f64,
    pub half_t_scale: Vec<f64>,
}

impl HyperPriors {
    /// Weakly informative defaults: `mu0 = 0`, `sigma0 = 100·I`, `nu = 2`,
    /// `A_r = 1000`.
    pub fn weakly_informative(dim: usize) -> Self {
        Self {
            mu0: vec![0.0; dim],
            sigma0: CovMatrix::scaled_identity(dim, 100.0),
            nu: 2.0,
            half_t_scale: vec![1000.0; dim],
        }
    }

    /// Dirichlet-process base measure `N(0, I)` for component means.
    pub fn dp_base(dim: usize) -> Self {
        Self {
            sigma0: CovMatrix::identity(dim),
            ..Self::weakly_informative(dim)
        }
    }

    pub fn default_for(mixing: &MixingSpec, dim: usize) -> Self {
        match mixing.kind {
            MixingKind::Dpmon => Self::dp_base(dim),
            _ => Self::weakly_informative(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mu0.len()
    }

    pub fn check(&self) -> Result<()> {
        let r = self.dim();
        if r == 0 || self.sigma0.dim() != r || self.half_t_scale.len() != r {
            return Err(Error::Config(format!(
                "hyper-prior dimensions disagree (mu0 {r}, sigma0 {}, A {})",
                self.sigma0.dim(),
                self.half_t_scale.len()
            )));
        }
        if !(self.nu > 0.0) {
            return Err(Error::Config("nu must be positive".into()));
        }
        if self.half_t_scale.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::Config("half-t scales A_r must be positive".into()));
        }
        Ok(())
    }
}

/// Chain settings. Defaults follow the full-scale protocol: two chains of
/// 100,000 iterations, 50,000 burn-in, every tenth draw kept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcConfig {
    pub chains: usize,
    pub iterations: usize,
    pub burnin: usize,
    pub thinning: usize,
    pub rho0: f64,
    pub rho_increment: f64,
    pub rho_min: f64,
    pub target_acceptance: f64,
    /// Stop adapting the step size once burn-in ends.
    pub freeze_after_burnin: bool,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            chains: 2,
            iterations: 100_000,
            burnin: 50_000,
            thinning: 10,
            rho0: 0.1,
            rho_increment: 0.001,
            rho_min: 1e-4,
            target_acceptance: 0.3,
            freeze_after_burnin: false,
            seed: 0,
        }
    }
}

impl McmcConfig {
    pub fn check(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::Config("at least one chain is required".into()));
        }
        if self.burnin >= self.iterations {
            return Err(Error::Config(format!(
                "burnin ({}) must be smaller than iterations ({})",
                self.burnin, self.iterations
            )));
        }
        if self.thinning == 0 {
            return Err(Error::Config("thinning must be at least 1".into()));
        }
        if !(self.rho0 > 0.0) || !(self.rho_min > 0.0) || !(self.rho_increment >= 0.0) {
            return Err(Error::Config("step-size settings must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.target_acceptance) {
            return Err(Error::Config("target_acceptance must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn retained_per_chain(&self) -> usize {
        (self.iterations - self.burnin) / self.thinning
    }
}

/// Full model: utility specification, mixing distribution of the mixing
/// block, and optional hyper-prior overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub utility: UtilitySpec,
    pub mixing: MixingSpec,
    /// Hyper-priors of the mixing block; defaults depend on the mixing kind.
    pub hyper: Option<HyperPriors>,
    /// Hyper-priors shared by the univariate normal blocks (WTP space).
    pub normal_hyper: Option<HyperPriors>,
}

impl ModelSpec {
    pub fn new(utility: UtilitySpec, mixing: MixingSpec) -> Self {
        Self {
            utility,
            mixing,
            hyper: None,
            normal_hyper: None,
        }
    }

    pub fn with_hyper(mut self, hyper: HyperPriors) -> Self {
        self.hyper = Some(hyper);
        self
    }

    pub fn n_params(&self) -> usize {
        self.utility.n_params()
    }

    /// Resolves the partition into blocks with their mixing distribution and
    /// hyper-priors.
    pub fn blocks(&self) -> Result<Vec<BlockModel>> {
        self.mixing.check()?;
        let partition = ParamPartition::for_spec(&self.utility);
        partition
            .blocks
            .iter()
            .map(|b| {
                let dim = b.indices.len();
                let (mixing, hyper) = match b.role {
                    BlockRole::Mixing => (
                        self.mixing.clone(),
                        self.hyper
                            .clone()
                            .unwrap_or_else(|| HyperPriors::default_for(&self.mixing, dim)),
                    ),
                    BlockRole::Normal => (
                        MixingSpec::mvn(),
                        self.normal_hyper
                            .clone()
                            .unwrap_or_else(|| HyperPriors::weakly_informative(dim)),
                    ),
                };
                if hyper.dim() != dim {
                    return Err(Error::Config(format!(
                        "hyper-priors have dimension {} but the block has {dim} parameters",
                        hyper.dim()
                    )));
                }
                hyper.check()?;
                BlockModel::new(b.indices.clone(), mixing, hyper)
            })
            .collect()
    }
}

/// One parameter block with precomputed prior quantities.
#[derive(Clone, Debug)]
pub struct BlockModel {
    pub indices: Vec<usize>,
    pub mixing: MixingSpec,
    pub hyper: HyperPriors,
    pub(crate) sigma0_inv: DMatrix<f64>,
    pub(crate) sigma0_inv_mu0: DVector<f64>,
}

impl BlockModel {
    pub fn new(indices: Vec<usize>, mixing: MixingSpec, hyper: HyperPriors) -> Result<Self> {
        mixing.check()?;
        hyper.check()?;
        if indices.len() != hyper.dim() {
            return Err(Error::Config("block indices and hyper-priors disagree".into()));
        }
        let sigma0_inv = hyper.sigma0.inverse();
        let sigma0_inv_mu0 = &sigma0_inv * DVector::from_column_slice(&hyper.mu0);
        Ok(Self {
            indices,
            mixing,
            hyper,
            sigma0_inv,
            sigma0_inv_mu0,
        })
    }

    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    pub fn components(&self) -> usize {
        self.mixing.components
    }
}
