//! Run configuration: a single TOML file describing data, models, chain
//! settings and evaluation options.
//!
//! ```toml
//! seed = 7
//! output_root = "runs/demo"
//!
//! [simulate]
//! scenario = "multi-modal-skewed"
//! persons = 500
//! tasks = 8
//! replications = 3
//!
//! [mcmc]
//! iterations = 20000
//! burnin = 10000
//!
//! [[model]]
//! name = "dp"
//! mixing = { kind = "dpmon", components = 50 }
//! ```
//!
//! The `MIXLOGIT_OUTPUT_ROOT` environment variable overrides `output_root`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{ChoiceDataset, SplitSpec};
use crate::error::{Error, Result};
use crate::sampler::{
    GammaPrior, HyperPriors, McmcConfig, MixingKind, MixingSpec, ModelSpec,
    DEFAULT_DP_TRUNCATION, DEFAULT_FMON_COMPONENTS,
};
use crate::synth::Scenario;
use crate::utility::UtilitySpec;

pub const OUTPUT_ROOT_ENV: &str = "MIXLOGIT_OUTPUT_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub output_root: PathBuf,
    pub simulate: Option<SimulateConfig>,
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub mcmc: McmcConfig,
    #[serde(default, rename = "model")]
    pub models: Vec<ModelConfig>,
    #[serde(default)]
    pub evaluate: EvaluateConfig,
    #[serde(default)]
    pub report: ReportConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub scenario: Scenario,
    pub persons: usize,
    pub tasks: usize,
    #[serde(default = "five")]
    pub alternatives: usize,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default = "validation_persons")]
    pub validation_persons: usize,
    #[serde(default = "one")]
    pub validation_tasks: usize,
}

/// Observed choice data split by person into training and validation
/// samples; replication `r` uses split seed `seed + r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    /// Attribute columns; inferred from the header when absent.
    pub attributes: Option<Vec<String>>,
    pub train_fraction: f64,
    #[serde(default = "one")]
    pub validation_tasks_per_person: usize,
    #[serde(default = "one")]
    pub replications: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    #[serde(default)]
    pub utility: UtilityConfig,
    pub mixing: MixingConfig,
    pub hyper: Option<HyperPriors>,
    pub normal_hyper: Option<HyperPriors>,
}

/// Utility specification with attributes referenced by column name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum UtilityConfig {
    /// All attributes when `attributes` is omitted.
    LinearPreference { attributes: Option<Vec<String>> },
    WtpSpace {
        mod_dummy: String,
        price: String,
        wtp_attributes: Vec<String>,
    },
}

impl Default for UtilityConfig {
    fn default() -> Self {
        UtilityConfig::LinearPreference { attributes: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixingConfig {
    pub kind: MixingKind,
    pub components: Option<usize>,
    pub dirichlet_alpha: Option<f64>,
    pub dp_alpha_prior: Option<GammaPrior>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateConfig {
    /// Simulated tastes per posterior draw for predictive distributions.
    pub taste_draws: usize,
    /// Draws from the true taste law for the TVD oracle.
    pub true_draws: usize,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            taste_draws: 2000,
            true_draws: 10_000,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportConfig {
    /// Extra metrics files to aggregate besides the run's own.
    pub metrics: Vec<PathBuf>,
    /// Simulated tastes per posterior draw for WTP tables; 0 disables them.
    pub wtp_taste_draws: usize,
}

fn one() -> usize {
    1
}
fn five() -> usize {
    5
}
fn validation_persons() -> usize {
    25
}

impl MixingConfig {
    pub fn resolve(&self) -> MixingSpec {
        let mut spec = match self.kind {
            MixingKind::Mvn => MixingSpec::mvn(),
            MixingKind::Fmon => {
                MixingSpec::fmon(self.components.unwrap_or(DEFAULT_FMON_COMPONENTS))
            }
            MixingKind::Dpmon => MixingSpec::dpmon(self.components.unwrap_or(DEFAULT_DP_TRUNCATION)),
        };
        if self.kind == MixingKind::Mvn {
            if let Some(k) = self.components {
                spec.components = k;
            }
        }
        if let Some(a) = self.dirichlet_alpha {
            spec.dirichlet_alpha = a;
        }
        if let Some(p) = self.dp_alpha_prior {
            spec.dp_alpha_prior = p;
        }
        spec
    }
}

impl UtilityConfig {
    pub fn resolve(&self, attribute_names: &[String]) -> Result<UtilitySpec> {
        let idx = |name: &String| {
            attribute_names
                .iter()
                .position(|a| a == name)
                .ok_or_else(|| Error::Config(format!("unknown attribute `{name}`")))
        };
        Ok(match self {
            UtilityConfig::LinearPreference { attributes: None } => UtilitySpec::LinearPreference {
                attributes: (0..attribute_names.len()).collect(),
            },
            UtilityConfig::LinearPreference {
                attributes: Some(a),
            } => UtilitySpec::LinearPreference {
                attributes: a.iter().map(idx).collect::<Result<_>>()?,
            },
            UtilityConfig::WtpSpace {
                mod_dummy,
                price,
                wtp_attributes,
            } => UtilitySpec::WtpSpace {
                mod_dummy: idx(mod_dummy)?,
                price: idx(price)?,
                wtp_attributes: wtp_attributes.iter().map(idx).collect::<Result<_>>()?,
            },
        })
    }
}

impl ModelConfig {
    pub fn resolve(&self, data: &ChoiceDataset) -> Result<ModelSpec> {
        let utility = self.utility.resolve(&data.attribute_names)?;
        utility.check(data.n_attributes())?;
        let spec = ModelSpec {
            utility,
            mixing: self.mixing.resolve(),
            hyper: self.hyper.clone(),
            normal_hyper: self.normal_hyper.clone(),
        };
        spec.blocks()?;
        Ok(spec)
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Reads and validates a config file. Relative data paths are resolved
    /// against the file's directory; the output root honours the
    /// environment override.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(d) = cfg.data.as_mut() {
            if d.path.is_relative() {
                d.path = base.join(&d.path);
            }
        }
        if let Some(root) = std::env::var_os(OUTPUT_ROOT_ENV) {
            cfg.output_root = PathBuf::from(root);
        } else if cfg.output_root.is_relative() {
            cfg.output_root = base.join(&cfg.output_root);
        }
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        self.mcmc.check()?;
        if self.simulate.is_some() && self.data.is_some() {
            return Err(Error::Config(
                "use either a [simulate] or a [data] section, not both".into(),
            ));
        }
        if let Some(s) = &self.simulate {
            if s.persons == 0 || s.tasks == 0 || s.alternatives < 2 || s.replications == 0 {
                return Err(Error::Config(
                    "[simulate] needs persons, tasks, replications ≥ 1 and alternatives ≥ 2".into(),
                ));
            }
            if s.validation_persons == 0 || s.validation_tasks == 0 {
                return Err(Error::Config("validation sample must not be empty".into()));
            }
        }
        if let Some(d) = &self.data {
            if d.replications == 0 {
                return Err(Error::Config("[data] replications must be ≥ 1".into()));
            }
        }
        let mut names: Vec<&str> = self.models.iter().map(|m| m.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("model names must be unique".into()));
        }
        for m in &self.models {
            let valid = !m.name.is_empty()
                && m.name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
            if !valid {
                return Err(Error::Config(format!(
                    "model name `{}` must be non-empty and use only letters, digits, '-' or '_'",
                    m.name
                )));
            }
            m.mixing.resolve().check()?;
        }
        if self.evaluate.taste_draws == 0 || self.evaluate.true_draws == 0 {
            return Err(Error::Config("evaluation draw counts must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn replications(&self) -> usize {
        match (&self.simulate, &self.data) {
            (Some(s), _) => s.replications,
            (_, Some(d)) => d.replications,
            _ => 0,
        }
    }

    pub fn replication_dir(&self, rep: usize) -> PathBuf {
        self.output_root.join(format!("rep_{rep:03}"))
    }

    pub fn split_spec(&self, rep: usize) -> Option<SplitSpec> {
        self.data.as_ref().map(|d| SplitSpec {
            train_fraction: d.train_fraction,
            validation_tasks_per_person: d.validation_tasks_per_person,
            seed: self.seed.wrapping_add(rep as u64),
        })
    }
}
