//! Experiment configuration (TOML) and its resolution into concrete shapes.
//!
//! ```toml
//! task = "cartpole-var"      # or "reacher-var"
//! held_out = 5               # variation left out of training
//! baseline = "hebbian"       # hebbian | static | recurrent
//! seed = 0
//! generations = 300
//! eval_episodes = 100
//! episodes_per_variation = 1 # training rollouts per variation per candidate
//! eval_mode = "sample"       # sample: fresh genotype per rollout; mean: the mode
//! checkpoint_every = 25      # 0: only the final checkpoint
//! hidden_layers = [16, 8]     # at most 16 layers of at most 4096 units
//!
//! [network]
//! init_range = 0.1
//! clip = 3.0
//!
//! [model]
//! kind = "shared-gmm"        # per-synapse | shared-gmm | joint-gmm | single-rule | fixed-random
//! rho = 32                   # 1, 16, 32, 64, 128, 256 or "N"
//! # components = 7           # explicit M, overrides rho
//! sigma = 0.1
//! mu_init_std = 1.0
//!
//! [es]
//! population_size = 64
//! learning_rate = 0.2
//! decay = 1.0
//! updater = "sgd"            # sgd | adam
//! antithetic = true
//! fitness_shaping = "centered-ranks"
//! ```

use std::fmt;
use std::path::Path;

use hebb_core::genotype::rho_to_components;
use hebb_core::seed::{self, Purpose};
use hebb_core::{EsConfig, GenotypeModel, ModelKind, NetworkConfig, RecurrentNetwork, Topology, RULE_DIM};
use hebb_envlab::{make_meta_task, MetaTask, TaskId};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

/// Sharing ratios accepted besides `N` itself.
pub const ALLOWED_RHO: [usize; 6] = [1, 16, 32, 64, 128, 256];

/// Largest hidden layer accepted.
pub const MAX_LAYER_SIZE: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    #[default]
    Hebbian,
    Static,
    Recurrent,
}

impl Baseline {
    pub fn name(self) -> &'static str {
        match self {
            Baseline::Hebbian => "hebbian",
            Baseline::Static => "static",
            Baseline::Recurrent => "recurrent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    /// A fresh genotype from the final model for every rollout.
    #[default]
    Sample,
    /// The model's mode (the means) for every rollout.
    Mean,
}

/// Synapses per rule: an integer or `"N"` (one rule for the whole network).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rho {
    Ratio(usize),
    All,
}

impl Serialize for Rho {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Rho::Ratio(r) => s.serialize_u64(*r as u64),
            Rho::All => s.serialize_str("N"),
        }
    }
}

impl<'de> Deserialize<'de> for Rho {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl serde::de::Visitor<'_> for V {
            type Value = Rho;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a positive integer or \"N\"")
            }

            fn visit_u64<E: serde::de::Error>(self, v: u64) -> std::result::Result<Rho, E> {
                usize::try_from(v).map(Rho::Ratio).map_err(E::custom)
            }

            fn visit_i64<E: serde::de::Error>(self, v: i64) -> std::result::Result<Rho, E> {
                usize::try_from(v)
                    .map(Rho::Ratio)
                    .map_err(|_| E::custom(format!("rho must be positive, got {v}")))
            }

            fn visit_str<E: serde::de::Error>(self, v: &str) -> std::result::Result<Rho, E> {
                if v == "N" {
                    Ok(Rho::All)
                } else {
                    Err(E::custom(format!("rho must be an integer or \"N\", got {v:?}")))
                }
            }
        }
        d.deserialize_any(V)
    }
}

impl Rho {
    pub fn resolve(self, n_synapses: usize) -> usize {
        match self {
            Rho::Ratio(r) => r,
            Rho::All => n_synapses,
        }
    }
}

impl fmt::Display for Rho {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rho::Ratio(r) => write!(f, "{r}"),
            Rho::All => f.write_str("N"),
        }
    }
}

impl std::str::FromStr for Rho {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "N" {
            return Ok(Rho::All);
        }
        s.parse()
            .map(Rho::Ratio)
            .map_err(|_| format!("rho must be an integer or N, got {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<Rho>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub components: Option<usize>,
    pub sigma: f64,
    pub mu_init_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::PerSynapse,
            rho: None,
            components: None,
            sigma: 0.1,
            mu_init_std: 1.0,
        }
    }
}

impl ModelConfig {
    /// The sweep's model for a sharing ratio: one rule per synapse at 1, a
    /// single rule at N, the shared mixture in between.
    pub fn for_rho(&self, rho: Rho) -> ModelConfig {
        let kind = match rho {
            Rho::Ratio(1) => ModelKind::PerSynapse,
            Rho::All => ModelKind::SingleRule,
            Rho::Ratio(_) => ModelKind::SharedGmm,
        };
        ModelConfig {
            kind,
            rho: Some(rho),
            components: None,
            ..self.clone()
        }
    }
}

fn default_held_out() -> usize {
    5
}
fn default_eval_episodes() -> usize {
    100
}
fn default_one() -> usize {
    1
}
fn default_hidden() -> Vec<usize> {
    vec![16, 8]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskId,
    #[serde(default = "default_held_out")]
    pub held_out: usize,
    #[serde(default)]
    pub baseline: Baseline,
    #[serde(default)]
    pub seed: u64,
    pub generations: u64,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default = "default_one")]
    pub episodes_per_variation: usize,
    #[serde(default)]
    pub eval_mode: EvalMode,
    #[serde(default)]
    pub checkpoint_every: u64,
    #[serde(default = "default_hidden")]
    pub hidden_layers: Vec<usize>,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub es: EsConfig,
}

impl ExperimentConfig {
    /// Minimal config for `task` with every other field at its default.
    pub fn new(task: TaskId, generations: u64) -> Self {
        ExperimentConfig {
            task,
            held_out: default_held_out(),
            baseline: Baseline::default(),
            seed: 0,
            generations,
            eval_episodes: default_eval_episodes(),
            episodes_per_variation: 1,
            eval_mode: EvalMode::default(),
            checkpoint_every: 0,
            hidden_layers: default_hidden(),
            network: NetworkConfig::default(),
            model: ModelConfig::default(),
            es: EsConfig::default(),
        }
    }

    pub fn with_generations(self, generations: u64) -> Self {
        ExperimentConfig { generations, ..self }
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            HarnessError::Config(msg) => HarnessError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// SHA-256 over every field that influences the training trajectory.
    /// The generation budget, evaluation settings and checkpoint cadence are
    /// excluded so that a run can be resumed with a larger budget.
    pub fn trajectory_hash(&self) -> [u8; 32] {
        let mut key = self.clone();
        key.generations = 0;
        key.eval_episodes = 0;
        key.eval_mode = EvalMode::Sample;
        key.checkpoint_every = 0;
        let bytes = serde_json::to_vec(&key).expect("config serializes");
        Sha256::digest(bytes).into()
    }
}

/// A validated config with every derived quantity resolved.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub topology: Topology,
    pub meta: MetaTask,
    pub kind: ModelKind,
    /// Rows of `h`: synapses, or direct parameters for the baselines.
    pub n_rows: usize,
    /// 5 for Hebbian rules, 1 for direct parameters.
    pub width: usize,
    /// Mixture components, for the shared kinds.
    pub components: Option<usize>,
}

impl Experiment {
    pub fn resolve(config: ExperimentConfig) -> Result<Self> {
        let cfg_err = |m: String| Err(HarnessError::Config(m));
        config.es.validate()?;
        config.network.validate()?;
        if config.eval_episodes == 0 {
            return cfg_err("eval_episodes must be at least 1".into());
        }
        if config.episodes_per_variation == 0 {
            return cfg_err("episodes_per_variation must be at least 1".into());
        }
        if config.hidden_layers.contains(&0) {
            return cfg_err("hidden layer sizes must be positive".into());
        }
        if let Some(s) = config.hidden_layers.iter().find(|&&s| s > MAX_LAYER_SIZE) {
            return cfg_err(format!("hidden layer size {s} exceeds {MAX_LAYER_SIZE}"));
        }
        if config.hidden_layers.len() > 16 {
            return cfg_err(format!("at most 16 hidden layers, got {}", config.hidden_layers.len()));
        }
        let meta = make_meta_task(config.task, config.held_out)?;
        let mut sizes = vec![config.task.obs_dim()];
        sizes.extend(&config.hidden_layers);
        sizes.push(config.task.act_dim());
        let topology = Topology::new(sizes)?;
        let n = topology.n_synapses();
        let m = &config.model;
        if !(m.sigma.is_finite() && m.sigma > 0.0) {
            return cfg_err(format!("model.sigma must be positive, got {}", m.sigma));
        }
        if !(m.mu_init_std.is_finite() && m.mu_init_std >= 0.0) {
            return cfg_err(format!("model.mu_init_std must be non-negative, got {}", m.mu_init_std));
        }

        if config.baseline != Baseline::Hebbian {
            if m.kind != ModelKind::PerSynapse || m.rho.is_some() || m.components.is_some() {
                return cfg_err(format!(
                    "the {} baseline learns direct parameters with the per-synapse model; drop model.kind/rho/components",
                    config.baseline.name()
                ));
            }
            let n_rows = match config.baseline {
                Baseline::Static => n,
                _ => RecurrentNetwork::param_count(&topology)?,
            };
            return Experiment {
                config,
                topology,
                meta,
                kind: ModelKind::PerSynapse,
                n_rows,
                width: 1,
                components: None,
            }
            .within_size_limit();
        }

        if let Some(rho) = m.rho {
            let r = rho.resolve(n);
            if !(ALLOWED_RHO.contains(&r) || r == n) {
                return cfg_err(format!("rho must be one of {ALLOWED_RHO:?} or N ({n}), got {r}"));
            }
            // surfaces ratios larger than the network
            rho_to_components(n, r)?;
        }
        let components = match m.kind {
            ModelKind::PerSynapse => {
                if m.components.is_some() || m.rho.is_some_and(|r| r.resolve(n) != 1) {
                    return cfg_err("per-synapse model is rho = 1; drop model.rho/components".into());
                }
                None
            }
            ModelKind::SingleRule => {
                if m.components.is_some_and(|c| c != 1) || m.rho.is_some_and(|r| r.resolve(n) != n) {
                    return cfg_err("single-rule model is rho = N; drop model.rho/components".into());
                }
                Some(1)
            }
            _ => Some(match (m.components, m.rho) {
                (Some(c), _) if c == 0 || c > n => {
                    return cfg_err(format!("model.components must be in [1, {n}], got {c}"));
                }
                (Some(c), _) => c,
                (None, Some(rho)) => rho_to_components(n, rho.resolve(n))?,
                (None, None) => {
                    return cfg_err(format!(
                        "model kind {} needs model.rho or model.components",
                        m.kind.name()
                    ));
                }
            }),
        };
        Experiment {
            kind: m.kind,
            config,
            topology,
            meta,
            n_rows: n,
            width: RULE_DIM,
            components,
        }
        .within_size_limit()
    }

    /// Rejects models whose parameter blocks a checkpoint could not hold.
    fn within_size_limit(self) -> Result<Self> {
        let mu = self.components.unwrap_or(self.n_rows) * self.width;
        let lambda = if self.kind.has_lambda() {
            self.n_rows * self.components.unwrap_or(1)
        } else {
            0
        };
        let limit = crate::checkpoint::MAX_ELEMENTS;
        if mu.max(lambda).max(self.n_rows) > limit {
            return Err(HarnessError::Config(format!(
                "model has {} parameters in one block; the limit is {limit}",
                mu.max(lambda)
            )));
        }
        Ok(self)
    }

    /// `theta` at generation 0.
    pub fn initial_model(&self) -> Result<GenotypeModel> {
        let m = &self.config.model;
        let s = seed::derive(self.config.seed, Purpose::Init, 0, 0, 0);
        let model = match (self.kind, self.components) {
            (ModelKind::PerSynapse, _) => {
                GenotypeModel::per_synapse(self.n_rows, self.width, m.sigma, m.mu_init_std, s)
            }
            (ModelKind::SharedGmm, Some(c)) => GenotypeModel::shared_gmm(self.n_rows, c, m.sigma, m.mu_init_std, s),
            (ModelKind::JointGmm, Some(c)) => GenotypeModel::joint_gmm(self.n_rows, c, m.sigma, m.mu_init_std, s),
            (ModelKind::SingleRule, _) => GenotypeModel::single_rule(self.n_rows, m.sigma, m.mu_init_std, s),
            (ModelKind::FixedRandom, Some(c)) => {
                let a = seed::derive(self.config.seed, Purpose::Assignment, 0, 0, 0);
                GenotypeModel::fixed_random(self.n_rows, c, m.sigma, m.mu_init_std, s, a)
            }
            (kind, None) => unreachable!("{} always resolves a component count", kind.name()),
        }?;
        Ok(model)
    }

    /// Row label in result tables.
    pub fn label(&self) -> String {
        match self.config.baseline {
            Baseline::Static => "static".into(),
            Baseline::Recurrent => "recurrent".into(),
            Baseline::Hebbian => match (self.kind, self.config.model.rho) {
                (ModelKind::PerSynapse, _) => "hebbian rho=1".into(),
                (ModelKind::SingleRule, _) => "hebbian rho=N".into(),
                (ModelKind::SharedGmm, Some(rho)) => format!("hebbian rho={rho}"),
                (kind, _) => format!("{} M={}", kind.name(), self.components.unwrap_or(0)),
            },
        }
    }
}
