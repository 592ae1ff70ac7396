//! The versioned variation preset table.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{EnvError, Result};

/// The table shipped with the crate.
pub const BUILTIN_PRESETS: &str = include_str!("../presets.toml");

pub const N_VARIATIONS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskId {
    CartpoleVar,
    ReacherVar,
}

impl TaskId {
    pub const ALL: [TaskId; 2] = [TaskId::CartpoleVar, TaskId::ReacherVar];

    pub fn name(self) -> &'static str {
        match self {
            TaskId::CartpoleVar => "cartpole-var",
            TaskId::ReacherVar => "reacher-var",
        }
    }

    pub fn obs_dim(self) -> usize {
        match self {
            TaskId::CartpoleVar => 4,
            TaskId::ReacherVar => 8,
        }
    }

    pub fn act_dim(self) -> usize {
        match self {
            TaskId::CartpoleVar => 1,
            TaskId::ReacherVar => 2,
        }
    }

    /// Largest possible `|reward|` in a single step.
    pub fn reward_bound(self) -> f64 {
        match self {
            TaskId::CartpoleVar => 1.0,
            TaskId::ReacherVar => 4.0,
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskId {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self> {
        TaskId::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| EnvError::UnknownTask(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CartpoleVariation {
    pub friction: f64,
    pub push: f64,
    pub pole_length: f64,
}

impl CartpoleVariation {
    pub const DEFAULT: CartpoleVariation = CartpoleVariation {
        friction: 1.0,
        push: 0.0,
        pole_length: 1.0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReacherVariation {
    pub link1: f64,
    pub link2: f64,
    pub motor_mask: [f64; 2],
}

impl ReacherVariation {
    pub const DEFAULT: ReacherVariation = ReacherVariation {
        link1: 1.0,
        link2: 1.0,
        motor_mask: [1.0, 1.0],
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "kebab-case")]
pub enum VariationParams {
    CartpoleVar(CartpoleVariation),
    ReacherVar(ReacherVariation),
}

impl VariationParams {
    pub fn task(&self) -> TaskId {
        match self {
            VariationParams::CartpoleVar(_) => TaskId::CartpoleVar,
            VariationParams::ReacherVar(_) => TaskId::ReacherVar,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(EnvError::InvalidPreset(format!("{what} = {v}")));
        match self {
            VariationParams::CartpoleVar(c) => {
                for (what, v) in [("friction", c.friction), ("pole_length", c.pole_length)] {
                    if !(v.is_finite() && v > 0.0) {
                        return bad(what, v);
                    }
                }
                if !c.push.is_finite() || c.push.abs() > 10.0 {
                    return bad("push", c.push);
                }
            }
            VariationParams::ReacherVar(r) => {
                for (what, v) in [("link1", r.link1), ("link2", r.link2)] {
                    if !(v.is_finite() && v > 0.0) {
                        return bad(what, v);
                    }
                }
                // keeps the end effector within 0.4 of the target, the reward bound
                if r.link1 + r.link2 > 2.5 {
                    return bad("link1 + link2", r.link1 + r.link2);
                }
                for &m in &r.motor_mask {
                    if !(0.0..=1.0).contains(&m) {
                        return bad("motor_mask", m);
                    }
                }
            }
        }
        Ok(())
    }
}

/// A fully specified environment instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub task: TaskId,
    pub variation_id: usize,
    pub name: String,
    pub variation: VariationParams,
    pub max_steps: usize,
    /// Half-width of the uniform perturbation applied to the rest state.
    pub reset_noise: f64,
    pub obs_dim: usize,
    pub act_dim: usize,
}

impl EnvSpec {
    /// Builds and validates a spec from parts.
    pub fn new(
        variation_id: usize,
        name: &str,
        variation: VariationParams,
        max_steps: usize,
        reset_noise: f64,
    ) -> Result<Self> {
        variation.validate()?;
        if max_steps == 0 {
            return Err(EnvError::InvalidPreset("max_steps must be positive".into()));
        }
        if !(reset_noise.is_finite() && (0.0..=0.5).contains(&reset_noise)) {
            return Err(EnvError::InvalidPreset(format!("reset_noise = {reset_noise}")));
        }
        let task = variation.task();
        Ok(EnvSpec {
            task,
            variation_id,
            name: name.to_string(),
            variation,
            max_steps,
            reset_noise,
            obs_dim: task.obs_dim(),
            act_dim: task.act_dim(),
        })
    }

    /// Label used in result tables, e.g. `3:friction-x0.5`.
    pub fn label(&self) -> String {
        format!("{}:{}", self.variation_id, self.name)
    }

    /// Fitness given to an aborted episode: the lowest reachable score.
    pub fn floor_fitness(&self) -> f64 {
        match self.task {
            TaskId::CartpoleVar => 0.0,
            TaskId::ReacherVar => -self.task.reward_bound() * self.max_steps as f64,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTable {
    version: u32,
    cartpole: RawTask<CartpoleVariation>,
    reacher: RawTask<ReacherVariation>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTask<V> {
    max_steps: usize,
    reset_noise: f64,
    variation: Vec<RawVariation<V>>,
}

#[derive(Debug, Deserialize)]
struct RawVariation<V> {
    id: usize,
    name: String,
    #[serde(flatten)]
    params: V,
}

/// Parsed preset table: exactly five variations per task, id 1 being the
/// unmodified dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct PresetTable {
    pub version: u32,
    cartpole: Vec<EnvSpec>,
    reacher: Vec<EnvSpec>,
}

impl PresetTable {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawTable = toml::from_str(text).map_err(|e| EnvError::PresetSyntax(e.to_string()))?;
        let cartpole = collect(raw.cartpole, VariationParams::CartpoleVar)?;
        let reacher = collect(raw.reacher, VariationParams::ReacherVar)?;
        if cartpole[0].variation != VariationParams::CartpoleVar(CartpoleVariation::DEFAULT)
            || reacher[0].variation != VariationParams::ReacherVar(ReacherVariation::DEFAULT)
        {
            return Err(EnvError::InvalidPreset(
                "variation 1 must be the unmodified dynamics".into(),
            ));
        }
        Ok(PresetTable {
            version: raw.version,
            cartpole,
            reacher,
        })
    }

    pub fn builtin() -> &'static PresetTable {
        static TABLE: OnceLock<PresetTable> = OnceLock::new();
        TABLE.get_or_init(|| PresetTable::parse(BUILTIN_PRESETS).expect("shipped preset table is valid"))
    }

    pub fn spec(&self, task: TaskId, variation_id: usize) -> Result<EnvSpec> {
        if !(1..=N_VARIATIONS).contains(&variation_id) {
            return Err(EnvError::UnknownVariation(variation_id));
        }
        Ok(self.specs(task)[variation_id - 1].clone())
    }

    pub fn specs(&self, task: TaskId) -> &[EnvSpec] {
        match task {
            TaskId::CartpoleVar => &self.cartpole,
            TaskId::ReacherVar => &self.reacher,
        }
    }
}

fn collect<V>(raw: RawTask<V>, wrap: fn(V) -> VariationParams) -> Result<Vec<EnvSpec>> {
    if raw.variation.len() != N_VARIATIONS {
        return Err(EnvError::InvalidPreset(format!(
            "expected {N_VARIATIONS} variations, found {}",
            raw.variation.len()
        )));
    }
    let mut specs: Vec<Option<EnvSpec>> = vec![None; N_VARIATIONS];
    for v in raw.variation {
        if !(1..=N_VARIATIONS).contains(&v.id) {
            return Err(EnvError::UnknownVariation(v.id));
        }
        let slot = &mut specs[v.id - 1];
        if slot.is_some() {
            return Err(EnvError::InvalidPreset(format!("duplicate variation id {}", v.id)));
        }
        *slot = Some(EnvSpec::new(
            v.id,
            &v.name,
            wrap(v.params),
            raw.max_steps,
            raw.reset_noise,
        )?);
    }
    Ok(specs
        .into_iter()
        .map(|s| s.expect("five distinct ids in 1..=5"))
        .collect())
}

/// Spec for `variation_id` from the built-in table.
pub fn make_variation(task: TaskId, variation_id: usize) -> Result<EnvSpec> {
    PresetTable::builtin().spec(task, variation_id)
}
