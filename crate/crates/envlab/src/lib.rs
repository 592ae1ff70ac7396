//! Desk-scale episodic control tasks with five physical variations each,
//! and the leave-one-out meta-task composer.
//!
//! * `cartpole-var`: 4 observations, 1 action. Variations scale cart friction
//!   (x2, x0.5) or add a constant push to the west or east.
//! * `reacher-var`: 8 observations, 2 actions. Variations disable one joint
//!   motor or lengthen one link by 50%.
//!
//! Presets live in `presets.toml`, compiled into the crate.

pub mod cartpole;
mod env;
mod error;
mod meta;
mod presets;
pub mod reacher;

pub use env::{
    random_policy_floor, run_episode, Env, EnvState, EpisodeResult, FloorStats, StepOutcome, FLOOR_EPISODES, FLOOR_SEED,
};
pub use error::{EnvError, Result};
pub use meta::{make_meta_task, make_meta_task_from, MetaTask};
pub use presets::{
    make_variation, CartpoleVariation, EnvSpec, PresetTable, ReacherVariation, TaskId, VariationParams,
    BUILTIN_PRESETS, N_VARIATIONS,
};
