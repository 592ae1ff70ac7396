use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("unknown variation id {0} (expected 1..=5)")]
    UnknownVariation(usize),
    #[error("preset table: {0}")]
    PresetSyntax(String),
    #[error("invalid preset: {0}")]
    InvalidPreset(String),
    #[error("action has {actual} components, task expects {expected}")]
    ActionDimension { expected: usize, actual: usize },
    #[error("episode already finished")]
    EpisodeOver,
}

pub type Result<T> = std::result::Result<T, EnvError>;
