use serde::{Deserialize, Serialize};

use crate::error::{EnvError, Result};
use crate::presets::{EnvSpec, PresetTable, TaskId, N_VARIATIONS};

/// Four training variations and one held-out test variation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaTask {
    pub task: TaskId,
    pub held_out_id: usize,
    pub train_specs: Vec<EnvSpec>,
    pub test_spec: EnvSpec,
}

impl MetaTask {
    /// All five specs in variation order.
    pub fn all_specs(&self) -> Vec<EnvSpec> {
        let mut all = self.train_specs.clone();
        all.insert(self.held_out_id - 1, self.test_spec.clone());
        all
    }
}

pub fn make_meta_task(task: TaskId, held_out_id: usize) -> Result<MetaTask> {
    make_meta_task_from(PresetTable::builtin(), task, held_out_id)
}

pub fn make_meta_task_from(table: &PresetTable, task: TaskId, held_out_id: usize) -> Result<MetaTask> {
    if !(1..=N_VARIATIONS).contains(&held_out_id) {
        return Err(EnvError::UnknownVariation(held_out_id));
    }
    let specs = table.specs(task);
    Ok(MetaTask {
        task,
        held_out_id,
        train_specs: specs
            .iter()
            .filter(|s| s.variation_id != held_out_id)
            .cloned()
            .collect(),
        test_spec: specs[held_out_id - 1].clone(),
    })
}
