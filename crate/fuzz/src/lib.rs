//! Fuzz target bodies. The harness test suite replays the checked-in corpus
//! through these same functions.

use hebb_envlab::PresetTable;
use hebb_harness::checkpoint::Checkpoint;
use hebb_harness::{Experiment, ExperimentConfig};

/// Accepted configs serialize back to TOML that parses to the same config.
pub fn config_parse(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(config) = ExperimentConfig::parse(text) else {
        return;
    };
    let once = config.to_toml();
    let again = ExperimentConfig::parse(&once).expect("serialized config parses");
    assert_eq!(again.to_toml(), once);
    assert_eq!(again.trajectory_hash(), config.trajectory_hash());
    if let Ok(exp) = Experiment::resolve(config) {
        assert!(exp.topology.n_synapses() > 0);
    }
}

/// Accepted checkpoints re-encode to the exact input bytes.
pub fn checkpoint_decode(data: &[u8]) {
    if let Ok(ckpt) = Checkpoint::decode(data) {
        assert_eq!(ckpt.encode(), data);
    }
}

/// Accepted preset tables define all five variations of every task.
pub fn preset_parse(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(table) = PresetTable::parse(text) else { return };
    for task in hebb_envlab::TaskId::ALL {
        for id in 1..=5 {
            let spec = table.spec(task, id).expect("parsed tables are complete");
            assert_eq!(spec.variation_id, id);
        }
    }
}
