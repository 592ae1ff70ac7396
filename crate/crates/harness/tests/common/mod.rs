#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use hebb_envlab::TaskId;
use hebb_harness::ExperimentConfig;

/// A cart-pole config small enough to train in well under a second.
pub fn tiny_config(generations: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(TaskId::CartpoleVar, generations);
    c.hidden_layers = vec![3];
    c.es.population_size = 8;
    c.eval_episodes = 3;
    c.seed = 11;
    c
}

/// Every regular file under `dir`, keyed by relative path.
pub fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}
