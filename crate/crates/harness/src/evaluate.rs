//! Per-variation evaluation and the consolidated results table.

use std::fmt::Write as _;
use std::path::Path;

use hebb_core::seed::{self, Purpose};
use hebb_core::{Genotype, GenotypeModel};
use hebb_envlab::{EnvSpec, MetaTask};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::write_atomic;
use crate::config::{EvalMode, Experiment};
use crate::error::Result;
use crate::rollout::{rollout, RolloutSetup};

pub const RESULTS_JSON: &str = "results.json";
pub const RESULTS_CSV: &str = "results.csv";
pub const RESULTS_MD: &str = "results.md";

/// Mean and population standard deviation over `episodes` fitness values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mean: f64,
    pub std: f64,
    pub episodes: usize,
}

impl Cell {
    pub fn from_samples(xs: &[f64]) -> Cell {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Cell {
            mean,
            std: var.sqrt(),
            episodes: xs.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub variation_id: usize,
    pub name: String,
    pub held_out: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub model: String,
    /// One per column; `None` when the run failed.
    pub cells: Vec<Option<Cell>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

/// Variations as columns, models as rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub task: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Row>,
}

impl ResultsTable {
    pub fn new(meta: &MetaTask) -> Self {
        ResultsTable {
            task: meta.task.to_string(),
            columns: meta
                .all_specs()
                .iter()
                .map(|s| Column {
                    variation_id: s.variation_id,
                    name: s.name.clone(),
                    held_out: s.variation_id == meta.held_out_id,
                })
                .collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_cells(&mut self, model: impl Into<String>, cells: Vec<Cell>) {
        assert_eq!(cells.len(), self.columns.len(), "one cell per variation");
        self.rows.push(Row {
            model: model.into(),
            cells: cells.into_iter().map(Some).collect(),
            error: None,
        });
    }

    pub fn push_failure(&mut self, model: impl Into<String>, error: impl Into<String>) {
        self.rows.push(Row {
            model: model.into(),
            cells: vec![None; self.columns.len()],
            error: Some(error.into()),
        });
    }

    pub fn cell_count(&self) -> usize {
        self.rows.len() * self.columns.len()
    }

    /// Human-readable table, values rounded to the nearest integer. The
    /// held-out variation is marked in bold with a trailing `*`.
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        s.push_str("| model |");
        for c in &self.columns {
            if c.held_out {
                let _ = write!(s, " **{}:{}*** |", c.variation_id, c.name);
            } else {
                let _ = write!(s, " {}:{} |", c.variation_id, c.name);
            }
        }
        s.push_str("\n|---|");
        s.push_str(&"---:|".repeat(self.columns.len()));
        s.push('\n');
        for r in &self.rows {
            let _ = write!(s, "| {} |", r.model);
            for (cell, col) in r.cells.iter().zip(&self.columns) {
                let text = match cell {
                    Some(c) => format!("{} ± {}", round_int(c.mean), round_int(c.std)),
                    None => "failed".into(),
                };
                if col.held_out {
                    let _ = write!(s, " **{text}** |");
                } else {
                    let _ = write!(s, " {text} |");
                }
            }
            s.push('\n');
        }
        let _ = writeln!(
            s,
            "\n{}: mean ± std over evaluation episodes; * held-out variation.",
            self.task
        );
        for r in self.rows.iter().filter(|r| r.error.is_some()) {
            let _ = writeln!(s, "- {} failed: {}", r.model, r.error.as_deref().unwrap_or(""));
        }
        s
    }

    /// One line per (model, variation) with full-precision values.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("model,variation_id,variation,held_out,mean,std,episodes,error\n");
        for r in &self.rows {
            for (cell, col) in r.cells.iter().zip(&self.columns) {
                let (mean, std, n) = match cell {
                    Some(c) => (c.mean.to_string(), c.std.to_string(), c.episodes.to_string()),
                    None => Default::default(),
                };
                let _ = writeln!(
                    s,
                    "{},{},{},{},{mean},{std},{n},{}",
                    csv_field(&r.model),
                    col.variation_id,
                    csv_field(&col.name),
                    col.held_out,
                    csv_field(r.error.as_deref().unwrap_or(""))
                );
            }
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("results serialize") + "\n"
    }

    /// Writes `results.{json,csv,md}` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join(RESULTS_JSON), self.to_json().as_bytes())?;
        write_atomic(&dir.join(RESULTS_CSV), self.to_csv().as_bytes())?;
        write_atomic(&dir.join(RESULTS_MD), self.to_markdown().as_bytes())
    }
}

fn round_int(x: f64) -> i64 {
    x.round() as i64
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Seed of evaluation episode `e` on variation `variation_id`.
pub fn eval_episode_seed(base: u64, variation_id: usize, e: usize) -> u64 {
    seed::derive(base, Purpose::EvalEpisode, 0, variation_id as u64, e as u64)
}

/// Seed of the genotype drawn for evaluation episode `e`.
pub fn eval_genotype_seed(base: u64, variation_id: usize, e: usize) -> u64 {
    seed::derive(base, Purpose::EvalGenotype, 0, variation_id as u64, e as u64)
}

/// Runs `episodes` episodes per spec through `episode(spec, e)` and
/// summarizes each spec into a [`Cell`].
pub fn evaluate_with<F>(specs: &[EnvSpec], episodes: usize, pool: &rayon::ThreadPool, episode: F) -> Result<Vec<Cell>>
where
    F: Fn(&EnvSpec, usize) -> Result<f64> + Sync,
{
    specs
        .iter()
        .map(|spec| {
            let xs = pool.install(|| {
                (0..episodes)
                    .into_par_iter()
                    .map(|e| episode(spec, e))
                    .collect::<Result<Vec<f64>>>()
            })?;
            Ok(Cell::from_samples(&xs))
        })
        .collect()
}

/// Evaluates `model` on every spec with the experiment's episode count and
/// evaluation mode.
pub fn evaluate(
    exp: &Experiment,
    model: &GenotypeModel,
    specs: &[EnvSpec],
    pool: &rayon::ThreadPool,
) -> Result<Vec<Cell>> {
    let setup = RolloutSetup::new(exp);
    let base = exp.config.seed;
    let mode = (exp.config.eval_mode == EvalMode::Mean).then(|| model.mode_genotype());
    evaluate_with(specs, exp.config.eval_episodes, pool, |spec, e| {
        let sampled: Genotype;
        let g = match &mode {
            Some(g) => g,
            None => {
                sampled = model.sample(eval_genotype_seed(base, spec.variation_id, e));
                &sampled
            }
        };
        Ok(rollout(&setup, g, spec, eval_episode_seed(base, spec.variation_id, e))?.fitness)
    })
}
