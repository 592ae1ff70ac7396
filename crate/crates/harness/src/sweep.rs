//! Sharing-ratio sweep: one Hebbian model per rho plus the baselines, all
//! trained and evaluated under the same protocol.
//!
//! Rows, in order: one per requested rho (rho = 1 is the per-synapse model,
//! rho = N the single shared rule, anything in between the shared mixture
//! with `M = N / rho`), then `static`, `recurrent` and `random` (a uniform
//! random-action policy, the floor every learned model is compared with).

use std::path::PathBuf;

use hebb_envlab::random_policy_floor;

use crate::config::{Baseline, Experiment, ExperimentConfig, ModelConfig, Rho};
use crate::error::{HarnessError, Result};
use crate::evaluate::{evaluate, Cell, ResultsTable};
use crate::train::{thread_pool, train, TrainOptions};

/// Baseline rows appended after the rho rows.
pub const BASELINE_ROWS: [&str; 3] = ["static", "recurrent", "random"];

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub workers: usize,
    pub out_dir: PathBuf,
}

/// One trainable run of the sweep.
#[derive(Debug, Clone)]
pub struct SweepRun {
    pub slug: String,
    pub label: String,
    pub config: ExperimentConfig,
}

/// The trainable runs for `rho_list` on top of `base`: the rho rows followed
/// by the static and recurrent baselines.
pub fn sweep_runs(base: &ExperimentConfig, rho_list: &[Rho]) -> Vec<SweepRun> {
    let mut runs: Vec<SweepRun> = rho_list
        .iter()
        .map(|&rho| SweepRun {
            slug: format!("rho-{rho}"),
            label: format!("hebbian rho={rho}"),
            config: ExperimentConfig {
                baseline: Baseline::Hebbian,
                model: base.model.for_rho(rho),
                ..base.clone()
            },
        })
        .collect();
    for baseline in [Baseline::Static, Baseline::Recurrent] {
        runs.push(SweepRun {
            slug: baseline.name().into(),
            label: baseline.name().into(),
            config: ExperimentConfig {
                baseline,
                model: ModelConfig {
                    sigma: base.model.sigma,
                    mu_init_std: base.model.mu_init_std,
                    ..ModelConfig::default()
                },
                ..base.clone()
            },
        });
    }
    runs
}

fn train_and_evaluate(run: &SweepRun, opts: &SweepOptions) -> Result<Vec<Cell>> {
    let exp = Experiment::resolve(run.config.clone())?;
    let out_dir = opts.out_dir.join("runs").join(&run.slug);
    let outcome = train(
        &exp,
        &TrainOptions {
            workers: opts.workers,
            out_dir: out_dir.clone(),
            resume: None,
        },
    )?;
    let pool = thread_pool(opts.workers)?;
    let cells = evaluate(&exp, &outcome.checkpoint.state.model, &exp.meta.all_specs(), &pool)?;
    let mut table = ResultsTable::new(&exp.meta);
    table.push_cells(run.label.clone(), cells.clone());
    table.write(&out_dir)?;
    Ok(cells)
}

/// Trains and evaluates every row, writing each run under
/// `out_dir/runs/<slug>/` and the consolidated table into `out_dir`. A failed
/// run becomes a failed row; the sweep carries on.
pub fn run_rho_sweep(base: &ExperimentConfig, rho_list: &[Rho], opts: &SweepOptions) -> Result<ResultsTable> {
    if rho_list.is_empty() {
        return Err(HarnessError::Config("the rho list is empty".into()));
    }
    // validates the shared parts (task, held-out id, ES settings) up front
    let base_exp = Experiment::resolve(ExperimentConfig {
        model: ModelConfig::default(),
        baseline: Baseline::Hebbian,
        ..base.clone()
    })?;
    std::fs::create_dir_all(&opts.out_dir).map_err(|e| HarnessError::io(&opts.out_dir, e))?;
    let mut table = ResultsTable::new(&base_exp.meta);
    for run in sweep_runs(base, rho_list) {
        log::info!("sweep: {}", run.label);
        match train_and_evaluate(&run, opts) {
            Ok(cells) => table.push_cells(run.label, cells),
            Err(e) => {
                log::warn!("sweep: {} failed: {e}", run.label);
                table.push_failure(run.label, e.to_string());
            }
        }
    }
    let cells = base_exp
        .meta
        .all_specs()
        .iter()
        .map(|spec| {
            let f = random_policy_floor(spec, base.eval_episodes, base.seed);
            Cell {
                mean: f.mean,
                std: f.std,
                episodes: f.episodes,
            }
        })
        .collect();
    table.push_cells(BASELINE_ROWS[2], cells);
    table.write(&opts.out_dir)?;
    Ok(table)
}
