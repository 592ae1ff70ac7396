//! The generational ES loop and its on-disk artifacts.
//!
//! A run directory holds:
//!
//! * `config.toml`: the resolved config, frozen at the start of the run
//! * `history.jsonl` / `history.csv`: one [`HistoryRecord`] per generation
//! * `checkpoint.bin`: the latest state
//! * `checkpoints/gen-NNNNNN.bin`: periodic snapshots (`checkpoint_every`)
//! * `diverged.bin`: written instead when an update produces non-finite theta

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use hebb_core::es::{current_lr, estimate_gradient, sample_population};
use hebb_core::seed::{self, Purpose};
use hebb_core::{EsConfig, EsState, FitnessReport, Genotype};
use hebb_envlab::PresetTable;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{write_atomic, Checkpoint};
use crate::config::Experiment;
use crate::error::{HarnessError, Result};
use crate::rollout::{meta_fitness, RolloutSetup};

pub const CONFIG_FILE: &str = "config.toml";
pub const HISTORY_JSONL: &str = "history.jsonl";
pub const HISTORY_CSV: &str = "history.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const DIVERGED_FILE: &str = "diverged.bin";

/// Per-generation log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub generation: u64,
    pub mean_fitness: f64,
    pub max_fitness: f64,
    pub min_fitness: f64,
    pub lr: f64,
    pub grad_mu_inf: f64,
    /// Absent for models without assignment logits.
    pub grad_lambda_inf: Option<f64>,
}

const CSV_HEADER: &str = "generation,mean_fitness,max_fitness,min_fitness,lr,grad_mu_inf,grad_lambda_inf";

impl HistoryRecord {
    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.generation,
            self.mean_fitness,
            self.max_fitness,
            self.min_fitness,
            self.lr,
            self.grad_mu_inf,
            self.grad_lambda_inf.map(|x| x.to_string()).unwrap_or_default()
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub workers: usize,
    pub out_dir: PathBuf,
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// Records of the generations run by this call.
    pub history: Vec<HistoryRecord>,
}

pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    if workers == 0 {
        return Err(HarnessError::Config("--workers must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Config(format!("cannot start worker pool: {e}")))
}

/// Episode seed for training variation slot `v`, repetition `rep`, in
/// generation `gen`. Every candidate of a generation sees the same episodes.
pub fn train_episode_seed(base: u64, generation: u64, v: usize, rep: usize) -> u64 {
    seed::derive(base, Purpose::TrainEpisode, generation, v as u64, rep as u64)
}

/// Runs generations `state.generation .. until`, evaluating each candidate
/// with `fitness(genotype, generation)` on `pool`. `on_generation` sees each
/// record after the update has been applied to `state`.
pub fn run_generations<F>(
    state: &mut EsState,
    es: &EsConfig,
    until: u64,
    pool: &rayon::ThreadPool,
    fitness: F,
    mut on_generation: impl FnMut(&EsState, &HistoryRecord) -> Result<()>,
) -> Result<()>
where
    F: Fn(&Genotype, u64) -> Result<f64> + Sync,
{
    while state.generation < until {
        let gen = state.generation;
        let population = sample_population(&state.model, es, state.base_seed, gen);
        let raw = pool.install(|| {
            population
                .par_iter()
                .map(|c| fitness(&c.genotype, gen))
                .collect::<Result<Vec<f64>>>()
        })?;
        let report = FitnessReport::new(raw, es.fitness_shaping)?;
        let genotypes: Vec<Genotype> = population.into_iter().map(|c| c.genotype).collect();
        let grad = estimate_gradient(&genotypes, &report.shaped, &state.model)?;
        let record = HistoryRecord {
            generation: gen,
            mean_fitness: report.mean(),
            max_fitness: report.max(),
            min_fitness: report.min(),
            lr: current_lr(es, gen),
            grad_mu_inf: grad.mu_inf_norm(),
            grad_lambda_inf: grad.lambda_inf_norm(),
        };
        state.apply(es, &grad)?;
        if !state.model.params().is_finite() {
            return Err(HarnessError::NumericalAbort {
                generation: gen,
                reason: "non-finite parameters after update".into(),
            });
        }
        on_generation(state, &record)?;
    }
    Ok(())
}

/// Trains `exp` into `opts.out_dir`, resuming from `opts.resume` if given.
pub fn train(exp: &Experiment, opts: &TrainOptions) -> Result<TrainOutcome> {
    let out = &opts.out_dir;
    fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let hash = exp.config.trajectory_hash();
    let preset_version = PresetTable::builtin().version;
    let (mut state, kept) = match &opts.resume {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            if ckpt.config_hash != hash {
                return Err(HarnessError::Config(format!(
                    "{} was written by a different configuration",
                    path.display()
                )));
            }
            if ckpt.preset_version != preset_version {
                return Err(HarnessError::Config(format!(
                    "{} uses preset table version {}, this build has {}",
                    path.display(),
                    ckpt.preset_version,
                    preset_version
                )));
            }
            let kept = read_history(&out.join(HISTORY_JSONL))?
                .into_iter()
                .filter(|r| r.generation < ckpt.state.generation)
                .collect();
            (ckpt.state, kept)
        }
        None => (
            EsState::new(exp.initial_model()?, &exp.config.es, exp.config.seed),
            Vec::new(),
        ),
    };
    write_atomic(&out.join(CONFIG_FILE), exp.config.to_toml().as_bytes())?;
    let mut history = HistoryWriter::create(out, &kept)?;
    let checkpoint_of = |state: &EsState| Checkpoint {
        config_hash: hash,
        preset_version,
        state: state.clone(),
    };

    let setup = RolloutSetup::new(exp);
    let base = exp.config.seed;
    let pool = thread_pool(opts.workers)?;
    let every = exp.config.checkpoint_every;
    let mut records = Vec::new();
    let start = state.generation;
    log::info!(
        "training {} on {} (held out {}), generations {start}..{}",
        exp.label(),
        exp.config.task,
        exp.config.held_out,
        exp.config.generations
    );
    let mut last_good = state.clone();
    let result = run_generations(
        &mut state,
        &exp.config.es,
        exp.config.generations,
        &pool,
        |g, gen| meta_fitness(&setup, g, &exp.meta, |v, rep| train_episode_seed(base, gen, v, rep)),
        |state, record| {
            history.append(record)?;
            if every > 0 && state.generation % every == 0 {
                let snap = out.join("checkpoints");
                fs::create_dir_all(&snap).map_err(|e| HarnessError::io(&snap, e))?;
                checkpoint_of(state).save(&snap.join(format!("gen-{:06}.bin", state.generation)))?;
                checkpoint_of(state).save(&out.join(CHECKPOINT_FILE))?;
            }
            if record.generation % 10 == 0 || state.generation == exp.config.generations {
                log::info!(
                    "gen {:>5}  mean {:>10.3}  max {:>10.3}  |grad mu| {:.3e}",
                    record.generation,
                    record.mean_fitness,
                    record.max_fitness,
                    record.grad_mu_inf
                );
            }
            records.push(record.clone());
            last_good = state.clone();
            Ok(())
        },
    );
    history.flush()?;
    if let Err(e @ HarnessError::NumericalAbort { .. }) = result {
        // the state that diverged, for diagnosis; the last good state stays in checkpoint.bin
        checkpoint_of(&state).save(&out.join(DIVERGED_FILE))?;
        checkpoint_of(&last_good).save(&out.join(CHECKPOINT_FILE))?;
        return Err(e);
    }
    result?;
    let checkpoint = checkpoint_of(&state);
    checkpoint.save(&out.join(CHECKPOINT_FILE))?;
    Ok(TrainOutcome {
        checkpoint,
        history: records,
    })
}

pub fn read_history(path: &Path) -> Result<Vec<HistoryRecord>> {
    let f = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(HarnessError::io(path, e)),
    };
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| HarnessError::Checkpoint(format!("{}: bad history line: {e}", path.display())))?;
        out.push(rec);
    }
    Ok(out)
}

/// Rewrites both history files with `kept`, then appends.
struct HistoryWriter {
    jsonl: BufWriter<File>,
    csv: BufWriter<File>,
    dir: PathBuf,
}

impl HistoryWriter {
    fn create(dir: &Path, kept: &[HistoryRecord]) -> Result<Self> {
        let open = |name: &str| {
            let p = dir.join(name);
            OpenOptions::new()
                .create(true)
                .write(true)
                .truncate(true)
                .open(&p)
                .map(BufWriter::new)
                .map_err(|e| HarnessError::io(p, e))
        };
        let mut w = HistoryWriter {
            jsonl: open(HISTORY_JSONL)?,
            csv: open(HISTORY_CSV)?,
            dir: dir.to_path_buf(),
        };
        writeln!(w.csv, "{CSV_HEADER}").map_err(|e| HarnessError::io(dir.join(HISTORY_CSV), e))?;
        for r in kept {
            w.append(r)?;
        }
        Ok(w)
    }

    fn append(&mut self, r: &HistoryRecord) -> Result<()> {
        let line = serde_json::to_string(r).expect("history record serializes");
        writeln!(self.jsonl, "{line}").map_err(|e| HarnessError::io(self.dir.join(HISTORY_JSONL), e))?;
        writeln!(self.csv, "{}", r.csv_line()).map_err(|e| HarnessError::io(self.dir.join(HISTORY_CSV), e))
    }

    fn flush(&mut self) -> Result<()> {
        self.jsonl
            .flush()
            .map_err(|e| HarnessError::io(self.dir.join(HISTORY_JSONL), e))?;
        self.csv
            .flush()
            .map_err(|e| HarnessError::io(self.dir.join(HISTORY_CSV), e))
    }
}
