//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use hebb_core::ModelKind;
use hebb_envlab::{make_variation, EnvSpec};

use crate::checkpoint::Checkpoint;
use crate::config::{Baseline, Experiment, ExperimentConfig, ModelConfig, Rho};
use crate::error::{HarnessError, Result};
use crate::evaluate::{eval_episode_seed, eval_genotype_seed, evaluate, ResultsTable};
use crate::rollout::{rollout_traced, RolloutSetup};
use crate::sweep::{run_rho_sweep, SweepOptions};
use crate::train::{thread_pool, train, TrainOptions, CHECKPOINT_FILE};
use crate::verify::{run_verify, REPORT_FILE};

#[derive(Debug, Parser)]
#[command(
    name = "hebb",
    version,
    about = "Meta-learn Hebbian plasticity rules with evolution strategies"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model, then evaluate it on all five variations.
    Train(TrainArgs),
    /// Evaluate a checkpoint on all five variations.
    Evaluate(EvaluateArgs),
    /// Train and evaluate one model per sharing ratio plus the baselines.
    Sweep(SweepArgs),
    /// Check analytic gradients and likelihoods against the oracles.
    Verify(VerifyArgs),
    /// Re-run one evaluation episode and print its step-by-step trace.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Rollout worker threads; results do not depend on it.
    #[arg(long, default_value_t = default_workers())]
    pub workers: usize,
    #[arg(long, default_value = "runs/latest")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub held_out: Option<usize>,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Continue from this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Sharing ratio: 1, 16, 32, 64, 128, 256 or N.
    #[arg(long)]
    pub rho: Option<Rho>,
    #[arg(long, value_parser = parse_baseline)]
    pub baseline: Option<Baseline>,
    /// Skip the evaluation after training.
    #[arg(long)]
    pub no_eval: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Defaults to `<out-dir>/checkpoint.bin`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub rho: Option<Rho>,
    #[arg(long, value_parser = parse_baseline)]
    pub baseline: Option<Baseline>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated sharing ratios.
    #[arg(long, value_delimiter = ',', default_value = "1,16,32,64,128,256,N")]
    pub rho: Vec<Rho>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub rho: Option<Rho>,
    #[arg(long, value_parser = parse_baseline)]
    pub baseline: Option<Baseline>,
    /// Variation id, 1-5.
    #[arg(long, default_value_t = 1)]
    pub variation: usize,
    /// Evaluation episode index.
    #[arg(long, default_value_t = 0)]
    pub episode: usize,
    /// Write the trace as JSON lines here instead of stdout.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

fn parse_baseline(s: &str) -> std::result::Result<Baseline, String> {
    match s {
        "hebbian" => Ok(Baseline::Hebbian),
        "static" => Ok(Baseline::Static),
        "recurrent" => Ok(Baseline::Recurrent),
        _ => Err(format!("expected hebbian, static or recurrent, got {s:?}")),
    }
}

/// Applies command-line overrides to a loaded config.
pub fn apply_overrides(
    mut config: ExperimentConfig,
    common: &Common,
    rho: Option<Rho>,
    baseline: Option<Baseline>,
) -> ExperimentConfig {
    if let Some(s) = common.seed {
        config.seed = s;
    }
    if let Some(h) = common.held_out {
        config.held_out = h;
    }
    if let Some(b) = baseline {
        if b != config.baseline && b != Baseline::Hebbian {
            config.model = ModelConfig {
                sigma: config.model.sigma,
                mu_init_std: config.model.mu_init_std,
                ..ModelConfig::default()
            };
        }
        config.baseline = b;
    }
    if let Some(r) = rho {
        config.model = match config.model.kind {
            ModelKind::PerSynapse | ModelKind::SharedGmm | ModelKind::SingleRule => config.model.for_rho(r),
            _ => ModelConfig {
                rho: Some(r),
                components: None,
                ..config.model.clone()
            },
        };
    }
    config
}

fn load_experiment(common: &Common, rho: Option<Rho>, baseline: Option<Baseline>) -> Result<Experiment> {
    let config = ExperimentConfig::load(&common.config)?;
    Experiment::resolve(apply_overrides(config, common, rho, baseline))
}

fn load_checkpoint(exp: &Experiment, path: &Path) -> Result<Checkpoint> {
    let ckpt = Checkpoint::load(path)?;
    if ckpt.config_hash != exp.config.trajectory_hash() {
        log::warn!("{} was trained with a different configuration", path.display());
    }
    Ok(ckpt)
}

fn evaluate_and_write(exp: &Experiment, ckpt: &Checkpoint, workers: usize, out_dir: &Path) -> Result<ResultsTable> {
    let pool = thread_pool(workers)?;
    let cells = evaluate(exp, &ckpt.state.model, &exp.meta.all_specs(), &pool)?;
    let mut table = ResultsTable::new(&exp.meta);
    table.push_cells(exp.label(), cells);
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    table.write(out_dir)?;
    Ok(table)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => {
            let exp = load_experiment(&a.common, a.rho, a.baseline)?;
            let outcome = train(
                &exp,
                &TrainOptions {
                    workers: a.common.workers,
                    out_dir: a.common.out_dir.clone(),
                    resume: a.resume,
                },
            )?;
            if !a.no_eval {
                let table = evaluate_and_write(&exp, &outcome.checkpoint, a.common.workers, &a.common.out_dir)?;
                print!("{}", table.to_markdown());
            }
            Ok(())
        }
        Command::Evaluate(a) => {
            let exp = load_experiment(&a.common, a.rho, a.baseline)?;
            let path = a.checkpoint.unwrap_or_else(|| a.common.out_dir.join(CHECKPOINT_FILE));
            let ckpt = load_checkpoint(&exp, &path)?;
            let table = evaluate_and_write(&exp, &ckpt, a.common.workers, &a.common.out_dir)?;
            print!("{}", table.to_markdown());
            Ok(())
        }
        Command::Sweep(a) => {
            let mut base = ExperimentConfig::load(&a.common.config)?;
            if let Some(s) = a.common.seed {
                base.seed = s;
            }
            if let Some(h) = a.common.held_out {
                base.held_out = h;
            }
            let table = run_rho_sweep(
                &base,
                &a.rho,
                &SweepOptions {
                    workers: a.common.workers,
                    out_dir: a.common.out_dir,
                },
            )?;
            print!("{}", table.to_markdown());
            Ok(())
        }
        Command::Verify(a) => {
            let report = run_verify(a.trials, a.seed);
            println!("{}", report.summary());
            std::fs::create_dir_all(&a.out_dir).map_err(|e| HarnessError::io(&a.out_dir, e))?;
            let path = a.out_dir.join(REPORT_FILE);
            let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
            std::fs::write(&path, json).map_err(|e| HarnessError::io(&path, e))?;
            if report.passed {
                Ok(())
            } else {
                Err(HarnessError::VerificationFailed(format!("see {}", path.display())))
            }
        }
        Command::Replay(a) => replay(a),
    }
}

fn replay(a: ReplayArgs) -> Result<()> {
    use std::io::Write;

    let exp = load_experiment(&a.common, a.rho, a.baseline)?;
    let path = a
        .checkpoint
        .clone()
        .unwrap_or_else(|| a.common.out_dir.join(CHECKPOINT_FILE));
    let ckpt = load_checkpoint(&exp, &path)?;
    let spec: EnvSpec = make_variation(exp.config.task, a.variation)?;
    let base = exp.config.seed;
    let g = match exp.config.eval_mode {
        crate::config::EvalMode::Mean => ckpt.state.model.mode_genotype(),
        crate::config::EvalMode::Sample => ckpt
            .state
            .model
            .sample(eval_genotype_seed(base, a.variation, a.episode)),
    };
    let mut lines = Vec::new();
    let result = rollout_traced(
        &RolloutSetup::new(&exp),
        &g,
        &spec,
        eval_episode_seed(base, a.variation, a.episode),
        |rec| lines.push(serde_json::to_string(&rec).expect("step record serializes")),
    )?;
    let text = lines.join("\n") + "\n";
    match &a.trace {
        Some(p) => std::fs::write(p, text).map_err(|e| HarnessError::io(p, e))?,
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| HarnessError::io("<stdout>", e))?,
    }
    eprintln!(
        "{} episode {}: fitness {} over {} steps{}",
        spec.label(),
        a.episode,
        result.fitness,
        result.steps,
        if result.aborted { " (aborted)" } else { "" }
    );
    Ok(())
}
