//! Episodes of a genotype's phenotype in an environment.

use hebb_core::genotype::materialize;
use hebb_core::seed;
use hebb_core::{Genotype, NetworkConfig, PlasticNetwork, RecurrentNetwork, RuleAssignment, Topology};
use hebb_envlab::{Env, EnvSpec, EpisodeResult, MetaTask};
use serde::Serialize;

use crate::config::{Baseline, Experiment};
use crate::error::Result;

/// What a rollout needs besides the genotype.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutSetup {
    pub topology: Topology,
    pub network: NetworkConfig,
    pub baseline: Baseline,
    pub episodes_per_variation: usize,
}

impl RolloutSetup {
    pub fn new(exp: &Experiment) -> Self {
        RolloutSetup {
            topology: exp.topology.clone(),
            network: exp.config.network,
            baseline: exp.config.baseline,
            episodes_per_variation: exp.config.episodes_per_variation,
        }
    }
}

/// Seed of the initial random weights for the episode seeded `episode_seed`.
/// The environment reset uses `episode_seed` itself.
pub fn weight_seed(episode_seed: u64) -> u64 {
    seed::child(episode_seed, 1)
}

enum Controller {
    Hebbian { net: PlasticNetwork, rules: RuleAssignment },
    Static(PlasticNetwork),
    Recurrent(RecurrentNetwork),
}

impl Controller {
    fn build(setup: &RolloutSetup, g: &Genotype, episode_seed: u64) -> Result<Self> {
        let clip = setup.network.clip;
        Ok(match setup.baseline {
            Baseline::Hebbian => Controller::Hebbian {
                net: PlasticNetwork::init_weights(&setup.topology, &setup.network, weight_seed(episode_seed)),
                rules: materialize(g, &setup.topology)?,
            },
            Baseline::Static => Controller::Static(PlasticNetwork::from_flat(&setup.topology, flat(g), clip)?),
            Baseline::Recurrent => {
                let mut net = RecurrentNetwork::from_flat(&setup.topology, flat(g), clip)?;
                net.reset();
                Controller::Recurrent(net)
            }
        })
    }

    /// Writes the action for `obs`; false when the network output is unusable.
    fn act(&mut self, obs: &[f64], action: &mut [f64]) -> bool {
        let out = match self {
            Controller::Hebbian { net, rules } => {
                let ok = match net.forward(obs) {
                    Ok(out) => {
                        action.copy_from_slice(out);
                        true
                    }
                    Err(_) => false,
                };
                return ok && net.hebbian_step(rules).is_ok() && action.iter().all(|a| a.is_finite());
            }
            Controller::Static(net) => net.forward(obs),
            Controller::Recurrent(net) => net.forward(obs),
        };
        match out {
            Ok(out) => {
                action.copy_from_slice(out);
                action.iter().all(|a| a.is_finite())
            }
            Err(_) => false,
        }
    }
}

fn flat(g: &Genotype) -> &[f64] {
    g.h.as_slice().expect("genotype matrices are standard layout")
}

/// One step of a traced episode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub observation: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
}

/// Runs one episode: fresh network (random weights from the episode seed for
/// the Hebbian path, the genotype itself for the baselines), then
/// `forward -> env step -> hebbian update` until done. Non-finite network
/// output aborts the episode with the environment's floor fitness.
pub fn rollout(setup: &RolloutSetup, g: &Genotype, spec: &EnvSpec, episode_seed: u64) -> Result<EpisodeResult> {
    rollout_traced(setup, g, spec, episode_seed, |_| {})
}

pub fn rollout_traced(
    setup: &RolloutSetup,
    g: &Genotype,
    spec: &EnvSpec,
    episode_seed: u64,
    mut on_step: impl FnMut(StepRecord),
) -> Result<EpisodeResult> {
    let mut controller = Controller::build(setup, g, episode_seed)?;
    let mut env = Env::reset(spec, episode_seed);
    let mut obs = vec![0.0; spec.obs_dim];
    let mut action = vec![0.0; spec.act_dim];
    let mut fitness = 0.0;
    while !env.is_done() {
        env.observe(&mut obs);
        if !controller.act(&obs, &mut action) {
            return Ok(EpisodeResult::aborted(spec, env.steps()));
        }
        let out = env.step(&action)?;
        fitness += out.reward;
        on_step(StepRecord {
            step: env.steps(),
            observation: obs.clone(),
            action: action.clone(),
            reward: out.reward,
        });
    }
    Ok(EpisodeResult {
        fitness,
        steps: env.steps(),
        terminated_early: env.failed(),
        aborted: false,
    })
}

/// Arithmetic mean of the training variations' rollout fitness. `seed_of(v,
/// e)` gives the episode seed for training variation slot `v` and repetition
/// `e`.
pub fn meta_fitness(
    setup: &RolloutSetup,
    g: &Genotype,
    meta: &MetaTask,
    seed_of: impl Fn(usize, usize) -> u64,
) -> Result<f64> {
    mean_over_variations(meta.train_specs.len(), setup.episodes_per_variation, |v, e| {
        Ok(rollout(setup, g, &meta.train_specs[v], seed_of(v, e))?.fitness)
    })
}

/// Mean over `variations` of the per-variation mean of `episode(v, e)`,
/// `e < reps`.
pub fn mean_over_variations(
    variations: usize,
    reps: usize,
    mut episode: impl FnMut(usize, usize) -> Result<f64>,
) -> Result<f64> {
    let mut per_variation = Vec::with_capacity(variations);
    for v in 0..variations {
        let mut total = 0.0;
        for e in 0..reps {
            total += episode(v, e)?;
        }
        per_variation.push(total / reps as f64);
    }
    Ok(per_variation.iter().sum::<f64>() / variations as f64)
}
