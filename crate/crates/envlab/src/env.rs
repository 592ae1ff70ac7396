use hebb_core::seed::{self, Purpose};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cartpole::{self, CartpolePhysics, CartpoleState};
use crate::error::{EnvError, Result};
use crate::presets::{EnvSpec, VariationParams};
use crate::reacher::{ReacherPhysics, ReacherState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EnvState {
    Cartpole(CartpoleState),
    Reacher(ReacherState),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Physics {
    Cartpole(CartpolePhysics),
    Reacher(ReacherPhysics),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub done: bool,
}

/// Accumulated outcome of one episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub fitness: f64,
    pub steps: usize,
    /// Ended on the task's failure condition (or was aborted) before `max_steps`.
    pub terminated_early: bool,
    /// The policy produced non-finite output; `fitness` is the floor.
    pub aborted: bool,
}

impl EpisodeResult {
    pub fn aborted(spec: &EnvSpec, steps: usize) -> Self {
        EpisodeResult {
            fitness: spec.floor_fitness(),
            steps,
            terminated_early: true,
            aborted: true,
        }
    }
}

/// One episode of one environment.
#[derive(Debug, Clone)]
pub struct Env {
    spec: EnvSpec,
    physics: Physics,
    state: EnvState,
    steps: usize,
    done: bool,
    failed: bool,
}

impl Env {
    /// Rest state with every component perturbed by `U(-noise, noise)`.
    pub fn reset(spec: &EnvSpec, seed: u64) -> Self {
        let mut rng = seed::rng_from_seed(seed);
        let noise = spec.reset_noise;
        let mut u = || {
            if noise > 0.0 {
                rng.random_range(-noise..=noise)
            } else {
                0.0
            }
        };
        let state = match spec.variation {
            VariationParams::CartpoleVar(_) => EnvState::Cartpole(CartpoleState::from_array([u(), u(), u(), u()])),
            VariationParams::ReacherVar(_) => EnvState::Reacher(ReacherState {
                q: [u(), u()],
                q_dot: [u(), u()],
            }),
        };
        Env::from_state(spec, state)
    }

    /// Starts an episode from an explicit state.
    ///
    /// # Panics
    /// If `state` belongs to a different task than `spec`.
    pub fn from_state(spec: &EnvSpec, state: EnvState) -> Self {
        let physics = match (&spec.variation, &state) {
            (VariationParams::CartpoleVar(v), EnvState::Cartpole(_)) => Physics::Cartpole(CartpolePhysics::new(v)),
            (VariationParams::ReacherVar(v), EnvState::Reacher(_)) => Physics::Reacher(ReacherPhysics::new(v)),
            _ => panic!("state does not belong to task {}", spec.task),
        };
        Env {
            spec: spec.clone(),
            physics,
            state,
            steps: 0,
            done: false,
            failed: false,
        }
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn state(&self) -> EnvState {
        self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Whether the episode ended on the failure condition.
    pub fn failed(&self) -> bool {
        self.failed
    }

    pub fn observe(&self, out: &mut [f64]) {
        match (&self.physics, &self.state) {
            (Physics::Cartpole(_), EnvState::Cartpole(s)) => cartpole::observe(s, out),
            (Physics::Reacher(p), EnvState::Reacher(s)) => p.observe(s, out),
            _ => unreachable!("physics and state always share a task"),
        }
    }

    pub fn observation(&self) -> Vec<f64> {
        let mut o = vec![0.0; self.spec.obs_dim];
        self.observe(&mut o);
        o
    }

    /// Advances one control step. Components of `action` are clamped to
    /// [-1, 1]; the caller must check finiteness first (see [`run_episode`]).
    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        if action.len() != self.spec.act_dim {
            return Err(EnvError::ActionDimension {
                expected: self.spec.act_dim,
                actual: action.len(),
            });
        }
        let a = |i: usize| action[i].clamp(-1.0, 1.0);
        let reward = match (&self.physics, &mut self.state) {
            (Physics::Cartpole(p), EnvState::Cartpole(s)) => {
                *s = p.step(s, a(0));
                self.failed = cartpole::failed(s);
                cartpole::reward(s, a(0))
            }
            (Physics::Reacher(p), EnvState::Reacher(s)) => {
                *s = p.step(s, [a(0), a(1)]);
                p.reward(s)
            }
            _ => unreachable!("physics and state always share a task"),
        };
        self.steps += 1;
        self.done = self.failed || self.steps >= self.spec.max_steps;
        Ok(StepOutcome {
            reward,
            done: self.done,
        })
    }
}

/// Runs one episode. `policy(obs, action)` fills `action` and returns `false`
/// to abort; a non-finite action also aborts. Aborted episodes score the
/// floor fitness.
pub fn run_episode<P>(spec: &EnvSpec, seed: u64, mut policy: P) -> EpisodeResult
where
    P: FnMut(&[f64], &mut [f64]) -> bool,
{
    let mut env = Env::reset(spec, seed);
    let mut obs = vec![0.0; spec.obs_dim];
    let mut action = vec![0.0; spec.act_dim];
    let mut fitness = 0.0;
    while !env.is_done() {
        env.observe(&mut obs);
        if !policy(&obs, &mut action) || !action.iter().all(|a| a.is_finite()) {
            return EpisodeResult::aborted(spec, env.steps());
        }
        fitness += env.step(&action).expect("action length matches spec").reward;
    }
    EpisodeResult {
        fitness,
        steps: env.steps(),
        terminated_early: env.failed(),
        aborted: false,
    }
}

/// Mean fitness of a uniform random-action policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloorStats {
    pub mean: f64,
    pub std: f64,
    pub episodes: usize,
    pub base_seed: u64,
}

pub const FLOOR_EPISODES: usize = 1000;
pub const FLOOR_SEED: u64 = 0;

pub fn random_policy_floor(spec: &EnvSpec, episodes: usize, base_seed: u64) -> FloorStats {
    let fits: Vec<f64> = (0..episodes as u64)
        .map(|e| {
            let mut rng = seed::rng_from_seed(seed::derive(base_seed, Purpose::Floor, 0, e, 1));
            let reset = seed::derive(base_seed, Purpose::Floor, 0, e, 0);
            run_episode(spec, reset, |_, act| {
                for a in act.iter_mut() {
                    *a = rng.random_range(-1.0..=1.0);
                }
                true
            })
            .fitness
        })
        .collect();
    let n = fits.len().max(1) as f64;
    let mean = fits.iter().sum::<f64>() / n;
    let var = fits.iter().map(|f| (f - mean) * (f - mean)).sum::<f64>() / n;
    FloorStats {
        mean,
        std: var.sqrt(),
        episodes,
        base_seed,
    }
}
