//! Evolution-strategies meta-optimizer.
//!
//! One generation: [`sample_population`] draws `n` individuals, the caller
//! evaluates their fitness, [`shape_fitness`] transforms it,
//! [`estimate_gradient`] forms the score-function estimate
//! `(1/n) sum_j F_j grad log p(z_j | theta)`, and [`EsState::apply`] takes an
//! ascent step with plain SGD or Adam at the scheduled learning rate.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genotype::{Genotype, GenotypeModel, ModelKind, Params};
use crate::seed::{self, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Updater {
    #[default]
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitnessShaping {
    #[default]
    CenteredRanks,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EsConfig {
    pub population_size: usize,
    pub learning_rate: f64,
    /// Per-generation learning-rate multiplier.
    pub decay: f64,
    pub updater: Updater,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Mirrored sampling; only takes effect for the per-synapse model.
    pub antithetic: bool,
    pub fitness_shaping: FitnessShaping,
}

impl Default for EsConfig {
    fn default() -> Self {
        Self {
            population_size: 64,
            learning_rate: 0.2,
            decay: 1.0,
            updater: Updater::Sgd,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            antithetic: true,
            fitness_shaping: FitnessShaping::CenteredRanks,
        }
    }
}

impl EsConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.population_size < 2 {
            return bad(format!("population_size must be >= 2, got {}", self.population_size));
        }
        if self.antithetic && self.population_size % 2 != 0 {
            return bad(format!(
                "population_size must be even with antithetic sampling, got {}",
                self.population_size
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad(format!("decay must be in (0, 1], got {}", self.decay));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must be in [0, 1)".into());
        }
        if self.adam_epsilon.is_nan() || self.adam_epsilon <= 0.0 {
            return bad(format!("adam_epsilon must be positive, got {}", self.adam_epsilon));
        }
        Ok(())
    }

    /// Whether mirrored sampling applies to `model`.
    pub fn mirrors(&self, model: &GenotypeModel) -> bool {
        self.antithetic && model.kind() == ModelKind::PerSynapse
    }
}

/// `learning_rate * decay^generation`.
pub fn current_lr(config: &EsConfig, generation: u64) -> f64 {
    config.learning_rate * config.decay.powf(generation as f64)
}

/// One population member and the seed its genotype was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub genotype: Genotype,
    pub seed: u64,
}

/// Draws the population of `generation`. Candidate `j` is seeded from
/// `(base_seed, generation, j)`; with mirroring, candidate `2p + 1` is the
/// reflection `2 mu - h` of candidate `2p`.
pub fn sample_population(model: &GenotypeModel, config: &EsConfig, base_seed: u64, generation: u64) -> Vec<Candidate> {
    let n = config.population_size;
    let seed_of = |j: usize| seed::derive(base_seed, Purpose::Population, generation, j as u64, 0);
    if !config.mirrors(model) {
        return (0..n)
            .map(|j| {
                let s = seed_of(j);
                Candidate {
                    genotype: model.sample(s),
                    seed: s,
                }
            })
            .collect();
    }
    let mu = &model.params().mu;
    let mut out = Vec::with_capacity(n);
    for p in 0..n / 2 {
        let s = seed_of(2 * p);
        let plus = model.sample(s);
        // reflection of h through mu
        let minus = Array2::from_shape_fn(mu.dim(), |ix| mu[ix] - (plus.h[ix] - mu[ix]));
        out.push(Candidate {
            genotype: plus,
            seed: s,
        });
        out.push(Candidate {
            genotype: Genotype::new(minus),
            seed: seed_of(2 * p + 1),
        });
    }
    out
}

/// Raw fitness plus its shaped transform.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitnessReport {
    pub raw: Vec<f64>,
    pub shaped: Vec<f64>,
}

impl FitnessReport {
    pub fn new(raw: Vec<f64>, mode: FitnessShaping) -> Result<Self> {
        let shaped = shape_fitness(&raw, mode)?;
        Ok(Self { raw, shaped })
    }

    pub fn mean(&self) -> f64 {
        self.raw.iter().sum::<f64>() / self.raw.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.raw.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.raw.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Centered ranks: average ranks for ties, mapped linearly onto
/// `[-0.5, 0.5]`, then mean-subtracted.
pub fn shape_fitness(raw: &[f64], mode: FitnessShaping) -> Result<Vec<f64>> {
    let n = raw.len();
    if n < 2 {
        return Err(Error::InvalidConfig(format!("fitness shaping needs n >= 2, got {n}")));
    }
    if mode == FitnessShaping::Raw {
        return Ok(raw.to_vec());
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| raw[a].total_cmp(&raw[b]));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && raw[order[end]] == raw[order[start]] {
            end += 1;
        }
        let avg = (start + end - 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    let scale = (n - 1) as f64;
    let mut shaped: Vec<f64> = ranks.iter().map(|r| r / scale - 0.5).collect();
    let mean = shaped.iter().sum::<f64>() / n as f64;
    for s in &mut shaped {
        *s -= mean;
    }
    Ok(shaped)
}

/// `(1/n) sum_j shaped_j grad log p(z_j | theta)`, accumulated in candidate
/// order into a single buffer.
pub fn estimate_gradient(population: &[Genotype], shaped: &[f64], model: &GenotypeModel) -> Result<Params> {
    if population.len() != shaped.len() {
        return Err(Error::DimensionMismatch {
            context: "population vs fitness",
            expected: population.len(),
            actual: shaped.len(),
        });
    }
    if population.is_empty() {
        return Err(Error::InvalidConfig("empty population".into()));
    }
    let inv_n = 1.0 / population.len() as f64;
    let mut acc = model.params().zeros_like();
    for (g, &f) in population.iter().zip(shaped) {
        if f != 0.0 {
            model.accumulate_grad_log_prob(g, f * inv_n, &mut acc)?;
        }
    }
    Ok(acc)
}

/// Closed-form per-synapse update `mu + alpha/sigma * mean_j(F_j eps_j)`.
pub fn per_synapse_fast_update(
    model: &GenotypeModel,
    eps_samples: &[Array2<f64>],
    shaped: &[f64],
    alpha: f64,
) -> Result<Array2<f64>> {
    if model.kind() != ModelKind::PerSynapse {
        return Err(Error::WrongModelKind {
            op: "per_synapse_fast_update",
            kind: model.kind().name(),
        });
    }
    if eps_samples.len() != shaped.len() {
        return Err(Error::DimensionMismatch {
            context: "noise samples vs fitness",
            expected: eps_samples.len(),
            actual: shaped.len(),
        });
    }
    let mu = &model.params().mu;
    let mut sum = Array2::<f64>::zeros(mu.dim());
    for (eps, &f) in eps_samples.iter().zip(shaped) {
        if eps.dim() != mu.dim() {
            return Err(Error::DimensionMismatch {
                context: "noise sample",
                expected: mu.len(),
                actual: eps.len(),
            });
        }
        sum.scaled_add(f, eps);
    }
    let n = shaped.len() as f64;
    Ok(mu + &(sum * (alpha / (model.sigma() * n))))
}

/// First and second moment estimates, shaped like `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamMoments {
    pub m: Params,
    pub v: Params,
}

/// Optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct EsState {
    pub model: GenotypeModel,
    pub generation: u64,
    /// Present iff the updater is Adam.
    pub adam: Option<AdamMoments>,
    pub base_seed: u64,
}

impl EsState {
    pub fn new(model: GenotypeModel, config: &EsConfig, base_seed: u64) -> Self {
        let adam = (config.updater == Updater::Adam).then(|| AdamMoments {
            m: model.params().zeros_like(),
            v: model.params().zeros_like(),
        });
        Self {
            model,
            generation: 0,
            adam,
            base_seed,
        }
    }

    /// Dispatches on the configured updater.
    pub fn apply(&mut self, config: &EsConfig, grad: &Params) -> Result<()> {
        match config.updater {
            Updater::Sgd => self.sgd_update(config, grad),
            Updater::Adam => self.adam_update(config, grad),
        }
    }

    /// `theta += lr_t * grad`.
    pub fn sgd_update(&mut self, config: &EsConfig, grad: &Params) -> Result<()> {
        let lr = current_lr(config, self.generation);
        self.model.params_mut().add_scaled(lr, grad)?;
        self.generation += 1;
        Ok(())
    }

    /// Bias-corrected Adam ascent step.
    pub fn adam_update(&mut self, config: &EsConfig, grad: &Params) -> Result<()> {
        if !self.model.params().same_shape(grad) {
            return Err(Error::DimensionMismatch {
                context: "adam gradient",
                expected: self.model.params().len(),
                actual: grad.len(),
            });
        }
        let params = self.model.params().clone();
        let moments = self.adam.get_or_insert_with(|| AdamMoments {
            m: params.zeros_like(),
            v: params.zeros_like(),
        });
        let (b1, b2) = (config.adam_beta1, config.adam_beta2);
        moments.m.zip_mut_with(grad, |m, g| *m = b1 * *m + (1.0 - b1) * g);
        moments.v.zip_mut_with(grad, |v, g| *v = b2 * *v + (1.0 - b2) * g * g);
        let t = (self.generation + 1) as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let lr = current_lr(config, self.generation);
        let eps = config.adam_epsilon;
        let mut step = moments.m.clone();
        step.zip_mut_with(&moments.v, |m, v| {
            let m_hat = *m / c1;
            let v_hat = v / c2;
            *m = lr * m_hat / (v_hat.sqrt() + eps);
        });
        self.model.params_mut().add_scaled(1.0, &step)?;
        self.generation += 1;
        Ok(())
    }
}
