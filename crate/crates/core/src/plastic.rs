//! Plastic feedforward networks driven by ABCD Hebbian rules.
//!
//! Weights are episode-local: a network is created from a seed at the start
//! of every episode and then rewritten after each forward pass by
//! [`PlasticNetwork::hebbian_step`].
//!
//! Synapses are indexed flat, layer by layer in feedforward order, and
//! row-major within a layer: the synapse from presynaptic neuron `i` to
//! postsynaptic neuron `j` of layer pair `l` has index
//! `offset(l) + j * size_in(l) + i`. Genotype rows and assignment logits bind
//! to this index, so it must not change.

use ndarray::{Array1, Array2};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Number of Hebbian coefficients per synapse: `(eta, A, B, C, D)`.
pub const RULE_DIM: usize = 5;

/// One synapse's plasticity rule.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HebbRule {
    pub eta: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl HebbRule {
    pub const ZERO: HebbRule = HebbRule {
        eta: 0.0,
        a: 0.0,
        b: 0.0,
        c: 0.0,
        d: 0.0,
    };

    pub fn new(eta: f64, a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { eta, a, b, c, d }
    }

    /// Builds a rule from a 5-element row `[eta, A, B, C, D]`.
    pub fn from_row(row: &[f64]) -> Result<Self> {
        match *row {
            [eta, a, b, c, d] => Ok(Self { eta, a, b, c, d }),
            _ => Err(Error::DimensionMismatch {
                context: "rule row",
                expected: RULE_DIM,
                actual: row.len(),
            }),
        }
    }

    pub fn to_row(self) -> [f64; RULE_DIM] {
        [self.eta, self.a, self.b, self.c, self.d]
    }

    pub fn is_finite(&self) -> bool {
        self.to_row().iter().all(|v| v.is_finite())
    }

    #[inline]
    pub fn delta(&self, pre: f64, post: f64) -> f64 {
        hebbian_delta(self, pre, post)
    }
}

/// `eta * (A*pre*post + B*pre + C*post + D)`.
#[inline]
pub fn hebbian_delta(rule: &HebbRule, pre: f64, post: f64) -> f64 {
    rule.eta * (rule.a * pre * post + rule.b * pre + rule.c * post + rule.d)
}

/// Element-wise squashing function of a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }
}

/// Layer sizes (input, hidden..., output) and one activation per non-input
/// layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    layer_sizes: Vec<usize>,
    activations: Vec<Activation>,
}

impl Topology {
    /// Topology with tanh on every layer.
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        let activations = vec![Activation::Tanh; layer_sizes.len().saturating_sub(1)];
        Self::with_activations(layer_sizes, activations)
    }

    pub fn with_activations(layer_sizes: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidTopology(format!(
                "need at least 2 layers, got {}",
                layer_sizes.len()
            )));
        }
        if let Some(pos) = layer_sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidTopology(format!("layer {pos} has size 0")));
        }
        if activations.len() != layer_sizes.len() - 1 {
            return Err(Error::DimensionMismatch {
                context: "activations per layer",
                expected: layer_sizes.len() - 1,
                actual: activations.len(),
            });
        }
        Ok(Self {
            layer_sizes,
            activations,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().expect("validated non-empty")
    }

    pub fn n_layer_pairs(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// `(size_in, size_out)` per layer pair.
    pub fn layer_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.layer_sizes.windows(2).map(|w| (w[0], w[1]))
    }

    /// Total synapse count N.
    pub fn n_synapses(&self) -> usize {
        self.layer_pairs().map(|(i, o)| i * o).sum()
    }

    /// Flat index of the first synapse of each layer pair.
    pub fn synapse_offsets(&self) -> Vec<usize> {
        self.layer_pairs()
            .scan(0, |acc, (i, o)| {
                let start = *acc;
                *acc += i * o;
                Some(start)
            })
            .collect()
    }
}

/// Weight initialization range and the clip applied after Hebbian steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Initial weights are uniform on `[-init_range, init_range]`.
    pub init_range: f64,
    /// Weights are clipped to `[-clip, clip]` after every Hebbian step.
    pub clip: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            init_range: 0.1,
            clip: 3.0,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.init_range.is_finite() && self.init_range >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "init_range must be finite and non-negative, got {}",
                self.init_range
            )));
        }
        if !(self.clip.is_finite() && self.clip > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "clip must be finite and positive, got {}",
                self.clip
            )));
        }
        Ok(())
    }
}

/// Length-N sequence of rules in flat synapse order.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleAssignment {
    rules: Vec<HebbRule>,
}

impl RuleAssignment {
    pub fn new(rules: Vec<HebbRule>) -> Self {
        Self { rules }
    }

    /// Every synapse gets the all-zero rule.
    pub fn zeros(n_synapses: usize) -> Self {
        Self {
            rules: vec![HebbRule::ZERO; n_synapses],
        }
    }

    /// Reads rules from an `N x 5` matrix.
    pub fn from_matrix(h: &Array2<f64>) -> Result<Self> {
        if h.ncols() != RULE_DIM {
            return Err(Error::DimensionMismatch {
                context: "rule matrix columns",
                expected: RULE_DIM,
                actual: h.ncols(),
            });
        }
        let rules = h
            .rows()
            .into_iter()
            .map(|r| HebbRule::new(r[0], r[1], r[2], r[3], r[4]))
            .collect();
        Ok(Self { rules })
    }

    /// The inverse of [`RuleAssignment::from_matrix`].
    pub fn to_matrix(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rules.len(), RULE_DIM));
        for (mut row, rule) in out.rows_mut().into_iter().zip(&self.rules) {
            for (dst, src) in row.iter_mut().zip(rule.to_row()) {
                *dst = src;
            }
        }
        out
    }

    pub fn rules(&self) -> &[HebbRule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

/// Feedforward network with live weights and the activations of the last
/// forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PlasticNetwork {
    topology: Topology,
    /// One `(size_out, size_in)` matrix per layer pair.
    weights: Vec<Array2<f64>>,
    /// Per-layer activations of the most recent forward pass; the input
    /// layer holds the raw observation. Empty before the first pass.
    activations: Vec<Array1<f64>>,
    clip: f64,
}

impl PlasticNetwork {
    /// Fresh network with weights i.i.d. uniform on the configured range.
    pub fn init_weights(topology: &Topology, config: &NetworkConfig, seed: u64) -> Self {
        let mut rng = seed::rng_from_seed(seed);
        let r = config.init_range;
        let weights = topology
            .layer_pairs()
            .map(|(i, o)| Array2::from_shape_simple_fn((o, i), || if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 }))
            .collect();
        Self {
            topology: topology.clone(),
            weights,
            activations: Vec::new(),
            clip: config.clip,
        }
    }

    pub fn from_weights(topology: &Topology, weights: Vec<Array2<f64>>, clip: f64) -> Result<Self> {
        if weights.len() != topology.n_layer_pairs() {
            return Err(Error::DimensionMismatch {
                context: "weight matrices",
                expected: topology.n_layer_pairs(),
                actual: weights.len(),
            });
        }
        for (w, (i, o)) in weights.iter().zip(topology.layer_pairs()) {
            if w.dim() != (o, i) {
                return Err(Error::InvalidTopology(format!(
                    "weight matrix has shape {:?}, expected ({o}, {i})",
                    w.dim()
                )));
            }
        }
        Ok(Self {
            topology: topology.clone(),
            weights,
            activations: Vec::new(),
            clip,
        })
    }

    /// Builds a network from weights in flat synapse order.
    pub fn from_flat(topology: &Topology, flat: &[f64], clip: f64) -> Result<Self> {
        let n = topology.n_synapses();
        if flat.len() != n {
            return Err(Error::DimensionMismatch {
                context: "flat weights",
                expected: n,
                actual: flat.len(),
            });
        }
        let mut rest = flat;
        let mut weights = Vec::with_capacity(topology.n_layer_pairs());
        for (i, o) in topology.layer_pairs() {
            let (head, tail) = rest.split_at(i * o);
            weights.push(Array2::from_shape_vec((o, i), head.to_vec()).expect("sized above"));
            rest = tail;
        }
        Self::from_weights(topology, weights, clip)
    }

    pub fn flat_weights(&self) -> Vec<f64> {
        self.weights.iter().flat_map(|w| w.iter().copied()).collect()
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn last_activations(&self) -> &[Array1<f64>] {
        &self.activations
    }

    pub fn clip(&self) -> f64 {
        self.clip
    }

    /// Propagates `observation` and records every layer's activation.
    /// Returns the output layer.
    pub fn forward(&mut self, observation: &[f64]) -> Result<&[f64]> {
        if observation.len() != self.topology.input_size() {
            return Err(Error::DimensionMismatch {
                context: "observation",
                expected: self.topology.input_size(),
                actual: observation.len(),
            });
        }
        self.activations.clear();
        self.activations.push(Array1::from(observation.to_vec()));
        for (w, act) in self.weights.iter().zip(self.topology.activations()) {
            let input = self.activations.last().expect("input pushed above");
            let mut z = w.dot(input);
            z.mapv_inplace(|x| act.apply(x));
            self.activations.push(z);
        }
        Ok(self
            .activations
            .last()
            .expect("at least one layer")
            .as_slice()
            .expect("owned arrays are contiguous"))
    }

    /// Applies every synapse's rule to its pre/post activations from the last
    /// forward pass, then clips.
    pub fn hebbian_step(&mut self, assignment: &RuleAssignment) -> Result<()> {
        let n = self.topology.n_synapses();
        if assignment.len() != n {
            return Err(Error::DimensionMismatch {
                context: "rule assignment",
                expected: n,
                actual: assignment.len(),
            });
        }
        if self.activations.len() != self.weights.len() + 1 {
            return Err(Error::NoActivations);
        }
        let clip = self.clip;
        let mut rules = assignment.rules().iter();
        for (l, w) in self.weights.iter_mut().enumerate() {
            let pre = &self.activations[l];
            let post = &self.activations[l + 1];
            for (mut row, &o_j) in w.rows_mut().into_iter().zip(post.iter()) {
                for (w_ij, &o_i) in row.iter_mut().zip(pre.iter()) {
                    let rule = rules.next().expect("length checked above");
                    *w_ij = (*w_ij + rule.delta(o_i, o_j)).clamp(-clip, clip);
                }
            }
        }
        Ok(())
    }
}
