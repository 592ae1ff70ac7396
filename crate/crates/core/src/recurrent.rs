//! Recurrent baseline: the first dense layer of a [`Topology`] is replaced by
//! an LSTM cell of the same width; the remaining dense layers are unchanged.
//!
//! Parameter layout (flat, in order):
//! 1. gate weights, `4h x (in + h)` row-major, gate blocks ordered
//!    input, forget, cell, output; columns are `[x; h_prev]`,
//! 2. gate biases, `4h`,
//! 3. the dense layers after the first, in flat synapse order.
//!
//! Hidden and cell states start at zero every episode.

use ndarray::{s, Array1, Array2};

use crate::error::{Error, Result};
use crate::plastic::{PlasticNetwork, Topology};

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentNetwork {
    input: usize,
    hidden: usize,
    gate_weights: Array2<f64>,
    gate_bias: Array1<f64>,
    /// Dense tail over `topology[1..]`.
    head: PlasticNetwork,
    h: Array1<f64>,
    c: Array1<f64>,
}

impl RecurrentNetwork {
    /// Number of parameters for `topology`. Requires at least 3 layers so
    /// that a dense head remains after the recurrent layer.
    pub fn param_count(topology: &Topology) -> Result<usize> {
        let sizes = topology.layer_sizes();
        if sizes.len() < 3 {
            return Err(Error::InvalidTopology(
                "recurrent baseline needs at least one hidden layer".into(),
            ));
        }
        let (input, hidden) = (sizes[0], sizes[1]);
        let head = head_topology(topology)?;
        Ok(4 * hidden * (input + hidden) + 4 * hidden + head.n_synapses())
    }

    pub fn from_flat(topology: &Topology, params: &[f64], clip: f64) -> Result<Self> {
        let expected = Self::param_count(topology)?;
        if params.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "recurrent parameters",
                expected,
                actual: params.len(),
            });
        }
        let sizes = topology.layer_sizes();
        let (input, hidden) = (sizes[0], sizes[1]);
        let n_w = 4 * hidden * (input + hidden);
        let (w, rest) = params.split_at(n_w);
        let (b, rest) = rest.split_at(4 * hidden);
        let gate_weights = Array2::from_shape_vec((4 * hidden, input + hidden), w.to_vec()).expect("sized above");
        let head = PlasticNetwork::from_flat(&head_topology(topology)?, rest, clip)?;
        Ok(Self {
            input,
            hidden,
            gate_weights,
            gate_bias: Array1::from(b.to_vec()),
            head,
            h: Array1::zeros(hidden),
            c: Array1::zeros(hidden),
        })
    }

    /// Zeroes the hidden and cell state.
    pub fn reset(&mut self) {
        self.h.fill(0.0);
        self.c.fill(0.0);
    }

    pub fn hidden_state(&self) -> &Array1<f64> {
        &self.h
    }

    pub fn forward(&mut self, observation: &[f64]) -> Result<&[f64]> {
        if observation.len() != self.input {
            return Err(Error::DimensionMismatch {
                context: "observation",
                expected: self.input,
                actual: observation.len(),
            });
        }
        let hd = self.hidden;
        let mut xh = Array1::zeros(self.input + hd);
        xh.slice_mut(s![..self.input])
            .assign(&ndarray::ArrayView1::from(observation));
        xh.slice_mut(s![self.input..]).assign(&self.h);
        let z = self.gate_weights.dot(&xh) + &self.gate_bias;
        for j in 0..hd {
            let i = sigmoid(z[j]);
            let f = sigmoid(z[hd + j]);
            let g = z[2 * hd + j].tanh();
            let o = sigmoid(z[3 * hd + j]);
            self.c[j] = f * self.c[j] + i * g;
            self.h[j] = o * self.c[j].tanh();
        }
        let h = self.h.to_vec();
        self.head.forward(&h)
    }
}

fn head_topology(topology: &Topology) -> Result<Topology> {
    Topology::with_activations(
        topology.layer_sizes()[1..].to_vec(),
        topology.activations()[1..].to_vec(),
    )
}
