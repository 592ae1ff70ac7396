//! Hebbian meta-learning primitives.
//!
//! - [`plastic`]: plastic feedforward networks and the ABCD rule.
//! - [`recurrent`]: the LSTM-headed baseline network.
//! - [`genotype`]: distributions over per-synapse rules (independent,
//!   shared mixture, joint, single rule, fixed random assignment).
//! - [`es`]: score-function evolution strategies with SGD or Adam.
//! - [`oracle`]: finite-difference and brute-force reference computations.
//! - [`seed`]: counter-based seed derivation.

pub mod dd;
pub mod error;
pub mod es;
pub mod genotype;
pub mod oracle;
pub mod plastic;
pub mod recurrent;
pub mod seed;

pub use error::{Error, Result};
pub use es::{EsConfig, EsState, FitnessReport, FitnessShaping, Updater};
pub use genotype::{Genotype, GenotypeModel, ModelKind, Params};
pub use plastic::{Activation, HebbRule, NetworkConfig, PlasticNetwork, RuleAssignment, Topology, RULE_DIM};
pub use recurrent::RecurrentNetwork;
