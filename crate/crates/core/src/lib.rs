//! Simulation and analysis of LT-coded distributed storage in sensor networks.
//!
//! `k` source nodes out of `n` push their packets along random walks over a
//! random geometric graph. Every node combines a Soliton-distributed number of
//! the packets it sees into a single XOR buffer, so that any slightly more than
//! `k` surviving nodes are enough to recover all sources.
//!
//! The crate is split along the life of a run:
//!
//! * [`graph`] builds the network,
//! * [`soliton`] provides the degree distributions,
//! * [`transition`] builds forwarding tables and measures how fast they mix,
//! * [`protocol`] is the per-node state machine,
//! * [`sim`] drives the synchronous rounds,
//! * [`decoder`] evaluates what the network stored,
//! * [`experiments`] reproduces the reference figures and tables.

pub mod decoder;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod protocol;
pub mod rng;
pub mod sim;
pub mod soliton;
pub mod transition;

pub use error::{Error, Result};
