//! HyperAggregation: hypernetwork-generated, neighborhood-sized weights for
//! channel-mixing vertex embeddings, plus the two architectures built on it
//! (GraphHyperConv, GraphHyperMixer), GCN/MLP baselines, synthetic benchmark
//! generation, and a seeded training harness.

pub mod error;
pub mod graph;
pub mod harness;
pub mod models;
pub mod oracles;
pub mod rng;
pub mod tensor;

pub use error::{HgError, Result};
