//! Multiverse prediction engine.
//!
//! Enumerates the admissible forking paths of a risk-prediction pipeline,
//! trains and scores each path deterministically on a shared holdout, and
//! summarizes how much each individual's predicted risk depends on those
//! choices.

pub mod data;
pub mod hash;
pub mod inconsistency;
pub mod metrics;
pub mod models;
pub mod pipeline;
pub mod predicate;
pub mod report;
pub mod synth;
pub mod universe;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Platform-stable RNG used for every random draw in the engine.
pub type EngineRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> EngineRng {
    ChaCha8Rng::seed_from_u64(seed)
}
