//! Guide actor-critic for continuous control.
//!
//! The crate is `no_std` (with `alloc`) and contains every numerical piece of
//! the method: Gaussian primitives, a feed-forward critic with exact
//! action-gradients, Taylor models of the critic, the two-variable dual for the
//! KL- and entropy-constrained guide actor, the parameterized Gaussian actor,
//! the deterministic policy gradient baseline, desk-scale environments, a
//! replay buffer and the training loop. File formats, configuration and the
//! command line live in the `gac` companion crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod actor;
pub mod baselines;
pub mod critic;
pub mod envs;
mod error;
pub mod gauss;
pub mod guide;
pub mod linalg;
mod math;
pub mod nn;
pub mod replay;
pub mod trainer;

pub use error::{Error, Result};

/// Generator used by the training loop. Any `rand::Rng` works with the
/// individual operations; this one is fixed so runs are reproducible.
pub type SeededRng = rand_chacha::ChaCha8Rng;

/// Creates the crate's reproducible generator from a seed.
pub fn seeded_rng(seed: u64) -> SeededRng {
    use rand::SeedableRng;
    SeededRng::seed_from_u64(seed)
}
