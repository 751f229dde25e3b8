//! Sequential Bayesian experimental design driven by soft actor-critic.
//!
//! An agent moves a measurement design through one of several simulated
//! experiments. Each episode ends with a single reward: the sequential
//! contrastive information bound, a lower bound on the expected information
//! gain about the latent parameters that generated the data.
//!
//! Module map:
//!
//! - [`prob`]: seeded RNG streams, samplers and log densities.
//! - [`env`]: location finding, source inversion, death process and a toy
//!   Bernoulli model behind one stepping interface.
//! - [`infogain`]: the contrastive bound, its Monte Carlo expectation and a
//!   nested Monte Carlo EIG oracle.
//! - [`nn`]: a small dense network with reverse-mode gradients, Adam and
//!   Polyak averaging, plus the checkpoint container.
//! - [`sac`]: the actor-critic agent, replay buffer, training loop and the
//!   random baseline policy.
//!
//! Data-parallel loops (episodes, contrastive likelihoods) go through
//! [`par`], which uses rayon when the `parallel` feature is enabled and
//! plain iterators otherwise. Reductions always happen in index order, so
//! results do not depend on the thread count.

pub mod env;
pub mod error;
pub mod infogain;
pub mod nn;
pub mod par;
pub mod prob;
pub mod sac;

pub use error::{Error, Result};
