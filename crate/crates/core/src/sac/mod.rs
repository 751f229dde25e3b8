//! Soft actor-critic with twin critics and a terminal information reward.

mod agent;
mod buffer;
mod encode;
mod train;

use serde::{Deserialize, Serialize};

pub use agent::{Agent, Batch, SampledAction, UpdateStats, LOG_STD_MAX, LOG_STD_MIN};
pub use buffer::{ReplayBuffer, Transition};
pub use encode::{encode_state, state_dim, ActionSquash, CriticInput, MIN_INTERVAL};
pub use train::{
    evaluate, train, AgentPolicy, EpisodeLog, Evaluation, RandomPolicy, TrainOutcome,
    MOVING_AVERAGE_WINDOW,
};

use crate::Error;
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacConfig {
    pub gamma: f64,
    /// Entropy temperature.
    pub alpha: f64,
    /// Polyak rate for the target critics.
    pub tau: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Environment steps before the first gradient update.
    pub warmup_steps: usize,
    pub updates_per_step: usize,
    pub hidden: Vec<usize>,
    pub twin_critics: bool,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            alpha: 0.2,
            tau: 0.005,
            lr_actor: 3e-4,
            lr_critic: 3e-4,
            batch_size: 256,
            replay_capacity: 1_000_000,
            warmup_steps: 1000,
            updates_per_step: 1,
            hidden: vec![128, 128],
            twin_critics: true,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config("gamma", "must lie in (0, 1]"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("alpha", "must be positive"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::config("tau", "must lie in (0, 1]"));
        }
        if !(self.lr_actor > 0.0 && self.lr_actor.is_finite()) {
            return Err(Error::config("lr_actor", "must be positive"));
        }
        if !(self.lr_critic > 0.0 && self.lr_critic.is_finite()) {
            return Err(Error::config("lr_critic", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be positive"));
        }
        if self.replay_capacity < self.batch_size {
            return Err(Error::config(
                "replay_capacity",
                "must be at least batch_size",
            ));
        }
        if self.updates_per_step == 0 {
            return Err(Error::config("updates_per_step", "must be positive"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::config(
                "hidden",
                "needs at least one non-empty layer",
            ));
        }
        Ok(())
    }
}
