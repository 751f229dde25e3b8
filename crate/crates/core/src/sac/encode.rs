//! Flat, zero-padded state encoding and the action squashing maps.

use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, History};
use crate::nn::{sigmoid, softplus};
use crate::{Error, Result};

/// Fixed-length view of a history:
///
/// ```text
/// [design_0, obs_0, design_1, obs_1, ..., (zeros up to T slots), step_count / T, extra]
/// ```
///
/// `extra` is the remaining distance budget `(d2 - t_d) / d2` for the
/// spatial environments and `ln(1 + elapsed time)` for the death process.
/// Designs and observations pass through fixed per-environment maps so the
/// network sees inputs of order one.
pub fn encode_state(history: &History, env: &EnvConfig) -> Result<Vec<f32>> {
    let max_steps = env.max_steps();
    if history.step_count() > max_steps {
        return Err(Error::DimensionMismatch {
            context: "history length",
            expected: max_steps,
            actual: history.step_count(),
        });
    }
    let slot = env.design_dim() + 1;
    let mut out = vec![0.0f32; state_dim(env)];
    for (i, step) in history.steps().iter().enumerate() {
        let base = i * slot;
        for (k, x) in step.design.0.iter().enumerate() {
            out[base + k] = scale_design(env, *x) as f32;
        }
        out[base + slot - 1] = scale_observation(env, step.observation.value()) as f32;
    }
    let tail = max_steps * slot;
    out[tail] = (history.step_count() as f64 / max_steps as f64) as f32;
    out[tail + 1] = match env {
        EnvConfig::Location(c) => (c.d2 - history.travel_distance()) / c.d2,
        EnvConfig::Source(c) => (c.d2 - history.travel_distance()) / c.d2,
        EnvConfig::Death(_) => history.position().0[0].ln_1p(),
        EnvConfig::Toy(_) => 0.0,
    } as f32;
    Ok(out)
}

/// `T * (design_dim + 1) + 2`.
pub fn state_dim(env: &EnvConfig) -> usize {
    env.max_steps() * (env.design_dim() + 1) + 2
}

fn scale_design(env: &EnvConfig, x: f64) -> f64 {
    match env {
        EnvConfig::Location(c) => x / c.d2,
        EnvConfig::Source(c) => x / c.d2,
        // Elapsed time is unbounded; the log keeps long intervals finite.
        EnvConfig::Death(_) => x.ln_1p(),
        EnvConfig::Toy(_) => x,
    }
}

fn scale_observation(env: &EnvConfig, y: f64) -> f64 {
    match env {
        // Intensities span 0.3 to 1/m = 1e4; asinh keeps the tail bounded.
        EnvConfig::Location(_) => y.asinh(),
        EnvConfig::Source(c) => y / (c.strength / (2.0 * std::f64::consts::PI * 1.2).sqrt()),
        EnvConfig::Death(c) => y / c.trials as f64,
        EnvConfig::Toy(_) => y,
    }
}

/// Map from the unbounded Gaussian sample `u` to an action coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ActionSquash {
    /// `scale * tanh(u)`.
    Tanh { scale: f64 },
    /// `softplus(u) + floor`; strictly positive.
    Softplus { floor: f64 },
}

/// Smallest interval the softplus head can emit.
pub const MIN_INTERVAL: f64 = 1e-9;

impl ActionSquash {
    /// Spatial environments use a per-coordinate box inscribed in the
    /// `d1` disc, so every squashed action satisfies `|a| < d1`.
    pub fn for_env(env: &EnvConfig) -> Self {
        match env {
            EnvConfig::Location(c) => ActionSquash::Tanh {
                scale: c.d1 / (env.action_dim() as f64).sqrt(),
            },
            EnvConfig::Source(c) => ActionSquash::Tanh {
                scale: c.d1 / (env.action_dim() as f64).sqrt(),
            },
            EnvConfig::Death(_) => ActionSquash::Softplus {
                floor: MIN_INTERVAL,
            },
            EnvConfig::Toy(_) => ActionSquash::Tanh { scale: 1.0 },
        }
    }

    #[inline]
    pub fn apply(&self, u: f64) -> f64 {
        match *self {
            ActionSquash::Tanh { scale } => scale * u.tanh(),
            ActionSquash::Softplus { floor } => softplus(u) + floor,
        }
    }

    /// `da/du`.
    #[inline]
    pub fn jacobian(&self, u: f64) -> f64 {
        match *self {
            ActionSquash::Tanh { scale } => {
                let t = u.tanh();
                scale * (1.0 - t * t)
            }
            ActionSquash::Softplus { .. } => sigmoid(u),
        }
    }

    /// `ln |da/du|`, evaluated without cancellation.
    #[inline]
    pub fn log_jacobian(&self, u: f64) -> f64 {
        match *self {
            // ln(1 - tanh^2 u) = 2 (ln 2 - u - softplus(-2u))
            ActionSquash::Tanh { scale } => {
                scale.ln() + 2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
            }
            ActionSquash::Softplus { .. } => -softplus(-u),
        }
    }

    /// `d/du ln |da/du|`.
    #[inline]
    pub fn log_jacobian_grad(&self, u: f64) -> f64 {
        match *self {
            ActionSquash::Tanh { .. } => -2.0 * u.tanh(),
            ActionSquash::Softplus { .. } => sigmoid(-u),
        }
    }

    /// Inverse map, for actions strictly inside the range.
    pub fn invert(&self, a: f64) -> f64 {
        match *self {
            ActionSquash::Tanh { scale } => (a / scale).atanh(),
            ActionSquash::Softplus { floor } => {
                let s = a - floor;
                // softplus^{-1}(s) = ln(e^s - 1)
                s + (-(-s).exp_m1()).ln()
            }
        }
    }
}

/// Map applied to each action coordinate before it enters a critic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum CriticInput {
    /// `a / scale`.
    Scale(f64),
    /// `a / (1 + a)`, for positive unbounded actions.
    Ratio,
}

impl CriticInput {
    pub fn for_env(env: &EnvConfig) -> Self {
        match env {
            EnvConfig::Location(c) => CriticInput::Scale(c.d1),
            EnvConfig::Source(c) => CriticInput::Scale(c.d1),
            EnvConfig::Death(_) => CriticInput::Ratio,
            EnvConfig::Toy(_) => CriticInput::Scale(1.0),
        }
    }

    #[inline]
    pub fn apply(&self, a: f64) -> f64 {
        match *self {
            CriticInput::Scale(s) => a / s,
            CriticInput::Ratio => a / (1.0 + a),
        }
    }

    /// Derivative of [`apply`](Self::apply).
    #[inline]
    pub fn grad(&self, a: f64) -> f64 {
        match *self {
            CriticInput::Scale(s) => 1.0 / s,
            CriticInput::Ratio => 1.0 / ((1.0 + a) * (1.0 + a)),
        }
    }
}
