//! A two-point Bernoulli model whose joint distribution can be enumerated
//! exactly. Used to validate the information estimators.

use serde::{Deserialize, Serialize};

use super::{check_count, Latent, Observation, Step};
use crate::prob::RngStream;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    /// Success probabilities of the two equally likely latent values.
    pub rates: [f64; 2],
    pub contrastive_samples: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            rates: [0.2, 0.8],
            contrastive_samples: 1,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        for r in self.rates {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::config(
                    "rates",
                    format!("must lie in (0, 1), got {r}"),
                ));
            }
        }
        check_count("contrastive_samples", self.contrastive_samples)
    }

    pub(crate) fn sample_prior(&self, rng: &mut RngStream) -> Latent {
        Latent::Toy {
            index: rng.below(2),
        }
    }

    pub(crate) fn observe(&self, index: usize, rng: &mut RngStream) -> Observation {
        Observation::Count(u64::from(rng.uniform() < self.rates[index]))
    }

    pub(crate) fn step_log_likelihood(&self, index: usize, step: &Step) -> f64 {
        self.log_likelihood(index, step.observation)
    }

    /// `log p(y | theta_index)` for a single Bernoulli observation.
    pub fn log_likelihood(&self, index: usize, observation: Observation) -> f64 {
        let rate = self.rates[index];
        match observation {
            Observation::Count(1) => rate.ln(),
            Observation::Count(0) => (-rate).ln_1p(),
            _ => f64::NEG_INFINITY,
        }
    }
}

/// Exact joint table `p(theta, y)` of the toy model.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyJoint {
    pub rates: [f64; 2],
    /// `cells[i][y] = p(theta = rates[i], y)`.
    pub cells: [[f64; 2]; 2],
}

impl ToyJoint {
    pub fn marginal_y(&self, y: usize) -> f64 {
        self.cells[0][y] + self.cells[1][y]
    }

    pub fn total(&self) -> f64 {
        self.cells.iter().flatten().sum()
    }
}

pub fn toy_enumerate(config: &ToyConfig) -> ToyJoint {
    let mut cells = [[0.0; 2]; 2];
    for (i, &rate) in config.rates.iter().enumerate() {
        cells[i][0] = 0.5 * (1.0 - rate);
        cells[i][1] = 0.5 * rate;
    }
    ToyJoint {
        rates: config.rates,
        cells,
    }
}
