//! Death process: infected counts among `N` people observed at
//! increasing times.

use serde::{Deserialize, Serialize};

use super::{check_count, check_positive, Design, Latent, Observation, Step};
use crate::prob::{log_pmf_binomial_from_logs, BinomialSpec, RngStream, TruncatedNormalSpec};
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeathConfig {
    pub mu_theta: f64,
    pub sigma_theta: f64,
    pub max_steps: usize,
    /// Number of people inspected per observation, `N`.
    pub trials: u64,
    pub contrastive_samples: usize,
}

impl Default for DeathConfig {
    fn default() -> Self {
        Self {
            mu_theta: 1.0,
            sigma_theta: 1.0,
            max_steps: 4,
            trials: 50,
            contrastive_samples: 2000,
        }
    }
}

impl DeathConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.mu_theta.is_finite() {
            return Err(crate::Error::config("mu_theta", "must be finite"));
        }
        check_positive("sigma_theta", self.sigma_theta)?;
        check_count("max_steps", self.max_steps)?;
        check_count("trials", self.trials as usize)?;
        check_count("contrastive_samples", self.contrastive_samples)?;
        Ok(())
    }

    pub fn prior(&self) -> TruncatedNormalSpec {
        TruncatedNormalSpec {
            mean: self.mu_theta,
            std: self.sigma_theta,
            lower: 0.0,
            upper: f64::INFINITY,
        }
    }

    pub(crate) fn sample_prior(&self, rng: &mut RngStream) -> Result<Latent> {
        Ok(Latent::Death {
            rate: self.prior().sample(rng)?,
        })
    }

    pub(crate) fn observe(&self, rate: f64, design: &Design, rng: &mut RngStream) -> Observation {
        let spec = BinomialSpec {
            trials: self.trials,
            success_prob: infection_prob(rate, design.0[0]),
        };
        Observation::Count(spec.sample(rng))
    }

    pub(crate) fn step_log_likelihood(&self, rate: f64, step: &Step) -> f64 {
        let Observation::Count(y) = step.observation else {
            return f64::NEG_INFINITY;
        };
        let exposure = rate * step.design.0[0];
        // ln(1 - eta) = -theta * xi exactly; ln(eta) via expm1.
        let ln_q = -exposure;
        let ln_p = (-(-exposure).exp_m1()).ln();
        log_pmf_binomial_from_logs(y, self.trials, ln_p, ln_q)
    }
}

/// `1 - exp(-xi * theta)`.
pub fn infection_prob(theta: f64, xi: f64) -> f64 {
    -(-xi * theta).exp_m1()
}
