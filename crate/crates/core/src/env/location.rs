//! Acoustic location finding: three point sources of unknown position,
//! intensity measured at a moving point.

use serde::{Deserialize, Serialize};

use super::{check_count, check_positive, Design, Latent, Observation, Step};
use crate::prob::{log_density_gaussian, GaussianSpec, RngStream};
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocationConfig {
    /// Prior standard deviation of each source coordinate.
    pub sigma_1: f64,
    pub alpha: f64,
    /// Base signal.
    pub b: f64,
    /// Max-signal regularizer in the denominator.
    pub m: f64,
    /// Observation noise standard deviation.
    pub sigma_2: f64,
    pub d1: f64,
    pub d2: f64,
    pub max_steps: usize,
    pub contrastive_samples: usize,
    pub origin: [f64; 2],
}

impl Default for LocationConfig {
    fn default() -> Self {
        Self {
            sigma_1: 40.0,
            alpha: 1.0,
            b: 0.3,
            m: 1e-4,
            sigma_2: 0.5,
            d1: 3.0,
            d2: 50.0,
            max_steps: 100,
            contrastive_samples: 2000,
            origin: [0.0, 0.0],
        }
    }
}

impl LocationConfig {
    pub fn validate(&self) -> Result<()> {
        check_positive("sigma_1", self.sigma_1)?;
        check_positive("alpha", self.alpha)?;
        check_positive("m", self.m)?;
        check_positive("sigma_2", self.sigma_2)?;
        check_positive("d1", self.d1)?;
        check_positive("d2", self.d2)?;
        check_count("max_steps", self.max_steps)?;
        check_count("contrastive_samples", self.contrastive_samples)?;
        if !self.b.is_finite() {
            return Err(crate::Error::config("b", "must be finite"));
        }
        if !self.origin.iter().all(|x| x.is_finite()) {
            return Err(crate::Error::config("origin", "must be finite"));
        }
        Ok(())
    }

    pub(crate) fn sample_prior(&self, rng: &mut RngStream) -> Latent {
        let mut sources = [[0.0; 2]; 3];
        for source in &mut sources {
            for x in source.iter_mut() {
                *x = self.sigma_1 * rng.standard_normal();
            }
        }
        Latent::Location { sources }
    }

    pub(crate) fn observe(
        &self,
        sources: &[[f64; 2]; 3],
        design: &Design,
        rng: &mut RngStream,
    ) -> Observation {
        let mean = signal_intensity(sources, &design.0, self);
        let noise = GaussianSpec {
            mean,
            std: self.sigma_2,
        };
        Observation::Real(noise.sample(rng))
    }

    pub(crate) fn step_log_likelihood(&self, sources: &[[f64; 2]; 3], step: &Step) -> f64 {
        let mean = signal_intensity(sources, &step.design.0, self);
        log_density_gaussian(step.observation.value(), mean, self.sigma_2)
    }
}

/// `b + sum_k alpha / (m + |theta_k - xi|^2)`.
pub fn signal_intensity(sources: &[[f64; 2]; 3], design: &[f64], config: &LocationConfig) -> f64 {
    let (x, y) = (design[0], design[1]);
    config.b
        + sources
            .iter()
            .map(|s| {
                let (dx, dy) = (s[0] - x, s[1] - y);
                config.alpha / (config.m + dx * dx + dy * dy)
            })
            .sum::<f64>()
}
