//! Contaminant source inversion: a diffusing plume displaced by a random
//! wind, where the displacement grows with the distance the sensor has
//! travelled.

use serde::{Deserialize, Serialize};

use super::{check_count, check_positive, Design, Latent, Observation, Step};
use crate::prob::{log_density_gaussian, GaussianSpec, RngStream};
use crate::Result;

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    /// Prior standard deviation of each source coordinate.
    pub sigma_1: f64,
    /// Prior standard deviation of each wind component.
    pub sigma_2: f64,
    /// Concentration strength `s`.
    pub strength: f64,
    /// Diffusion coefficient `D`.
    pub diffusion: f64,
    /// Observation noise standard deviation.
    pub sigma_3: f64,
    pub d1: f64,
    pub d2: f64,
    pub max_steps: usize,
    pub contrastive_samples: usize,
    pub origin: [f64; 2],
    /// Resample the wind for contrastive latents instead of treating it as a
    /// known covariate.
    pub contrast_wind: bool,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            sigma_1: 10.0,
            sigma_2: 0.1,
            strength: 30.0,
            diffusion: 0.1,
            sigma_3: 0.5,
            d1: 1.0,
            d2: 50.0,
            max_steps: 100,
            contrastive_samples: 2000,
            origin: [0.0, 0.0],
            contrast_wind: false,
        }
    }
}

impl SourceConfig {
    pub fn validate(&self) -> Result<()> {
        check_positive("sigma_1", self.sigma_1)?;
        check_positive("sigma_2", self.sigma_2)?;
        check_positive("strength", self.strength)?;
        check_positive("diffusion", self.diffusion)?;
        check_positive("sigma_3", self.sigma_3)?;
        check_positive("d1", self.d1)?;
        check_positive("d2", self.d2)?;
        check_count("max_steps", self.max_steps)?;
        check_count("contrastive_samples", self.contrastive_samples)?;
        if !self.origin.iter().all(|x| x.is_finite()) {
            return Err(crate::Error::config("origin", "must be finite"));
        }
        Ok(())
    }

    pub(crate) fn sample_prior(&self, rng: &mut RngStream) -> Latent {
        let source = [
            self.sigma_1 * rng.standard_normal(),
            self.sigma_1 * rng.standard_normal(),
        ];
        let wind = [
            self.sigma_2 * rng.standard_normal(),
            self.sigma_2 * rng.standard_normal(),
        ];
        Latent::Source { source, wind }
    }

    pub(crate) fn sample_source_with_wind(&self, wind: [f64; 2], rng: &mut RngStream) -> Latent {
        let source = [
            self.sigma_1 * rng.standard_normal(),
            self.sigma_1 * rng.standard_normal(),
        ];
        Latent::Source { source, wind }
    }

    pub(crate) fn observe(
        &self,
        source: &[f64; 2],
        wind: &[f64; 2],
        design: &Design,
        travel: f64,
        rng: &mut RngStream,
    ) -> Observation {
        let mean = concentration(source, wind, &design.0, travel, self);
        let noise = GaussianSpec {
            mean,
            std: self.sigma_3,
        };
        Observation::Real(noise.sample(rng))
    }

    pub(crate) fn step_log_likelihood(
        &self,
        source: &[f64; 2],
        wind: &[f64; 2],
        step: &Step,
    ) -> f64 {
        let mean = concentration(source, wind, &step.design.0, step.travel_distance, self);
        log_density_gaussian(step.observation.value(), mean, self.sigma_3)
    }
}

/// Net wind displacement `10 * w * (t_d - 1)`; negative for `t_d < 1`.
pub fn wind_displacement(wind: &[f64; 2], travel: f64) -> [f64; 2] {
    [
        10.0 * wind[0] * (travel - 1.0),
        10.0 * wind[1] * (travel - 1.0),
    ]
}

/// Plume concentration at `design` after travelling `travel` in total.
pub fn concentration(
    source: &[f64; 2],
    wind: &[f64; 2],
    design: &[f64],
    travel: f64,
    config: &SourceConfig,
) -> f64 {
    let spread = 1.2 + 4.0 * config.diffusion * travel;
    let shift = wind_displacement(wind, travel);
    let dx = source[0] + shift[0] - design[0];
    let dy = source[1] + shift[1] - design[1];
    config.strength / (SQRT_2PI * spread.sqrt()) * (-(dx * dx + dy * dy) / (2.0 * spread)).exp()
}
