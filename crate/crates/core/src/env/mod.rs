//! Simulated experiments behind a single reset/step/likelihood interface.
//!
//! All episode state lives in [`Latent`] and [`History`]; the configs are
//! immutable values, so independent episodes can run on separate threads
//! with separate RNG streams.

pub mod death;
pub mod location;
pub mod source;
pub mod toy;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::prob::RngStream;
use crate::{Error, Result};

pub use death::DeathConfig;
pub use location::LocationConfig;
pub use source::SourceConfig;
pub use toy::{toy_enumerate, ToyConfig, ToyJoint};

/// Relative slack allowed on the per-step distance limit, for actions that
/// were rescaled onto the boundary in floating point.
pub const NORM_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Location,
    Source,
    Death,
    Toy,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Location => "location",
            EnvKind::Source => "source",
            EnvKind::Death => "death",
            EnvKind::Toy => "toy",
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "location" => Ok(EnvKind::Location),
            "source" => Ok(EnvKind::Source),
            "death" => Ok(EnvKind::Death),
            "toy" => Ok(EnvKind::Toy),
            other => Err(Error::config(
                "env",
                format!("unknown environment `{other}` (expected location, source, death or toy)"),
            )),
        }
    }
}

/// A measurement setting: a point in the plane, or an elapsed time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Design(pub Vec<f64>);

/// Increment applied to the previous design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action(pub Vec<f64>);

impl Action {
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Observation {
    Real(f64),
    Count(u64),
}

impl Observation {
    pub fn value(self) -> f64 {
        match self {
            Observation::Real(y) => y,
            Observation::Count(n) => n as f64,
        }
    }
}

impl fmt::Display for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observation::Real(y) => write!(f, "{y}"),
            Observation::Count(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalReason {
    MaxSteps,
    BudgetExhausted,
}

impl TerminalReason {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminalReason::MaxSteps => "max_steps",
            TerminalReason::BudgetExhausted => "budget_exhausted",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub terminal: Option<TerminalReason>,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminal.is_some()
    }
}

/// One recorded measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub action: Action,
    pub design: Design,
    pub observation: Observation,
    /// Cumulative travel distance (elapsed time for the death process)
    /// after this step.
    pub travel_distance: f64,
}

/// The ordered (design, observation) record of an episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct History {
    steps: Vec<Step>,
    position: Design,
    travel_distance: f64,
    terminal: Option<TerminalReason>,
}

impl History {
    pub fn new(origin: Design) -> Self {
        Self {
            steps: Vec::new(),
            position: origin,
            travel_distance: 0.0,
            terminal: None,
        }
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn step_count(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Current design (the origin before the first step).
    pub fn position(&self) -> &Design {
        &self.position
    }

    pub fn travel_distance(&self) -> f64 {
        self.travel_distance
    }

    pub fn terminal(&self) -> Option<TerminalReason> {
        self.terminal
    }

    pub fn is_done(&self) -> bool {
        self.terminal.is_some()
    }

    /// Applies `action`, returning the new design and travel distance.
    fn advance(&mut self, action: &Action) -> (Design, f64) {
        for (x, a) in self.position.0.iter_mut().zip(&action.0) {
            *x += a;
        }
        self.travel_distance += action.norm();
        (self.position.clone(), self.travel_distance)
    }

    fn record(
        &mut self,
        action: Action,
        observation: Observation,
        terminal: Option<TerminalReason>,
    ) {
        self.steps.push(Step {
            action,
            design: self.position.clone(),
            observation,
            travel_distance: self.travel_distance,
        });
        self.terminal = terminal;
    }

    /// Builds a history directly from recorded steps, for likelihood
    /// evaluation of externally supplied data.
    pub fn from_steps(origin: Design, steps: Vec<Step>) -> Self {
        let travel_distance = steps.last().map_or(0.0, |s| s.travel_distance);
        let position = steps.last().map_or(origin, |s| s.design.clone());
        Self {
            steps,
            position,
            travel_distance,
            terminal: None,
        }
    }
}

/// Latent parameters of one episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Latent {
    Location { sources: [[f64; 2]; 3] },
    Source { source: [f64; 2], wind: [f64; 2] },
    Death { rate: f64 },
    Toy { index: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum EnvConfig {
    Location(LocationConfig),
    Source(SourceConfig),
    Death(DeathConfig),
    Toy(ToyConfig),
}

impl EnvConfig {
    /// Default configuration for `kind`.
    pub fn defaults(kind: EnvKind) -> Self {
        match kind {
            EnvKind::Location => EnvConfig::Location(LocationConfig::default()),
            EnvKind::Source => EnvConfig::Source(SourceConfig::default()),
            EnvKind::Death => EnvConfig::Death(DeathConfig::default()),
            EnvKind::Toy => EnvConfig::Toy(ToyConfig::default()),
        }
    }

    pub fn kind(&self) -> EnvKind {
        match self {
            EnvConfig::Location(_) => EnvKind::Location,
            EnvConfig::Source(_) => EnvKind::Source,
            EnvConfig::Death(_) => EnvKind::Death,
            EnvConfig::Toy(_) => EnvKind::Toy,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EnvConfig::Location(c) => c.validate(),
            EnvConfig::Source(c) => c.validate(),
            EnvConfig::Death(c) => c.validate(),
            EnvConfig::Toy(c) => c.validate(),
        }
    }

    pub fn design_dim(&self) -> usize {
        match self {
            EnvConfig::Location(_) | EnvConfig::Source(_) => 2,
            EnvConfig::Death(_) | EnvConfig::Toy(_) => 1,
        }
    }

    pub fn action_dim(&self) -> usize {
        self.design_dim()
    }

    pub fn max_steps(&self) -> usize {
        match self {
            EnvConfig::Location(c) => c.max_steps,
            EnvConfig::Source(c) => c.max_steps,
            EnvConfig::Death(c) => c.max_steps,
            EnvConfig::Toy(_) => 1,
        }
    }

    /// Number of contrastive latents `L` used by the reward.
    pub fn contrastive_samples(&self) -> usize {
        match self {
            EnvConfig::Location(c) => c.contrastive_samples,
            EnvConfig::Source(c) => c.contrastive_samples,
            EnvConfig::Death(c) => c.contrastive_samples,
            EnvConfig::Toy(c) => c.contrastive_samples,
        }
    }

    /// Per-step and per-episode distance limits `(d1, d2)` for the spatial
    /// environments.
    pub fn distance_limits(&self) -> Option<(f64, f64)> {
        match self {
            EnvConfig::Location(c) => Some((c.d1, c.d2)),
            EnvConfig::Source(c) => Some((c.d1, c.d2)),
            _ => None,
        }
    }

    pub fn origin(&self) -> Design {
        match self {
            EnvConfig::Location(c) => Design(c.origin.to_vec()),
            EnvConfig::Source(c) => Design(c.origin.to_vec()),
            EnvConfig::Death(_) | EnvConfig::Toy(_) => Design(vec![0.0]),
        }
    }

    /// Names of the prior parameters that may be swept for generalization.
    pub fn prior_parameters(&self) -> &'static [&'static str] {
        match self {
            EnvConfig::Location(_) => &["sigma_1"],
            EnvConfig::Source(_) => &["sigma_1", "sigma_2"],
            EnvConfig::Death(_) => &["mu_theta", "sigma_theta"],
            EnvConfig::Toy(_) => &[],
        }
    }

    pub fn prior_parameter(&self, name: &str) -> Option<f64> {
        match (self, name) {
            (EnvConfig::Location(c), "sigma_1") => Some(c.sigma_1),
            (EnvConfig::Source(c), "sigma_1") => Some(c.sigma_1),
            (EnvConfig::Source(c), "sigma_2") => Some(c.sigma_2),
            (EnvConfig::Death(c), "mu_theta") => Some(c.mu_theta),
            (EnvConfig::Death(c), "sigma_theta") => Some(c.sigma_theta),
            _ => None,
        }
    }

    /// A copy with one prior parameter replaced. Refuses anything that is
    /// not a prior parameter of this environment.
    pub fn with_prior_parameter(&self, name: &str, value: f64) -> Result<Self> {
        let mut out = self.clone();
        match (&mut out, name) {
            (EnvConfig::Location(c), "sigma_1") => c.sigma_1 = value,
            (EnvConfig::Source(c), "sigma_1") => c.sigma_1 = value,
            (EnvConfig::Source(c), "sigma_2") => c.sigma_2 = value,
            (EnvConfig::Death(c), "mu_theta") => c.mu_theta = value,
            (EnvConfig::Death(c), "sigma_theta") => c.sigma_theta = value,
            _ => {
                return Err(Error::config(
                    name,
                    format!(
                        "not a prior parameter of the {} environment (allowed: {:?})",
                        self.kind(),
                        self.prior_parameters()
                    ),
                ))
            }
        }
        out.validate()?;
        Ok(out)
    }

    pub fn sample_prior(&self, rng: &mut RngStream) -> Result<Latent> {
        match self {
            EnvConfig::Location(c) => Ok(c.sample_prior(rng)),
            EnvConfig::Source(c) => Ok(c.sample_prior(rng)),
            EnvConfig::Death(c) => c.sample_prior(rng),
            EnvConfig::Toy(c) => Ok(c.sample_prior(rng)),
        }
    }

    /// Draws a contrastive latent to compare against `primary`.
    ///
    /// Everything is redrawn from the prior except, for source inversion
    /// with `contrast_wind = false`, the wind, which is treated as a known
    /// per-episode covariate and copied from `primary`.
    pub fn sample_contrastive(&self, primary: &Latent, rng: &mut RngStream) -> Result<Latent> {
        match (self, primary) {
            (EnvConfig::Source(c), Latent::Source { wind, .. }) if !c.contrast_wind => {
                Ok(c.sample_source_with_wind(*wind, rng))
            }
            _ => self.sample_prior(rng),
        }
    }

    /// Draws the latent and an empty history.
    pub fn reset(&self, rng: &mut RngStream) -> Result<(Latent, History)> {
        let latent = self.sample_prior(rng)?;
        Ok((latent, History::new(self.origin())))
    }

    /// Rejects actions outside the environment's action set.
    pub fn check_action(&self, action: &Action) -> Result<()> {
        if action.0.len() != self.action_dim() {
            return Err(Error::DimensionMismatch {
                context: "action",
                expected: self.action_dim(),
                actual: action.0.len(),
            });
        }
        if action.0.iter().any(|a| !a.is_finite()) {
            return Err(Error::ConstraintViolation(format!(
                "non-finite action {:?}",
                action.0
            )));
        }
        match self {
            EnvConfig::Location(LocationConfig { d1, .. })
            | EnvConfig::Source(SourceConfig { d1, .. }) => {
                let norm = action.norm();
                if norm > d1 * (1.0 + NORM_SLACK) {
                    return Err(Error::ConstraintViolation(format!(
                        "step length {norm} exceeds d1 = {d1}"
                    )));
                }
            }
            EnvConfig::Death(_) => {
                if action.0[0] <= 0.0 {
                    return Err(Error::ConstraintViolation(format!(
                        "observation interval must be positive, got {}",
                        action.0[0]
                    )));
                }
            }
            EnvConfig::Toy(_) => {}
        }
        Ok(())
    }

    /// Pure step: returns the extended history and the step result.
    pub fn step(
        &self,
        latent: &Latent,
        history: &History,
        action: &Action,
        rng: &mut RngStream,
    ) -> Result<(History, StepResult)> {
        let mut next = history.clone();
        let result = self.step_in_place(latent, &mut next, action, rng)?;
        Ok((next, result))
    }

    /// Same as [`EnvConfig::step`] but extends `history` in place.
    pub fn step_in_place(
        &self,
        latent: &Latent,
        history: &mut History,
        action: &Action,
        rng: &mut RngStream,
    ) -> Result<StepResult> {
        if history.is_done() {
            return Err(Error::EpisodeDone);
        }
        self.check_action(action)?;
        let (design, travel) = history.advance(action);
        let observation = self.observe(latent, &design, travel, rng)?;
        let count = history.step_count() + 1;
        let terminal = match self.distance_limits() {
            Some((_, d2)) if travel > d2 => Some(TerminalReason::BudgetExhausted),
            _ if count >= self.max_steps() => Some(TerminalReason::MaxSteps),
            _ => None,
        };
        history.record(action.clone(), observation, terminal);
        Ok(StepResult {
            observation,
            terminal,
        })
    }

    /// Draws an observation at `design`, with `travel` the cumulative travel
    /// distance after moving there.
    pub fn observe(
        &self,
        latent: &Latent,
        design: &Design,
        travel: f64,
        rng: &mut RngStream,
    ) -> Result<Observation> {
        match (self, latent) {
            (EnvConfig::Location(c), Latent::Location { sources }) => {
                Ok(c.observe(sources, design, rng))
            }
            (EnvConfig::Source(c), Latent::Source { source, wind }) => {
                Ok(c.observe(source, wind, design, travel, rng))
            }
            (EnvConfig::Death(c), Latent::Death { rate }) => Ok(c.observe(*rate, design, rng)),
            (EnvConfig::Toy(c), Latent::Toy { index }) => Ok(c.observe(*index, rng)),
            _ => Err(Error::LatentMismatch(self.kind().name())),
        }
    }

    /// `log p(y_0:t | latent, xi_0:t)` as a sum of per-step terms.
    pub fn log_likelihood(&self, latent: &Latent, history: &History) -> Result<f64> {
        let steps = history.steps();
        match (self, latent) {
            (EnvConfig::Location(c), Latent::Location { sources }) => Ok(steps
                .iter()
                .map(|s| c.step_log_likelihood(sources, s))
                .sum()),
            (EnvConfig::Source(c), Latent::Source { source, wind }) => Ok(steps
                .iter()
                .map(|s| c.step_log_likelihood(source, wind, s))
                .sum()),
            (EnvConfig::Death(c), Latent::Death { rate }) => {
                Ok(steps.iter().map(|s| c.step_log_likelihood(*rate, s)).sum())
            }
            (EnvConfig::Toy(c), Latent::Toy { index }) => {
                Ok(steps.iter().map(|s| c.step_log_likelihood(*index, s)).sum())
            }
            _ => Err(Error::LatentMismatch(self.kind().name())),
        }
    }

    /// Builds a history from a fixed design path without the per-step
    /// action constraint, for non-adaptive estimators.
    pub fn simulate_designs(
        &self,
        latent: &Latent,
        designs: &[Design],
        rng: &mut RngStream,
    ) -> Result<History> {
        let mut history = History::new(self.origin());
        for design in designs {
            if design.0.len() != self.design_dim() {
                return Err(Error::DimensionMismatch {
                    context: "design",
                    expected: self.design_dim(),
                    actual: design.0.len(),
                });
            }
            let delta: Vec<f64> = design
                .0
                .iter()
                .zip(&history.position.0)
                .map(|(d, p)| d - p)
                .collect();
            let action = Action(delta);
            let (design, travel) = history.advance(&action);
            let observation = self.observe(latent, &design, travel, rng)?;
            history.record(action, observation, None);
        }
        Ok(history)
    }
}

pub(crate) fn check_positive(key: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::config(
            key,
            format!("must be positive and finite, got {value}"),
        ))
    }
}

pub(crate) fn check_count(key: &str, value: usize) -> Result<()> {
    if value >= 1 {
        Ok(())
    } else {
        Err(Error::config(key, "must be at least 1"))
    }
}
