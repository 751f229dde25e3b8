//! Information-gain estimators.
//!
//! The sequential contrastive bound compares the likelihood of an episode's
//! data under the latent that generated it against `L` fresh prior draws:
//!
//! ```text
//! I_L = l_0 - (logsumexp(l_0, ..., l_L) - ln(L + 1)),   l_i = log p(y_0:t | theta_i, xi_0:t)
//! ```
//!
//! Because `l_0` appears in the denominator, `I_L <= ln(L + 1)` always.
//! Everything is aggregated in log space; a hundred Gaussian factors
//! underflow `f64` otherwise.

use serde::{Deserialize, Serialize};

use crate::env::{Action, Design, EnvConfig, History, Latent, ToyConfig};
use crate::par;
use crate::prob::{logsumexp, Estimate, RngStream};
use crate::{Error, Result};

/// Anything that picks the next design increment from the history.
pub trait Policy: Sync {
    fn act(&self, env: &EnvConfig, history: &History, rng: &mut RngStream) -> Result<Action>;
}

/// Always emits the same action. Handy for the toy model, where the design
/// is ignored.
#[derive(Clone, Debug)]
pub struct ConstantPolicy(pub Action);

impl Policy for ConstantPolicy {
    fn act(&self, _env: &EnvConfig, _history: &History, _rng: &mut RngStream) -> Result<Action> {
        Ok(self.0.clone())
    }
}

/// The generating latent plus `L` contrastive draws.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentDraw {
    pub primary: Latent,
    pub contrastives: Vec<Latent>,
}

impl LatentDraw {
    /// Draws `env.contrastive_samples()` contrastive latents for `primary`.
    pub fn sample(env: &EnvConfig, primary: Latent, rng: &mut RngStream) -> Result<Self> {
        Self::sample_n(env, primary, env.contrastive_samples(), rng)
    }

    pub fn sample_n(
        env: &EnvConfig,
        primary: Latent,
        count: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if count == 0 {
            return Err(Error::config("contrastive_samples", "must be at least 1"));
        }
        let contrastives = (0..count)
            .map(|_| env.sample_contrastive(&primary, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            primary,
            contrastives,
        })
    }
}

/// Contrastive bound value in nats.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct CidValue {
    pub nats: f64,
}

/// `ln(L + 1)`, the largest value the bound can take.
pub fn cid_upper_bound(contrastives: usize) -> f64 {
    (contrastives as f64 + 1.0).ln()
}

/// The bound from precomputed log likelihoods of the primary and the
/// contrastive latents.
pub fn cid_from_log_likelihoods(primary: f64, contrastive: &[f64]) -> Result<CidValue> {
    if !primary.is_finite() {
        return Err(Error::ImpossibleHistory);
    }
    let mut all = Vec::with_capacity(contrastive.len() + 1);
    all.push(primary);
    all.extend_from_slice(contrastive);
    let log_mean = logsumexp(&all) - cid_upper_bound(contrastive.len());
    Ok(CidValue {
        nats: primary - log_mean,
    })
}

/// The sequential contrastive bound for one episode.
pub fn cid(draw: &LatentDraw, history: &History, env: &EnvConfig) -> Result<CidValue> {
    let primary = env.log_likelihood(&draw.primary, history)?;
    let contrastive = par::map_slice(&draw.contrastives, |latent| {
        env.log_likelihood(latent, history)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    cid_from_log_likelihoods(primary, &contrastive)
}

/// Full record of one evaluated episode.
#[derive(Clone, Debug)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub seed: u64,
    pub latent: Latent,
    pub history: History,
    pub reward: f64,
}

/// Resets, rolls `policy` until the episode ends, then scores the history.
pub fn run_episode(
    env: &EnvConfig,
    policy: &dyn Policy,
    rng: &mut RngStream,
) -> Result<EpisodeRecord> {
    let (latent, mut history) = env.reset(rng)?;
    while !history.is_done() {
        let action = policy.act(env, &history, rng)?;
        env.step_in_place(&latent, &mut history, &action, rng)?;
    }
    let draw = LatentDraw::sample(env, latent, rng)?;
    let reward = cid(&draw, &history, env)?.nats;
    Ok(EpisodeRecord {
        episode: rng.stream_id() as usize,
        seed: rng.seed(),
        latent: draw.primary,
        history,
        reward,
    })
}

/// Rolls `episodes` independent episodes; episode `i` uses stream `i` of
/// `seed`. Records come back in episode order.
pub fn rollout_episodes(
    env: &EnvConfig,
    policy: &dyn Policy,
    episodes: usize,
    seed: u64,
) -> Result<Vec<EpisodeRecord>> {
    par::map_indices(episodes, |i| {
        run_episode(env, policy, &mut RngStream::new(seed, i as u64))
    })
    .into_iter()
    .collect()
}

/// Monte Carlo estimate of the expected bound under `policy`.
pub fn expected_cid(
    env: &EnvConfig,
    policy: &dyn Policy,
    episodes: usize,
    seed: u64,
) -> Result<Estimate> {
    if episodes < 2 {
        return Err(Error::config(
            "episodes",
            "need at least 2 episodes for a standard error",
        ));
    }
    let rewards: Vec<f64> = rollout_episodes(env, policy, episodes, seed)?
        .into_iter()
        .map(|r| r.reward)
        .collect();
    Ok(Estimate::from_samples(&rewards))
}

/// Plain nested Monte Carlo EIG for a fixed, non-adaptive design path.
///
/// Each outer sample draws a latent, simulates data along `designs` and
/// estimates the marginal likelihood with `inner` fresh prior draws.
pub fn nested_mc_eig(
    env: &EnvConfig,
    designs: &[Design],
    outer: usize,
    inner: usize,
    seed: u64,
) -> Result<Estimate> {
    if outer == 0 || inner == 0 {
        return Err(Error::config(
            "outer",
            "outer and inner sample counts must be at least 1",
        ));
    }
    if designs.is_empty() {
        return Ok(Estimate {
            mean: 0.0,
            std_err: 0.0,
            count: outer,
        });
    }
    let log_inner = (inner as f64).ln();
    let terms = par::map_indices(outer, |i| -> Result<f64> {
        let mut rng = RngStream::new(seed, i as u64);
        let latent = env.sample_prior(&mut rng)?;
        let history = env.simulate_designs(&latent, designs, &mut rng)?;
        let conditional = env.log_likelihood(&latent, &history)?;
        let mut marginal = Vec::with_capacity(inner);
        for _ in 0..inner {
            let other = env.sample_contrastive(&latent, &mut rng)?;
            marginal.push(env.log_likelihood(&other, &history)?);
        }
        Ok(conditional - (logsumexp(&marginal) - log_inner))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(Estimate::from_samples(&terms))
}

/// Exact mutual information between latent and observation of the toy model.
pub fn toy_exact_eig(config: &ToyConfig) -> f64 {
    let joint = crate::env::toy_enumerate(config);
    let mut eig = 0.0;
    for i in 0..2 {
        for y in 0..2 {
            let p = joint.cells[i][y];
            let conditional = p / 0.5;
            eig += p * (conditional / joint.marginal_y(y)).ln();
        }
    }
    eig
}

/// Exact expected contrastive bound of the toy model with `contrastives`
/// contrastive draws, summing over how many of them land on each latent
/// value.
pub fn toy_exact_expected_cid(config: &ToyConfig, contrastives: usize) -> f64 {
    let lik = |i: usize, y: usize| {
        if y == 1 {
            config.rates[i]
        } else {
            1.0 - config.rates[i]
        }
    };
    let n = contrastives;
    let log_half_n = -(n as f64) * std::f64::consts::LN_2;
    let mut total = 0.0;
    for primary in 0..2 {
        for y in 0..2 {
            let p0 = lik(primary, y);
            let weight = 0.5 * p0;
            for k in 0..=n {
                let prob = (crate::prob::ln_choose(n as u64, k as u64) + log_half_n).exp();
                let mean =
                    (p0 + k as f64 * lik(0, y) + (n - k) as f64 * lik(1, y)) / (n as f64 + 1.0);
                total += weight * prob * (p0 / mean).ln();
            }
        }
    }
    total
}
