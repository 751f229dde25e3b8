use std::collections::VecDeque;

use super::agent::{Agent, Batch};
use super::buffer::{ReplayBuffer, Transition};
use super::encode::encode_state;
use super::SacConfig;
use crate::env::{Action, EnvConfig, History};
use crate::infogain::{cid, rollout_episodes, EpisodeRecord, LatentDraw, Policy};
use crate::nn::softplus;
use crate::prob::{Estimate, RngStream};
use crate::{Error, Result};

pub const MOVING_AVERAGE_WINDOW: usize = 100;

// Training stream ids under the run seed.
const STREAM_INIT: u64 = 0;
const STREAM_ENV: u64 = 1;
const STREAM_ACT: u64 = 2;
const STREAM_LEARN: u64 = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    pub terminal_reward: f64,
    /// Mean over the episode's updates; `None` before learning starts.
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
    pub steps: usize,
    pub travel_distance: f64,
    /// Mean terminal reward over the last [`MOVING_AVERAGE_WINDOW`] episodes.
    pub moving_average: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub agent: Agent<f32>,
    pub log: Vec<EpisodeLog>,
}

/// Runs `episodes` training episodes. The whole run is a pure function of
/// `(env, config, episodes, seed)`; `on_episode` sees each log line as it is
/// produced.
pub fn train(
    env: &EnvConfig,
    config: &SacConfig,
    episodes: usize,
    seed: u64,
    on_episode: &mut dyn FnMut(&EpisodeLog),
) -> Result<TrainOutcome> {
    env.validate()?;
    config.validate()?;
    let mut init_rng = RngStream::new(seed, STREAM_INIT);
    let mut env_rng = RngStream::new(seed, STREAM_ENV);
    let mut act_rng = RngStream::new(seed, STREAM_ACT);
    let mut learn_rng = RngStream::new(seed, STREAM_LEARN);

    let mut agent = Agent::<f32>::for_env(env, config, &mut init_rng)?;
    let mut buffer = ReplayBuffer::new(config.replay_capacity);
    let mut recent = VecDeque::with_capacity(MOVING_AVERAGE_WINDOW);
    let mut log = Vec::with_capacity(episodes);
    let mut env_steps = 0usize;

    for episode in 0..episodes {
        let (latent, mut history) = env.reset(&mut env_rng)?;
        let mut state = encode_state(&history, env)?;
        let mut critic_sum = 0.0;
        let mut actor_sum = 0.0;
        let mut updates = 0usize;
        let mut reward = 0.0;
        while !history.is_done() {
            let sampled = agent.sample_action(&state, &mut act_rng)?;
            env.step_in_place(&latent, &mut history, &sampled.action, &mut env_rng)?;
            let next_state = encode_state(&history, env)?;
            let done = history.is_done();
            if done {
                let draw = LatentDraw::sample(env, latent.clone(), &mut env_rng)?;
                reward = cid(&draw, &history, env)?.nats;
            }
            buffer.push(Transition {
                state: std::mem::replace(&mut state, next_state.clone()),
                action: sampled.action.0,
                raw: sampled.raw,
                reward: if done { reward } else { 0.0 },
                next_state,
                done,
            });
            env_steps += 1;
            if env_steps >= config.warmup_steps && buffer.len() >= config.batch_size {
                for _ in 0..config.updates_per_step {
                    let sample = buffer.sample(config.batch_size, &mut learn_rng);
                    let batch = Batch::<f32>::gather(&sample, agent.action_input);
                    let stats = agent.update(&batch, config, &mut learn_rng)?;
                    if !stats.critic_loss.is_finite() {
                        return Err(Error::Diverged {
                            episode,
                            what: "critic loss",
                        });
                    }
                    if !stats.actor_loss.is_finite() {
                        return Err(Error::Diverged {
                            episode,
                            what: "actor loss",
                        });
                    }
                    critic_sum += stats.critic_loss;
                    actor_sum += stats.actor_loss;
                    updates += 1;
                }
            }
        }
        if updates > 0 && !agent.all_finite() {
            return Err(Error::Diverged {
                episode,
                what: "network parameters",
            });
        }
        if recent.len() == MOVING_AVERAGE_WINDOW {
            recent.pop_front();
        }
        recent.push_back(reward);
        let entry = EpisodeLog {
            episode,
            terminal_reward: reward,
            critic_loss: (updates > 0).then(|| critic_sum / updates as f64),
            actor_loss: (updates > 0).then(|| actor_sum / updates as f64),
            steps: history.step_count(),
            travel_distance: history.travel_distance(),
            moving_average: recent.iter().sum::<f64>() / recent.len() as f64,
        };
        on_episode(&entry);
        log.push(entry);
    }
    Ok(TrainOutcome { agent, log })
}

/// Acts with the squashed mean of a trained actor.
pub struct AgentPolicy<'a> {
    pub agent: &'a Agent<f32>,
}

impl Policy for AgentPolicy<'_> {
    fn act(&self, env: &EnvConfig, history: &History, _rng: &mut RngStream) -> Result<Action> {
        self.agent
            .deterministic_action(&encode_state(history, env)?)
    }
}

/// Spatial: uniform direction, length uniform on `[0, d1]`.
/// Death: `softplus(z)` with `z ~ N(0, 1)`.
pub struct RandomPolicy;

impl Policy for RandomPolicy {
    fn act(&self, env: &EnvConfig, _history: &History, rng: &mut RngStream) -> Result<Action> {
        Ok(match env {
            EnvConfig::Location(c) => polar(c.d1, rng),
            EnvConfig::Source(c) => polar(c.d1, rng),
            EnvConfig::Death(_) => {
                let z = rng.standard_normal();
                Action(vec![softplus(z).max(super::MIN_INTERVAL)])
            }
            EnvConfig::Toy(_) => Action(vec![0.0]),
        })
    }
}

fn polar(d1: f64, rng: &mut RngStream) -> Action {
    let angle = std::f64::consts::TAU * rng.uniform();
    let r = d1 * rng.uniform();
    Action(vec![r * angle.cos(), r * angle.sin()])
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub estimate: Estimate,
    pub records: Vec<EpisodeRecord>,
}

/// Rolls `policy` for `episodes` fresh episodes (stream `i` of `seed` for
/// episode `i`) and summarises the terminal bounds.
pub fn evaluate(
    env: &EnvConfig,
    policy: &dyn Policy,
    episodes: usize,
    seed: u64,
) -> Result<Evaluation> {
    if episodes < 2 {
        return Err(Error::config(
            "episodes",
            "need at least 2 episodes for a standard error",
        ));
    }
    let records = rollout_episodes(env, policy, episodes, seed)?;
    let rewards: Vec<f64> = records.iter().map(|r| r.reward).collect();
    Ok(Evaluation {
        estimate: Estimate::from_samples(&rewards),
        records,
    })
}
