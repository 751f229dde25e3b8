use std::collections::BTreeMap;

use ndarray::{s, Array2, ArrayView2};

use super::buffer::Transition;
use super::encode::{state_dim, ActionSquash, CriticInput};
use super::SacConfig;
use crate::env::{Action, EnvConfig};
use crate::nn::{
    adam_step_in_place, polyak_update_in_place, Activation, AdamConfig, AdamState, Checkpoint,
    Gradient, Network, Scalar,
};
use crate::prob::RngStream;
use crate::{Error, Result};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Actor, online critics and their polyak-averaged targets. With twin
/// critics disabled the vectors hold a single network.
#[derive(Clone, Debug)]
pub struct Agent<F> {
    pub actor: Network<F>,
    pub critics: Vec<Network<F>>,
    pub targets: Vec<Network<F>>,
    pub squash: ActionSquash,
    pub action_input: CriticInput,
    actor_opt: AdamState<F>,
    critic_opt: Vec<AdamState<F>>,
}

/// One reparameterised draw from the squashed Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledAction {
    pub action: Action,
    /// Pre-squash sample `u`.
    pub raw: Vec<f64>,
    pub log_prob: f64,
}

/// Minibatch laid out for the networks.
#[derive(Clone, Debug)]
pub struct Batch<F> {
    pub states: Array2<F>,
    /// `[state | action_input(action)]`.
    pub critic_inputs: Array2<F>,
    pub rewards: Vec<f64>,
    pub next_states: Array2<F>,
    pub done: Vec<bool>,
}

impl<F: Scalar> Batch<F> {
    pub fn gather(transitions: &[&Transition], action_input: CriticInput) -> Self {
        let n = transitions.len();
        let sd = transitions.first().map_or(0, |t| t.state.len());
        let ad = transitions.first().map_or(0, |t| t.action.len());
        let mut states = Array2::zeros((n, sd));
        let mut next_states = Array2::zeros((n, sd));
        let mut critic_inputs = Array2::zeros((n, sd + ad));
        for (i, t) in transitions.iter().enumerate() {
            for (k, &x) in t.state.iter().enumerate() {
                let v = F::from_f64(x as f64);
                states[[i, k]] = v;
                critic_inputs[[i, k]] = v;
            }
            for (k, &x) in t.next_state.iter().enumerate() {
                next_states[[i, k]] = F::from_f64(x as f64);
            }
            for (k, &a) in t.action.iter().enumerate() {
                critic_inputs[[i, sd + k]] = F::from_f64(action_input.apply(a));
            }
        }
        Self {
            states,
            critic_inputs,
            rewards: transitions.iter().map(|t| t.reward).collect(),
            next_states,
            done: transitions.iter().map(|t| t.done).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
}

/// Per-row quantities of a batched policy draw.
struct PolicyDraw {
    u: Array2<f64>,
    actions: Array2<f64>,
    log_std: Array2<f64>,
    /// -1, 0 or 1 as the raw log-std sits below, inside or above the clamp range.
    side: Array2<i8>,
    log_prob: Vec<f64>,
}

fn draw_policy<F: Scalar>(
    out: &Array2<F>,
    noise: ArrayView2<f64>,
    squash: ActionSquash,
) -> PolicyDraw {
    let (n, d) = noise.dim();
    let mut u = Array2::zeros((n, d));
    let mut actions = Array2::zeros((n, d));
    let mut log_std = Array2::zeros((n, d));
    let mut side = Array2::zeros((n, d));
    let mut log_prob = vec![0.0; n];
    for i in 0..n {
        for j in 0..d {
            let mean = out[[i, j]].as_f64();
            let raw_ls = out[[i, d + j]].as_f64();
            let ls = raw_ls.clamp(LOG_STD_MIN, LOG_STD_MAX);
            let eps = noise[[i, j]];
            let uij = mean + ls.exp() * eps;
            u[[i, j]] = uij;
            actions[[i, j]] = squash.apply(uij);
            log_std[[i, j]] = ls;
            side[[i, j]] = if raw_ls > LOG_STD_MAX {
                1
            } else if raw_ls < LOG_STD_MIN {
                -1
            } else {
                0
            };
            log_prob[i] += -0.5 * eps * eps - ls - HALF_LN_2PI - squash.log_jacobian(uij);
        }
    }
    PolicyDraw {
        u,
        actions,
        log_std,
        side,
        log_prob,
    }
}

/// `[states | actions / scale]`.
fn join_inputs<F: Scalar>(
    states: &Array2<F>,
    actions: &Array2<f64>,
    input: CriticInput,
) -> Array2<F> {
    let (n, sd) = states.dim();
    let ad = actions.ncols();
    let mut x = Array2::zeros((n, sd + ad));
    x.slice_mut(s![.., ..sd]).assign(states);
    for i in 0..n {
        for j in 0..ad {
            x[[i, sd + j]] = F::from_f64(input.apply(actions[[i, j]]));
        }
    }
    x
}

fn column<F: Scalar>(m: &Array2<F>) -> Vec<f64> {
    m.column(0).iter().map(|v| v.as_f64()).collect()
}

fn noise_matrix(rows: usize, cols: usize, rng: &mut RngStream) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.standard_normal())
}

impl<F: Scalar> Agent<F> {
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        twin_critics: bool,
        squash: ActionSquash,
        action_input: CriticInput,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let mut acts = vec![Activation::Relu; hidden.len()];
        acts.push(Activation::Identity);
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(2 * action_dim);
        let mut actor = Network::init(&sizes, &acts, rng)?;
        actor.scale_layer(hidden.len(), F::from_f64(0.01));

        let mut critic_sizes = vec![state_dim + action_dim];
        critic_sizes.extend_from_slice(hidden);
        critic_sizes.push(1);
        let count = if twin_critics { 2 } else { 1 };
        let critics = (0..count)
            .map(|_| Network::init(&critic_sizes, &acts, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::assemble(
            actor,
            critics.clone(),
            critics,
            squash,
            action_input,
        ))
    }

    pub fn for_env(env: &EnvConfig, config: &SacConfig, rng: &mut RngStream) -> Result<Self> {
        Self::new(
            state_dim(env),
            env.action_dim(),
            &config.hidden,
            config.twin_critics,
            ActionSquash::for_env(env),
            CriticInput::for_env(env),
            rng,
        )
    }

    fn assemble(
        actor: Network<F>,
        critics: Vec<Network<F>>,
        targets: Vec<Network<F>>,
        squash: ActionSquash,
        action_input: CriticInput,
    ) -> Self {
        let actor_opt = AdamState::new(actor.params());
        let critic_opt = critics.iter().map(|c| AdamState::new(c.params())).collect();
        Self {
            actor,
            critics,
            targets,
            squash,
            action_input,
            actor_opt,
            critic_opt,
        }
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_dim() / 2
    }

    pub fn state_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn twin_critics(&self) -> bool {
        self.critics.len() == 2
    }

    fn actor_row(&self, state: &[f32]) -> Result<Vec<f64>> {
        let x: Vec<F> = state.iter().map(|&v| F::from_f64(v as f64)).collect();
        Ok(self
            .actor
            .forward(&x)?
            .into_iter()
            .map(|v| v.as_f64())
            .collect())
    }

    /// `squash(u)` with `u = mean + exp(log_std) * eps`, `eps ~ N(0, I)`.
    pub fn sample_action(&self, state: &[f32], rng: &mut RngStream) -> Result<SampledAction> {
        let out = self.actor_row(state)?;
        let d = self.action_dim();
        let noise: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
        Ok(self.squashed(&out, &noise))
    }

    /// Squashed action and its log-density for fixed noise.
    pub fn squashed(&self, actor_out: &[f64], noise: &[f64]) -> SampledAction {
        let d = noise.len();
        let mut raw = Vec::with_capacity(d);
        let mut action = Vec::with_capacity(d);
        let mut log_prob = 0.0;
        for j in 0..d {
            let ls = actor_out[d + j].clamp(LOG_STD_MIN, LOG_STD_MAX);
            let u = actor_out[j] + ls.exp() * noise[j];
            raw.push(u);
            action.push(self.squash.apply(u));
            log_prob += -0.5 * noise[j] * noise[j] - ls - HALF_LN_2PI - self.squash.log_jacobian(u);
        }
        SampledAction {
            action: Action(action),
            raw,
            log_prob,
        }
    }

    /// Log-density of the policy at the pre-squash point `u`.
    pub fn log_prob_raw(&self, state: &[f32], raw: &[f64]) -> Result<f64> {
        let out = self.actor_row(state)?;
        let d = self.action_dim();
        let mut lp = 0.0;
        for j in 0..d {
            let ls = out[d + j].clamp(LOG_STD_MIN, LOG_STD_MAX);
            let eps = (raw[j] - out[j]) / ls.exp();
            lp += -0.5 * eps * eps - ls - HALF_LN_2PI - self.squash.log_jacobian(raw[j]);
        }
        Ok(lp)
    }

    /// `squash(mean)`.
    pub fn deterministic_action(&self, state: &[f32]) -> Result<Action> {
        let out = self.actor_row(state)?;
        Ok(Action(
            out[..self.action_dim()]
                .iter()
                .map(|&m| self.squash.apply(m))
                .collect(),
        ))
    }

    /// `Q_k(s, a)` for every online critic.
    pub fn q_values(&self, state: &[f32], action: &[f64]) -> Result<Vec<f64>> {
        let mut x: Vec<F> = state.iter().map(|&v| F::from_f64(v as f64)).collect();
        x.extend(
            action
                .iter()
                .map(|&a| F::from_f64(self.action_input.apply(a))),
        );
        self.critics
            .iter()
            .map(|c| Ok(c.forward(&x)?[0].as_f64()))
            .collect()
    }

    /// `y = r + gamma (1 - done) (min_k Qbar_k(s', a') - alpha log pi(a'|s'))`
    /// with `a'` drawn from the current actor using `noise`.
    pub fn critic_targets(
        &self,
        batch: &Batch<F>,
        gamma: f64,
        alpha: f64,
        noise: ArrayView2<f64>,
    ) -> Result<Vec<f64>> {
        let out = self.actor.forward_batch(batch.next_states.view())?;
        let draw = draw_policy(&out, noise, self.squash);
        let x = join_inputs(&batch.next_states, &draw.actions, self.action_input);
        let qs = self
            .targets
            .iter()
            .map(|t| Ok(column(&t.forward_batch(x.view())?)))
            .collect::<Result<Vec<_>>>()?;
        Ok((0..batch.len())
            .map(|i| {
                if batch.done[i] {
                    return batch.rewards[i];
                }
                let q = qs.iter().map(|q| q[i]).fold(f64::INFINITY, f64::min);
                batch.rewards[i] + gamma * (q - alpha * draw.log_prob[i])
            })
            .collect())
    }

    /// Mean of `0.5 (Q(s, a) - y)^2` over the batch, and its gradient.
    pub fn critic_loss(
        critic: &Network<F>,
        inputs: &Array2<F>,
        targets: &[f64],
    ) -> Result<(f64, Gradient<F>)> {
        let tape = critic.forward_tape(inputs.clone())?;
        let n = targets.len() as f64;
        let q = tape.output();
        let mut loss = 0.0;
        let mut g = Array2::zeros(q.dim());
        for (i, &y) in targets.iter().enumerate() {
            let r = q[[i, 0]].as_f64() - y;
            loss += 0.5 * r * r;
            g[[i, 0]] = F::from_f64(r / n);
        }
        let (grad, _) = critic.backward_tape(&tape, g.view(), true)?;
        Ok((loss / n, grad.expect("parameter gradient")))
    }

    /// Sum over the online critics of [`Agent::critic_loss`].
    pub fn critics_loss(
        &self,
        batch: &Batch<F>,
        targets: &[f64],
    ) -> Result<(f64, Vec<Gradient<F>>)> {
        let mut total = 0.0;
        let mut grads = Vec::with_capacity(self.critics.len());
        for critic in &self.critics {
            let (loss, grad) = Self::critic_loss(critic, &batch.critic_inputs, targets)?;
            total += loss;
            grads.push(grad);
        }
        Ok((total, grads))
    }

    /// Mean of `alpha log pi(a|s) - min_k Q_k(s, a)` with `a` reparameterised
    /// through `noise`, and its gradient with respect to the actor only.
    pub fn actor_loss(
        &self,
        states: &Array2<F>,
        alpha: f64,
        noise: ArrayView2<f64>,
    ) -> Result<(f64, Gradient<F>)> {
        let n = states.nrows();
        let d = self.action_dim();
        let sd = states.ncols();
        let nf = n as f64;
        let tape = self.actor.forward_tape(states.clone())?;
        let draw = draw_policy(tape.output(), noise, self.squash);
        let x = join_inputs(states, &draw.actions, self.action_input);
        let tapes = self
            .critics
            .iter()
            .map(|c| c.forward_tape(x.clone()))
            .collect::<Result<Vec<_>>>()?;
        let mut chosen = vec![0usize; n];
        let mut loss = 0.0;
        for i in 0..n {
            let mut best = f64::INFINITY;
            for (k, t) in tapes.iter().enumerate() {
                let q = t.output()[[i, 0]].as_f64();
                if q < best {
                    best = q;
                    chosen[i] = k;
                }
            }
            loss += alpha * draw.log_prob[i] - best;
        }
        // d(-min Q)/d(action), routed through whichever critic was smaller.
        let mut da = Array2::<f64>::zeros((n, d));
        for (k, (critic, t)) in self.critics.iter().zip(&tapes).enumerate() {
            let mut g = Array2::<F>::zeros((n, 1));
            let mut any = false;
            for i in 0..n {
                if chosen[i] == k {
                    g[[i, 0]] = F::from_f64(-1.0 / nf);
                    any = true;
                }
            }
            if !any {
                continue;
            }
            let (_, dx) = critic.backward_tape(t, g.view(), false)?;
            for i in 0..n {
                for j in 0..d {
                    da[[i, j]] +=
                        dx[[i, sd + j]].as_f64() * self.action_input.grad(draw.actions[[i, j]]);
                }
            }
        }
        let mut g_out = Array2::<F>::zeros((n, 2 * d));
        let w = alpha / nf;
        for i in 0..n {
            for j in 0..d {
                let u = draw.u[[i, j]];
                let sigma_eps = draw.log_std[[i, j]].exp() * noise[[i, j]];
                let dlj = self.squash.log_jacobian_grad(u);
                let dq_du = da[[i, j]] * self.squash.jacobian(u);
                g_out[[i, j]] = F::from_f64(-w * dlj + dq_du);
                // A clamped log-std only receives gradient that moves it back
                // inside the range, so it cannot get stuck outside.
                let g_ls = w * (-1.0 - dlj * sigma_eps) + dq_du * sigma_eps;
                let keep = match draw.side[[i, j]] {
                    0 => true,
                    s => (s as f64) * g_ls > 0.0,
                };
                if keep {
                    g_out[[i, d + j]] = F::from_f64(g_ls);
                }
            }
        }
        let (grad, _) = self.actor.backward_tape(&tape, g_out.view(), true)?;
        Ok((loss / nf, grad.expect("parameter gradient")))
    }

    /// One gradient step on every critic, then the actor, then the targets.
    pub fn update(
        &mut self,
        batch: &Batch<F>,
        config: &SacConfig,
        rng: &mut RngStream,
    ) -> Result<UpdateStats> {
        let n = batch.len();
        let d = self.action_dim();
        let target_noise = noise_matrix(n, d, rng);
        let y = self.critic_targets(batch, config.gamma, config.alpha, target_noise.view())?;
        let (critic_loss, grads) = self.critics_loss(batch, &y)?;
        for ((critic, opt), grad) in self
            .critics
            .iter_mut()
            .zip(self.critic_opt.iter_mut())
            .zip(&grads)
        {
            adam_step_in_place(
                critic.params_mut(),
                grad,
                opt,
                config.lr_critic,
                AdamConfig::default(),
            );
        }
        let actor_noise = noise_matrix(n, d, rng);
        let (actor_loss, grad) =
            self.actor_loss(&batch.states, config.alpha, actor_noise.view())?;
        adam_step_in_place(
            self.actor.params_mut(),
            &grad,
            &mut self.actor_opt,
            config.lr_actor,
            AdamConfig::default(),
        );
        for (target, online) in self.targets.iter_mut().zip(&self.critics) {
            polyak_update_in_place(target.params_mut(), online.params(), config.tau);
        }
        Ok(UpdateStats {
            critic_loss,
            actor_loss,
        })
    }

    pub fn all_finite(&self) -> bool {
        self.actor.params().all_finite()
            && self.critics.iter().all(|c| c.params().all_finite())
            && self.targets.iter().all(|c| c.params().all_finite())
    }

    /// Networks in checkpoint order: actor, critics, targets.
    pub fn named_networks(&self) -> Vec<(String, &Network<F>)> {
        let mut out = vec![("actor".to_string(), &self.actor)];
        for (k, c) in self.critics.iter().enumerate() {
            out.push((format!("critic_{}", k + 1), c));
        }
        for (k, c) in self.targets.iter().enumerate() {
            out.push((format!("target_{}", k + 1), c));
        }
        out
    }

    /// Parameters as 32-bit floats plus what is needed to act again.
    /// Optimiser moments are not stored.
    pub fn to_checkpoint(&self, mut metadata: BTreeMap<String, String>) -> Checkpoint {
        metadata.insert(
            "squash".into(),
            serde_json::to_string(&self.squash).expect("squash serializes"),
        );
        metadata.insert(
            "action_input".into(),
            serde_json::to_string(&self.action_input).expect("action input serializes"),
        );
        Checkpoint {
            metadata,
            networks: self
                .named_networks()
                .into_iter()
                .map(|(name, net)| (name, net.cast::<f32>()))
                .collect(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        let squash: ActionSquash = serde_json::from_str(
            ck.metadata
                .get("squash")
                .ok_or_else(|| bad("missing squash"))?,
        )
        .map_err(|e| Error::Checkpoint(format!("squash: {e}")))?;
        let action_input: CriticInput = serde_json::from_str(
            ck.metadata
                .get("action_input")
                .ok_or_else(|| bad("missing action_input"))?,
        )
        .map_err(|e| Error::Checkpoint(format!("action_input: {e}")))?;
        let net = |name: &str| -> Result<Network<F>> {
            ck.network(name)
                .map(|n| n.cast())
                .ok_or_else(|| Error::Checkpoint(format!("missing network {name}")))
        };
        let actor = net("actor")?;
        let twin = ck.network("critic_2").is_some();
        let names: &[usize] = if twin { &[1, 2] } else { &[1] };
        let critics = names
            .iter()
            .map(|k| net(&format!("critic_{k}")))
            .collect::<Result<Vec<_>>>()?;
        let targets = names
            .iter()
            .map(|k| net(&format!("target_{k}")))
            .collect::<Result<Vec<_>>>()?;
        if actor.output_dim() % 2 != 0
            || critics[0].input_dim() != actor.input_dim() + actor.output_dim() / 2
        {
            return Err(bad("actor and critic shapes disagree"));
        }
        Ok(Self::assemble(
            actor,
            critics,
            targets,
            squash,
            action_input,
        ))
    }
}
