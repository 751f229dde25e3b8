//! Analytic gradients against central finite differences in f64.

use ndarray::Array2;
use proptest::prelude::*;
use seqbed_core::nn::{Activation, Network, ParameterSet};
use seqbed_core::prob::RngStream;
use seqbed_core::sac::{ActionSquash, Agent, Batch, CriticInput, Transition};

const H: f64 = 1e-6;

fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Central differences of `f` over every parameter of `params`.
fn numeric_grad(
    params: &ParameterSet<f64>,
    mut f: impl FnMut(&ParameterSet<f64>) -> f64,
) -> Vec<f64> {
    let flat: Vec<f64> = params.iter_values().collect();
    let mut out = Vec::with_capacity(flat.len());
    for k in 0..flat.len() {
        let mut plus = params.clone();
        let mut minus = params.clone();
        set_flat(&mut plus, k, flat[k] + H);
        set_flat(&mut minus, k, flat[k] - H);
        out.push((f(&plus) - f(&minus)) / (2.0 * H));
    }
    out
}

fn set_flat(params: &mut ParameterSet<f64>, mut k: usize, value: f64) {
    for t in params.values_mut() {
        if k < t.len() {
            t[k] = value;
            return;
        }
        k -= t.len();
    }
    panic!("index out of range");
}

fn assert_close(analytic: &ParameterSet<f64>, numeric: &[f64], tol: f64, floor: f64) {
    let mut worst = 0.0f64;
    for (a, n) in analytic.iter_values().zip(numeric) {
        worst = worst.max(rel_err(a, *n, floor));
    }
    assert!(worst <= tol, "worst relative error {worst:e}");
}

fn activation() -> impl Strategy<Value = Activation> {
    prop_oneof![
        Just(Activation::Relu),
        Just(Activation::Tanh),
        Just(Activation::Softplus),
        Just(Activation::Identity),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn network_backward_matches_finite_differences(
        sizes in prop::collection::vec(1usize..6, 2..5),
        acts in prop::collection::vec(activation(), 4),
        seed in any::<u64>(),
    ) {
        let acts = &acts[..sizes.len() - 1];
        let mut rng = RngStream::new(seed, 0);
        let net = Network::<f64>::init(&sizes, acts, &mut rng).unwrap();
        let input: Vec<f64> = (0..sizes[0]).map(|_| rng.standard_normal()).collect();
        let out_grad: Vec<f64> = (0..*sizes.last().unwrap()).map(|_| rng.standard_normal()).collect();
        let analytic = net.backward(&input, &out_grad).unwrap();
        let numeric = numeric_grad(net.params(), |p| {
            let n = Network::from_parts(&sizes, acts, p.clone()).unwrap();
            n.forward(&input).unwrap().iter().zip(&out_grad).map(|(y, g)| y * g).sum()
        });
        assert_close(&analytic, &numeric, 1e-4, 1e-4);
    }
}

fn random_transitions(
    n: usize,
    state_dim: usize,
    squash: ActionSquash,
    rng: &mut RngStream,
) -> Vec<Transition> {
    (0..n)
        .map(|i| {
            let raw: Vec<f64> = (0..2).map(|_| rng.standard_normal()).collect();
            Transition {
                state: (0..state_dim)
                    .map(|_| rng.standard_normal() as f32)
                    .collect(),
                action: raw.iter().map(|&u| squash.apply(u)).collect(),
                raw,
                reward: rng.standard_normal(),
                next_state: (0..state_dim)
                    .map(|_| rng.standard_normal() as f32)
                    .collect(),
                done: i % 3 == 0,
            }
        })
        .collect()
}

fn agent(squash: ActionSquash, twin: bool, seed: u64) -> Agent<f64> {
    let mut rng = RngStream::new(seed, 9);
    let input = match squash {
        ActionSquash::Tanh { .. } => CriticInput::Scale(1.7),
        ActionSquash::Softplus { .. } => CriticInput::Ratio,
    };
    let mut a = Agent::<f64>::new(5, 2, &[8, 8], twin, squash, input, &mut rng).unwrap();
    // Undo the small final-layer init so the log-std head matters.
    a.actor.scale_layer(2, 30.0);
    a
}

const SQUASHES: [ActionSquash; 2] = [
    ActionSquash::Tanh { scale: 1.5 },
    ActionSquash::Softplus { floor: 1e-9 },
];

#[test]
fn critic_loss_gradient() {
    for (case, squash) in SQUASHES.into_iter().enumerate() {
        let ag = agent(squash, true, case as u64);
        let mut rng = RngStream::new(100 + case as u64, 0);
        let ts = random_transitions(12, 5, squash, &mut rng);
        let refs: Vec<&Transition> = ts.iter().collect();
        let batch = Batch::<f64>::gather(&refs, ag.action_input);
        let noise = Array2::from_shape_simple_fn((12, 2), || rng.standard_normal());
        let y = ag.critic_targets(&batch, 0.99, 0.2, noise.view()).unwrap();
        let critic = &ag.critics[0];
        let (_, analytic) = Agent::critic_loss(critic, &batch.critic_inputs, &y).unwrap();
        let numeric = numeric_grad(critic.params(), |p| {
            let n = Network::from_parts(critic.sizes(), critic.activations(), p.clone()).unwrap();
            Agent::critic_loss(&n, &batch.critic_inputs, &y).unwrap().0
        });
        assert_close(&analytic, &numeric, 1e-4, 1e-4);
    }
}

#[test]
fn actor_loss_gradient_with_frozen_noise() {
    for twin in [true, false] {
        for (case, squash) in SQUASHES.into_iter().enumerate() {
            let ag = agent(squash, twin, 10 + case as u64);
            let mut rng = RngStream::new(200 + case as u64, 0);
            let ts = random_transitions(10, 5, squash, &mut rng);
            let refs: Vec<&Transition> = ts.iter().collect();
            let batch = Batch::<f64>::gather(&refs, ag.action_input);
            let noise = Array2::from_shape_simple_fn((10, 2), || rng.standard_normal());
            let (_, analytic) = ag.actor_loss(&batch.states, 0.2, noise.view()).unwrap();
            let numeric = numeric_grad(ag.actor.params(), |p| {
                let mut other = ag.clone();
                *other.actor.params_mut() = p.clone();
                other
                    .actor_loss(&batch.states, 0.2, noise.view())
                    .unwrap()
                    .0
            });
            assert_close(&analytic, &numeric, 1e-3, 1e-4);
        }
    }
}

#[test]
fn terminal_and_myopic_targets_equal_reward() {
    let squash = SQUASHES[0];
    let ag = agent(squash, true, 3);
    let mut rng = RngStream::new(4, 0);
    let mut ts = random_transitions(6, 5, squash, &mut rng);
    let refs: Vec<&Transition> = ts.iter().collect();
    let batch = Batch::<f64>::gather(&refs, ag.action_input);
    let noise = Array2::from_shape_simple_fn((6, 2), || rng.standard_normal());
    let y = ag.critic_targets(&batch, 0.99, 0.2, noise.view()).unwrap();
    for (t, y) in ts.iter().zip(&y) {
        if t.done {
            assert_eq!(*y, t.reward);
        }
    }
    for t in ts.iter_mut() {
        t.done = false;
    }
    let refs: Vec<&Transition> = ts.iter().collect();
    let batch = Batch::<f64>::gather(&refs, ag.action_input);
    let y0 = ag.critic_targets(&batch, 0.0, 0.2, noise.view()).unwrap();
    for (t, y) in ts.iter().zip(&y0) {
        assert_eq!(*y, t.reward);
    }
}
