//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits nonzero when any of them fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Mutex;
use std::time::Instant;

use ndarray::Array2;
use seqbed_core::env::{
    DeathConfig, Design, EnvConfig, EnvKind, History, LocationConfig, SourceConfig, ToyConfig,
};
use seqbed_core::infogain::{
    cid_from_log_likelihoods, cid_upper_bound, expected_cid, nested_mc_eig, toy_exact_eig,
    toy_exact_expected_cid, ConstantPolicy, LatentDraw, Policy,
};
use seqbed_core::nn::{Activation, Network, ParameterSet};
use seqbed_core::prob::{Estimate, RngStream};
use seqbed_core::sac::{
    evaluate, train, ActionSquash, Agent, AgentPolicy, Batch, CriticInput, RandomPolicy,
    ReplayBuffer, SacConfig, Transition,
};

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Histories seen by criteria 1, 2 and 7, re-checked by criterion 8.
static SEEN: Mutex<Vec<(EnvConfig, History)>> = Mutex::new(Vec::new());

fn remember(env: &EnvConfig, histories: impl IntoIterator<Item = History>) {
    let mut seen = SEEN.lock().unwrap();
    seen.extend(histories.into_iter().map(|h| (env.clone(), h)));
}

fn random_eval(env: &EnvConfig, episodes: usize, seed: u64) -> Estimate {
    let ev = evaluate(env, &RandomPolicy, episodes, seed).unwrap();
    remember(env, ev.records.into_iter().map(|r| r.history));
    ev.estimate
}

fn fmt(e: &Estimate) -> String {
    format!("{:.3} +/- {:.3}", e.mean, e.std_err)
}

fn criterion_1() -> Check {
    let cases = [
        (EnvKind::Location, 3.278, 0.5),
        (EnvKind::Source, 3.586, 0.5),
        (EnvKind::Death, 1.630, 0.15),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (kind, target, tol) in cases {
        let est = random_eval(&EnvConfig::defaults(kind), 500, 1);
        let hit = (est.mean - target).abs() <= tol;
        ok &= hit;
        parts.push(format!("{kind} {} (target {target} +/- {tol})", fmt(&est)));
    }
    ensure(ok, parts.join("; "))
}

fn criterion_2() -> Check {
    let location = EnvConfig::defaults(EnvKind::Location);
    let reference = [(20.0, 4.797), (40.0, 4.164), (60.0, 3.499)];
    let loc: Vec<f64> = reference
        .iter()
        .map(|&(s, _)| {
            random_eval(
                &location.with_prior_parameter("sigma_1", s).unwrap(),
                500,
                2,
            )
            .mean
        })
        .collect();
    let loc_ok = loc.windows(2).all(|w| w[0] > w[1])
        && loc
            .iter()
            .zip(&reference)
            .all(|(m, (_, p))| (m - p).abs() <= 0.5);
    let death = EnvConfig::defaults(EnvKind::Death);
    let dth: Vec<f64> = [0.5, 1.0, 1.5]
        .iter()
        .map(|&mu| random_eval(&death.with_prior_parameter("mu_theta", mu).unwrap(), 500, 2).mean)
        .collect();
    let dth_ok = dth.windows(2).all(|w| w[0] < w[1]);
    ensure(
        loc_ok && dth_ok,
        format!(
            "location sigma_1 20/40/60 -> {:.3}/{:.3}/{:.3} (reference 4.797/4.164/3.499); death mu_theta 0.5/1/1.5 -> {:.3}/{:.3}/{:.3} (increasing expected)",
            loc[0], loc[1], loc[2], dth[0], dth[1], dth[2]
        ),
    )
}

fn criterion_3() -> Check {
    let mut worst_shift = 0.0f64;
    let mut violations = 0usize;
    let mut total = 0usize;
    for kind in [
        EnvKind::Location,
        EnvKind::Source,
        EnvKind::Death,
        EnvKind::Toy,
    ] {
        let env = EnvConfig::defaults(kind);
        let bound = cid_upper_bound(env.contrastive_samples());
        for i in 0..10_000u64 {
            let mut rng = RngStream::new(3, i);
            let (latent, mut history) = env.reset(&mut rng).unwrap();
            while !history.is_done() {
                let a = RandomPolicy.act(&env, &history, &mut rng).unwrap();
                env.step_in_place(&latent, &mut history, &a, &mut rng)
                    .unwrap();
            }
            let draw = LatentDraw::sample(&env, latent, &mut rng).unwrap();
            let primary = env.log_likelihood(&draw.primary, &history).unwrap();
            let contrastive: Vec<f64> = draw
                .contrastives
                .iter()
                .map(|l| env.log_likelihood(l, &history).unwrap())
                .collect();
            let base = cid_from_log_likelihoods(primary, &contrastive)
                .unwrap()
                .nats;
            let c = 37.5;
            let shifted: Vec<f64> = contrastive.iter().map(|x| x + c).collect();
            let moved = cid_from_log_likelihoods(primary + c, &shifted)
                .unwrap()
                .nats;
            worst_shift = worst_shift.max((moved - base).abs());
            if !base.is_finite() || base > bound + 1e-12 {
                violations += 1;
            }
            total += 1;
        }
    }
    ensure(
        violations == 0 && worst_shift <= 1e-9,
        format!("{total} episodes, {violations} bound/finiteness violations, max shift change {worst_shift:.1e}"),
    )
}

fn criterion_4() -> Check {
    let toy = ToyConfig::default();
    let eig = toy_exact_eig(&toy);
    let ls = [1usize, 2, 4, 8];
    let exact: Vec<f64> = ls
        .iter()
        .map(|&l| toy_exact_expected_cid(&toy, l))
        .collect();
    let ordered = exact.windows(2).all(|w| w[0] <= w[1]) && exact.iter().all(|&v| v <= eig);
    let mut worst_z = 0.0f64;
    let policy = ConstantPolicy(seqbed_core::env::Action(vec![0.0]));
    for (&l, &v) in ls.iter().zip(&exact) {
        let env = EnvConfig::Toy(ToyConfig {
            contrastive_samples: l,
            ..toy.clone()
        });
        let est = expected_cid(&env, &policy, 100_000, 4).unwrap();
        worst_z = worst_z.max((est.mean - v).abs() / est.std_err);
    }
    let nmc = nested_mc_eig(
        &EnvConfig::Toy(toy.clone()),
        &[Design(vec![0.0])],
        100_000,
        500,
        4,
    )
    .unwrap();
    worst_z = worst_z.max((nmc.mean - eig).abs() / nmc.std_err);
    ensure(
        (eig - 0.1927).abs() < 5e-5 && ordered && worst_z <= 3.0,
        format!(
            "EIG {eig:.4}; exact L=1/2/4/8 {:.4}/{:.4}/{:.4}/{:.4}; worst MC deviation {worst_z:.2} SE",
            exact[0], exact[1], exact[2], exact[3]
        ),
    )
}

const H: f64 = 1e-6;

fn numeric_grad(
    params: &ParameterSet<f64>,
    mut f: impl FnMut(&ParameterSet<f64>) -> f64,
) -> Vec<f64> {
    let flat: Vec<f64> = params.iter_values().collect();
    (0..flat.len())
        .map(|k| {
            let mut plus = params.clone();
            let mut minus = params.clone();
            set_flat(&mut plus, k, flat[k] + H);
            set_flat(&mut minus, k, flat[k] - H);
            (f(&plus) - f(&minus)) / (2.0 * H)
        })
        .collect()
}

fn set_flat(params: &mut ParameterSet<f64>, mut k: usize, value: f64) {
    for t in params.values_mut() {
        if k < t.len() {
            t[k] = value;
            return;
        }
        k -= t.len();
    }
}

fn worst_rel(analytic: &ParameterSet<f64>, numeric: &[f64]) -> f64 {
    analytic
        .iter_values()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-4))
        .fold(0.0, f64::max)
}

fn criterion_5() -> Check {
    let acts = [
        Activation::Relu,
        Activation::Tanh,
        Activation::Softplus,
        Activation::Identity,
    ];
    let mut net_err = 0.0f64;
    for seed in 0..40u64 {
        let mut rng = RngStream::new(seed, 5);
        let sizes: Vec<usize> = (0..2 + rng.below(3)).map(|_| 1 + rng.below(5)).collect();
        let a: Vec<Activation> = (1..sizes.len()).map(|_| acts[rng.below(4)]).collect();
        let net = Network::<f64>::init(&sizes, &a, &mut rng).unwrap();
        let input: Vec<f64> = (0..sizes[0]).map(|_| rng.standard_normal()).collect();
        let g: Vec<f64> = (0..*sizes.last().unwrap())
            .map(|_| rng.standard_normal())
            .collect();
        let analytic = net.backward(&input, &g).unwrap();
        let numeric = numeric_grad(net.params(), |p| {
            let n = Network::from_parts(&sizes, &a, p.clone()).unwrap();
            n.forward(&input)
                .unwrap()
                .iter()
                .zip(&g)
                .map(|(y, g)| y * g)
                .sum()
        });
        net_err = net_err.max(worst_rel(&analytic, &numeric));
    }
    let mut critic_err = 0.0f64;
    let mut actor_err = 0.0f64;
    let squashes = [
        (ActionSquash::Tanh { scale: 1.5 }, CriticInput::Scale(1.5)),
        (ActionSquash::Softplus { floor: 1e-9 }, CriticInput::Ratio),
    ];
    for (case, (squash, input)) in squashes.into_iter().enumerate() {
        let mut rng = RngStream::new(50 + case as u64, 0);
        let mut ag = Agent::<f64>::new(5, 2, &[8, 8], true, squash, input, &mut rng).unwrap();
        ag.actor.scale_layer(2, 30.0);
        let ts: Vec<Transition> = (0..10)
            .map(|i| {
                let raw: Vec<f64> = (0..2).map(|_| rng.standard_normal()).collect();
                Transition {
                    state: (0..5).map(|_| rng.standard_normal() as f32).collect(),
                    action: raw.iter().map(|&u| squash.apply(u)).collect(),
                    raw,
                    reward: rng.standard_normal(),
                    next_state: (0..5).map(|_| rng.standard_normal() as f32).collect(),
                    done: i % 3 == 0,
                }
            })
            .collect();
        let refs: Vec<&Transition> = ts.iter().collect();
        let batch = Batch::<f64>::gather(&refs, input);
        let noise = Array2::from_shape_simple_fn((10, 2), || rng.standard_normal());
        let y = ag.critic_targets(&batch, 0.99, 0.2, noise.view()).unwrap();
        let critic = &ag.critics[0];
        let (_, analytic) = Agent::critic_loss(critic, &batch.critic_inputs, &y).unwrap();
        let numeric = numeric_grad(critic.params(), |p| {
            let n = Network::from_parts(critic.sizes(), critic.activations(), p.clone()).unwrap();
            Agent::critic_loss(&n, &batch.critic_inputs, &y).unwrap().0
        });
        critic_err = critic_err.max(worst_rel(&analytic, &numeric));
        let (_, analytic) = ag.actor_loss(&batch.states, 0.2, noise.view()).unwrap();
        let numeric = numeric_grad(ag.actor.params(), |p| {
            let mut other = ag.clone();
            *other.actor.params_mut() = p.clone();
            other
                .actor_loss(&batch.states, 0.2, noise.view())
                .unwrap()
                .0
        });
        actor_err = actor_err.max(worst_rel(&analytic, &numeric));
    }
    ensure(
        net_err < 1e-4 && critic_err < 1e-4 && actor_err < 1e-3,
        format!("network {net_err:.1e}, critic loss {critic_err:.1e}, actor loss {actor_err:.1e}"),
    )
}

fn chain_step(s: usize, right: bool) -> (usize, f64, bool) {
    match (s, right) {
        (2, true) => (2, 1.0, true),
        (s, true) => (s + 1, 0.0, false),
        (s, false) => (s.saturating_sub(1), 0.0, false),
    }
}

fn one_hot(s: usize) -> Vec<f32> {
    let mut v = vec![0.0; 3];
    v[s] = 1.0;
    v
}

fn criterion_6() -> Check {
    let gamma = 0.9;
    let mut q_star = [[0.0f64; 2]; 3];
    for _ in 0..500 {
        let prev = q_star;
        for (s, row) in q_star.iter_mut().enumerate() {
            for (k, v) in row.iter_mut().enumerate() {
                let (s2, r, done) = chain_step(s, k == 1);
                *v = if done {
                    r
                } else {
                    r + gamma * prev[s2][0].max(prev[s2][1])
                };
            }
        }
    }
    let cfg = SacConfig {
        gamma,
        alpha: 1e-4,
        tau: 0.01,
        lr_actor: 1e-3,
        lr_critic: 1e-3,
        batch_size: 64,
        replay_capacity: 10_000,
        warmup_steps: 0,
        hidden: vec![32, 32],
        ..SacConfig::default()
    };
    let squash = ActionSquash::Tanh { scale: 1.0 };
    let input = CriticInput::Scale(1.0);
    let mut rng = RngStream::new(6, 0);
    let mut agent = Agent::<f64>::new(3, 1, &cfg.hidden, true, squash, input, &mut rng).unwrap();
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity);
    for _ in 0..3000 {
        let s = rng.below(3);
        let raw = 4.0 * rng.uniform() - 2.0;
        let a = squash.apply(raw);
        let (s2, r, done) = chain_step(s, a >= 0.0);
        buffer.push(Transition {
            state: one_hot(s),
            action: vec![a],
            raw: vec![raw],
            reward: r,
            next_state: one_hot(s2),
            done,
        });
    }
    for _ in 0..4000 {
        let batch = Batch::gather(&buffer.sample(cfg.batch_size, &mut rng), input);
        agent.update(&batch, &cfg, &mut rng).unwrap();
    }
    let mut worst = 0.0f64;
    for (s, row) in q_star.iter().enumerate() {
        for (k, q) in row.iter().enumerate() {
            let a = if k == 1 { 0.5 } else { -0.5 };
            for learned in agent.q_values(&one_hot(s), &[a]).unwrap() {
                worst = worst.max((learned - q).abs());
            }
        }
    }
    ensure(
        worst <= 0.05,
        format!("max |Q - Q*| = {worst:.4} (tolerance 0.05)"),
    )
}

/// Trains, then evaluates the agent and the random policy on the same
/// evaluation seed. Returns (trained, random).
fn train_and_compare(env: &EnvConfig, sac: &SacConfig, episodes: usize) -> (Estimate, Estimate) {
    let mut log_ok = true;
    let limit = env.distance_limits().map(|(d1, d2)| d1 + d2);
    let outcome = train(env, sac, episodes, 7, &mut |l| {
        if let Some(limit) = limit {
            log_ok &= l.travel_distance <= limit;
        }
    })
    .unwrap();
    assert!(log_ok, "training episode exceeded the travel budget");
    let policy = AgentPolicy {
        agent: &outcome.agent,
    };
    let trained = evaluate(env, &policy, 500, 77).unwrap();
    remember(env, trained.records.into_iter().map(|r| r.history));
    (trained.estimate, random_eval(env, 500, 77))
}

fn criterion_7a() -> Check {
    let env = EnvConfig::Location(LocationConfig {
        max_steps: 30,
        d2: 20.0,
        contrastive_samples: 200,
        ..LocationConfig::default()
    });
    let (trained, random) = train_and_compare(&env, &SacConfig::default(), 3000);
    ensure(
        trained.mean - random.mean >= 0.5,
        format!(
            "trained {} vs random {} (need +0.5)",
            fmt(&trained),
            fmt(&random)
        ),
    )
}

fn criterion_7b() -> Check {
    let env = EnvConfig::defaults(EnvKind::Death);
    let sac = SacConfig {
        alpha: 0.02,
        ..SacConfig::default()
    };
    let (trained, random) = train_and_compare(&env, &sac, 5000);
    ensure(
        trained.mean >= 1.630 + 0.2,
        format!(
            "trained {} vs 1.830 threshold; same-seed random {}",
            fmt(&trained),
            fmt(&random)
        ),
    )
}

fn constraint_violations(env: &EnvConfig, h: &History) -> usize {
    let mut bad = 0;
    let mut last = 0.0;
    for step in h.steps() {
        match env.distance_limits() {
            Some((d1, d2)) => {
                bad += usize::from(step.action.norm() > d1 * (1.0 + 1e-9));
                bad += usize::from(step.travel_distance > d1 + d2);
            }
            None if matches!(env, EnvConfig::Death(_)) => {
                bad += usize::from(step.action.0[0] <= 0.0 || step.design.0[0] <= last);
                last = step.design.0[0];
            }
            None => {}
        }
    }
    bad
}

fn criterion_8() -> Check {
    // Short runs on the full-size spatial environments so they are covered
    // even when criterion 7 is skipped.
    let small = SacConfig {
        batch_size: 32,
        warmup_steps: 64,
        hidden: vec![32, 32],
        ..SacConfig::default()
    };
    let envs = [
        EnvConfig::Location(LocationConfig {
            contrastive_samples: 100,
            ..LocationConfig::default()
        }),
        EnvConfig::Source(SourceConfig {
            contrastive_samples: 100,
            ..SourceConfig::default()
        }),
        EnvConfig::Death(DeathConfig {
            contrastive_samples: 100,
            ..DeathConfig::default()
        }),
    ];
    for env in &envs {
        train_and_compare(env, &small, 20);
    }
    let seen = SEEN.lock().unwrap();
    let steps: usize = seen.iter().map(|(_, h)| h.step_count()).sum();
    let bad: usize = seen.iter().map(|(e, h)| constraint_violations(e, h)).sum();
    ensure(
        bad == 0,
        format!("{} episodes, {steps} actions, {bad} violations", seen.len()),
    )
}

fn run_cli(args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_seqbed"))
        .args(args)
        .stdout(std::process::Stdio::null())
        .stderr(std::process::Stdio::null())
        .status()
        .unwrap();
    assert!(status.success(), "seqbed {args:?} failed");
}

fn criterion_9() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "[run]\nenv = \"death\"\nepisodes = 40\neval_episodes = 50\n[env]\ncontrastive_samples = 200\n[sac]\nbatch_size = 16\nwarmup_steps = 32\nhidden = [16, 16]\n[generalize]\nparameter = \"mu_theta\"\nvalues = [0.5, 1.5]\n",
    )
    .unwrap();
    let toy = dir.path().join("toy.toml");
    std::fs::write(&toy, "[run]\nenv = \"toy\"\neval_episodes = 2000\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let toy = toy.to_str().unwrap();
    let mut compared = 0;
    let mut differing = Vec::new();
    for round in ["a", "b"] {
        let out = |name: &str| dir.path().join(round).join(name);
        let o = |name: &str| out(name).to_str().unwrap().to_string();
        let ck = out("train").join("agent.ckpt");
        let ck = ck.to_str().unwrap();
        run_cli(&[
            "train",
            "--config",
            cfg,
            "--out",
            &o("train"),
            "--threads",
            "1",
        ]);
        run_cli(&[
            "eval",
            "--config",
            cfg,
            "--checkpoint",
            ck,
            "--out",
            &o("eval"),
            "--threads",
            "1",
        ]);
        run_cli(&[
            "baseline",
            "--config",
            cfg,
            "--out",
            &o("baseline"),
            "--threads",
            "1",
        ]);
        run_cli(&[
            "generalize",
            "--config",
            cfg,
            "--checkpoint",
            ck,
            "--out",
            &o("generalize"),
            "--threads",
            "1",
        ]);
        run_cli(&[
            "oracle",
            "--config",
            toy,
            "--out",
            &o("oracle"),
            "--threads",
            "1",
        ]);
    }
    let files = [
        "train/training_log.csv",
        "train/agent.ckpt",
        "eval/summary.csv",
        "eval/trajectories.csv",
        "baseline/summary.csv",
        "baseline/trajectories.csv",
        "generalize/generalize.csv",
        "oracle/oracle.csv",
    ];
    for f in files {
        let read = |r: &str| std::fs::read(dir.path().join(r).join(Path::new(f))).unwrap();
        compared += 1;
        if read("a") != read("b") {
            differing.push(f);
        }
    }
    ensure(
        differing.is_empty(),
        format!("{compared} artifacts compared across two runs; differing: {differing:?}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("1", criterion_1),
        ("2", criterion_2),
        ("3", criterion_3),
        ("4", criterion_4),
        ("5", criterion_5),
        ("6", criterion_6),
        ("7a", criterion_7a),
        ("7b", criterion_7b),
        ("8", criterion_8),
        ("9", criterion_9),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == name) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {name}: PASS  {detail}  [{secs:.0}s]"),
            Err(detail) => {
                failed += 1;
                println!("criterion {name}: FAIL  {detail}  [{secs:.0}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
