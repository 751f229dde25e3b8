use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};

use seqbed_core::env::Design;
use seqbed_core::env::{Action, EnvConfig, ToyConfig};
use seqbed_core::infogain::{
    expected_cid, nested_mc_eig, toy_exact_eig, toy_exact_expected_cid, ConstantPolicy, Policy,
};
use seqbed_core::nn::Checkpoint;
use seqbed_core::sac::{evaluate, state_dim, train, Agent, AgentPolicy, RandomPolicy};

use crate::config::RunConfig;
use crate::output::{self, OracleRow, RunOutput, SweepRow};

fn start(cfg: &RunConfig) -> Result<(RunOutput, String)> {
    let mut out = RunOutput::create(&cfg.output_dir)?;
    let resolved = cfg.to_toml();
    out.write(output::RESOLVED, resolved.as_bytes())?;
    Ok((out, resolved))
}

pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let started = output::unix_now();
    let (mut out, resolved) = start(cfg)?;
    let mut report = |l: &seqbed_core::sac::EpisodeLog| {
        if (l.episode + 1).is_multiple_of(100) {
            eprintln!(
                "episode {:>6}  reward {:.4}  avg100 {:.4}",
                l.episode + 1,
                l.terminal_reward,
                l.moving_average
            );
        }
    };
    let outcome = train(&cfg.env, &cfg.sac, cfg.episodes, cfg.seed, &mut report)?;
    out.write(
        output::TRAINING_LOG,
        &output::training_log_csv(&outcome.log)?,
    )?;
    let mut metadata = BTreeMap::new();
    metadata.insert("env".to_string(), cfg.env_kind.to_string());
    metadata.insert("config_hash".to_string(), cfg.config_hash());
    metadata.insert("episodes".to_string(), cfg.episodes.to_string());
    metadata.insert("seed".to_string(), cfg.seed.to_string());
    let ck = outcome.agent.to_checkpoint(metadata);
    out.write(output::CHECKPOINT, &ck.to_bytes())?;
    out.finish("train", &resolved, started)
}

/// Loads a checkpoint and refuses it unless it was trained on the same
/// environment with matching state and action shapes.
pub fn load_agent(path: &Path, env: &EnvConfig) -> Result<Agent<f32>> {
    let ck =
        Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    let trained_on = ck
        .metadata
        .get("env")
        .map(String::as_str)
        .unwrap_or("<unknown>");
    if trained_on != env.kind().name() {
        bail!(
            "checkpoint {} was trained on the `{trained_on}` environment but the config selects `{}`",
            path.display(),
            env.kind()
        );
    }
    let agent = Agent::<f32>::from_checkpoint(&ck)?;
    if agent.state_dim() != state_dim(env) || agent.action_dim() != env.action_dim() {
        bail!(
            "checkpoint {} expects state/action dimensions {}/{} but the config implies {}/{}",
            path.display(),
            agent.state_dim(),
            agent.action_dim(),
            state_dim(env),
            env.action_dim()
        );
    }
    Ok(agent)
}

fn write_evaluation(cfg: &RunConfig, command: &str, policy: &dyn Policy) -> Result<()> {
    let started = output::unix_now();
    let (mut out, resolved) = start(cfg)?;
    let ev = evaluate(&cfg.env, policy, cfg.eval_episodes, cfg.seed)?;
    println!(
        "{command}: mean CID {:.4} +/- {:.4} over {} episodes (L = {})",
        ev.estimate.mean,
        ev.estimate.std_err,
        ev.estimate.count,
        cfg.env.contrastive_samples()
    );
    out.write(
        output::SUMMARY,
        &output::summary_csv(&ev.estimate, cfg.env.contrastive_samples())?,
    )?;
    out.write(
        output::TRAJECTORIES,
        &output::trajectories_csv(&ev.records, cfg.env.design_dim())?,
    )?;
    out.finish(command, &resolved, started)
}

pub fn cmd_eval(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<()> {
    let Some(path) = checkpoint else {
        bail!("eval needs --checkpoint <path>");
    };
    let agent = load_agent(path, &cfg.env)?;
    write_evaluation(cfg, "eval", &AgentPolicy { agent: &agent })
}

pub fn cmd_baseline(cfg: &RunConfig) -> Result<()> {
    write_evaluation(cfg, "baseline", &RandomPolicy)
}

/// Evaluates the policy (trained agent, or the random baseline without a
/// checkpoint) across a prior-parameter sweep.
pub fn cmd_generalize(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<()> {
    let Some(sweep) = &cfg.generalize else {
        bail!("generalize needs a [generalize] table with `parameter` and `values`");
    };
    let started = output::unix_now();
    let agent = checkpoint.map(|p| load_agent(p, &cfg.env)).transpose()?;
    let policy: Box<dyn Policy + '_> = match &agent {
        Some(a) => Box::new(AgentPolicy { agent: a }),
        None => Box::new(RandomPolicy),
    };
    let (mut out, resolved) = start(cfg)?;
    let reference = cfg
        .env
        .prior_parameter(&sweep.parameter)
        .expect("validated");
    let run = |value: f64| -> Result<seqbed_core::prob::Estimate> {
        let env = cfg.env.with_prior_parameter(&sweep.parameter, value)?;
        Ok(evaluate(&env, policy.as_ref(), cfg.eval_episodes, cfg.seed)?.estimate)
    };
    let mut estimates = Vec::with_capacity(sweep.values.len());
    for &v in &sweep.values {
        estimates.push((v, run(v)?));
    }
    let base = match estimates.iter().find(|(v, _)| *v == reference) {
        Some((_, e)) => e.mean,
        None => run(reference)?.mean,
    };
    let rows: Vec<SweepRow> = estimates
        .into_iter()
        .map(|(value, estimate)| SweepRow {
            value,
            ratio: estimate.mean / base,
            estimate,
        })
        .collect();
    println!(
        "{:>10} {:>10} {:>10} {:>8}",
        sweep.parameter, "mean", "std_err", "ratio"
    );
    for r in &rows {
        println!(
            "{:>10} {:>10.4} {:>10.4} {:>8.3}",
            r.value, r.estimate.mean, r.estimate.std_err, r.ratio
        );
    }
    out.write(
        output::GENERALIZE,
        &output::generalize_csv(&sweep.parameter, &rows)?,
    )?;
    out.finish("generalize", &resolved, started)
}

pub const ORACLE_LS: [usize; 4] = [1, 2, 4, 8];

/// Exact and Monte Carlo values of the toy model's information quantities.
/// Fails when the exact bounds are not ordered below the exact EIG.
pub fn cmd_oracle(cfg: &RunConfig) -> Result<()> {
    let EnvConfig::Toy(toy) = &cfg.env else {
        bail!("oracle runs on the toy environment only (set run.env = \"toy\")");
    };
    let started = output::unix_now();
    let (mut out, resolved) = start(cfg)?;
    let samples = cfg.eval_episodes;
    let eig = toy_exact_eig(toy);
    let env = EnvConfig::Toy(toy.clone());
    let nmc = nested_mc_eig(&env, &[Design(vec![0.0])], samples, 1000, cfg.seed)?;
    let mut rows = vec![OracleRow {
        quantity: "eig",
        contrastives: None,
        exact: eig,
        estimate: nmc,
    }];
    let policy = ConstantPolicy(Action(vec![0.0]));
    for l in ORACLE_LS {
        let cfg_l = ToyConfig {
            contrastive_samples: l,
            ..toy.clone()
        };
        let exact = toy_exact_expected_cid(&cfg_l, l);
        let est = expected_cid(&EnvConfig::Toy(cfg_l), &policy, samples, cfg.seed)?;
        rows.push(OracleRow {
            quantity: "expected_cid",
            contrastives: Some(l),
            exact,
            estimate: est,
        });
    }
    println!(
        "{:<14} {:>3} {:>10} {:>10} {:>10}",
        "quantity", "L", "exact", "mc", "std_err"
    );
    for r in &rows {
        println!(
            "{:<14} {:>3} {:>10.6} {:>10.6} {:>10.6}",
            r.quantity,
            r.contrastives
                .map(|l| l.to_string())
                .unwrap_or_else(|| "-".into()),
            r.exact,
            r.estimate.mean,
            r.estimate.std_err
        );
    }
    out.write(output::ORACLE, &output::oracle_csv(&rows)?)?;
    out.finish("oracle", &resolved, started)?;
    let bounds: Vec<f64> = rows[1..].iter().map(|r| r.exact).collect();
    let ordered = bounds.windows(2).all(|w| w[0] <= w[1]) && bounds.iter().all(|&b| b <= eig);
    println!("bound ordering: {}", if ordered { "PASS" } else { "FAIL" });
    if !ordered {
        bail!("exact bounds are not ordered below the exact EIG");
    }
    Ok(())
}
