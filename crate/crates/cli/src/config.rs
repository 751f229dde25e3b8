//! Run configuration: a TOML file with `[run]`, `[env]`, `[sac]` and
//! `[generalize]` tables. See the README for the full grammar.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use seqbed_core::env::{DeathConfig, EnvConfig, EnvKind, LocationConfig, SourceConfig, ToyConfig};
use seqbed_core::sac::SacConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub env: EnvKind,
    /// Training episodes; defaults depend on `env`.
    #[serde(default)]
    pub episodes: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_eval_episodes() -> usize {
    500
}

fn default_episodes(kind: EnvKind) -> usize {
    match kind {
        EnvKind::Location | EnvKind::Death => 15_000,
        EnvKind::Source => 3000,
        EnvKind::Toy => 1,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneralizeSection {
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    run: RunSection,
    #[serde(default)]
    env: toml::Table,
    #[serde(default)]
    sac: toml::Table,
    #[serde(default)]
    generalize: Option<GeneralizeSection>,
}

/// Fully resolved configuration: defaults applied, overrides merged,
/// everything validated.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub env_kind: EnvKind,
    pub episodes: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub eval_episodes: usize,
    pub env: EnvConfig,
    pub sac: SacConfig,
    pub generalize: Option<GeneralizeSection>,
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    parse_config(&text).with_context(|| format!("in config {}", path.display()))
}

fn section<T: DeserializeOwned>(name: &str, table: toml::Table) -> Result<T> {
    serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
        let path = e.path().to_string();
        let key = if path == "." {
            name.to_string()
        } else {
            format!("{name}.{path}")
        };
        anyhow!("invalid configuration `{key}`: {}", e.into_inner())
    })
}

/// Rewrites a core validation error so its key carries the section prefix.
fn prefixed(section: &str, err: seqbed_core::Error) -> anyhow::Error {
    match err {
        seqbed_core::Error::InvalidConfig { key, reason } => {
            anyhow!("invalid configuration `{section}.{key}`: {reason}")
        }
        other => other.into(),
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let table: toml::Table = toml::from_str(text).context("malformed TOML")?;
    let raw: RawConfig = section("config", table).map_err(|e| {
        // Top-level paths already start at the section name.
        anyhow!(e.to_string().replace("`config.", "`"))
    })?;
    let kind = raw.run.env;
    let env = match kind {
        EnvKind::Location => EnvConfig::Location(section::<LocationConfig>("env", raw.env)?),
        EnvKind::Source => EnvConfig::Source(section::<SourceConfig>("env", raw.env)?),
        EnvKind::Death => EnvConfig::Death(section::<DeathConfig>("env", raw.env)?),
        EnvKind::Toy => EnvConfig::Toy(section::<ToyConfig>("env", raw.env)?),
    };
    env.validate().map_err(|e| prefixed("env", e))?;
    let sac: SacConfig = section("sac", raw.sac)?;
    sac.validate().map_err(|e| prefixed("sac", e))?;
    if raw.run.eval_episodes < 2 {
        bail!("invalid configuration `run.eval_episodes`: must be at least 2");
    }
    if let Some(g) = &raw.generalize {
        if env.prior_parameter(&g.parameter).is_none() {
            bail!(
                "invalid configuration `generalize.parameter`: `{}` is not a prior parameter of the {} environment (allowed: {})",
                g.parameter,
                kind,
                env.prior_parameters().join(", ")
            );
        }
        if g.values.is_empty() {
            bail!("invalid configuration `generalize.values`: must not be empty");
        }
        for &v in &g.values {
            env.with_prior_parameter(&g.parameter, v)
                .map_err(|e| prefixed("generalize", e))
                .with_context(|| format!("sweep value {v}"))?;
        }
    }
    Ok(RunConfig {
        env_kind: kind,
        episodes: raw.run.episodes.unwrap_or_else(|| default_episodes(kind)),
        seed: raw.run.seed,
        output_dir: raw.run.output_dir,
        eval_episodes: raw.run.eval_episodes,
        env,
        sac,
        generalize: raw.generalize,
    })
}

fn to_table<T: Serialize>(value: &T) -> toml::Table {
    match toml::Value::try_from(value).expect("config serializes") {
        toml::Value::Table(t) => t,
        _ => unreachable!("configs are structs"),
    }
}

impl RunConfig {
    fn env_table(&self) -> toml::Table {
        match &self.env {
            EnvConfig::Location(c) => to_table(c),
            EnvConfig::Source(c) => to_table(c),
            EnvConfig::Death(c) => to_table(c),
            EnvConfig::Toy(c) => to_table(c),
        }
    }

    /// Every value spelled out; parsing the result yields `self` again.
    pub fn to_toml(&self) -> String {
        let run = RunSection {
            env: self.env_kind,
            episodes: Some(self.episodes),
            seed: self.seed,
            output_dir: self.output_dir.clone(),
            eval_episodes: self.eval_episodes,
        };
        let mut doc = toml::Table::new();
        doc.insert("run".into(), toml::Value::Table(to_table(&run)));
        doc.insert("env".into(), toml::Value::Table(self.env_table()));
        doc.insert("sac".into(), toml::Value::Table(to_table(&self.sac)));
        if let Some(g) = &self.generalize {
            doc.insert("generalize".into(), toml::Value::Table(to_table(g)));
        }
        toml::to_string(&doc).expect("resolved config serializes")
    }

    /// Short digest of the environment and agent settings, stored in
    /// checkpoints to catch mismatched evaluation configs.
    pub fn config_hash(&self) -> String {
        let mut doc = toml::Table::new();
        doc.insert("env".into(), toml::Value::Table(self.env_table()));
        doc.insert("sac".into(), toml::Value::Table(to_table(&self.sac)));
        let digest = Sha256::digest(toml::to_string(&doc).expect("serializes").as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}
