use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use seqbed_core::infogain::EpisodeRecord;
use seqbed_core::prob::Estimate;
use seqbed_core::sac::EpisodeLog;

pub const TRAINING_LOG: &str = "training_log.csv";
pub const SUMMARY: &str = "summary.csv";
pub const TRAJECTORIES: &str = "trajectories.csv";
pub const GENERALIZE: &str = "generalize.csv";
pub const ORACLE: &str = "oracle.csv";
pub const CHECKPOINT: &str = "agent.ckpt";
pub const RESOLVED: &str = "resolved.toml";
pub const MANIFEST: &str = "manifest.json";

/// Writes `bytes` to `path` through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f =
            fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn training_log_csv(log: &[EpisodeLog]) -> Result<Vec<u8>> {
    csv_bytes(
        &[
            "episode",
            "terminal_reward",
            "critic_loss",
            "actor_loss",
            "steps",
            "travel_distance",
            "moving_average",
        ],
        log.iter().map(|l| {
            vec![
                l.episode.to_string(),
                l.terminal_reward.to_string(),
                opt(l.critic_loss),
                opt(l.actor_loss),
                l.steps.to_string(),
                l.travel_distance.to_string(),
                l.moving_average.to_string(),
            ]
        }),
    )
}

pub fn summary_csv(estimate: &Estimate, contrastives: usize) -> Result<Vec<u8>> {
    csv_bytes(
        &["mean", "std_err", "episodes", "L"],
        [vec![
            estimate.mean.to_string(),
            estimate.std_err.to_string(),
            estimate.count.to_string(),
            contrastives.to_string(),
        ]],
    )
}

pub fn trajectories_csv(records: &[EpisodeRecord], design_dim: usize) -> Result<Vec<u8>> {
    let mut header = vec!["episode".to_string(), "step".to_string()];
    header.extend((0..design_dim).map(|k| format!("design_{k}")));
    header.push("observation".into());
    header.push("travel_distance".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = records.iter().flat_map(|r| {
        r.history.steps().iter().enumerate().map(move |(t, s)| {
            let mut row = vec![r.episode.to_string(), t.to_string()];
            row.extend(s.design.0.iter().map(|x| x.to_string()));
            row.push(s.observation.to_string());
            row.push(s.travel_distance.to_string());
            row
        })
    });
    csv_bytes(&header, rows)
}

pub struct SweepRow {
    pub value: f64,
    pub estimate: Estimate,
    pub ratio: f64,
}

pub fn generalize_csv(parameter: &str, rows: &[SweepRow]) -> Result<Vec<u8>> {
    csv_bytes(
        &["parameter", "value", "mean", "std_err", "episodes", "ratio"],
        rows.iter().map(|r| {
            vec![
                parameter.to_string(),
                r.value.to_string(),
                r.estimate.mean.to_string(),
                r.estimate.std_err.to_string(),
                r.estimate.count.to_string(),
                format!("{:.3}", r.ratio),
            ]
        }),
    )
}

pub struct OracleRow {
    pub quantity: &'static str,
    pub contrastives: Option<usize>,
    pub exact: f64,
    pub estimate: Estimate,
}

pub fn oracle_csv(rows: &[OracleRow]) -> Result<Vec<u8>> {
    csv_bytes(
        &[
            "quantity",
            "L",
            "exact",
            "mc_mean",
            "mc_std_err",
            "mc_samples",
        ],
        rows.iter().map(|r| {
            vec![
                r.quantity.to_string(),
                r.contrastives.map(|l| l.to_string()).unwrap_or_default(),
                r.exact.to_string(),
                r.estimate.mean.to_string(),
                r.estimate.std_err.to_string(),
                r.estimate.count.to_string(),
            ]
        }),
    )
}

#[derive(Serialize)]
struct FileEntry {
    name: String,
    bytes: u64,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    revision: &'a str,
    started_unix: f64,
    finished_unix: f64,
    resolved_config: &'a str,
    files: Vec<FileEntry>,
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub const REVISION: &str = match option_env!("SEQBED_REVISION") {
    Some(r) => r,
    None => concat!("seqbed ", env!("CARGO_PKG_VERSION")),
};

/// Collects the run's artifacts and writes everything out; the manifest
/// goes last.
pub struct RunOutput {
    dir: PathBuf,
    files: Vec<String>,
}

impl RunOutput {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.path(name), bytes)?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    pub fn finish(self, command: &str, resolved: &str, started: f64) -> Result<()> {
        let mut files = Vec::with_capacity(self.files.len());
        for name in &self.files {
            let bytes = fs::read(self.path(name))?;
            files.push(FileEntry {
                name: name.clone(),
                bytes: bytes.len() as u64,
                sha256: Sha256::digest(&bytes)
                    .iter()
                    .map(|b| format!("{b:02x}"))
                    .collect(),
            });
        }
        let manifest = Manifest {
            command,
            revision: REVISION,
            started_unix: started,
            finished_unix: unix_now(),
            resolved_config: resolved,
            files,
        };
        let mut json = serde_json::to_vec_pretty(&manifest)?;
        json.push(b'\n');
        write_atomic(&self.path(MANIFEST), &json)
    }
}
