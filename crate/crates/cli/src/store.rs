//! Append-only CSV result store.
//!
//! ```text
//! <dir>/runs.csv              one row per sweep cell
//! <dir>/interpretability.csv  one row per measured (best-of-class) run
//! <dir>/verification.csv      one row per (run, query)
//! <dir>/environments.csv      reference returns and attributes per env
//! <dir>/policies/<stem>.policy
//! <dir>/programs/<stem>.txt
//! ```
//!
//! Rows are flushed one at a time. A crash can leave at most one partial
//! trailing line, which [`ResultStore::open`] drops. Column layouts are in
//! `docs/schemas.md`.

use std::collections::HashSet;
use std::fs::{self, OpenOptions};
use std::io::{Read as _, Seek as _, SeekFrom};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

pub const RUNS: &str = "runs.csv";
pub const INTERPRETABILITY: &str = "interpretability.csv";
pub const VERIFICATION: &str = "verification.csv";
pub const ENVIRONMENTS: &str = "environments.csv";

/// Outcome of one sweep cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    #[default]
    Ok,
    Failed,
    Unsupported,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunRow {
    pub schema_version: u32,
    pub key: String,
    pub env: String,
    pub variant: String,
    pub budget: usize,
    pub class: String,
    pub repetition: usize,
    pub seed: u64,
    pub status: RunStatus,
    pub error: String,
    pub mean_return: Option<f64>,
    pub normalized_return: Option<f64>,
    pub param_count: Option<usize>,
    pub dataset_size: Option<usize>,
    pub episodes: Option<usize>,
    /// Per-episode returns joined with `;`.
    pub returns: String,
    pub lengths: String,
    pub policy_file: String,
}

impl RunRow {
    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }

    pub fn returns(&self) -> Result<Vec<f64>> {
        split_list(&self.returns)
    }

    pub fn lengths(&self) -> Result<Vec<usize>> {
        split_list(&self.lengths)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct InterpretabilityRow {
    pub schema_version: u32,
    pub run_key: String,
    pub env: String,
    pub class: String,
    pub param_count: usize,
    pub size_bytes: usize,
    pub step_time_s: f64,
    pub step_time_lo: f64,
    pub step_time_hi: f64,
    pub episode_time_s: f64,
    pub episode_time_lo: f64,
    pub episode_time_hi: f64,
    pub folded_step_time_s: f64,
    pub folded_step_time_lo: f64,
    pub folded_step_time_hi: f64,
    /// Mean return of the unfolded program on the measurement episodes.
    pub mean_return: f64,
    pub measure_seed: u64,
    pub episodes: usize,
    pub program_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct VerificationRow {
    pub schema_version: u32,
    pub run_key: String,
    pub env: String,
    pub class: String,
    pub query_id: usize,
    pub query_seed: u64,
    /// `lo:hi` per state dimension, joined with `;`.
    pub state_box: String,
    /// Discrete: action indices joined with `;`. Continuous: `lo:hi` per dim.
    pub target: String,
    pub status: String,
    pub wall_time_s: f64,
    pub nodes: usize,
    pub witness: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EnvironmentRow {
    pub schema_version: u32,
    pub env: String,
    pub state_dim: f64,
    pub action_dim: f64,
    pub expert_return: f64,
    pub random_return: f64,
    pub solve_threshold: f64,
    pub expert_solve_gap: f64,
    pub expert_episode_length: f64,
}

impl EnvironmentRow {
    /// Attribute values in `simbench::metrics::ATTRIBUTES` order.
    pub fn attributes(&self) -> Vec<f64> {
        vec![
            self.state_dim,
            self.action_dim,
            self.expert_return,
            self.random_return,
            self.solve_threshold,
            self.expert_solve_gap,
            self.expert_episode_length,
        ]
    }
}

pub fn join_list<T: std::fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(";")
}

pub fn split_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(';')
        .map(|x| {
            x.parse::<T>()
                .with_context(|| format!("bad list item `{x}`"))
        })
        .collect()
}

/// File-name stem for a run key (`/` is not allowed in names).
pub fn stem(key: &str) -> String {
    key.replace('/', "_")
}

fn header_of<T: Serialize + Default>() -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.serialize(T::default()).expect("default row serializes");
    let bytes = w.into_inner().expect("in-memory writer");
    String::from_utf8(bytes)
        .expect("utf-8")
        .lines()
        .next()
        .unwrap_or("")
        .to_string()
}

/// Drops a trailing partial line left by an interrupted write and checks
/// the header against `T`.
fn repair<T: Serialize + Default>(path: &Path) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let mut file = OpenOptions::new().read(true).write(true).open(path)?;
    let mut text = String::new();
    file.read_to_string(&mut text)
        .with_context(|| format!("reading {}", path.display()))?;
    if !text.is_empty() && !text.ends_with('\n') {
        let keep = text.rfind('\n').map_or(0, |i| i + 1);
        log::warn!(
            "{}: dropping {} bytes of a partial row",
            path.display(),
            text.len() - keep
        );
        file.set_len(keep as u64)?;
        file.seek(SeekFrom::End(0))?;
        text.truncate(keep);
    }
    if let Some(first) = text.lines().next() {
        let want = header_of::<T>();
        if first != want {
            bail!("{}: header does not match schema version {SCHEMA_VERSION}\n  found: {first}\n  want:  {want}", path.display());
        }
    }
    Ok(())
}

fn read_rows<T: DeserializeOwned>(path: &Path, version: impl Fn(&T) -> u32) -> Result<Vec<T>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut reader =
        csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, row) in reader.deserialize::<T>().enumerate() {
        let row = row.with_context(|| format!("{} row {}", path.display(), i + 1))?;
        if version(&row) != SCHEMA_VERSION {
            bail!(
                "{} row {}: schema version {} (expected {SCHEMA_VERSION})",
                path.display(),
                i + 1,
                version(&row)
            );
        }
        rows.push(row);
    }
    Ok(rows)
}

fn append_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if rows.is_empty() {
        return Ok(());
    }
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(fresh)
        .from_writer(file);
    for row in rows {
        w.serialize(row)?;
        w.flush()?;
    }
    Ok(())
}

/// A results directory.
#[derive(Debug, Clone)]
pub struct ResultStore {
    dir: PathBuf,
}

impl ResultStore {
    /// Opens (creating if needed) and repairs the store at `dir`.
    pub fn open(dir: impl Into<PathBuf>) -> Result<ResultStore> {
        let dir = dir.into();
        for sub in ["policies", "programs"] {
            fs::create_dir_all(dir.join(sub))
                .with_context(|| format!("creating {}", dir.join(sub).display()))?;
        }
        let store = ResultStore { dir };
        repair::<RunRow>(&store.path(RUNS))?;
        repair::<InterpretabilityRow>(&store.path(INTERPRETABILITY))?;
        repair::<VerificationRow>(&store.path(VERIFICATION))?;
        repair::<EnvironmentRow>(&store.path(ENVIRONMENTS))?;
        Ok(store)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn policy_path(&self, key: &str) -> PathBuf {
        self.dir
            .join("policies")
            .join(format!("{}.policy", stem(key)))
    }

    pub fn program_path(&self, key: &str) -> PathBuf {
        self.dir.join("programs").join(format!("{}.txt", stem(key)))
    }

    pub fn runs(&self) -> Result<Vec<RunRow>> {
        read_rows(&self.path(RUNS), |r: &RunRow| r.schema_version)
    }

    pub fn interpretability(&self) -> Result<Vec<InterpretabilityRow>> {
        read_rows(&self.path(INTERPRETABILITY), |r: &InterpretabilityRow| {
            r.schema_version
        })
    }

    pub fn verifications(&self) -> Result<Vec<VerificationRow>> {
        read_rows(&self.path(VERIFICATION), |r: &VerificationRow| {
            r.schema_version
        })
    }

    pub fn environments(&self) -> Result<Vec<EnvironmentRow>> {
        read_rows(&self.path(ENVIRONMENTS), |r: &EnvironmentRow| {
            r.schema_version
        })
    }

    pub fn append_run(&self, row: &RunRow) -> Result<()> {
        append_rows(&self.path(RUNS), std::slice::from_ref(row))
    }

    pub fn append_interpretability(&self, row: &InterpretabilityRow) -> Result<()> {
        append_rows(&self.path(INTERPRETABILITY), std::slice::from_ref(row))
    }

    pub fn append_verification(&self, row: &VerificationRow) -> Result<()> {
        append_rows(&self.path(VERIFICATION), std::slice::from_ref(row))
    }

    pub fn append_environment(&self, row: &EnvironmentRow) -> Result<()> {
        append_rows(&self.path(ENVIRONMENTS), std::slice::from_ref(row))
    }

    pub fn run_keys(&self) -> Result<HashSet<String>> {
        Ok(self.runs()?.into_iter().map(|r| r.key).collect())
    }

    /// Every measurement and verification row must point at a successful
    /// run, and every file a row names must exist.
    pub fn check_integrity(&self) -> Result<()> {
        let runs = self.runs()?;
        let mut keys = HashSet::new();
        for r in &runs {
            if !keys.insert(r.key.as_str()) {
                bail!("runs.csv: duplicate key {}", r.key);
            }
            if r.is_ok() && !self.dir.join(&r.policy_file).exists() {
                bail!("runs.csv: {} names missing file {}", r.key, r.policy_file);
            }
        }
        let ok: HashSet<&str> = runs
            .iter()
            .filter(|r| r.is_ok())
            .map(|r| r.key.as_str())
            .collect();
        for m in self.interpretability()? {
            if !ok.contains(m.run_key.as_str()) {
                bail!(
                    "interpretability.csv: {} has no successful run row",
                    m.run_key
                );
            }
            if !self.dir.join(&m.program_file).exists() {
                bail!(
                    "interpretability.csv: {} names missing file {}",
                    m.run_key,
                    m.program_file
                );
            }
        }
        for v in self.verifications()? {
            if !ok.contains(v.run_key.as_str()) {
                bail!("verification.csv: {} has no successful run row", v.run_key);
            }
        }
        Ok(())
    }
}
