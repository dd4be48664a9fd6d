//! Flat `key = value` experiment configuration.
//!
//! One assignment per line, `#` starts a comment, lists are comma
//! separated, and `all` expands to every environment or class. Unknown or
//! repeated keys are errors. See `docs/config.md` for the key reference.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use simbench::env::EnvName;
use simbench::fit::ClassSize;
use simbench::imitation::{Variant, DESK_BUDGET, EVAL_EPISODES, FULL_BUDGETS};
use simbench::metrics::TIMING_EPISODES;
use simbench::verify::{DEFAULT_EPS, DEFAULT_QUERIES};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub envs: Vec<EnvName>,
    pub variants: Vec<Variant>,
    pub budgets: Vec<usize>,
    pub classes: Vec<ClassSize>,
    pub repetitions: usize,
    pub seed: u64,
    pub eval_episodes: usize,
    pub experts: PathBuf,
    pub output: PathBuf,
    pub full_scale: bool,
    pub cell_timeout: Option<Duration>,
    pub timing_episodes: usize,
    pub verify: bool,
    pub verify_envs: Vec<EnvName>,
    pub verify_queries: usize,
    pub verify_eps: f64,
    pub verify_timeout: Duration,
}

impl Default for ExperimentConfig {
    /// The desk-scale sweep: every environment, variant and class at 20K
    /// samples, two repetitions.
    fn default() -> Self {
        ExperimentConfig {
            envs: EnvName::ALL.to_vec(),
            variants: Variant::ALL.to_vec(),
            budgets: vec![DESK_BUDGET],
            classes: ClassSize::grid(),
            repetitions: 2,
            seed: 0,
            eval_episodes: EVAL_EPISODES,
            experts: PathBuf::from("experts"),
            output: PathBuf::from("results"),
            full_scale: false,
            cell_timeout: Some(Duration::from_secs(4 * 3600)),
            timing_episodes: TIMING_EPISODES,
            verify: true,
            verify_envs: vec![EnvName::CartPole],
            verify_queries: DEFAULT_QUERIES,
            verify_eps: DEFAULT_EPS,
            verify_timeout: Duration::from_secs(60),
        }
    }
}

fn list<T: FromStr>(value: &str, all: impl FnOnce() -> Vec<T>) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    if value.trim() == "all" {
        return Ok(all());
    }
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| anyhow!("{e}")))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        bail!("empty list");
    }
    Ok(items)
}

fn scalar<T: FromStr>(value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse::<T>().map_err(|e| anyhow!("{e}"))
}

fn seconds(value: &str) -> Result<Duration> {
    let s: f64 = scalar(value)?;
    if !(s > 0.0 && s.is_finite()) {
        bail!("expected a positive number of seconds");
    }
    Ok(Duration::from_secs_f64(s))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        let mut seen = HashSet::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", no + 1))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                bail!("line {}: `{key}` set twice", no + 1);
            }
            cfg.set(key, value)
                .with_context(|| format!("line {}: bad value for `{key}`", no + 1))?;
        }
        if cfg.full_scale {
            if seen.contains("budgets") {
                bail!("`budgets` and `full_scale = true` are mutually exclusive");
            }
            cfg.budgets = FULL_BUDGETS.to_vec();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        ExperimentConfig::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "envs" => self.envs = list(value, || EnvName::ALL.to_vec())?,
            "variants" => self.variants = list(value, || Variant::ALL.to_vec())?,
            "budgets" => self.budgets = list(value, Vec::new)?,
            "classes" => self.classes = list(value, ClassSize::grid)?,
            "repetitions" => self.repetitions = scalar(value)?,
            "seed" => self.seed = scalar(value)?,
            "eval_episodes" => self.eval_episodes = scalar(value)?,
            "experts" => self.experts = PathBuf::from(value.trim()),
            "output" => self.output = PathBuf::from(value.trim()),
            "full_scale" => self.full_scale = scalar(value)?,
            "cell_timeout_s" => {
                self.cell_timeout = if value.trim() == "none" {
                    None
                } else {
                    Some(seconds(value)?)
                }
            }
            "timing_episodes" => self.timing_episodes = scalar(value)?,
            "verify" => self.verify = scalar(value)?,
            "verify_envs" => self.verify_envs = list(value, || EnvName::ALL.to_vec())?,
            "verify_queries" => self.verify_queries = scalar(value)?,
            "verify_eps" => self.verify_eps = scalar(value)?,
            "verify_timeout_s" => self.verify_timeout = seconds(value)?,
            other => bail!("unknown key `{other}`"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            bail!("repetitions must be at least 1");
        }
        if self.eval_episodes == 0 || self.timing_episodes == 0 {
            bail!("eval_episodes and timing_episodes must be positive");
        }
        if self.budgets.iter().any(|&b| b == 0) {
            bail!("budgets must be positive");
        }
        for c in &self.classes {
            c.validate()?;
        }
        if self.verify && self.verify_queries == 0 {
            bail!("verify_queries must be positive");
        }
        if !(self.verify_eps > 0.0 && self.verify_eps < 1.0) {
            bail!("verify_eps must lie in (0, 1)");
        }
        if self.verify && self.verify_envs.iter().any(|e| !self.envs.contains(e)) {
            bail!("verify_envs must be a subset of envs");
        }
        Ok(())
    }

    /// Directory holding runs.csv and the other result files.
    pub fn results_dir(&self) -> &Path {
        &self.output
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_desk_defaults() {
        let cfg = ExperimentConfig::parse("# nothing\n\n").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(
            cfg.envs.len() * cfg.variants.len() * cfg.classes.len() * cfg.repetitions,
            450
        );
    }

    #[test]
    fn lists_and_scalars() {
        let cfg = ExperimentConfig::parse(
            "envs = CartPole, Acrobot  # two\nvariants = bc,dagger\nclasses = linear, tree-16, mlp-4x4\n\
             budgets = 1000\nrepetitions = 3\nseed = 9\nverify = false\ncell_timeout_s = none\n",
        )
        .unwrap();
        assert_eq!(cfg.envs, vec![EnvName::CartPole, EnvName::Acrobot]);
        assert_eq!(cfg.variants, vec![Variant::Bc, Variant::Dagger]);
        assert_eq!(cfg.classes.len(), 3);
        assert_eq!(
            (cfg.budgets[0], cfg.repetitions, cfg.seed, cfg.verify),
            (1000, 3, 9, false)
        );
        assert_eq!(cfg.cell_timeout, None);
    }

    #[test]
    fn full_scale_sets_budgets() {
        let cfg = ExperimentConfig::parse("full_scale = true").unwrap();
        assert_eq!(cfg.budgets, FULL_BUDGETS.to_vec());
        assert!(ExperimentConfig::parse("full_scale = true\nbudgets = 10").is_err());
    }

    #[test]
    fn mistakes_are_reported() {
        for bad in [
            "envs = CartPole, Pong",
            "classes = tree-5",
            "variants = viper",
            "seed = -1",
            "colour = blue",
            "seed = 1\nseed = 2",
            "just words",
            "repetitions = 0",
            "verify_eps = 0",
            "envs = CartPole\nverify_envs = Acrobot",
            "cell_timeout_s = -3",
        ] {
            assert!(ExperimentConfig::parse(bad).is_err(), "accepted {bad:?}");
        }
    }
}
