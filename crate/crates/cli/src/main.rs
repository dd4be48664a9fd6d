use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use simbench::env::{EnvName, EnvSpec};
use simbench::expert::{checkpoint_path, train_expert_retrying, ExpertCheckpoint};
use simbench::fit::ClassSize;
use simbench::imitation::{
    run_cell, Cell, Reference, SweepOptions, Variant, DESK_BUDGET, EVAL_EPISODES,
};
use simbench::metrics::{measure, median, TIMING_EPISODES};
use simbench::policy::{load_with_meta, save_with_meta, Policy};
use simbench::unfold::unfold;
use simbench::verify::{gen_queries, BnbOptions, Status, DEFAULT_EPS, DEFAULT_QUERIES};
use simbench_cli::pipeline::{self, student_meta, verification_row};
use simbench_cli::{report, ExperimentConfig, ResultStore};

#[derive(Parser)]
#[command(
    name = "simbench",
    version,
    about = "Distill, unfold, measure and verify small RL policies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and certify expert checkpoints.
    TrainExpert {
        /// Environment name, or `all`.
        #[arg(long, default_value = "all")]
        env: String,
        #[arg(long, default_value = "experts")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Seeds tried (seed, seed+1, ...) before giving up.
        #[arg(long, default_value_t = 3)]
        attempts: usize,
    },
    /// Imitate one expert, or run the sweep of a config file.
    Imitate(ImitateArgs),
    /// Unfold and time one policy, or the best-of-class runs of a config.
    Measure(MeasureArgs),
    /// Answer random box queries for one policy, or for a config's runs.
    Verify(VerifyArgs),
    /// Write figure CSVs from a result store.
    Report {
        #[arg(long, conflicts_with = "results")]
        config: Option<PathBuf>,
        /// Result directory (defaults to `results`).
        #[arg(long)]
        results: Option<PathBuf>,
    },
    /// Sweep, measure, verify and report in one go.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct ImitateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    env: Option<EnvName>,
    #[arg(long, default_value = "dagger")]
    variant: Variant,
    #[arg(long, default_value = "tree-16")]
    class: ClassSize,
    #[arg(long, default_value_t = DESK_BUDGET)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    repetition: usize,
    #[arg(long, default_value = "experts")]
    experts: PathBuf,
    #[arg(long, default_value_t = EVAL_EPISODES)]
    eval_episodes: usize,
    /// Where to save the fitted student.
    #[arg(long, required_unless_present = "config")]
    out: Option<PathBuf>,
    /// Also write the unfolded program text here.
    #[arg(long)]
    emit: Option<PathBuf>,
}

#[derive(Args)]
struct MeasureArgs {
    #[arg(long, conflicts_with = "policy")]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    policy: Option<PathBuf>,
    /// Defaults to the `env` recorded in the policy file.
    #[arg(long)]
    env: Option<EnvName>,
    #[arg(long, default_value_t = TIMING_EPISODES)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    emit: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, conflicts_with = "policy")]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    policy: Option<PathBuf>,
    #[arg(long)]
    env: Option<EnvName>,
    #[arg(long, default_value_t = DEFAULT_QUERIES)]
    queries: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_EPS)]
    eps: f64,
    #[arg(long, default_value_t = 60.0)]
    timeout_s: f64,
    /// Write one verification.csv-style row per query here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::TrainExpert {
            env,
            out,
            seed,
            attempts,
        } => train(&env, &out, seed, attempts),
        Command::Imitate(a) => imitate(a),
        Command::Measure(a) => measure_cmd(a),
        Command::Verify(a) => verify_cmd(a),
        Command::Report { config, results } => {
            let dir = match (config, results) {
                (Some(c), _) => ExperimentConfig::load(c)?.output,
                (None, Some(r)) => r,
                (None, None) => PathBuf::from("results"),
            };
            if !dir.exists() {
                bail!("no result store at {}", dir.display());
            }
            let store = ResultStore::open(&dir)?;
            store.check_integrity()?;
            print_index(&report::report(&store)?, &dir);
            Ok(())
        }
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(config)?;
            let store = pipeline::run(&cfg)?;
            print_index(&report::report(&store)?, store.dir());
            Ok(())
        }
    }
}

fn print_index(index: &[report::IndexRow], dir: &Path) {
    for row in index {
        println!(
            "{}/figures/{}: {} rows{}",
            dir.display(),
            row.file,
            row.rows,
            if row.status == "empty" {
                format!(" (empty: {})", row.note)
            } else {
                String::new()
            }
        );
    }
}

fn train(env: &str, out: &Path, seed: u64, attempts: usize) -> Result<()> {
    let envs: Vec<EnvName> = if env == "all" {
        EnvName::ALL.to_vec()
    } else {
        vec![env.parse()?]
    };
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for env in envs {
        let ck = train_expert_retrying(env, seed, attempts)?;
        let path = checkpoint_path(out, env);
        ck.save(&path)?;
        println!(
            "{env}: return {:.2} over 100 episodes (seed {}) -> {}",
            ck.eval_return,
            ck.seed,
            path.display()
        );
    }
    Ok(())
}

fn emit(policy: &Policy, path: &Path) -> Result<()> {
    std::fs::write(path, unfold(policy).text())
        .with_context(|| format!("writing {}", path.display()))
}

fn imitate(a: ImitateArgs) -> Result<()> {
    if let Some(config) = a.config {
        let cfg = ExperimentConfig::load(config)?;
        let store = ResultStore::open(&cfg.output)?;
        let experts = pipeline::load_experts(&cfg.experts, &cfg.envs)?;
        let s = pipeline::run_sweep(&cfg, &store, &experts)?;
        println!(
            "{} cells run, {} already recorded, {} failed -> {}",
            s.ran,
            s.skipped,
            s.failed,
            store.path("runs.csv").display()
        );
        return Ok(());
    }
    let (Some(env), Some(out)) = (a.env, a.out) else {
        unreachable!("clap enforces --env and --out")
    };
    let expert = ExpertCheckpoint::load(checkpoint_path(&a.experts, env))?;
    let reference = Reference::of(&expert)?;
    let cell = Cell {
        env,
        variant: a.variant,
        budget: a.budget,
        class: a.class,
        repetition: a.repetition,
    };
    let opts = SweepOptions {
        master_seed: a.seed,
        eval_episodes: a.eval_episodes,
        cell_timeout: None,
    };
    let run = run_cell(&cell, &expert, &reference, &opts)?;
    save_with_meta(&run.policy, &student_meta(&cell, run.record.seed), &out)?;
    if let Some(path) = a.emit {
        emit(&run.policy, &path)?;
    }
    let r = &run.record;
    println!(
        "{}: mean return {:.3}, normalized {:.3}, {} params, |D| = {} -> {}",
        cell.key(),
        r.mean_return,
        r.normalized_return,
        r.param_count,
        r.dataset_size,
        out.display()
    );
    Ok(())
}

fn load_policy(path: &Path, env: Option<EnvName>) -> Result<(Policy, EnvName, String)> {
    let (policy, meta) = load_with_meta(path)?;
    let get = |k: &str| {
        meta.iter()
            .find(|(key, _)| key == k)
            .map(|(_, v)| v.clone())
    };
    let env = match (env, get("env")) {
        (Some(e), _) => e,
        (None, Some(e)) => e.parse()?,
        (None, None) => bail!("{} records no env; pass --env", path.display()),
    };
    let class = get("class_size").unwrap_or_else(|| policy.class().as_str().to_string());
    Ok((policy, env, class))
}

fn measure_cmd(a: MeasureArgs) -> Result<()> {
    if let Some(config) = a.config {
        let cfg = ExperimentConfig::load(config)?;
        let store = ResultStore::open(&cfg.output)?;
        let n = pipeline::measure_selected(&cfg, &store)?;
        store.check_integrity()?;
        println!(
            "{n} runs measured -> {}",
            store.path("interpretability.csv").display()
        );
        return Ok(());
    }
    let path = a.policy.expect("clap enforces --policy");
    let (policy, env, _) = load_policy(&path, a.env)?;
    let (program, rec) = measure(&policy, env, a.episodes, a.seed)?;
    if let Some(out) = a.emit {
        std::fs::write(&out, program.text())
            .with_context(|| format!("writing {}", out.display()))?;
    }
    println!("size_bytes {}", rec.size_bytes);
    println!("param_count {}", rec.param_count);
    println!(
        "step_time_s {:e} [{:e}, {:e}]",
        rec.step_time_s, rec.step_time_ci.0, rec.step_time_ci.1
    );
    println!(
        "episode_time_s {:e} [{:e}, {:e}]",
        rec.episode_time_s, rec.episode_time_ci.0, rec.episode_time_ci.1
    );
    println!(
        "folded_step_time_s {:e} [{:e}, {:e}]",
        rec.folded_step_time_s, rec.folded_step_time_ci.0, rec.folded_step_time_ci.1
    );
    println!("mean_return {}", rec.mean_return);
    Ok(())
}

fn verify_cmd(a: VerifyArgs) -> Result<()> {
    if let Some(config) = a.config {
        let cfg = ExperimentConfig::load(config)?;
        let store = ResultStore::open(&cfg.output)?;
        let n = pipeline::verify_selected(&cfg, &store)?;
        store.check_integrity()?;
        println!(
            "{n} verdicts -> {}",
            store.path("verification.csv").display()
        );
        return Ok(());
    }
    if !(a.timeout_s > 0.0 && a.timeout_s.is_finite()) {
        bail!("--timeout-s must be positive");
    }
    let path = a.policy.expect("clap enforces --policy");
    let (policy, env, class) = load_policy(&path, a.env)?;
    let queries = gen_queries(&EnvSpec::of(env), a.queries, a.seed);
    let opts = BnbOptions {
        eps: a.eps,
        timeout: Duration::from_secs_f64(a.timeout_s),
    };
    let key = path.display().to_string();
    let mut writer = match &a.out {
        Some(p) => {
            Some(csv::Writer::from_path(p).with_context(|| format!("writing {}", p.display()))?)
        }
        None => None,
    };
    let (mut sat, mut unknown, mut unsat_times) = (0, 0, Vec::new());
    pipeline::verify_all(
        &policy,
        &queries,
        &opts,
        |_| false,
        |i, q, v| {
            match v.status {
                Status::Sat(_) => sat += 1,
                Status::Unsat => unsat_times.push(v.wall_time_s),
                Status::Unknown => unknown += 1,
            }
            if let Some(w) = writer.as_mut() {
                w.serialize(verification_row(
                    (&key, env.as_str(), &class),
                    i,
                    a.seed,
                    q,
                    v,
                ))?;
            }
            Ok(())
        },
    )?;
    if let Some(mut w) = writer {
        w.flush()?;
    }
    println!("queries {}", queries.len());
    println!("sat {sat}");
    println!("unsat {}", unsat_times.len());
    println!("unknown {unknown}");
    if !unsat_times.is_empty() {
        println!("median_unsat_time_s {:e}", median(&unsat_times)?);
    }
    Ok(())
}
