use std::hint::black_box;
use std::time::Instant;

use crate::env::{Action, Env, EnvName};
use crate::error::Result;
use crate::policy::Policy;
use crate::rng::derive_seed;
use crate::unfold::{unfold, Program};

use super::stats::{mean, stratified_bootstrap_ci, BOOTSTRAP_REPS, CI_LEVEL};

pub const TIMING_EPISODES: usize = 100;
pub const WARMUP_EPISODES: usize = 2;

/// Per-step inference times of one measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingResult {
    /// Seconds per policy call, all episodes concatenated.
    pub step_times: Vec<f64>,
    /// Summed step times per episode.
    pub episode_times: Vec<f64>,
    pub episode_lengths: Vec<usize>,
    pub mean_step: f64,
    /// 95% bootstrap interval of the mean step time, resampling episodes.
    pub step_ci: (f64, f64),
    pub mean_episode: f64,
    pub episode_ci: (f64, f64),
}

/// Times `actor` alone (the environment step is outside the clock) over
/// `episodes` fresh episodes after [`WARMUP_EPISODES`] discarded ones.
pub fn time_actor<F>(env: EnvName, episodes: usize, seed: u64, mut actor: F) -> Result<TimingResult>
where
    F: FnMut(&[f64]) -> Result<Action>,
{
    let mut e = Env::new(env, seed);
    let warm = derive_seed(seed, "timing-warmup");
    for w in 0..WARMUP_EPISODES as u64 {
        run_episode(&mut e, warm.wrapping_add(w), &mut actor, &mut Vec::new())?;
    }
    let mut step_times = Vec::new();
    let mut episode_times = Vec::with_capacity(episodes);
    let mut episode_lengths = Vec::with_capacity(episodes);
    let mut per_episode_steps: Vec<Vec<f64>> = Vec::with_capacity(episodes);
    for ep in 0..episodes as u64 {
        let mut times = Vec::new();
        run_episode(&mut e, seed.wrapping_add(ep), &mut actor, &mut times)?;
        episode_times.push(times.iter().sum());
        episode_lengths.push(times.len());
        step_times.extend_from_slice(&times);
        per_episode_steps.push(times);
    }
    let total_steps = step_times.len().max(1) as f64;
    let mean_step = step_times.iter().sum::<f64>() / total_steps;
    // Whole episodes are the resampling unit.
    let step_ci = bootstrap_pooled_mean(&per_episode_steps, seed)?;
    let mean_episode = mean(&episode_times)?;
    let episode_ci = stratified_bootstrap_ci(
        &[episode_times.clone()],
        mean,
        BOOTSTRAP_REPS,
        CI_LEVEL,
        derive_seed(seed, "episode-ci"),
    )?;
    Ok(TimingResult {
        step_times,
        episode_times,
        episode_lengths,
        mean_step,
        step_ci,
        mean_episode,
        episode_ci,
    })
}

fn bootstrap_pooled_mean(episodes: &[Vec<f64>], seed: u64) -> Result<(f64, f64)> {
    let idx: Vec<f64> = (0..episodes.len()).map(|i| i as f64).collect();
    stratified_bootstrap_ci(
        &[idx],
        |picks| {
            let (mut sum, mut n) = (0.0, 0usize);
            for &p in picks {
                let ep = &episodes[p as usize];
                sum += ep.iter().sum::<f64>();
                n += ep.len();
            }
            Ok(sum / n.max(1) as f64)
        },
        BOOTSTRAP_REPS,
        CI_LEVEL,
        derive_seed(seed, "step-ci"),
    )
}

fn run_episode<F>(env: &mut Env, seed: u64, actor: &mut F, times: &mut Vec<f64>) -> Result<()>
where
    F: FnMut(&[f64]) -> Result<Action>,
{
    let mut state = env.reset(seed);
    loop {
        let start = Instant::now();
        let action = black_box(actor(black_box(&state))?);
        times.push(start.elapsed().as_secs_f64());
        let res = env.step(&action)?;
        if res.terminated || res.truncated {
            return Ok(());
        }
        state = res.state;
    }
}

/// Step inference time of the unfolded program.
pub fn time_inference(
    program: &Program,
    env: EnvName,
    episodes: usize,
    seed: u64,
) -> Result<TimingResult> {
    time_actor(env, episodes, seed, |s| program.interpret(s))
}

/// Step inference time of the native (folded) policy.
pub fn time_folded(
    policy: &Policy,
    env: EnvName,
    episodes: usize,
    seed: u64,
) -> Result<TimingResult> {
    time_actor(env, episodes, seed, |s| policy.predict(s))
}

/// Interpretability proxies of one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpretabilityRecord {
    pub step_time_s: f64,
    pub step_time_ci: (f64, f64),
    pub episode_time_s: f64,
    pub episode_time_ci: (f64, f64),
    pub size_bytes: usize,
    pub folded_step_time_s: f64,
    pub folded_step_time_ci: (f64, f64),
    pub param_count: usize,
    pub mean_return: f64,
}

/// Unfolds `policy` and measures both proxies plus the folded baseline on
/// the same episode seeds.
pub fn measure(
    policy: &Policy,
    env: EnvName,
    episodes: usize,
    seed: u64,
) -> Result<(Program, InterpretabilityRecord)> {
    let program = unfold(policy);
    let unfolded = time_inference(&program, env, episodes, seed)?;
    let folded = time_folded(policy, env, episodes, seed)?;
    let mut e = Env::new(env, seed);
    let returns = crate::env::rollout(&mut e, |s| program.interpret(s), episodes, seed)?;
    let record = InterpretabilityRecord {
        step_time_s: unfolded.mean_step,
        step_time_ci: unfolded.step_ci,
        episode_time_s: unfolded.mean_episode,
        episode_time_ci: unfolded.episode_ci,
        size_bytes: program.size_bytes(),
        folded_step_time_s: folded.mean_step,
        folded_step_time_ci: folded.step_ci,
        param_count: policy.param_count(),
        mean_return: returns.mean_return(),
    };
    Ok((program, record))
}
