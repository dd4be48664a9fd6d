use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::stream;

pub const BOOTSTRAP_REPS: usize = 2000;
pub const CI_LEVEL: f64 = 0.95;

fn sorted(scores: &[f64]) -> Vec<f64> {
    let mut v = scores.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Interquartile mean: the mean of the middle half of the sorted scores.
/// When `n` is not a multiple of 4 the boundary scores count fractionally,
/// so every score owns a unit interval and the window `[n/4, 3n/4]` is
/// averaged exactly.
pub fn iqm(scores: &[f64]) -> Result<f64> {
    let n = scores.len();
    if n < 4 {
        return Err(Error::Stat(format!("IQM needs at least 4 scores, got {n}")));
    }
    let v = sorted(scores);
    let lo = n as f64 / 4.0;
    let hi = 3.0 * n as f64 / 4.0;
    // Deviations from the median keep a constant window exact.
    let center = v[n / 2];
    let mut total = 0.0;
    for (i, x) in v.iter().enumerate() {
        let w = ((i + 1) as f64).min(hi) - (i as f64).max(lo);
        if w > 0.0 {
            total += w * (x - center);
        }
    }
    Ok(center + total / (hi - lo))
}

pub fn mean(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Stat("mean of no scores".into()));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Linear-interpolation quantile of sorted data (`q` in [0, 1]).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

pub fn median(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Stat("median of no scores".into()));
    }
    Ok(quantile(&sorted(scores), 0.5))
}

/// Percentile bootstrap interval of `statistic` over the pooled strata;
/// each replicate resamples every stratum independently with replacement.
pub fn stratified_bootstrap_ci<F>(
    strata: &[Vec<f64>],
    statistic: F,
    reps: usize,
    level: f64,
    seed: u64,
) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if strata.is_empty() || strata.iter().any(Vec::is_empty) {
        return Err(Error::Stat("bootstrap needs nonempty strata".into()));
    }
    if reps == 0 || !(0.0..1.0).contains(&level) {
        return Err(Error::Stat(
            "bootstrap needs reps > 0 and level in [0, 1)".into(),
        ));
    }
    let mut rng = stream(seed, "bootstrap");
    let total: usize = strata.iter().map(Vec::len).sum();
    let mut sample = Vec::with_capacity(total);
    let mut stats = Vec::with_capacity(reps);
    for _ in 0..reps {
        sample.clear();
        for s in strata {
            sample.extend((0..s.len()).map(|_| s[rng.random_range(0..s.len())]));
        }
        stats.push(statistic(&sample)?);
    }
    stats.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok((quantile(&stats, alpha), quantile(&stats, 1.0 - alpha)))
}

/// Point estimate and 95% stratified bootstrap interval of the IQM.
pub fn iqm_with_ci(strata: &[Vec<f64>], seed: u64) -> Result<(f64, f64, f64)> {
    let pooled: Vec<f64> = strata.concat();
    let (lo, hi) = stratified_bootstrap_ci(strata, iqm, BOOTSTRAP_REPS, CI_LEVEL, seed)?;
    Ok((iqm(&pooled)?, lo, hi))
}

/// Fraction of scores strictly above each `tau`.
pub fn performance_profile(scores: &[f64], taus: &[f64]) -> Vec<f64> {
    let v = sorted(scores);
    taus.iter()
        .map(|&t| {
            if v.is_empty() {
                return 0.0;
            }
            let at_or_below = v.partition_point(|&x| x <= t);
            (v.len() - at_or_below) as f64 / v.len() as f64
        })
        .collect()
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}
