//! Simulatability proxies (step inference time, program size), the folded
//! baseline, return normalization and benchmark statistics.

mod importance;
mod stats;
mod timing;

use crate::env::{random_policy_stats, EnvName};
use crate::error::{Error, Result};

pub use importance::{
    env_attributes, feature_importance, ImportanceTable, ATTRIBUTES, FOREST_TREES,
};
pub use stats::{
    iqm, iqm_with_ci, linspace, mean, median, performance_profile, quantile,
    stratified_bootstrap_ci, BOOTSTRAP_REPS, CI_LEVEL,
};
pub use timing::{
    measure, time_actor, time_folded, time_inference, InterpretabilityRecord, TimingResult,
    TIMING_EPISODES, WARMUP_EPISODES,
};

/// Episodes and seed of the random-agent anchor used for normalization.
pub const RANDOM_EPISODES: usize = 100;
pub const RANDOM_SEED: u64 = 0x5eed_0000;

/// `(r - r_random) / (r_expert - r_random)`.
pub fn normalized_return(r: f64, r_random: f64, r_expert: f64) -> Result<f64> {
    let span = r_expert - r_random;
    if span == 0.0 || !span.is_finite() {
        return Err(Error::DegenerateNormalization(span));
    }
    Ok((r - r_random) / span)
}

/// Mean return of the uniform random agent on `env`.
pub fn random_return(env: EnvName) -> Result<f64> {
    Ok(random_policy_stats(env, RANDOM_EPISODES, RANDOM_SEED)?.mean_return())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_anchors() {
        assert_eq!(normalized_return(10.0, 0.0, 10.0).unwrap(), 1.0);
        assert_eq!(normalized_return(-200.0, -200.0, -100.0).unwrap(), 0.0);
        assert_eq!(normalized_return(-150.0, -200.0, -100.0).unwrap(), 0.5);
        assert!(matches!(
            normalized_return(1.0, 3.0, 3.0),
            Err(Error::DegenerateNormalization(_))
        ));
    }
}
