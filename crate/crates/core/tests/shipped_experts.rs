//! The checkpoints in `experts/` must load and still perform.

use std::path::PathBuf;

use simbench::env::EnvName;
use simbench::expert::{checkpoint_path, evaluate, ExpertCheckpoint};

fn load(env: EnvName) -> ExpertCheckpoint {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../experts");
    let ck = ExpertCheckpoint::load(checkpoint_path(&dir, env)).unwrap();
    assert_eq!(ck.env, env);
    ck
}

#[test]
fn cartpole_balances() {
    let stats = evaluate(&load(EnvName::CartPole).expert, EnvName::CartPole, 20, 11).unwrap();
    assert!(stats.mean_return() >= 490.0, "{}", stats.mean_return());
}

#[test]
fn pendulum_swings_up() {
    let stats = evaluate(&load(EnvName::Pendulum).expert, EnvName::Pendulum, 20, 11).unwrap();
    assert!(stats.mean_return() >= -400.0, "{}", stats.mean_return());
}

#[test]
fn continuous_mountain_car_reaches_the_goal() {
    let stats = evaluate(
        &load(EnvName::MountainCarContinuous).expert,
        EnvName::MountainCarContinuous,
        100,
        11,
    )
    .unwrap();
    let reached = stats.lengths.iter().filter(|&&l| l < 999).count();
    assert!(reached >= 95, "goal reached on {reached}/100");
}

#[test]
fn mountain_car_and_acrobot_beat_their_thresholds() {
    for (env, threshold) in [(EnvName::MountainCar, -110.0), (EnvName::Acrobot, -100.0)] {
        let stats = evaluate(&load(env).expert, env, 20, 11).unwrap();
        assert!(
            stats.mean_return() >= threshold,
            "{env}: {}",
            stats.mean_return()
        );
    }
}

#[test]
fn recorded_reference_return_reproduces() {
    for env in EnvName::ALL {
        let ck = load(env);
        let again = ExpertCheckpoint::new(env, ck.expert.clone(), ck.seed).unwrap();
        assert_eq!(again.eval_return, ck.eval_return, "{env}");
    }
}
