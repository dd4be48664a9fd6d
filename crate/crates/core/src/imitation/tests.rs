use super::*;
use crate::env::Action;
use crate::expert::{ContinuousExpert, Expert, QExpert};
use crate::policy::{Dense, LinearPolicy, ReluMlp, Task};

/// Pushes toward the side the pole falls to; Q spread grows with the lean.
fn cartpole_expert() -> ExpertCheckpoint {
    let layer = Dense::new(
        vec![vec![0.0, 0.0, -1.0, -1.0], vec![0.0, 0.0, 1.0, 1.0]],
        vec![0.0, 0.0],
    )
    .unwrap();
    let q = QExpert::new(ReluMlp::new(vec![layer], Task::Classify).unwrap());
    ExpertCheckpoint::new(EnvName::CartPole, Expert::Q(q), 0).unwrap()
}

fn pendulum_expert() -> ExpertCheckpoint {
    let actor = LinearPolicy::new(vec![vec![-2.0, 0.0, -1.0]], vec![0.0], Task::Regress).unwrap();
    ExpertCheckpoint::new(
        EnvName::Pendulum,
        Expert::Continuous(ContinuousExpert {
            actor: Policy::Linear(actor),
        }),
        0,
    )
    .unwrap()
}

fn reference() -> Reference {
    Reference {
        random_return: 20.0,
        expert_return: 500.0,
    }
}

fn config(variant: Variant, samples: usize, class: ClassSize) -> ImitationConfig {
    ImitationConfig {
        eval_episodes: 3,
        ..ImitationConfig::for_variant(variant, samples, class, 11)
    }
}

#[test]
fn the_expert_is_competent() {
    assert!(cartpole_expert().eval_return > 150.0);
}

#[test]
fn rounds_add_equal_quotas() {
    let cfg = ImitationConfig {
        n_iterations: 4,
        ..config(Variant::Dagger, 100, ClassSize::AxisTree { max_nodes: 4 })
    };
    let run = imitate(&cartpole_expert(), &cfg, &reference()).unwrap();
    assert_eq!(run.sizes, vec![25, 50, 75, 100]);
    assert_eq!(run.dataset.len(), 100);
    assert_eq!(run.record.dataset_size, 100);
    assert_eq!(run.record.returns.len(), 3);
}

#[test]
fn odd_budgets_round_down() {
    let cfg = ImitationConfig {
        n_iterations: 3,
        ..config(Variant::Dagger, 100, ClassSize::Linear)
    };
    let run = imitate(&cartpole_expert(), &cfg, &reference()).unwrap();
    assert_eq!(run.sizes, vec![33, 66, 99]);
}

#[test]
fn labels_always_come_from_the_expert() {
    let expert = cartpole_expert();
    let run = imitate(
        &expert,
        &config(Variant::Dagger, 400, ClassSize::AxisTree { max_nodes: 4 }),
        &reference(),
    )
    .unwrap();
    let Labels::Discrete { actions, .. } = &run.dataset.labels else {
        panic!("discrete labels")
    };
    for (s, a) in run.dataset.states.iter().zip(actions) {
        assert_eq!(expert.expert.act(s).unwrap(), Action::Discrete(*a));
    }
    assert!(run.dataset.weights.iter().all(|&w| w == 1.0));
}

#[test]
fn behavior_cloning_visits_expert_states() {
    let expert = cartpole_expert();
    let cfg = config(Variant::Bc, 700, ClassSize::Linear);
    let run = imitate(&expert, &cfg, &reference()).unwrap();
    // Replay the collection with the expert acting throughout.
    let mut env = Env::new(EnvName::CartPole, cfg.seed);
    let mut episodes = stream(cfg.seed, "imitation-collect");
    let mut state = env.reset(episodes.next_u64());
    for recorded in &run.dataset.states {
        assert_eq!(recorded, &state);
        let res = env.step(&expert.expert.act(&state).unwrap()).unwrap();
        state = if res.terminated || res.truncated {
            env.reset(episodes.next_u64())
        } else {
            res.state
        };
    }
}

#[test]
fn q_dagger_weights_are_importance_weights() {
    let expert = cartpole_expert();
    let run = imitate(
        &expert,
        &config(Variant::QDagger, 300, ClassSize::AxisTree { max_nodes: 8 }),
        &reference(),
    )
    .unwrap();
    for (s, w) in run.dataset.states.iter().zip(&run.dataset.weights) {
        assert_eq!(*w, expert.expert.importance_weight(s).unwrap());
    }
    assert_eq!(run.record.variant, Variant::QDagger);
}

#[test]
fn invalid_configs_rejected() {
    let expert = cartpole_expert();
    let cfg = ImitationConfig {
        n_iterations: 10,
        ..config(Variant::Dagger, 5, ClassSize::Linear)
    };
    assert!(matches!(
        imitate(&expert, &cfg, &reference()),
        Err(Error::Config(_))
    ));
    let cfg = config(Variant::QDagger, 100, ClassSize::Linear);
    assert!(matches!(
        imitate(&pendulum_expert(), &cfg, &reference()),
        Err(Error::Unsupported(_))
    ));
    let cfg = config(Variant::Bc, 100, ClassSize::AxisTree { max_nodes: 5 });
    assert!(imitate(&expert, &cfg, &reference()).is_err());
}

#[test]
fn continuous_students_regress_expert_actions() {
    let expert = pendulum_expert();
    let r = Reference {
        random_return: -1200.0,
        expert_return: expert.eval_return,
    };
    let run = imitate(
        &expert,
        &config(Variant::Dagger, 1000, ClassSize::Linear),
        &r,
    )
    .unwrap();
    // A linear expert is recovered almost exactly by least squares.
    let Policy::Linear(p) = &run.policy else {
        panic!("linear student")
    };
    assert!((p.layer.weights[0][0] + 2.0).abs() < 1e-6);
    assert!((run.record.normalized_return - 1.0).abs() < 0.05);
}

#[test]
fn runs_are_deterministic() {
    let expert = cartpole_expert();
    let cfg = config(
        Variant::Dagger,
        500,
        ClassSize::ObliqueTree { max_nodes: 8 },
    );
    let a = imitate(&expert, &cfg, &reference()).unwrap();
    let b = imitate(&expert, &cfg, &reference()).unwrap();
    assert_eq!(a.record, b.record);
    assert_eq!(a.policy, b.policy);
}

#[test]
fn sweep_records_every_cell() {
    let experts = vec![cartpole_expert(), pendulum_expert()];
    let grid = cells(
        &[EnvName::CartPole, EnvName::Pendulum, EnvName::Acrobot],
        &Variant::ALL,
        &[200],
        &[ClassSize::Linear, ClassSize::AxisTree { max_nodes: 4 }],
        2,
    );
    assert_eq!(grid.len(), 3 * 3 * 2 * 2);
    let opts = SweepOptions {
        eval_episodes: 2,
        ..SweepOptions::new(7)
    };
    let out = sweep(&experts, &grid, &opts).unwrap();
    assert_eq!(out.len(), grid.len());
    let failed: Vec<&Cell> = out
        .iter()
        .filter_map(|o| match o {
            CellOutcome::Failed { cell, .. } => Some(cell),
            CellOutcome::Done(_) => None,
        })
        .collect();
    // Pendulum Q-DAgger (no Q) and every Acrobot cell (no expert).
    assert_eq!(failed.len(), 4 + 12);
    assert!(failed
        .iter()
        .all(|c| c.env == EnvName::Acrobot || c.variant == Variant::QDagger));

    let again = sweep(&experts, &grid, &opts).unwrap();
    for (a, b) in out.iter().zip(&again) {
        if let (CellOutcome::Done(a), CellOutcome::Done(b)) = (a, b) {
            assert_eq!(a.record.normalized_return, b.record.normalized_return);
        }
    }
}

#[test]
fn cell_seeds_differ_by_key() {
    let a = Cell {
        env: EnvName::CartPole,
        variant: Variant::Bc,
        budget: 10,
        class: ClassSize::Linear,
        repetition: 0,
    };
    let b = Cell { repetition: 1, ..a };
    assert_ne!(a.seed(1), b.seed(1));
    assert_eq!(a.seed(1), a.seed(1));
    assert_eq!(a.key(), "CartPole/bc/10/linear/0");
}

#[test]
fn variant_names_round_trip() {
    for v in Variant::ALL {
        assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
    }
    assert!("viper".parse::<Variant>().is_err());
}

#[test]
fn past_deadline_times_out() {
    let cfg = ImitationConfig {
        deadline: Some(std::time::Instant::now()),
        ..config(Variant::Dagger, 100, ClassSize::Linear)
    };
    std::thread::sleep(std::time::Duration::from_millis(2));
    assert!(matches!(
        imitate(&cartpole_expert(), &cfg, &reference()),
        Err(Error::Timeout(_))
    ));
}
