use ndarray::Array2;
use rand::{Rng as _, RngCore};

use super::{input_scaling, QExpert};
use crate::env::{Action, ActionKind, Env, EnvName, EnvSpec};
use crate::error::{Error, Result};
use crate::nn::{Adam, Net};
use crate::policy::{argmax, Task};
use crate::rng::stream;

/// Double DQN hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DqnConfig {
    pub steps: usize,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub gamma: f64,
    pub batch: usize,
    pub buffer: usize,
    pub learning_starts: usize,
    pub train_freq: usize,
    pub gradient_steps: usize,
    pub target_update: usize,
    /// Fraction of `steps` over which epsilon decays linearly from 1.
    pub exploration_fraction: f64,
    pub final_epsilon: f64,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub max_grad_norm: f64,
}

impl DqnConfig {
    pub fn for_env(env: EnvName) -> DqnConfig {
        let base = DqnConfig {
            steps: 50_000,
            hidden: vec![64, 64],
            lr: 1e-3,
            gamma: 0.99,
            batch: 64,
            buffer: 50_000,
            learning_starts: 1_000,
            train_freq: 4,
            gradient_steps: 1,
            target_update: 500,
            exploration_fraction: 0.2,
            final_epsilon: 0.02,
            eval_every: 2_500,
            eval_episodes: 10,
            max_grad_norm: 10.0,
        };
        match env {
            EnvName::MountainCar => DqnConfig {
                steps: 120_000,
                lr: 4e-3,
                gamma: 0.98,
                batch: 128,
                buffer: 10_000,
                train_freq: 16,
                gradient_steps: 8,
                target_update: 600,
                exploration_fraction: 0.2,
                final_epsilon: 0.07,
                ..base
            },
            EnvName::Acrobot => DqnConfig {
                steps: 100_000,
                lr: 6.3e-4,
                batch: 128,
                train_freq: 4,
                gradient_steps: 4,
                target_update: 250,
                exploration_fraction: 0.12,
                final_epsilon: 0.1,
                ..base
            },
            EnvName::CartPole => DqnConfig {
                lr: 2.3e-3,
                buffer: 100_000,
                train_freq: 256,
                gradient_steps: 128,
                target_update: 10,
                exploration_fraction: 0.16,
                final_epsilon: 0.04,
                ..base
            },
            _ => base,
        }
    }
}

struct Replay {
    dim: usize,
    cap: usize,
    states: Vec<f64>,
    next: Vec<f64>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
    done: Vec<bool>,
    len: usize,
    head: usize,
}

impl Replay {
    fn new(dim: usize, cap: usize) -> Replay {
        Replay {
            dim,
            cap,
            states: vec![0.0; dim * cap],
            next: vec![0.0; dim * cap],
            actions: vec![0; cap],
            rewards: vec![0.0; cap],
            done: vec![false; cap],
            len: 0,
            head: 0,
        }
    }

    fn push(&mut self, s: &[f64], a: usize, r: f64, s2: &[f64], done: bool) {
        let i = self.head;
        self.states[i * self.dim..(i + 1) * self.dim].copy_from_slice(s);
        self.next[i * self.dim..(i + 1) * self.dim].copy_from_slice(s2);
        self.actions[i] = a;
        self.rewards[i] = r;
        self.done[i] = done;
        self.head = (self.head + 1) % self.cap;
        self.len = (self.len + 1).min(self.cap);
    }
}

fn scale(state: &[f64], mean: &[f64], scale: &[f64]) -> Vec<f64> {
    state
        .iter()
        .zip(mean)
        .zip(scale)
        .map(|((x, m), s)| (x - m) / s)
        .collect()
}

fn greedy(net: &Net, s: &[f64]) -> usize {
    let q = net.predict(
        Array2::from_shape_vec((1, s.len()), s.to_vec())
            .expect("row")
            .view(),
    );
    argmax(q.row(0).as_slice().expect("contiguous"))
}

fn export(net: &Net, mean: &[f64], sc: &[f64]) -> QExpert {
    let mut n = net.clone();
    n.fold_input_standardization(mean, sc);
    QExpert {
        q_net: n.to_mlp(Task::Classify),
    }
}

/// One double-DQN update with Huber loss; returns the loss.
fn update(
    online: &mut Net,
    target: &Net,
    adam: &mut Adam,
    replay: &Replay,
    cfg: &DqnConfig,
    rng: &mut impl RngCore,
) -> f64 {
    let d = replay.dim;
    let idx: Vec<usize> = (0..cfg.batch)
        .map(|_| rng.random_range(0..replay.len))
        .collect();
    let s = Array2::from_shape_fn((cfg.batch, d), |(i, j)| replay.states[idx[i] * d + j]);
    let s2 = Array2::from_shape_fn((cfg.batch, d), |(i, j)| replay.next[idx[i] * d + j]);
    let q_next_online = online.predict(s2.view());
    let q_next_target = target.predict(s2.view());
    let cache = online.forward(s.view());
    let q = cache.output();
    let mut d_out = Array2::zeros(q.raw_dim());
    let mut loss = 0.0;
    let n = cfg.batch as f64;
    for (i, &k) in idx.iter().enumerate() {
        let a_star = argmax(q_next_online.row(i).as_slice().expect("contiguous"));
        let bootstrap = if replay.done[k] {
            0.0
        } else {
            cfg.gamma * q_next_target[(i, a_star)]
        };
        let y = replay.rewards[k] + bootstrap;
        let a = replay.actions[k];
        let diff = q[(i, a)] - y;
        let (l, g) = if diff.abs() <= 1.0 {
            (0.5 * diff * diff, diff)
        } else {
            (diff.abs() - 0.5, diff.signum())
        };
        loss += l / n;
        d_out[(i, a)] = g / n;
    }
    let mut grads = online.backward(&cache, d_out);
    let norm = grads.flat().iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > cfg.max_grad_norm {
        let f = cfg.max_grad_norm / norm;
        for l in &mut grads.layers {
            l.w *= f;
            l.b *= f;
        }
    }
    adam.step(online, &grads);
    loss
}

fn evaluate_net(
    net: &Net,
    env: EnvName,
    mean: &[f64],
    sc: &[f64],
    episodes: usize,
    seed: u64,
) -> Result<f64> {
    let mut e = Env::new(env, seed);
    let stats = crate::env::rollout(
        &mut e,
        |s| Ok(Action::Discrete(greedy(net, &scale(s, mean, sc)))),
        episodes,
        seed,
    )?;
    Ok(stats.mean_return())
}

/// Double DQN with a replay buffer and a hard-updated target network.
/// Greedy snapshots are evaluated every `eval_every` steps and the best one
/// is returned; certification against the solve target is left to the
/// caller.
pub fn train_q_expert(env: EnvName, cfg: &DqnConfig, seed: u64) -> Result<QExpert> {
    let spec = EnvSpec::of(env);
    let n_actions = match spec.action_kind {
        ActionKind::Discrete(n) => n,
        ActionKind::Continuous { .. } => {
            return Err(Error::Unsupported(format!(
                "DQN needs discrete actions; {env} is continuous"
            )))
        }
    };
    if cfg.batch == 0 || cfg.buffer == 0 || cfg.train_freq == 0 || cfg.eval_every == 0 {
        return Err(Error::Config(
            "DQN batch, buffer, train_freq and eval_every must be positive".into(),
        ));
    }
    let (mean, sc) = input_scaling(&spec);
    let mut rng = stream(seed, "dqn");
    let mut sizes = vec![spec.state_dim];
    sizes.extend(&cfg.hidden);
    sizes.push(n_actions);
    let mut online = Net::he_uniform(&sizes, &mut rng);
    let mut target = online.clone();
    let mut adam = Adam::new(online.n_params(), cfg.lr);
    let mut replay = Replay::new(spec.state_dim, cfg.buffer);
    let mut e = Env::new(env, seed);
    let mut state = scale(&e.reset(rng.next_u64()), &mean, &sc);
    let decay_steps = (cfg.exploration_fraction * cfg.steps as f64).max(1.0);
    let mut best: Option<(f64, Net)> = None;
    let eval_seed = crate::rng::derive_seed(seed, "dqn-eval");

    for t in 1..=cfg.steps {
        let eps = (1.0 - (t as f64 / decay_steps)).max(0.0) * (1.0 - cfg.final_epsilon)
            + cfg.final_epsilon;
        let a = if rng.random::<f64>() < eps {
            rng.random_range(0..n_actions)
        } else {
            greedy(&online, &state)
        };
        let res = e.step(&Action::Discrete(a))?;
        let next = scale(&res.state, &mean, &sc);
        replay.push(&state, a, res.reward, &next, res.terminated);
        state = if res.terminated || res.truncated {
            scale(&e.reset(rng.next_u64()), &mean, &sc)
        } else {
            next
        };

        if t > cfg.learning_starts && t % cfg.train_freq == 0 {
            for _ in 0..cfg.gradient_steps {
                update(&mut online, &target, &mut adam, &replay, cfg, &mut rng);
            }
        }
        if t % cfg.target_update == 0 {
            target.copy_from(&online);
        }
        if t > cfg.learning_starts && t % cfg.eval_every == 0 {
            let score = evaluate_net(&online, env, &mean, &sc, cfg.eval_episodes, eval_seed)?;
            log::debug!("{env} dqn step {t}: greedy return {score:.1}");
            if best.as_ref().is_none_or(|(b, _)| score > *b) {
                best = Some((score, online.clone()));
            }
        }
    }
    let net = best.map_or(online, |(_, n)| n);
    Ok(export(&net, &mean, &sc))
}
