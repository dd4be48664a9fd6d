use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::{input_scaling, ContinuousExpert};
use crate::env::{rollout, ActionKind, Env, EnvName, EnvSpec};
use crate::error::{Error, Result};
use crate::nn::Net;
use crate::policy::{LinearPolicy, Policy, Task};
use crate::rng::stream;

/// Cross-entropy method over actor parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CemConfig {
    /// Hidden widths of the actor; empty means a linear actor.
    pub hidden: Vec<usize>,
    pub iterations: usize,
    pub population: usize,
    pub elite_frac: f64,
    pub init_std: f64,
    /// Extra variance added after each refit, decaying linearly to zero.
    pub extra_std: f64,
    /// Episodes per candidate, shared by the whole generation.
    pub episodes: usize,
}

impl CemConfig {
    pub fn for_env(env: EnvName) -> CemConfig {
        match env {
            EnvName::MountainCarContinuous => CemConfig {
                hidden: vec![],
                iterations: 60,
                population: 60,
                elite_frac: 0.2,
                init_std: 5.0,
                extra_std: 0.5,
                episodes: 10,
            },
            _ => CemConfig {
                hidden: vec![16, 16],
                iterations: 150,
                population: 60,
                elite_frac: 0.15,
                init_std: 0.5,
                extra_std: 0.05,
                episodes: 6,
            },
        }
    }
}

fn actor_from(theta: &[f64], template: &Net, mean: &[f64], sc: &[f64], linear: bool) -> Policy {
    let mut net = template.clone();
    net.set_flat(theta);
    net.fold_input_standardization(mean, sc);
    let mlp = net.to_mlp(Task::Regress);
    if linear {
        let layer = mlp.layers.into_iter().next().expect("one layer");
        Policy::Linear(LinearPolicy {
            layer,
            task: Task::Regress,
        })
    } else {
        Policy::ReluMlp(mlp)
    }
}

fn score(actor: &Policy, env: EnvName, episodes: usize, seed: u64) -> Result<f64> {
    let mut e = Env::new(env, seed);
    Ok(rollout(&mut e, |s| actor.predict(s), episodes, seed)?.mean_return())
}

/// CEM with a diagonal Gaussian. Every candidate of a generation sees the
/// same episode seeds. Returns the final mean or the best elite, whichever
/// scores higher on a held-out evaluation.
pub fn train_continuous_expert(
    env: EnvName,
    cfg: &CemConfig,
    seed: u64,
) -> Result<ContinuousExpert> {
    let spec = EnvSpec::of(env);
    let action_dim = match &spec.action_kind {
        ActionKind::Continuous { low, .. } => low.len(),
        ActionKind::Discrete(_) => {
            return Err(Error::Unsupported(format!(
                "CEM actor needs continuous actions; {env} is discrete"
            )))
        }
    };
    let n_elite = ((cfg.population as f64 * cfg.elite_frac).round() as usize).max(1);
    if cfg.population == 0 || cfg.iterations == 0 || cfg.episodes == 0 || n_elite > cfg.population {
        return Err(Error::Config(
            "CEM population, iterations and episodes must be positive".into(),
        ));
    }
    let (mean_in, sc) = input_scaling(&spec);
    let mut rng = stream(seed, "cem");
    let mut sizes = vec![spec.state_dim];
    sizes.extend(&cfg.hidden);
    sizes.push(action_dim);
    let linear = cfg.hidden.is_empty();
    let template = Net::he_uniform(&sizes, &mut rng);
    let dim = template.n_params();
    let mut mu = if linear {
        vec![0.0; dim]
    } else {
        template.flat()
    };
    let mut std = vec![cfg.init_std; dim];
    let mut best: Option<(f64, Vec<f64>)> = None;

    for it in 0..cfg.iterations {
        let gen_seed = rng.next_u64();
        let mut scored: Vec<(f64, Vec<f64>)> = Vec::with_capacity(cfg.population);
        for _ in 0..cfg.population {
            let theta: Vec<f64> = mu
                .iter()
                .zip(&std)
                .map(|(m, s)| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m + s * z
                })
                .collect();
            let actor = actor_from(&theta, &template, &mean_in, &sc, linear);
            scored.push((score(&actor, env, cfg.episodes, gen_seed)?, theta));
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        let elites = &scored[..n_elite];
        let extra = cfg.extra_std * (1.0 - it as f64 / cfg.iterations as f64);
        for j in 0..dim {
            let m = elites.iter().map(|(_, t)| t[j]).sum::<f64>() / n_elite as f64;
            let v = elites.iter().map(|(_, t)| (t[j] - m).powi(2)).sum::<f64>() / n_elite as f64;
            mu[j] = m;
            std[j] = (v + extra * extra).sqrt();
        }
        log::debug!("{env} cem iteration {it}: elite best {:.1}", elites[0].0);
        if best.as_ref().is_none_or(|(b, _)| elites[0].0 > *b) {
            best = Some(elites[0].clone());
        }
    }

    let holdout = crate::rng::derive_seed(seed, "cem-holdout");
    let final_mean = actor_from(&mu, &template, &mean_in, &sc, linear);
    let mut chosen = final_mean;
    if let Some((_, theta)) = best {
        let elite = actor_from(&theta, &template, &mean_in, &sc, linear);
        if score(&elite, env, 20, holdout)? > score(&chosen, env, 20, holdout)? {
            chosen = elite;
        }
    }
    Ok(ContinuousExpert { actor: chosen })
}
