use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::adversary::{update_critic, update_posterior};
use super::bc::{bc_pretrain, BcReport};
use super::buffer::{sample_pairs, ReplayBuffer};
use super::metrics::IterMetrics;
use super::policy_update::{policy_update, PolicySample, TrpoRecord};
use super::reward::{
    assemble_step_rewards, compute_advantages, fit_baseline, normalize, RewardAugmentation,
    RewardWeights,
};
use super::rollout::collect_rollouts;
use crate::config::TrainConfig;
use crate::env::Trajectory;
use crate::error::{Error, Result};
use crate::eval::{labeled_pairs, latent_entropy, posterior_accuracy};
use crate::models::{Baseline, Critic, GaussianPolicy, Objective, Posterior};
use crate::optim::{clip_params, AdamState, RmspropState};
use crate::rng::{self, domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    /// Behavior cloning only.
    Bc,
    /// Adversarial imitation with the information term switched off.
    Gail,
    Infogail,
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algo::Bc => "bc",
            Algo::Gail => "gail",
            Algo::Infogail => "infogail",
        })
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bc" => Ok(Algo::Bc),
            "gail" => Ok(Algo::Gail),
            "infogail" => Ok(Algo::Infogail),
            _ => Err(Error::InvalidArgument(format!(
                "unknown algorithm `{s}` (expected bc, gail or infogail)"
            ))),
        }
    }
}

impl Algo {
    /// The configuration this algorithm actually trains with.
    pub fn apply(&self, cfg: &TrainConfig) -> TrainConfig {
        let mut cfg = cfg.clone();
        if *self == Algo::Gail {
            cfg.training.lambda1 = 0.0;
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Models {
    pub policy: GaussianPolicy,
    pub critic: Option<Critic>,
    pub posterior: Option<Posterior>,
    pub baseline: Option<Baseline>,
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub models: Models,
    pub bc: BcReport,
    pub metrics: Vec<IterMetrics>,
    pub trpo_log: Vec<TrpoRecord>,
    /// Largest absolute critic parameter after each critic update.
    pub clip_log: Vec<f64>,
}

fn init_seed(seed: u64, role: u64) -> u64 {
    rng::stream(seed, domain::INIT, role).next_u64()
}

/// Behavior cloning followed, for the adversarial algorithms, by
/// `cfg.training.iters` iterations of: rollouts, critic steps, posterior
/// steps, reward assembly, advantages, baseline refit and one TRPO step.
///
/// `on_iter` sees every iteration's metrics and the models after it.
pub fn infogail_train<F>(
    cfg: &TrainConfig,
    demos: &[Trajectory],
    algo: Algo,
    mut on_iter: F,
) -> Result<TrainRun>
where
    F: FnMut(&IterMetrics, &Models) -> Result<()>,
{
    let cfg = algo.apply(cfg);
    cfg.validate()?;
    if demos.iter().all(Trajectory::is_empty) {
        return Err(Error::InvalidArgument("training needs demonstrations".into()));
    }
    let t = &cfg.training;
    let o = &cfg.optim;
    let env = cfg.env.build()?;
    let k = cfg.num_codes();
    let prior = cfg.code_prior();
    let steps = cfg.env.steps;

    let mut policy = GaussianPolicy::new(&t.hidden, k, t.policy_sigma, init_seed(cfg.seed, 0))?;
    let bc = bc_pretrain(
        &mut policy,
        demos,
        t.bc_epochs,
        t.bc_batch_size,
        o.adam(o.bc_lr),
        cfg.seed,
    )?;
    let mut models = Models {
        policy,
        critic: None,
        posterior: None,
        baseline: None,
    };
    let mut run = TrainRun {
        models: models.clone(),
        bc,
        metrics: Vec::new(),
        trpo_log: Vec::new(),
        clip_log: Vec::new(),
    };
    if algo == Algo::Bc {
        return Ok(run);
    }

    let mut critic = Critic::new(&t.hidden, t.objective, init_seed(cfg.seed, 1))?;
    if t.objective == Objective::Wgan {
        clip_params(critic.net_mut().params_mut().values_mut(), t.clip_bound)?;
    }
    let mut posterior = Posterior::new(&t.hidden, k, init_seed(cfg.seed, 2))?;
    let mut baseline = Baseline::new(&t.baseline_hidden, k, init_seed(cfg.seed, 3))?;
    let mut critic_opt = RmspropState::new(critic.net().num_params(), o.rmsprop());
    let mut posterior_opt = AdamState::new(posterior.net().num_params(), o.adam(o.posterior_lr));
    let mut baseline_opt = AdamState::new(baseline.net().num_params(), o.adam(o.baseline_lr));
    let mut buffer = if t.use_replay {
        Some(ReplayBuffer::new(t.buffer_capacity)?)
    } else {
        None
    };
    let trpo_cfg = o.trpo();
    let weights = RewardWeights {
        lambda0: t.lambda0,
        lambda1: t.lambda1,
    };
    // With the information term off the posterior is still fitted, purely
    // for evaluation. Adam makes the weight a pure scale anyway.
    let posterior_weight = if t.lambda1 > 0.0 { t.lambda1 } else { 1.0 };
    let aug = RewardAugmentation::zero();
    let h_c = latent_entropy(&prior)?;
    let expert_labeled = labeled_pairs(demos);
    let has_labels = expert_labeled.iter().all(|p| p.label.is_some());
    let mut policy = models.policy.clone();

    for iter in 0..t.iters {
        let started = Instant::now();
        let rollout_seed = rng::stream(cfg.seed, domain::ROLLOUT, iter as u64).next_u64();
        let rollouts = collect_rollouts(
            &policy,
            &env,
            &prior,
            t.rollouts_per_iter,
            steps,
            rollout_seed,
            t.workers,
        )?;
        if let Some(b) = buffer.as_mut() {
            b.push(rollouts.iter().cloned());
        }
        let mut batch_rng = rng::stream(cfg.seed, domain::BATCH, iter as u64);
        let gen_batch = |rng: &mut rng::Rng| match &buffer {
            Some(b) => b.sample(t.batch_size, rng),
            None => sample_pairs(&rollouts, t.batch_size, rng),
        };

        let mut critic_obj = 0.0;
        for _ in 0..t.critic_steps {
            let gen = gen_batch(&mut batch_rng)?;
            let expert = sample_pairs(demos, t.batch_size, &mut batch_rng)?;
            critic_obj = update_critic(&mut critic, &mut critic_opt, &gen, &expert, t.clip_bound)?;
            run.clip_log.push(critic.net().params().max_abs());
        }
        let mut e_log_q = 0.0;
        for _ in 0..t.posterior_steps {
            let gen = gen_batch(&mut batch_rng)?;
            e_log_q = update_posterior(&mut posterior, &mut posterior_opt, &gen, posterior_weight)?;
        }

        let mut samples = Vec::with_capacity(t.rollouts_per_iter * steps);
        let mut targets = Vec::with_capacity(samples.capacity());
        for traj in &rollouts {
            let rewards = assemble_step_rewards(traj, &critic, &posterior, &aug, weights)?;
            let (returns, adv) = compute_advantages(&rewards, &baseline, traj, t.gamma)?;
            let code = traj.code.expect("rollouts carry codes");
            for i in 0..traj.len() {
                samples.push(PolicySample {
                    obs: traj.observations[i],
                    code,
                    action: traj.actions[i],
                    advantage: adv[i],
                });
                targets.push((traj.observations[i], code, returns[i]));
            }
        }
        let mut advantages: Vec<f64> = samples.iter().map(|s| s.advantage).collect();
        if advantages.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite(format!("advantages at iteration {iter}")));
        }
        normalize(&mut advantages);
        for (s, a) in samples.iter_mut().zip(&advantages) {
            s.advantage = *a;
        }
        let old_logprobs = samples
            .iter()
            .map(|s| policy.logprob(&s.obs, &s.code, &s.action))
            .collect::<Result<Vec<_>>>()?;
        fit_baseline(&mut baseline, &mut baseline_opt, &targets, t.baseline_steps)?;

        let before = policy.net().params().values().to_vec();
        let outcome = policy_update(&mut policy, &samples, &old_logprobs, &trpo_cfg, o.fvp_stride)?;
        let after = policy.net().params().values();
        run.trpo_log.push(TrpoRecord {
            iter,
            accepted: outcome.accepted,
            kl: outcome.kl,
            improvement: outcome.improvement,
            params_unchanged: before
                .iter()
                .zip(after)
                .all(|(a, b)| a.to_bits() == b.to_bits()),
        });

        let posterior_acc = if has_labels {
            Some(posterior_accuracy(&posterior, &expert_labeled)?.accuracy_best_perm)
        } else {
            None
        };
        let metrics = IterMetrics {
            iter,
            critic_obj,
            e_log_q,
            l_i: e_log_q + h_c,
            mean_kl: outcome.kl,
            accepted: outcome.accepted,
            posterior_acc,
            wall_ms: t
                .record_wall_ms
                .then(|| started.elapsed().as_millis() as u64),
        };
        if [critic_obj, e_log_q, outcome.kl].iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("training metrics at iteration {iter}")));
        }
        let snapshot = Models {
            policy: policy.clone(),
            critic: Some(critic.clone()),
            posterior: Some(posterior.clone()),
            baseline: Some(baseline.clone()),
        };
        on_iter(&metrics, &snapshot)?;
        run.metrics.push(metrics);
        models = snapshot;
        policy = models.policy.clone();
    }
    if run.metrics.is_empty() {
        models = Models {
            policy,
            critic: Some(critic),
            posterior: Some(posterior),
            baseline: Some(baseline),
        };
    }
    run.models = models;
    Ok(run)
}
