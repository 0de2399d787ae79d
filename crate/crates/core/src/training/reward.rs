use std::fmt;
use std::sync::Arc;

use crate::env::{Observation, Trajectory};
use crate::error::{Error, Result};
use crate::models::{softplus, Baseline, Critic, LatentCode, Objective, Posterior};
use crate::nn::Gradient;
use crate::optim::AdamState;

/// State-only surrogate reward blended in with weight `lambda0`.
#[derive(Clone, Default)]
pub struct RewardAugmentation {
    rule: Option<Arc<dyn Fn(&Observation) -> f64 + Send + Sync>>,
}

impl RewardAugmentation {
    /// Zero everywhere.
    pub fn zero() -> Self {
        Self { rule: None }
    }

    pub fn new(rule: impl Fn(&Observation) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            rule: Some(Arc::new(rule)),
        }
    }

    pub fn eval(&self, obs: &Observation) -> f64 {
        self.rule.as_ref().map_or(0.0, |f| f(obs))
    }
}

impl fmt::Debug for RewardAugmentation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.rule.is_some() {
            "RewardAugmentation(custom)"
        } else {
            "RewardAugmentation(zero)"
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardWeights {
    pub lambda0: f64,
    pub lambda1: f64,
}

/// Per-step policy reward
/// `-D(s,a)` (WGAN) or `-log D(s,a)` (GAN), plus `lambda1 log Q(c|s,a)` and
/// `lambda0 r(s)`.
///
/// The constant `H(c)` and entropy terms are left out. A zero weight skips
/// its term entirely, so with `lambda1 = 0` the posterior is never read.
pub fn assemble_step_rewards(
    traj: &Trajectory,
    critic: &Critic,
    posterior: &Posterior,
    aug: &RewardAugmentation,
    weights: RewardWeights,
) -> Result<Vec<f64>> {
    let code = traj
        .code
        .ok_or_else(|| Error::Missing("latent code on trajectory".into()))?;
    let mut out = Vec::with_capacity(traj.len());
    for (obs, action) in traj.observations.iter().zip(&traj.actions) {
        let z = critic.logit(obs, action)?;
        let mut r = match critic.objective() {
            Objective::Wgan => -z,
            Objective::Gan => softplus(-z),
        };
        if weights.lambda1 != 0.0 {
            r += weights.lambda1 * posterior.logprob(obs, action, &code)?;
        }
        if weights.lambda0 != 0.0 {
            r += weights.lambda0 * aug.eval(obs);
        }
        out.push(r);
    }
    Ok(out)
}

/// `R_t = sum_{k >= t} gamma^(k-t) r_k`.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// Returns-to-go and raw advantages `R_t - b(s_t, c)`; normalize across the
/// whole update batch afterwards.
pub fn compute_advantages(
    rewards: &[f64],
    baseline: &Baseline,
    traj: &Trajectory,
    gamma: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if rewards.len() != traj.len() {
        return Err(Error::dim("rewards", traj.len(), rewards.len()));
    }
    let code = traj
        .code
        .ok_or_else(|| Error::Missing("latent code on trajectory".into()))?;
    let returns = discounted_returns(rewards, gamma);
    let mut adv = Vec::with_capacity(returns.len());
    for (obs, r) in traj.observations.iter().zip(&returns) {
        adv.push(r - baseline.value(obs, &code)?);
    }
    Ok((returns, adv))
}

/// In-place shift to zero mean and scale to unit variance. A constant input
/// is only centred.
pub fn normalize(values: &mut [f64]) {
    if values.is_empty() {
        return;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for v in values.iter_mut() {
        *v -= mean;
        if std > 1e-12 {
            *v /= std;
        }
    }
}

/// Full-batch Adam regression of the baseline onto the returns; returns the
/// mean squared error after the last step.
pub fn fit_baseline(
    baseline: &mut Baseline,
    opt: &mut AdamState,
    samples: &[(Observation, LatentCode, f64)],
    steps: usize,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("baseline fit needs samples".into()));
    }
    let scale = 1.0 / samples.len() as f64;
    for _ in 0..steps {
        let mut grad = Gradient::zeros(baseline.net().num_params());
        for (obs, code, target) in samples {
            let (v, g) = baseline.value_grad(obs, code)?;
            let residual = v - target;
            for (acc, gi) in grad.values.iter_mut().zip(&g.values) {
                *acc += 2.0 * residual * scale * gi;
            }
        }
        opt.step(baseline.net_mut().params_mut().values_mut(), &grad, true)?;
    }
    let mut mse = 0.0;
    for (obs, code, target) in samples {
        mse += (baseline.value(obs, code)? - target).powi(2) * scale;
    }
    if !mse.is_finite() {
        return Err(Error::NonFinite("baseline regression loss".into()));
    }
    Ok(mse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvAction;
    use crate::models::LatentCode;
    use crate::nn::{Activation, Mlp};
    use crate::optim::AdamConfig;
    use approx::assert_abs_diff_eq;

    fn traj(n: usize, code: Option<usize>) -> Trajectory {
        Trajectory {
            observations: (0..n)
                .map(|i| Observation([0.1 * i as f64; 10]))
                .collect(),
            actions: vec![EnvAction([1.0, 0.0]); n],
            code: code.map(|c| LatentCode::new(c, 3).unwrap()),
            mode_label: None,
        }
    }

    fn zero_critic(objective: Objective) -> Critic {
        Critic::from_parts(Mlp::zeros(&[12, 8, 1], Activation::Tanh).unwrap(), objective).unwrap()
    }

    fn uniform_posterior() -> Posterior {
        Posterior::from_parts(Mlp::zeros(&[12, 8, 3], Activation::Tanh).unwrap()).unwrap()
    }

    #[test]
    fn zero_weights_and_zero_critic_give_zero_rewards() {
        let w = RewardWeights {
            lambda0: 0.0,
            lambda1: 0.0,
        };
        let r = assemble_step_rewards(
            &traj(4, Some(1)),
            &zero_critic(Objective::Wgan),
            &Posterior::new(&[8], 3, 0).unwrap(),
            &RewardAugmentation::zero(),
            w,
        )
        .unwrap();
        assert_eq!(r, vec![0.0; 4]);
    }

    #[test]
    fn uniform_posterior_bonus() {
        let w = RewardWeights {
            lambda0: 0.0,
            lambda1: 0.1,
        };
        let r = assemble_step_rewards(
            &traj(5, Some(2)),
            &zero_critic(Objective::Wgan),
            &uniform_posterior(),
            &RewardAugmentation::zero(),
            w,
        )
        .unwrap();
        for v in r {
            assert_abs_diff_eq!(v, -0.1 * 3f64.ln(), epsilon = 1e-12);
            assert_abs_diff_eq!(v, -0.10986, epsilon = 1e-5);
        }
    }

    #[test]
    fn gan_term_is_minus_log_d() {
        let w = RewardWeights {
            lambda0: 0.0,
            lambda1: 0.0,
        };
        let r = assemble_step_rewards(
            &traj(2, Some(0)),
            &zero_critic(Objective::Gan),
            &uniform_posterior(),
            &RewardAugmentation::zero(),
            w,
        )
        .unwrap();
        assert_abs_diff_eq!(r[0], 2f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn perfect_posterior_leaves_adversarial_and_augmentation_terms() {
        let sizes = [12, 4, 3];
        let mut values = vec![0.0; crate::nn::param_count(&sizes)];
        let n = values.len();
        values[n - 3] = 60.0;
        let q = Posterior::from_parts(Mlp::from_params(&sizes, Activation::Tanh, values).unwrap())
            .unwrap();
        let critic = Critic::new(&[8], Objective::Wgan, 4).unwrap();
        let aug = RewardAugmentation::new(|o: &Observation| o.0[0]);
        let t = traj(3, Some(0));
        let with = assemble_step_rewards(&t, &critic, &q, &aug, RewardWeights {
            lambda0: 0.5,
            lambda1: 0.1,
        })
        .unwrap();
        for (i, v) in with.iter().enumerate() {
            let expect = -critic.logit(&t.observations[i], &t.actions[i]).unwrap()
                + 0.5 * t.observations[i].0[0];
            assert_abs_diff_eq!(*v, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_lambda1_is_independent_of_posterior() {
        let w = RewardWeights {
            lambda0: 0.0,
            lambda1: 0.0,
        };
        let critic = Critic::new(&[8], Objective::Wgan, 1).unwrap();
        let t = traj(6, Some(1));
        let a = assemble_step_rewards(&t, &critic, &Posterior::new(&[8], 3, 1).unwrap(),
            &RewardAugmentation::zero(), w).unwrap();
        let b = assemble_step_rewards(&t, &critic, &Posterior::new(&[8], 3, 99).unwrap(),
            &RewardAugmentation::zero(), w).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_code_is_an_error() {
        let w = RewardWeights {
            lambda0: 0.0,
            lambda1: 0.1,
        };
        let err = assemble_step_rewards(&traj(2, None), &zero_critic(Objective::Wgan),
            &uniform_posterior(), &RewardAugmentation::zero(), w);
        assert!(matches!(err, Err(Error::Missing(_))));
    }

    #[test]
    fn discounted_geometric_sum() {
        let r = discounted_returns(&[1.0, 1.0, 1.0], 0.99);
        assert_abs_diff_eq!(r[0], 2.9701, epsilon = 1e-12);
        assert_abs_diff_eq!(r[1], 1.99, epsilon = 1e-12);
        assert_abs_diff_eq!(r[2], 1.0, epsilon = 1e-12);
        assert_eq!(discounted_returns(&[3.0, -1.0, 2.0], 0.0), vec![3.0, -1.0, 2.0]);
    }

    #[test]
    fn perfect_baseline_gives_zero_advantages() {
        // A zero baseline is perfect for all-zero rewards.
        let b = Baseline::from_parts(Mlp::zeros(&[13, 4, 1], Activation::Tanh).unwrap(), 3).unwrap();
        let t = traj(5, Some(0));
        let (_, adv) = compute_advantages(&[0.0; 5], &b, &t, 0.99).unwrap();
        assert_eq!(adv, vec![0.0; 5]);
        assert!(compute_advantages(&[0.0; 4], &b, &t, 0.99).is_err());
    }

    #[test]
    fn normalization_moments() {
        let mut v = vec![1.0, 2.0, 3.0, 10.0];
        normalize(&mut v);
        let mean = v.iter().sum::<f64>() / 4.0;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(var, 1.0, epsilon = 1e-12);
        let mut c = vec![2.0; 3];
        normalize(&mut c);
        assert_eq!(c, vec![0.0; 3]);
    }

    #[test]
    fn baseline_fit_reduces_error() {
        let mut b = Baseline::new(&[16], 3, 0).unwrap();
        let samples: Vec<_> = (0..30)
            .map(|i| {
                let c = LatentCode::new(i % 3, 3).unwrap();
                (Observation([0.05 * i as f64; 10]), c, (i % 3) as f64)
            })
            .collect();
        let mut opt = AdamState::new(b.net().num_params(), AdamConfig {
            lr: 1e-2,
            ..AdamConfig::default()
        });
        let first = fit_baseline(&mut b, &mut opt, &samples, 1).unwrap();
        let later = fit_baseline(&mut b, &mut opt, &samples, 300).unwrap();
        assert!(later < 0.1 * first, "{first} -> {later}");
    }
}
