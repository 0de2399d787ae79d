//! The learned functions: code-conditioned Gaussian policy, critic over
//! state-action pairs, code posterior and value baseline.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::env::{EnvAction, Observation, ACT_DIM, OBS_DIM};
use crate::error::{Error, Result};
use crate::nn::{Activation, Gradient, Mlp};

/// A one-hot latent code over `k` states, stored by index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatentCode {
    index: usize,
    k: usize,
}

impl LatentCode {
    pub fn new(index: usize, k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 codes, got {k}")));
        }
        if index >= k {
            return Err(Error::InvalidArgument(format!("code {index} out of range for {k}")));
        }
        Ok(Self { index, k })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn one_hot(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.k];
        v[self.index] = 1.0;
        v
    }
}

pub fn validate_prior(prior: &[f64]) -> Result<()> {
    if prior.is_empty() {
        return Err(Error::InvalidArgument("empty prior".into()));
    }
    if prior.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidArgument(format!("prior has invalid entries: {prior:?}")));
    }
    let total: f64 = prior.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("prior sums to {total}, not 1")));
    }
    Ok(())
}

/// Index drawn from the categorical distribution `prior`.
pub fn sample_index<R: Rng + ?Sized>(prior: &[f64], rng: &mut R) -> Result<usize> {
    validate_prior(prior)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut chosen = None;
    for (i, &p) in prior.iter().enumerate() {
        acc += p;
        if p > 0.0 {
            chosen = Some(i);
            if u < acc {
                break;
            }
        }
    }
    // Rounding can leave u just past the last partial sum; that falls
    // through to the last index with positive mass.
    Ok(chosen.expect("validated prior has positive mass"))
}

/// One-hot draw from the categorical `prior`.
pub fn sample_code<R: Rng + ?Sized>(prior: &[f64], rng: &mut R) -> Result<LatentCode> {
    LatentCode::new(sample_index(prior, rng)?, prior.len())
}

/// Numerically stable log-softmax (max subtraction).
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// `obs ⊕ one_hot(code)`.
pub fn obs_code_input(obs: &Observation, code: &LatentCode) -> Vec<f64> {
    let mut x = Vec::with_capacity(OBS_DIM + code.k());
    x.extend_from_slice(obs.as_slice());
    x.extend(code.one_hot());
    x
}

/// `obs ⊕ action`.
pub fn obs_action_input(obs: &Observation, action: &EnvAction) -> Vec<f64> {
    let mut x = Vec::with_capacity(OBS_DIM + ACT_DIM);
    x.extend_from_slice(obs.as_slice());
    x.extend_from_slice(action.as_slice());
    x
}

fn check_net(net: &Mlp, input: usize, output: usize, role: &str) -> Result<()> {
    if net.input_dim() != input || net.output_dim() != output {
        return Err(Error::InvalidArgument(format!(
            "{role} network must map {input} -> {output}, got {} -> {}",
            net.input_dim(),
            net.output_dim()
        )));
    }
    Ok(())
}

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

/// `pi(a | s, c) = N(net(s ⊕ c), diag(sigma^2))` with `sigma` fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    net: Mlp,
    sigma: Vec<f64>,
    k: usize,
}

impl GaussianPolicy {
    pub fn new(hidden: &[usize], k: usize, sigma: f64, seed: u64) -> Result<Self> {
        let net = Mlp::new(&sizes(OBS_DIM + k, hidden, ACT_DIM), Activation::Tanh, seed)?;
        Self::from_parts(net, vec![sigma; ACT_DIM], k)
    }

    pub fn from_parts(net: Mlp, sigma: Vec<f64>, k: usize) -> Result<Self> {
        check_net(&net, OBS_DIM + k, ACT_DIM, "policy")?;
        if sigma.len() != ACT_DIM || sigma.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument(format!("invalid policy sigma {sigma:?}")));
        }
        Ok(Self { net, sigma, k })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn k(&self) -> usize {
        self.k
    }

    fn input(&self, obs: &Observation, code: &LatentCode) -> Result<Vec<f64>> {
        if code.k() != self.k {
            return Err(Error::dim("latent code", self.k, code.k()));
        }
        Ok(obs_code_input(obs, code))
    }

    pub fn mean(&self, obs: &Observation, code: &LatentCode) -> Result<[f64; ACT_DIM]> {
        let y = self.net.forward(&self.input(obs, code)?)?;
        Ok([y[0], y[1]])
    }

    pub fn act<R: Rng + ?Sized>(
        &self,
        obs: &Observation,
        code: &LatentCode,
        rng: &mut R,
    ) -> Result<EnvAction> {
        let mut a = self.mean(obs, code)?;
        for (v, s) in a.iter_mut().zip(&self.sigma) {
            let z: f64 = StandardNormal.sample(rng);
            *v += s * z;
        }
        Ok(EnvAction(a))
    }

    /// Diagonal Gaussian log density of `action` around a given mean.
    pub fn logprob_at(&self, mean: &[f64], action: &EnvAction) -> f64 {
        mean.iter()
            .zip(action.as_slice())
            .zip(&self.sigma)
            .map(|((m, a), s)| {
                let z = (a - m) / s;
                -0.5 * z * z - s.ln() - 0.5 * (2.0 * PI).ln()
            })
            .sum()
    }

    pub fn logprob(&self, obs: &Observation, code: &LatentCode, action: &EnvAction) -> Result<f64> {
        Ok(self.logprob_at(&self.mean(obs, code)?, action))
    }

    /// `log pi(a|s,c)` and its gradient with respect to the policy parameters.
    pub fn logprob_grad(
        &self,
        obs: &Observation,
        code: &LatentCode,
        action: &EnvAction,
    ) -> Result<(f64, Gradient)> {
        let x = self.input(obs, code)?;
        let trace = self.net.forward_trace(&x)?;
        let mean = trace.output();
        let lp = self.logprob_at(mean, action);
        let upstream: Vec<f64> = (0..ACT_DIM)
            .map(|d| (action.0[d] - mean[d]) / (self.sigma[d] * self.sigma[d]))
            .collect();
        let mut g = Gradient::zeros(self.net.num_params());
        self.net.backward_trace(&trace, &upstream, &mut g.values, 1.0)?;
        Ok((lp, g))
    }

    /// Differential entropy; constant because sigma never changes.
    pub fn entropy(&self) -> f64 {
        self.sigma
            .iter()
            .map(|s| 0.5 * (2.0 * PI * std::f64::consts::E * s * s).ln())
            .sum()
    }
}

/// Adversarial objective family; selects the critic head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Original GAN objective; sigmoid head, `D in (0, 1)`.
    Gan,
    /// Wasserstein objective; linear head with clipped weights.
    Wgan,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Scores state-action pairs; it never sees the latent code.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    net: Mlp,
    objective: Objective,
}

impl Critic {
    pub fn new(hidden: &[usize], objective: Objective, seed: u64) -> Result<Self> {
        let net = Mlp::new(&sizes(OBS_DIM + ACT_DIM, hidden, 1), Activation::Tanh, seed)?;
        Self::from_parts(net, objective)
    }

    pub fn from_parts(net: Mlp, objective: Objective) -> Result<Self> {
        check_net(&net, OBS_DIM + ACT_DIM, 1, "critic")?;
        Ok(Self { net, objective })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    /// Pre-head output.
    pub fn logit(&self, obs: &Observation, action: &EnvAction) -> Result<f64> {
        Ok(self.net.forward(&obs_action_input(obs, action))?[0])
    }

    /// Linear score under WGAN, `D = sigmoid(logit)` under GAN.
    pub fn score(&self, obs: &Observation, action: &EnvAction) -> Result<f64> {
        let z = self.logit(obs, action)?;
        Ok(match self.objective {
            Objective::Wgan => z,
            Objective::Gan => sigmoid(z),
        })
    }

    pub fn score_grad(&self, obs: &Observation, action: &EnvAction) -> Result<(f64, Gradient)> {
        let trace = self.net.forward_trace(&obs_action_input(obs, action))?;
        let z = trace.output()[0];
        let (d, dz) = match self.objective {
            Objective::Wgan => (z, 1.0),
            Objective::Gan => {
                let d = sigmoid(z);
                (d, d * (1.0 - d))
            }
        };
        let mut g = Gradient::zeros(self.net.num_params());
        self.net.backward_trace(&trace, &[dz], &mut g.values, 1.0)?;
        Ok((d, g))
    }
}

/// `Q(c | s, a)` as a softmax over `k` logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    net: Mlp,
    k: usize,
}

impl Posterior {
    pub fn new(hidden: &[usize], k: usize, seed: u64) -> Result<Self> {
        let net = Mlp::new(&sizes(OBS_DIM + ACT_DIM, hidden, k), Activation::Tanh, seed)?;
        Self::from_parts(net)
    }

    pub fn from_parts(net: Mlp) -> Result<Self> {
        let k = net.output_dim();
        if k < 2 {
            return Err(Error::InvalidArgument("posterior needs at least 2 codes".into()));
        }
        check_net(&net, OBS_DIM + ACT_DIM, k, "posterior")?;
        Ok(Self { net, k })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn logprobs(&self, obs: &Observation, action: &EnvAction) -> Result<Vec<f64>> {
        Ok(log_softmax(&self.net.forward(&obs_action_input(obs, action))?))
    }

    pub fn logprob(&self, obs: &Observation, action: &EnvAction, code: &LatentCode) -> Result<f64> {
        if code.k() != self.k {
            return Err(Error::dim("latent code", self.k, code.k()));
        }
        Ok(self.logprobs(obs, action)?[code.index()])
    }

    /// `log Q(code|s,a)` and its parameter gradient.
    pub fn logprob_grad(
        &self,
        obs: &Observation,
        action: &EnvAction,
        code: &LatentCode,
    ) -> Result<(f64, Gradient)> {
        if code.k() != self.k {
            return Err(Error::dim("latent code", self.k, code.k()));
        }
        let trace = self.net.forward_trace(&obs_action_input(obs, action))?;
        let lp = log_softmax(trace.output());
        let upstream: Vec<f64> = lp
            .iter()
            .enumerate()
            .map(|(i, l)| f64::from(u8::from(i == code.index())) - l.exp())
            .collect();
        let mut g = Gradient::zeros(self.net.num_params());
        self.net.backward_trace(&trace, &upstream, &mut g.values, 1.0)?;
        Ok((lp[code.index()], g))
    }

    /// Most probable code; ties go to the lowest index.
    pub fn predict(&self, obs: &Observation, action: &EnvAction) -> Result<usize> {
        let lp = self.logprobs(obs, action)?;
        let mut best = 0;
        for (i, &v) in lp.iter().enumerate() {
            if v > lp[best] {
                best = i;
            }
        }
        Ok(best)
    }
}

/// Value estimate conditioned on `(s, c)`, the same input as the policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    net: Mlp,
    k: usize,
}

impl Baseline {
    pub fn new(hidden: &[usize], k: usize, seed: u64) -> Result<Self> {
        let net = Mlp::new(&sizes(OBS_DIM + k, hidden, 1), Activation::Tanh, seed)?;
        Self::from_parts(net, k)
    }

    pub fn from_parts(net: Mlp, k: usize) -> Result<Self> {
        check_net(&net, OBS_DIM + k, 1, "baseline")?;
        Ok(Self { net, k })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn value(&self, obs: &Observation, code: &LatentCode) -> Result<f64> {
        if code.k() != self.k {
            return Err(Error::dim("latent code", self.k, code.k()));
        }
        Ok(self.net.forward(&obs_code_input(obs, code))?[0])
    }

    pub fn value_grad(&self, obs: &Observation, code: &LatentCode) -> Result<(f64, Gradient)> {
        let (g, _) = self.net.backward(&obs_code_input(obs, code), &[1.0])?;
        Ok((self.value(obs, code)?, g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;
    use crate::rng;
    use approx::assert_abs_diff_eq;

    fn obs(seed: u64) -> Observation {
        let mut r = rng::seeded(seed);
        let mut o = [0.0; OBS_DIM];
        o.iter_mut().for_each(|v| *v = r.random_range(-1.5..1.5));
        Observation(o)
    }

    fn action(seed: u64) -> EnvAction {
        let mut r = rng::seeded(seed + 1000);
        EnvAction([r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)])
    }

    fn zero_policy(sigma: f64) -> GaussianPolicy {
        let net = Mlp::zeros(&[OBS_DIM + 3, 8, ACT_DIM], Activation::Tanh).unwrap();
        GaussianPolicy::from_parts(net, vec![sigma; 2], 3).unwrap()
    }

    #[test]
    fn code_sampling_is_uniform() {
        let prior = [1.0 / 3.0; 3];
        let mut r = rng::seeded(11);
        let mut counts = [0usize; 3];
        let n = 30_000;
        for _ in 0..n {
            counts[sample_code(&prior, &mut r).unwrap().index()] += 1;
        }
        let expected = n as f64 / 3.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // chi-square with 2 dof: P(X > 9.21) = 0.01
        assert!(chi2 < 9.21, "chi2 = {chi2}, counts {counts:?}");
    }

    #[test]
    fn degenerate_and_invalid_priors() {
        let mut r = rng::seeded(0);
        for _ in 0..100 {
            assert_eq!(sample_code(&[1.0, 0.0, 0.0], &mut r).unwrap().index(), 0);
            assert_eq!(sample_code(&[0.0, 0.0, 1.0], &mut r).unwrap().index(), 2);
        }
        assert!(sample_code(&[0.3, 0.3, 0.3], &mut r).is_err());
        assert!(sample_code(&[1.2, -0.2], &mut r).is_err());
    }

    #[test]
    fn one_hot_has_single_one() {
        let c = LatentCode::new(1, 3).unwrap();
        assert_eq!(c.one_hot(), vec![0.0, 1.0, 0.0]);
        assert!(LatentCode::new(3, 3).is_err());
        assert!(LatentCode::new(0, 1).is_err());
    }

    #[test]
    fn tiny_sigma_acts_at_mean() {
        let p = GaussianPolicy::new(&[16], 3, 1e-12, 4).unwrap();
        let (o, c) = (obs(1), LatentCode::new(2, 3).unwrap());
        let m = p.mean(&o, &c).unwrap();
        let a = p.act(&o, &c, &mut rng::seeded(0)).unwrap();
        assert_abs_diff_eq!(a.0[0], m[0], epsilon = 1e-9);
        assert_abs_diff_eq!(a.0[1], m[1], epsilon = 1e-9);
    }

    #[test]
    fn zero_policy_samples_centered_noise() {
        let p = zero_policy(0.1);
        let (o, c) = (obs(2), LatentCode::new(0, 3).unwrap());
        assert_eq!(p.mean(&o, &c).unwrap(), [0.0, 0.0]);
        let mut r = rng::seeded(3);
        let n = 100_000;
        let (mut sum, mut sq) = ([0.0; 2], [0.0; 2]);
        for _ in 0..n {
            let a = p.act(&o, &c, &mut r).unwrap();
            for d in 0..2 {
                sum[d] += a.0[d];
                sq[d] += a.0[d] * a.0[d];
            }
        }
        for d in 0..2 {
            let mean = sum[d] / n as f64;
            let var = sq[d] / n as f64 - mean * mean;
            assert!(mean.abs() < 3.0 * 0.1 / (n as f64).sqrt());
            assert!((var.sqrt() - 0.1).abs() < 0.002);
        }
    }

    #[test]
    fn empirical_action_mean_matches_network() {
        let p = GaussianPolicy::new(&[16, 16], 3, 0.1, 8).unwrap();
        let (o, c) = (obs(3), LatentCode::new(1, 3).unwrap());
        let m = p.mean(&o, &c).unwrap();
        let mut r = rng::seeded(4);
        let n = 100_000;
        let mut sum = [0.0; 2];
        for _ in 0..n {
            let a = p.act(&o, &c, &mut r).unwrap();
            sum[0] += a.0[0];
            sum[1] += a.0[1];
        }
        for d in 0..2 {
            assert!((sum[d] / n as f64 - m[d]).abs() < 3.0 * 0.1 / (n as f64).sqrt());
        }
    }

    #[test]
    fn logprob_at_mean_and_one_sigma() {
        let p = zero_policy(0.1);
        let (o, c) = (obs(4), LatentCode::new(0, 3).unwrap());
        let at_mean = p.logprob(&o, &c, &EnvAction([0.0, 0.0])).unwrap();
        let expected = -2.0 * (0.1 * (2.0 * PI).sqrt()).ln();
        assert_abs_diff_eq!(at_mean, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(at_mean, 2.7673, epsilon = 1e-4);
        let shifted = p.logprob(&o, &c, &EnvAction([0.1, 0.0])).unwrap();
        assert_abs_diff_eq!(at_mean - shifted, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn entropy_values() {
        let p = zero_policy(0.1);
        let expected = (2.0 * PI * std::f64::consts::E * 0.01).ln();
        assert_abs_diff_eq!(p.entropy(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(p.entropy(), -1.7673, epsilon = 1e-4);
        let wide = zero_policy(0.2);
        assert_abs_diff_eq!(wide.entropy() - p.entropy(), 2.0 * 2f64.ln(), epsilon = 1e-12);

        let mut trained = GaussianPolicy::new(&[8], 3, 0.1, 0).unwrap();
        let before = trained.entropy();
        trained.net_mut().params_mut().values_mut()[0] += 3.0;
        assert_eq!(trained.entropy(), before);
    }

    #[test]
    fn critic_heads_at_zero() {
        let net = Mlp::zeros(&[12, 8, 1], Activation::Tanh).unwrap();
        let w = Critic::from_parts(net.clone(), Objective::Wgan).unwrap();
        let g = Critic::from_parts(net, Objective::Gan).unwrap();
        assert_eq!(w.score(&obs(1), &action(1)).unwrap(), 0.0);
        assert_eq!(g.score(&obs(1), &action(1)).unwrap(), 0.5);
    }

    #[test]
    fn gan_critic_stays_in_unit_interval() {
        let mut c = Critic::new(&[16], Objective::Gan, 2).unwrap();
        c.net_mut()
            .params_mut()
            .values_mut()
            .iter_mut()
            .for_each(|v| *v *= 20.0);
        for s in 0..50 {
            let d = c.score(&obs(s), &action(s)).unwrap();
            assert!(d > 0.0 && d < 1.0);
        }
    }

    #[test]
    fn critic_input_excludes_code() {
        let c = Critic::new(&[64, 64], Objective::Wgan, 0).unwrap();
        assert_eq!(c.net().input_dim(), OBS_DIM + ACT_DIM);
    }

    #[test]
    fn posterior_zero_net_is_uniform() {
        let net = Mlp::zeros(&[12, 8, 3], Activation::Tanh).unwrap();
        let q = Posterior::from_parts(net).unwrap();
        for lp in q.logprobs(&obs(0), &action(0)).unwrap() {
            assert_abs_diff_eq!(lp, -(3f64.ln()), epsilon = 1e-12);
        }
        assert_eq!(q.predict(&obs(0), &action(0)).unwrap(), 0);
    }

    #[test]
    fn log_softmax_is_stable() {
        let lp = log_softmax(&[1000.0, 0.0, 0.0]);
        assert_abs_diff_eq!(lp[0], 0.0, epsilon = 1e-12);
        assert!(lp.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn posterior_is_a_distribution() {
        let q = Posterior::new(&[32, 32], 3, 5).unwrap();
        for s in 0..100 {
            let lp = q.logprobs(&obs(s), &action(s)).unwrap();
            let total: f64 = lp.iter().map(|v| v.exp()).sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
            assert!(lp.iter().all(|v| *v <= 0.0));
        }
    }

    #[test]
    fn zero_baseline_predicts_zero() {
        let net = Mlp::zeros(&[13, 8, 1], Activation::Tanh).unwrap();
        let b = Baseline::from_parts(net, 3).unwrap();
        assert_eq!(b.value(&obs(0), &LatentCode::new(1, 3).unwrap()).unwrap(), 0.0);
    }

    fn check<T: Clone>(
        model: &T,
        values: &[f64],
        set: impl Fn(&mut T, &[f64]) + Copy,
        f: impl Fn(&T) -> (f64, Gradient) + Copy,
    ) -> f64 {
        grad_check(
            |p| {
                let mut m = model.clone();
                set(&mut m, p);
                let (v, g) = f(&m);
                (v, g.values)
            },
            values,
            1e-5,
        )
    }

    #[test]
    fn model_gradients_match_finite_differences() {
        for s in 0..20u64 {
            let (o, a) = (obs(s), action(s));
            let c = LatentCode::new((s % 3) as usize, 3).unwrap();

            let p = GaussianPolicy::new(&[16, 16], 3, 0.1, s).unwrap();
            let err = check(
                &p,
                p.net().params().values(),
                |m, v| m.net_mut().set_values(v).unwrap(),
                |m| m.logprob_grad(&o, &c, &a).unwrap(),
            );
            assert!(err < 1e-4, "policy {s}: {err}");

            for objective in [Objective::Wgan, Objective::Gan] {
                let d = Critic::new(&[16, 16], objective, s).unwrap();
                let err = check(
                    &d,
                    d.net().params().values(),
                    |m, v| m.net_mut().set_values(v).unwrap(),
                    |m| m.score_grad(&o, &a).unwrap(),
                );
                assert!(err < 1e-4, "critic {objective:?} {s}: {err}");
            }

            let q = Posterior::new(&[16, 16], 3, s).unwrap();
            let err = check(
                &q,
                q.net().params().values(),
                |m, v| m.net_mut().set_values(v).unwrap(),
                |m| m.logprob_grad(&o, &a, &c).unwrap(),
            );
            assert!(err < 1e-4, "posterior {s}: {err}");

            let b = Baseline::new(&[16], 3, s).unwrap();
            let err = check(
                &b,
                b.net().params().values(),
                |m, v| m.net_mut().set_values(v).unwrap(),
                |m| m.value_grad(&o, &c).unwrap(),
            );
            assert!(err < 1e-4, "baseline {s}: {err}");
        }
    }

    #[test]
    fn mismatched_code_width_is_rejected() {
        let p = GaussianPolicy::new(&[8], 3, 0.1, 0).unwrap();
        let c = LatentCode::new(0, 2).unwrap();
        assert!(p.mean(&obs(0), &c).is_err());
        let bad = Mlp::zeros(&[12, 2], Activation::Tanh).unwrap();
        assert!(GaussianPolicy::from_parts(bad, vec![0.1; 2], 3).is_err());
    }
}
