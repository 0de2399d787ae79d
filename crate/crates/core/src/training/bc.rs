use rand::seq::SliceRandom;

use super::buffer::Pair;
use crate::env::Trajectory;
use crate::error::{Error, Result};
use crate::models::{obs_code_input, sample_code, GaussianPolicy, LatentCode};
use crate::nn::Gradient;
use crate::optim::{AdamConfig, AdamState};
use crate::rng::{self, domain};

#[derive(Debug, Clone, PartialEq)]
pub struct BcReport {
    /// Mean negative log-likelihood over the whole demo set after each epoch.
    pub epoch_nll: Vec<f64>,
}

/// Mean negative log-likelihood of the pairs' actions and its gradient.
pub fn bc_loss_grad(policy: &GaussianPolicy, pairs: &[Pair]) -> Result<(f64, Gradient)> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("empty behavior cloning batch".into()));
    }
    let net = policy.net();
    let mut grad = Gradient::zeros(net.num_params());
    let scale = 1.0 / pairs.len() as f64;
    let mut loss = 0.0;
    for p in pairs {
        let code = p.code()?;
        let trace = net.forward_trace(&obs_code_input(&p.obs, &code))?;
        let mean = trace.output();
        loss -= policy.logprob_at(mean, &p.action);
        let upstream: Vec<f64> = (0..mean.len())
            .map(|d| (mean[d] - p.action.0[d]) / (policy.sigma()[d] * policy.sigma()[d]))
            .collect();
        net.backward_trace(&trace, &upstream, &mut grad.values, scale)?;
    }
    Ok((loss * scale, grad))
}

pub fn bc_nll(policy: &GaussianPolicy, pairs: &[Pair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("empty behavior cloning batch".into()));
    }
    let mut total = 0.0;
    for p in pairs {
        total -= policy.logprob(&p.obs, &p.code()?, &p.action)?;
    }
    Ok(total / pairs.len() as f64)
}

/// Demo pairs tagged with one prior-drawn code per trajectory.
fn coded_pairs(policy: &GaussianPolicy, demos: &[Trajectory], seed: u64) -> Result<Vec<Pair>> {
    let prior = vec![1.0 / policy.k() as f64; policy.k()];
    let mut rng = rng::stream(seed, domain::BC, 0);
    let mut pairs = Vec::new();
    for t in demos {
        let code: LatentCode = sample_code(&prior, &mut rng)?;
        pairs.extend(t.observations.iter().zip(&t.actions).map(|(o, a)| Pair {
            obs: *o,
            action: *a,
            code: Some(code),
            label: t.mode_label,
        }));
    }
    Ok(pairs)
}

/// Maximum-likelihood fit of the policy to the demonstrations with Adam.
///
/// Demos carry no codes, so every trajectory gets one code drawn from the
/// uniform prior, fixed for all epochs. With fixed sigma this is a scaled
/// squared error plus a constant.
pub fn bc_pretrain(
    policy: &mut GaussianPolicy,
    demos: &[Trajectory],
    epochs: usize,
    batch_size: usize,
    adam: AdamConfig,
    seed: u64,
) -> Result<BcReport> {
    if demos.iter().all(Trajectory::is_empty) {
        return Err(Error::InvalidArgument("behavior cloning needs demonstrations".into()));
    }
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let pairs = coded_pairs(policy, demos, seed)?;
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut rng = rng::stream(seed, domain::BC, 1);
    let mut opt = AdamState::new(policy.net().num_params(), adam);
    let mut epoch_nll = Vec::with_capacity(epochs);
    let mut batch = Vec::with_capacity(batch_size);
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| pairs[i]));
            let (_, grad) = bc_loss_grad(policy, &batch)?;
            opt.step(policy.net_mut().params_mut().values_mut(), &grad, true)?;
        }
        let nll = bc_nll(policy, &pairs)?;
        if !nll.is_finite() {
            return Err(Error::NonFinite("behavior cloning loss".into()));
        }
        epoch_nll.push(nll);
    }
    Ok(BcReport { epoch_nll })
}
