use serde::Serialize;

use crate::env::{EnvAction, Observation};
use crate::error::{Error, Result};
use crate::models::{obs_code_input, GaussianPolicy, LatentCode};
use crate::nn::{Gradient, Mlp};
use crate::optim::{fisher_vector_product, trpo_step, TrpoConfig, TrpoOutcome};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicySample {
    pub obs: Observation,
    pub code: LatentCode,
    pub action: EnvAction,
    pub advantage: f64,
}

/// One trust-region step as seen from outside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrpoRecord {
    pub iter: usize,
    pub accepted: bool,
    pub kl: f64,
    pub improvement: f64,
    /// Parameters after the step are bitwise equal to those before it.
    pub params_unchanged: bool,
}

fn means(net: &Mlp, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    inputs.iter().map(|x| net.forward(x)).collect()
}

/// One TRPO step on the importance-weighted surrogate
/// `mean (pi(a|s,c) / pi_old(a|s,c)) A` under a mean-KL trust region.
///
/// `old_logprobs` are the behaviour log-likelihoods of the batch actions.
/// Curvature uses every `fvp_stride`-th sample. A rejected step leaves the
/// policy parameters exactly as they were.
pub fn policy_update(
    policy: &mut GaussianPolicy,
    batch: &[PolicySample],
    old_logprobs: &[f64],
    cfg: &TrpoConfig,
    fvp_stride: usize,
) -> Result<TrpoOutcome> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty policy batch".into()));
    }
    if old_logprobs.len() != batch.len() {
        return Err(Error::dim("old log-probabilities", batch.len(), old_logprobs.len()));
    }
    if batch.iter().any(|s| !s.advantage.is_finite()) {
        return Err(Error::NonFinite("advantage".into()));
    }
    let inputs: Vec<Vec<f64>> = batch.iter().map(|s| obs_code_input(&s.obs, &s.code)).collect();
    let net = policy.net().clone();
    let old_means = means(&net, &inputs)?;
    let scale = 1.0 / batch.len() as f64;

    // Surrogate gradient at the old parameters: mean A grad log pi.
    let mut grad = Gradient::zeros(net.num_params());
    for (i, s) in batch.iter().enumerate() {
        if s.advantage == 0.0 {
            continue;
        }
        let trace = net.forward_trace(&inputs[i])?;
        let mean = trace.output();
        let upstream: Vec<f64> = (0..mean.len())
            .map(|d| {
                let var = policy.sigma()[d] * policy.sigma()[d];
                s.advantage * (s.action.0[d] - mean[d]) / var
            })
            .collect();
        net.backward_trace(&trace, &upstream, &mut grad.values, scale)?;
    }

    let stride = fvp_stride.max(1);
    let fvp_batch: Vec<(Observation, LatentCode)> =
        batch.iter().step_by(stride).map(|s| (s.obs, s.code)).collect();
    let sigma = policy.sigma().to_vec();
    let mut probe = net.clone();
    let fvp = |v: &[f64]| {
        fisher_vector_product(policy, &fvp_batch, v, cfg.damping)
            .unwrap_or_else(|_| vec![f64::NAN; v.len()])
    };
    let evaluate = |params: &[f64], probe: &mut Mlp| -> Result<Vec<Vec<f64>>> {
        probe.set_values(params)?;
        means(probe, &inputs)
    };
    let kl_of = |new_means: &[Vec<f64>]| -> f64 {
        let mut kl = 0.0;
        for (m_new, m_old) in new_means.iter().zip(&old_means) {
            for d in 0..m_new.len() {
                kl += (m_new[d] - m_old[d]).powi(2) / (2.0 * sigma[d] * sigma[d]);
            }
        }
        kl * scale
    };
    let surrogate_of = |new_means: &[Vec<f64>]| -> f64 {
        let mut total = 0.0;
        for (i, s) in batch.iter().enumerate() {
            let lp = policy.logprob_at(&new_means[i], &s.action);
            total += (lp - old_logprobs[i]).exp() * s.advantage;
        }
        total * scale
    };
    // Each candidate is scored for KL first and surrogate second; cache the
    // forward pass between the two calls.
    let cache: std::cell::RefCell<Option<(Vec<f64>, Vec<Vec<f64>>)>> = Default::default();
    let cached_means = |params: &[f64], probe: &mut Mlp| -> Vec<Vec<f64>> {
        let mut slot = cache.borrow_mut();
        if let Some((p, m)) = slot.as_ref() {
            if p.as_slice() == params {
                return m.clone();
            }
        }
        let m = evaluate(params, probe).unwrap_or_else(|_| vec![vec![f64::NAN; 2]; inputs.len()]);
        *slot = Some((params.to_vec(), m.clone()));
        m
    };
    let probe_cell = std::cell::RefCell::new(&mut probe);
    let outcome = trpo_step(
        net.params().values(),
        &grad,
        fvp,
        |p| kl_of(&cached_means(p, &mut probe_cell.borrow_mut())),
        |p| surrogate_of(&cached_means(p, &mut probe_cell.borrow_mut())),
        cfg,
    );
    if outcome.accepted {
        policy.net_mut().set_values(&outcome.params)?;
    }
    Ok(outcome)
}
