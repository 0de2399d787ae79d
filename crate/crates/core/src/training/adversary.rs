use super::buffer::Pair;
use crate::error::{Error, Result};
use crate::models::{obs_action_input, sigmoid, softplus, Critic, Objective, Posterior};
use crate::nn::Gradient;
use crate::optim::{clip_params, AdamState, RmspropState};

fn check_batches(gen: &[Pair], expert: &[Pair]) -> Result<()> {
    if gen.is_empty() || expert.is_empty() {
        return Err(Error::InvalidArgument("critic batches must be non-empty".into()));
    }
    if gen.len() != expert.len() {
        return Err(Error::dim("expert batch", gen.len(), expert.len()));
    }
    Ok(())
}

/// WGAN: `mean_gen D - mean_exp D`. GAN: `mean_gen log D + mean_exp log(1 - D)`.
///
/// The critic is pushed up on generated pairs and down on expert pairs.
pub fn critic_objective(critic: &Critic, gen: &[Pair], expert: &[Pair]) -> Result<f64> {
    check_batches(gen, expert)?;
    let mean = |pairs: &[Pair], f: &dyn Fn(f64) -> f64| -> Result<f64> {
        let mut s = 0.0;
        for p in pairs {
            s += f(critic.logit(&p.obs, &p.action)?);
        }
        Ok(s / pairs.len() as f64)
    };
    Ok(match critic.objective() {
        Objective::Wgan => mean(gen, &|z| z)? - mean(expert, &|z| z)?,
        Objective::Gan => mean(gen, &|z| -softplus(-z))? + mean(expert, &|z| -softplus(z))?,
    })
}

/// Objective value and its gradient with respect to the critic parameters.
pub fn critic_objective_grad(
    critic: &Critic,
    gen: &[Pair],
    expert: &[Pair],
) -> Result<(f64, Gradient)> {
    check_batches(gen, expert)?;
    let net = critic.net();
    let scale = 1.0 / gen.len() as f64;
    // Each side is accumulated separately and subtracted at the end, so
    // identical batches cancel exactly.
    let side = |pairs: &[Pair], from_policy: bool| -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; net.num_params()];
        let mut value = 0.0;
        for p in pairs {
            let trace = net.forward_trace(&obs_action_input(&p.obs, &p.action))?;
            let z = trace.output()[0];
            let (v, dz) = match (critic.objective(), from_policy) {
                (Objective::Wgan, _) => (z, 1.0),
                (Objective::Gan, true) => (-softplus(-z), 1.0 - sigmoid(z)),
                (Objective::Gan, false) => (softplus(z), sigmoid(z)),
            };
            value += v * scale;
            net.backward_trace(&trace, &[dz], &mut grad, scale)?;
        }
        Ok((value, grad))
    };
    let (gen_value, gen_grad) = side(gen, true)?;
    let (exp_value, exp_grad) = side(expert, false)?;
    let value = gen_value - exp_value;
    let grad = Gradient {
        values: gen_grad.iter().zip(&exp_grad).map(|(a, b)| a - b).collect(),
    };
    Ok((value, grad))
}

/// One RMSprop ascent step on the critic objective; WGAN critics are then
/// clipped to `[-clip_bound, clip_bound]`. Returns the objective before the step.
pub fn update_critic(
    critic: &mut Critic,
    opt: &mut RmspropState,
    gen: &[Pair],
    expert: &[Pair],
    clip_bound: f64,
) -> Result<f64> {
    let (value, grad) = critic_objective_grad(critic, gen, expert)?;
    if !value.is_finite() {
        return Err(Error::NonFinite("critic objective".into()));
    }
    let params = critic.net_mut().params_mut().values_mut();
    opt.step(params, &grad, true)?;
    if critic.objective() == Objective::Wgan {
        clip_params(critic.net_mut().params_mut().values_mut(), clip_bound)?;
    }
    Ok(value)
}

/// `-weight * mean log Q(c|s,a)` and its gradient.
pub fn posterior_loss_grad(
    posterior: &Posterior,
    batch: &[Pair],
    weight: f64,
) -> Result<(f64, Gradient)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty posterior batch".into()));
    }
    let mut grad = Gradient::zeros(posterior.net().num_params());
    let mut loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for p in batch {
        let (lq, g) = posterior.logprob_grad(&p.obs, &p.action, &p.code()?)?;
        loss -= weight * lq * scale;
        for (acc, gi) in grad.values.iter_mut().zip(&g.values) {
            *acc -= weight * scale * gi;
        }
    }
    Ok((loss, grad))
}

/// One Adam descent step on `-weight * mean log Q(c|s,a)`, raising the
/// likelihood of the codes used at generation time. Returns the mean
/// `log Q` before the step. `weight == 0` leaves the posterior untouched.
pub fn update_posterior(
    posterior: &mut Posterior,
    opt: &mut AdamState,
    batch: &[Pair],
    weight: f64,
) -> Result<f64> {
    let (_, grad) = posterior_loss_grad(posterior, batch, 1.0)?;
    let mut mean_log_q = 0.0;
    for p in batch {
        mean_log_q += posterior.logprob(&p.obs, &p.action, &p.code()?)?;
    }
    mean_log_q /= batch.len() as f64;
    if !mean_log_q.is_finite() {
        return Err(Error::NonFinite("posterior log-likelihood".into()));
    }
    if weight != 0.0 {
        let mut scaled = grad;
        scaled.scale(weight);
        opt.step(posterior.net_mut().params_mut().values_mut(), &scaled, true)?;
    }
    Ok(mean_log_q)
}
