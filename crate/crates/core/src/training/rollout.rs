use std::thread;

use crate::env::{observe, Env2d, Trajectory};
use crate::error::Result;
use rand::Rng;

use crate::models::{sample_code, GaussianPolicy, LatentCode};
use crate::rng::{self, domain};

fn one_rollout(
    policy: &GaussianPolicy,
    env: &Env2d,
    prior: &[f64],
    steps: usize,
    seed: u64,
    index: usize,
) -> Result<Trajectory> {
    let mut rng = rng::stream(seed, domain::ROLLOUT, index as u64);
    let code = sample_code(prior, &mut rng)?;
    rollout_with_code(policy, env, code, steps, &mut rng)
}

/// One episode of `steps` pairs with `code` held fixed.
pub fn rollout_with_code<R: Rng + ?Sized>(
    policy: &GaussianPolicy,
    env: &Env2d,
    code: LatentCode,
    steps: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    let mut state = env.reset(None, rng)?;
    let mut observations = Vec::with_capacity(steps);
    let mut actions = Vec::with_capacity(steps);
    for _ in 0..steps {
        let obs = observe(&state);
        let a = policy.act(&obs, &code, rng)?;
        state = env.step(&state, &a)?;
        observations.push(obs);
        actions.push(a);
    }
    Ok(Trajectory {
        observations,
        actions,
        code: Some(code),
        mode_label: None,
    })
}

/// `n` policy rollouts of `steps` pairs. Each samples one code from the
/// prior and holds it for the whole episode.
///
/// Rollout `i` draws from its own stream of `seed`, so the result is the
/// same for any `workers` count.
pub fn collect_rollouts(
    policy: &GaussianPolicy,
    env: &Env2d,
    prior: &[f64],
    n: usize,
    steps: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<Trajectory>> {
    if n == 0 {
        return Err(crate::error::Error::InvalidArgument(
            "need at least one rollout".into(),
        ));
    }
    let workers = workers.clamp(1, n);
    if workers == 1 {
        return (0..n)
            .map(|i| one_rollout(policy, env, prior, steps, seed, i))
            .collect();
    }
    let chunk = n.div_ceil(workers);
    let parts: Vec<Result<Vec<Trajectory>>> = thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                s.spawn(move || {
                    (w * chunk..((w + 1) * chunk).min(n))
                        .map(|i| one_rollout(policy, env, prior, steps, seed, i))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("rollout worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(n);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}
