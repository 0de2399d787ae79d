//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every entry point returns a JSON string the page draws on a canvas:
//! `{"circles": [...], "trajectories": [{"code", "mode", "points"}]}`.
//! The `*_json` functions are plain Rust so they can be tested natively;
//! the `#[wasm_bindgen]` wrappers only convert errors.

use infogail::checkpoint::policy_from_json;
use infogail::config::EnvConfig;
use infogail::env::{generate_demos, Env2d, Layout, Trajectory};
use infogail::eval::eval_rollouts;
use infogail::models::GaussianPolicy;
use infogail::optim::AdamConfig;
use infogail::training::bc_pretrain;
use infogail::Result;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const MAX_TRAJECTORIES: usize = 500;
const MAX_STEPS: usize = 400;

fn env_for(layout: &str, noise: f64) -> Result<(EnvConfig, Env2d)> {
    let layout = match layout {
        "petals" => Layout::Petals,
        "concentric" => Layout::Concentric,
        other => {
            return Err(infogail::Error::InvalidArgument(format!(
                "unknown layout `{other}` (expected petals or concentric)"
            )))
        }
    };
    let cfg = EnvConfig {
        layout,
        noise_sigma: noise,
        ..EnvConfig::default()
    };
    let env = cfg.build()?;
    Ok((cfg, env))
}

fn check_sizes(n: usize, steps: usize) -> Result<()> {
    if n == 0 || n > MAX_TRAJECTORIES || steps > MAX_STEPS {
        return Err(infogail::Error::InvalidArgument(format!(
            "need 1..={MAX_TRAJECTORIES} trajectories of at most {MAX_STEPS} steps"
        )));
    }
    Ok(())
}

fn scene(env: &Env2d, trajs: &[Trajectory]) -> String {
    let circles: Vec<Value> = env
        .mixture
        .modes
        .iter()
        .map(|m| json!({"center": m.center, "radius": m.radius}))
        .collect();
    let trajectories: Vec<Value> = trajs
        .iter()
        .map(|t| {
            json!({
                "code": t.code.map(|c| c.index()),
                "mode": t.mode_label,
                "points": t.positions().collect::<Vec<_>>(),
            })
        })
        .collect();
    json!({"circles": circles, "trajectories": trajectories}).to_string()
}

/// Expert demonstrations for each mode.
pub fn expert_demos_json(
    layout: &str,
    n_per_mode: usize,
    steps: usize,
    noise: f64,
    seed: u64,
) -> Result<String> {
    let (_, env) = env_for(layout, noise)?;
    check_sizes(n_per_mode * env.mixture.num_modes(), steps)?;
    let demos = generate_demos(&env, n_per_mode, steps, seed)?;
    Ok(scene(&env, &demos))
}

/// Behavior cloning on fresh demos, then policy rollouts with codes cycled.
pub fn bc_rollouts_json(
    layout: &str,
    n_per_mode: usize,
    epochs: usize,
    n_rollouts: usize,
    seed: u64,
) -> Result<String> {
    let (cfg, env) = env_for(layout, EnvConfig::default().noise_sigma)?;
    check_sizes(n_rollouts, cfg.steps)?;
    check_sizes(n_per_mode * env.mixture.num_modes(), cfg.steps)?;
    let demos = generate_demos(&env, n_per_mode, cfg.steps, seed)?;
    let k = env.mixture.num_modes();
    let mut policy = GaussianPolicy::new(&[32, 32], k, 0.1, seed)?;
    let adam = AdamConfig {
        lr: 1e-3,
        ..AdamConfig::default()
    };
    bc_pretrain(&mut policy, &demos, epochs.min(200), 64, adam, seed)?;
    let rollouts = eval_rollouts(&policy, &env, n_rollouts, cfg.steps, seed)?;
    Ok(scene(&env, &rollouts))
}

/// Rollouts of a saved `policy.json` checkpoint in the given layout.
pub fn checkpoint_rollouts_json(
    policy_checkpoint: &str,
    layout: &str,
    n_rollouts: usize,
    steps: usize,
    seed: u64,
) -> Result<String> {
    let policy = policy_from_json(policy_checkpoint, std::path::Path::new("policy.json"))?;
    let (_, env) = env_for(layout, EnvConfig::default().noise_sigma)?;
    check_sizes(n_rollouts, steps)?;
    let rollouts = eval_rollouts(&policy, &env, n_rollouts, steps, seed)?;
    Ok(scene(&env, &rollouts))
}

fn js(r: Result<String>) -> std::result::Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = expertDemos)]
pub fn expert_demos(
    layout: &str,
    n_per_mode: usize,
    steps: usize,
    noise: f64,
    seed: u32,
) -> std::result::Result<String, JsError> {
    js(expert_demos_json(layout, n_per_mode, steps, noise, seed.into()))
}

#[wasm_bindgen(js_name = bcRollouts)]
pub fn bc_rollouts(
    layout: &str,
    n_per_mode: usize,
    epochs: usize,
    n_rollouts: usize,
    seed: u32,
) -> std::result::Result<String, JsError> {
    js(bc_rollouts_json(layout, n_per_mode, epochs, n_rollouts, seed.into()))
}

#[wasm_bindgen(js_name = checkpointRollouts)]
pub fn checkpoint_rollouts(
    policy_checkpoint: &str,
    layout: &str,
    n_rollouts: usize,
    steps: usize,
    seed: u32,
) -> std::result::Result<String, JsError> {
    js(checkpoint_rollouts_json(policy_checkpoint, layout, n_rollouts, steps, seed.into()))
}
