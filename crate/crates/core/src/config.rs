//! Run configuration: every tunable in one place, loaded from TOML.
//!
//! Missing keys take the defaults below; unknown keys are rejected so
//! typos surface immediately.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{Env2d, ExpertMixture, Layout};
use crate::error::{Error, Result};
use crate::models::Objective;
use crate::optim::{AdamConfig, RmspropConfig, TrpoConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub layout: Layout,
    pub radii: Vec<f64>,
    pub steer_gain: f64,
    pub noise_sigma: f64,
    pub speed_dt: f64,
    /// Episode length T.
    pub steps: usize,
    pub demos_per_mode: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            layout: Layout::Petals,
            radii: vec![0.5, 1.0, 1.5],
            steer_gain: 1.0,
            noise_sigma: 0.1,
            speed_dt: 0.05,
            steps: 50,
            demos_per_mode: 20,
        }
    }
}

impl EnvConfig {
    pub fn build(&self) -> Result<Env2d> {
        let mixture =
            ExpertMixture::build(self.layout, &self.radii, self.steer_gain, self.noise_sigma)?;
        Env2d::new(mixture, self.speed_dt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub kl_radius: f64,
    pub cg_iters: usize,
    pub cg_tol: f64,
    pub damping: f64,
    pub backtrack_ratio: f64,
    pub max_backtracks: usize,
    /// Use every n-th rollout pair in Fisher-vector products.
    pub fvp_stride: usize,
    /// Generic Adam rate; the loop's three Adam users take the per-model
    /// rates below.
    pub adam_lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub posterior_lr: f64,
    pub bc_lr: f64,
    pub baseline_lr: f64,
    pub rmsprop_lr: f64,
    pub rmsprop_rho: f64,
    pub rmsprop_eps: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        let trpo = TrpoConfig::default();
        let adam = AdamConfig::default();
        let rms = RmspropConfig::default();
        Self {
            kl_radius: trpo.kl_radius,
            cg_iters: trpo.cg_iters,
            cg_tol: trpo.cg_tol,
            damping: trpo.damping,
            backtrack_ratio: trpo.backtrack_ratio,
            max_backtracks: trpo.max_backtracks,
            fvp_stride: 4,
            adam_lr: adam.lr,
            adam_beta1: adam.beta1,
            adam_beta2: adam.beta2,
            adam_eps: adam.eps,
            posterior_lr: 1e-3,
            bc_lr: 1e-3,
            baseline_lr: 1e-3,
            // Faster than the optimizer's own default: with the clipped critic
            // at 5e-5 the adversarial reward stays too weak to fix BC's drift.
            rmsprop_lr: 5e-3,
            rmsprop_rho: rms.rho,
            rmsprop_eps: rms.eps,
        }
    }
}

impl OptimConfig {
    pub fn trpo(&self) -> TrpoConfig {
        TrpoConfig {
            kl_radius: self.kl_radius,
            cg_iters: self.cg_iters,
            cg_tol: self.cg_tol,
            damping: self.damping,
            backtrack_ratio: self.backtrack_ratio,
            max_backtracks: self.max_backtracks,
        }
    }

    pub fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn rmsprop(&self) -> RmspropConfig {
        RmspropConfig {
            lr: self.rmsprop_lr,
            rho: self.rmsprop_rho,
            eps: self.rmsprop_eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopConfig {
    pub gamma: f64,
    /// Weight of the state-based reward augmentation.
    pub lambda0: f64,
    /// Weight of the mutual-information term; 0 gives plain GAIL.
    pub lambda1: f64,
    /// Causal-entropy weight. Inert: the policy entropy is constant.
    pub lambda2: f64,
    pub objective: Objective,
    pub clip_bound: f64,
    pub use_replay: bool,
    pub buffer_capacity: usize,
    pub rollouts_per_iter: usize,
    pub batch_size: usize,
    pub iters: usize,
    pub bc_epochs: usize,
    pub bc_batch_size: usize,
    pub critic_steps: usize,
    pub posterior_steps: usize,
    pub baseline_steps: usize,
    pub policy_sigma: f64,
    pub hidden: Vec<usize>,
    pub baseline_hidden: Vec<usize>,
    /// Checkpoint period in iterations; 0 writes only the final checkpoint.
    pub checkpoint_every: usize,
    pub workers: usize,
    /// Fill the `wall_ms` metrics column. Off by default so logs are reproducible.
    pub record_wall_ms: bool,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda0: 0.0,
            // Larger weights let log Q dominate the ~1e-3 critic outputs and
            // the policy trades track fidelity for separability.
            lambda1: 0.01,
            lambda2: 0.0,
            objective: Objective::Wgan,
            clip_bound: 0.01,
            use_replay: false,
            buffer_capacity: 600,
            rollouts_per_iter: 60,
            batch_size: 512,
            iters: 300,
            bc_epochs: 50,
            bc_batch_size: 64,
            critic_steps: 5,
            posterior_steps: 1,
            baseline_steps: 20,
            policy_sigma: 0.1,
            hidden: vec![64, 64],
            baseline_hidden: vec![64],
            checkpoint_every: 0,
            workers: 1,
            record_wall_ms: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub seed: u64,
    pub env: EnvConfig,
    pub optim: OptimConfig,
    pub training: LoopConfig,
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be positive, got {v}")))
    }
}

fn non_negative(key: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be non-negative, got {v}")))
    }
}

fn at_least(key: &str, v: usize, min: usize) -> Result<()> {
    if v >= min {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be at least {min}, got {v}")))
    }
}

impl TrainConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string().replace('\n', " ").trim().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.training;
        if !(t.gamma > 0.0 && t.gamma < 1.0) {
            return Err(Error::config(
                "training.gamma",
                format!("must lie in (0, 1), got {}", t.gamma),
            ));
        }
        non_negative("training.lambda0", t.lambda0)?;
        non_negative("training.lambda1", t.lambda1)?;
        non_negative("training.lambda2", t.lambda2)?;
        positive("training.clip_bound", t.clip_bound)?;
        positive("training.policy_sigma", t.policy_sigma)?;
        at_least("training.buffer_capacity", t.buffer_capacity, 1)?;
        at_least("training.rollouts_per_iter", t.rollouts_per_iter, 1)?;
        at_least("training.batch_size", t.batch_size, 1)?;
        at_least("training.bc_batch_size", t.bc_batch_size, 1)?;
        at_least("training.workers", t.workers, 1)?;
        if t.hidden.contains(&0) || t.baseline_hidden.contains(&0) {
            return Err(Error::config("training.hidden", "layer widths must be positive"));
        }

        let o = &self.optim;
        self.optim.trpo().validate()?;
        at_least("optim.fvp_stride", o.fvp_stride, 1)?;
        for (key, v) in [
            ("optim.adam_lr", o.adam_lr),
            ("optim.posterior_lr", o.posterior_lr),
            ("optim.bc_lr", o.bc_lr),
            ("optim.baseline_lr", o.baseline_lr),
            ("optim.rmsprop_lr", o.rmsprop_lr),
        ] {
            positive(key, v)?;
        }
        for (key, v) in [
            ("optim.adam_beta1", o.adam_beta1),
            ("optim.adam_beta2", o.adam_beta2),
            ("optim.rmsprop_rho", o.rmsprop_rho),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::config(key, format!("must lie in [0, 1), got {v}")));
            }
        }
        non_negative("optim.adam_eps", o.adam_eps)?;
        non_negative("optim.rmsprop_eps", o.rmsprop_eps)?;

        let e = &self.env;
        positive("env.speed_dt", e.speed_dt)?;
        non_negative("env.steer_gain", e.steer_gain)?;
        non_negative("env.noise_sigma", e.noise_sigma)?;
        at_least("env.steps", e.steps, crate::env::HISTORY)?;
        at_least("env.demos_per_mode", e.demos_per_mode, 1)?;
        if e.radii.len() < 2 {
            return Err(Error::config("env.radii", "need at least two modes"));
        }
        e.build()
            .map_err(|err| Error::config("env.radii", err.to_string()))?;
        Ok(())
    }

    pub fn num_codes(&self) -> usize {
        self.env.radii.len()
    }

    /// Uniform prior over the latent codes.
    pub fn code_prior(&self) -> Vec<f64> {
        let k = self.num_codes();
        vec![1.0 / k as f64; k]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<TrainConfig> {
        TrainConfig::from_toml_str(text, Path::new("test.toml"))
    }

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = parse("").unwrap();
        assert_eq!(cfg, TrainConfig::default());
        assert_eq!(cfg.training.lambda1, 0.01);
        assert_eq!(cfg.training.gamma, 0.99);
        assert_eq!(cfg.training.objective, Objective::Wgan);
        assert!(!cfg.training.use_replay);
    }

    #[test]
    fn sections_override_defaults() {
        let cfg = parse(
            "seed = 4\n[training]\nlambda1 = 0.5\nobjective = \"gan\"\n[env]\nsteps = 20\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.training.lambda1, 0.5);
        assert_eq!(cfg.training.objective, Objective::Gan);
        assert_eq!(cfg.env.steps, 20);
        assert_eq!(cfg.optim, OptimConfig::default());
    }

    #[test]
    fn bad_gamma_names_key() {
        let err = parse("[training]\ngamma = 1.5\n").unwrap_err();
        match err {
            Error::Config { key, .. } => assert_eq!(key, "training.gamma"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn unknown_key_is_an_error_with_location() {
        let err = parse("[training]\nlamda1 = 0.5\n").unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Parse { .. }));
        assert!(msg.contains("lamda1"), "{msg}");
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = TrainConfig::default();
        cfg.training.lambda0 = 0.25;
        cfg.env.layout = Layout::Concentric;
        let back = parse(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }
}
