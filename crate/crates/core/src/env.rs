//! The 2D plane environment and its circular expert mixture.
//!
//! The agent moves at constant speed in the direction it selects. It
//! observes its last five positions, oldest first.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::LatentCode;
use crate::rng::{self, domain};
use crate::sig17;

pub const HISTORY: usize = 5;
pub const OBS_DIM: usize = 2 * HISTORY;
pub const ACT_DIM: usize = 2;

/// Below this norm an action carries no direction and the previous heading is kept.
pub const MIN_ACTION_NORM: f64 = 1e-8;

/// Relative radial error at which the expert's correction equals the tangent in size.
pub const RADIAL_BAND: f64 = 0.1;

pub const DEMO_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Most recent position.
    pub fn position(&self) -> [f64; 2] {
        [self.0[OBS_DIM - 2], self.0[OBS_DIM - 1]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvAction(pub [f64; ACT_DIM]);

impl EnvAction {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub position: [f64; 2],
    pub heading: [f64; 2],
    /// Oldest first; the last entry is always `position`.
    pub history: [[f64; 2]; HISTORY],
    pub t: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Ccw,
    Cw,
}

impl Orientation {
    fn sign(self) -> f64 {
        match self {
            Orientation::Ccw => 1.0,
            Orientation::Cw => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleExpert {
    #[serde(serialize_with = "sig17::point")]
    pub center: [f64; 2],
    #[serde(serialize_with = "sig17::real")]
    pub radius: f64,
    pub orientation: Orientation,
    #[serde(serialize_with = "sig17::real")]
    pub steer_gain: f64,
    #[serde(serialize_with = "sig17::real")]
    pub noise_sigma: f64,
}

impl CircleExpert {
    /// Unit tangent (in the travel direction) at the point of the circle
    /// closest to `p`, and the outward unit radial vector.
    fn frame(&self, p: [f64; 2], fallback: [f64; 2]) -> ([f64; 2], [f64; 2], f64) {
        let d = [p[0] - self.center[0], p[1] - self.center[1]];
        let dist = d[0].hypot(d[1]);
        let s = self.orientation.sign();
        if dist < 1e-12 {
            // At the center every direction is radial; keep moving.
            let r = [fallback[1] * s, -fallback[0] * s];
            return (fallback, r, dist);
        }
        let u = [d[0] / dist, d[1] / dist];
        ([-u[1] * s, u[0] * s], u, dist)
    }

    pub fn radial_error(&self, p: [f64; 2]) -> f64 {
        ((p[0] - self.center[0]).hypot(p[1] - self.center[1]) - self.radius).abs()
    }
}

/// Start-state law for episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StartLaw {
    /// Uniform on the episode's mode circle.
    OnCircle,
    /// Every episode starts at the same point, which lies on every circle.
    Shared {
        #[serde(serialize_with = "sig17::point")]
        point: [f64; 2],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertMixture {
    pub modes: Vec<CircleExpert>,
    #[serde(serialize_with = "sig17::reals")]
    pub mode_prior: Vec<f64>,
    pub start: StartLaw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// Circles of distinct radii through a shared start point at the origin,
    /// centers spread evenly in angle.
    Petals,
    /// Circles centered at the origin, episodes starting on their own circle.
    Concentric,
}

impl ExpertMixture {
    pub fn new(modes: Vec<CircleExpert>, mode_prior: Vec<f64>, start: StartLaw) -> Result<Self> {
        let m = Self {
            modes,
            mode_prior,
            start,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn build(
        layout: Layout,
        radii: &[f64],
        steer_gain: f64,
        noise_sigma: f64,
    ) -> Result<Self> {
        let k = radii.len();
        let modes = radii
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let center = match layout {
                    Layout::Concentric => [0.0, 0.0],
                    Layout::Petals => {
                        let angle = PI / 2.0 + 2.0 * PI * i as f64 / k as f64;
                        [r * angle.cos(), r * angle.sin()]
                    }
                };
                CircleExpert {
                    center,
                    radius: r,
                    orientation: Orientation::Ccw,
                    steer_gain,
                    noise_sigma,
                }
            })
            .collect();
        let start = match layout {
            Layout::Concentric => StartLaw::OnCircle,
            Layout::Petals => StartLaw::Shared { point: [0.0, 0.0] },
        };
        Self::new(modes, vec![1.0 / k as f64; k], start)
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::InvalidArgument("mixture has no modes".into()));
        }
        if self.mode_prior.len() != self.modes.len() {
            return Err(Error::dim("mode prior", self.modes.len(), self.mode_prior.len()));
        }
        crate::models::validate_prior(&self.mode_prior)?;
        for (i, m) in self.modes.iter().enumerate() {
            if !(m.radius > 0.0 && m.radius.is_finite()) {
                return Err(Error::InvalidArgument(format!("mode {i}: radius must be positive")));
            }
            if !(m.steer_gain >= 0.0 && m.noise_sigma >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "mode {i}: steer gain and noise must be non-negative"
                )));
            }
            for other in &self.modes[..i] {
                if other.radius == m.radius {
                    return Err(Error::InvalidArgument(format!(
                        "mode {i}: radii must be pairwise distinct"
                    )));
                }
            }
        }
        if let StartLaw::Shared { point } = self.start {
            for (i, m) in self.modes.iter().enumerate() {
                if m.radial_error(point) > 1e-9 * m.radius.max(1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "shared start point is not on the circle of mode {i}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    fn mode(&self, mode: usize) -> Result<&CircleExpert> {
        self.modes.get(mode).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "mode index {mode} out of range for {} modes",
                self.modes.len()
            ))
        })
    }

    /// Distance from `p` to the closest expert circle.
    pub fn distance_to_nearest_circle(&self, p: [f64; 2]) -> f64 {
        self.modes
            .iter()
            .map(|m| m.radial_error(p))
            .fold(f64::INFINITY, f64::min)
    }
}

fn normalize(v: [f64; 2]) -> Option<[f64; 2]> {
    let n = v[0].hypot(v[1]);
    (n >= MIN_ACTION_NORM).then(|| [v[0] / n, v[1] / n])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Env2d {
    pub mixture: ExpertMixture,
    #[serde(serialize_with = "sig17::real")]
    pub speed_dt: f64,
}

impl Env2d {
    pub fn new(mixture: ExpertMixture, speed_dt: f64) -> Result<Self> {
        if !(speed_dt > 0.0 && speed_dt.is_finite()) {
            return Err(Error::InvalidArgument("speed_dt must be positive".into()));
        }
        mixture.validate()?;
        Ok(Self { mixture, speed_dt })
    }

    /// Expert rollouts pass their mode; policy rollouts pass `None` and the
    /// start is drawn from a mode sampled from the prior.
    pub fn reset<R: Rng + ?Sized>(&self, mode: Option<usize>, rng: &mut R) -> Result<EnvState> {
        let k = match mode {
            Some(k) => {
                self.mixture.mode(k)?;
                k
            }
            None => crate::models::sample_index(&self.mixture.mode_prior, rng)?,
        };
        let expert = self.mixture.mode(k)?;
        let position = match &self.mixture.start {
            StartLaw::OnCircle => {
                let angle = rng.random_range(0.0..2.0 * PI);
                [
                    expert.center[0] + expert.radius * angle.cos(),
                    expert.center[1] + expert.radius * angle.sin(),
                ]
            }
            StartLaw::Shared { point } => *point,
        };
        let (heading, _, _) = expert.frame(position, [1.0, 0.0]);
        Ok(EnvState {
            position,
            heading,
            history: [position; HISTORY],
            t: 0,
        })
    }

    pub fn step(&self, state: &EnvState, action: &EnvAction) -> Result<EnvState> {
        step(state, action, self.speed_dt)
    }
}

pub fn step(state: &EnvState, action: &EnvAction, speed_dt: f64) -> Result<EnvState> {
    if !(speed_dt > 0.0) {
        return Err(Error::InvalidArgument("speed_dt must be positive".into()));
    }
    if action.0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("action {:?}", action.0)));
    }
    let heading = normalize(action.0).unwrap_or(state.heading);
    let position = [
        state.position[0] + speed_dt * heading[0],
        state.position[1] + speed_dt * heading[1],
    ];
    let mut history = [[0.0; 2]; HISTORY];
    history[..HISTORY - 1].copy_from_slice(&state.history[1..]);
    history[HISTORY - 1] = position;
    Ok(EnvState {
        position,
        heading,
        history,
        t: state.t + 1,
    })
}

pub fn observe(state: &EnvState) -> Observation {
    let mut o = [0.0; OBS_DIM];
    for (i, p) in state.history.iter().enumerate() {
        o[2 * i] = p[0];
        o[2 * i + 1] = p[1];
    }
    Observation(o)
}

/// Tangent direction plus a radial pull back onto the circle, renormalized,
/// then perturbed by isotropic Gaussian noise.
pub fn expert_action<R: Rng + ?Sized>(
    mixture: &ExpertMixture,
    mode: usize,
    state: &EnvState,
    rng: &mut R,
) -> Result<EnvAction> {
    let expert = mixture.mode(mode)?;
    let (tangent, outward, dist) = expert.frame(state.position, state.heading);
    let pull = expert.steer_gain * (expert.radius - dist) / (RADIAL_BAND * expert.radius);
    let raw = [tangent[0] + pull * outward[0], tangent[1] + pull * outward[1]];
    let dir = normalize(raw).unwrap_or(tangent);
    let mut a = dir;
    if expert.noise_sigma > 0.0 {
        for v in &mut a {
            let z: f64 = StandardNormal.sample(rng);
            *v += expert.noise_sigma * z;
        }
    }
    Ok(EnvAction(a))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub observations: Vec<Observation>,
    pub actions: Vec<EnvAction>,
    pub code: Option<LatentCode>,
    /// Ground-truth expert mode; used for evaluation only.
    pub mode_label: Option<usize>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn positions(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.observations.iter().map(Observation::position)
    }

    pub fn final_position(&self) -> Option<[f64; 2]> {
        self.observations.last().map(Observation::position)
    }
}

pub fn expert_rollout<R: Rng + ?Sized>(
    env: &Env2d,
    mode: usize,
    steps: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    let mut state = env.reset(Some(mode), rng)?;
    let mut observations = Vec::with_capacity(steps);
    let mut actions = Vec::with_capacity(steps);
    for _ in 0..steps {
        let a = expert_action(&env.mixture, mode, &state, rng)?;
        observations.push(observe(&state));
        state = env.step(&state, &a)?;
        actions.push(a);
    }
    Ok(Trajectory {
        observations,
        actions,
        code: None,
        mode_label: Some(mode),
    })
}

/// `n_per_mode` expert trajectories per mode, grouped by mode.
pub fn generate_demos(
    env: &Env2d,
    n_per_mode: usize,
    steps: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    if n_per_mode == 0 {
        return Err(Error::InvalidArgument("n_per_mode must be at least 1".into()));
    }
    if steps < HISTORY {
        return Err(Error::InvalidArgument(format!(
            "episode length must be at least {HISTORY}"
        )));
    }
    let mut out = Vec::with_capacity(n_per_mode * env.mixture.num_modes());
    for mode in 0..env.mixture.num_modes() {
        for i in 0..n_per_mode {
            let mut rng = rng::stream(seed, domain::DEMOS, (mode * n_per_mode + i) as u64);
            out.push(expert_rollout(env, mode, steps, &mut rng)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct DemoRecord {
    mode_label: Option<usize>,
    #[serde(serialize_with = "sig17::rows")]
    observations: Vec<Vec<f64>>,
    #[serde(serialize_with = "sig17::rows")]
    actions: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DemoFile {
    format_version: u32,
    env: Env2d,
    steps: usize,
    seed: u64,
    trajectories: Vec<DemoRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoSet {
    pub env: Env2d,
    pub steps: usize,
    pub seed: u64,
    pub trajectories: Vec<Trajectory>,
}

fn fixed<const N: usize>(row: &[f64], what: &'static str) -> Result<[f64; N]> {
    row.try_into().map_err(|_| Error::dim(what, N, row.len()))
}

impl DemoSet {
    pub fn to_json(&self) -> Result<String> {
        let file = DemoFile {
            format_version: DEMO_FORMAT_VERSION,
            env: self.env.clone(),
            steps: self.steps,
            seed: self.seed,
            trajectories: self
                .trajectories
                .iter()
                .map(|t| DemoRecord {
                    mode_label: t.mode_label,
                    observations: t.observations.iter().map(|o| o.0.to_vec()).collect(),
                    actions: t.actions.iter().map(|a| a.0.to_vec()).collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::InvalidArgument(e.to_string()))
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let parse = |message: String| Error::Parse {
            path: path.to_path_buf(),
            message,
        };
        let probe: serde_json::Value =
            serde_json::from_str(text).map_err(|e| parse(e.to_string()))?;
        let version = probe
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| parse("missing format_version".into()))?;
        if version != u64::from(DEMO_FORMAT_VERSION) {
            return Err(Error::Version {
                path: path.to_path_buf(),
                expected: DEMO_FORMAT_VERSION,
                found: version as u32,
            });
        }
        let file: DemoFile = serde_json::from_str(text).map_err(|e| parse(e.to_string()))?;
        file.env.mixture.validate()?;
        let mut trajectories = Vec::with_capacity(file.trajectories.len());
        for rec in file.trajectories {
            if rec.observations.len() != rec.actions.len() {
                return Err(parse("observation and action counts differ".into()));
            }
            trajectories.push(Trajectory {
                observations: rec
                    .observations
                    .iter()
                    .map(|r| fixed::<OBS_DIM>(r, "observation").map(Observation))
                    .collect::<Result<_>>()?,
                actions: rec
                    .actions
                    .iter()
                    .map(|r| fixed::<ACT_DIM>(r, "action").map(EnvAction))
                    .collect::<Result<_>>()?,
                code: None,
                mode_label: rec.mode_label,
            });
        }
        Ok(Self {
            env: file.env,
            steps: file.steps,
            seed: file.seed,
            trajectories,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }
}
