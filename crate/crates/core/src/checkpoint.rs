//! Per-model checkpoint files and the run manifest.
//!
//! Each model is one JSON document holding its role, architecture and flat
//! parameters at 17 significant digits, which round-trips `f64` exactly.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::models::{Baseline, Critic, GaussianPolicy, Objective, Posterior};
use crate::nn::{Activation, Mlp};
use crate::sig17;
use crate::training::{Algo, Models};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "run.json";
pub const REVISION: &str = concat!("infogail ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Policy,
    Critic,
    Posterior,
    Baseline,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Policy, Role::Critic, Role::Posterior, Role::Baseline];

    pub fn name(&self) -> &'static str {
        match self {
            Role::Policy => "policy",
            Role::Critic => "critic",
            Role::Posterior => "posterior",
            Role::Baseline => "baseline",
        }
    }

    pub fn file_name(&self) -> String {
        format!("{}.json", self.name())
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Serialize)]
struct CheckpointOut<'a> {
    format_version: u32,
    role: Role,
    layer_sizes: &'a [usize],
    activation: Activation,
    #[serde(serialize_with = "sig17::opt_reals", skip_serializing_if = "Option::is_none")]
    sigma: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    objective: Option<Objective>,
    k: usize,
    #[serde(serialize_with = "sig17::reals")]
    params: &'a [f64],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointIn {
    #[serde(rename = "format_version")]
    _format_version: u32,
    role: Role,
    layer_sizes: Vec<usize>,
    activation: Activation,
    #[serde(default)]
    sigma: Option<Vec<f64>>,
    #[serde(default)]
    objective: Option<Objective>,
    k: usize,
    params: Vec<f64>,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: Option<u32>,
}

fn to_json(role: Role, net: &Mlp, sigma: Option<Vec<f64>>, objective: Option<Objective>, k: usize) -> Result<String> {
    let doc = CheckpointOut {
        format_version: CHECKPOINT_FORMAT_VERSION,
        role,
        layer_sizes: net.layer_sizes(),
        activation: net.activation(),
        sigma,
        objective,
        k,
        params: net.params().values(),
    };
    let mut s = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::InvalidArgument(format!("cannot serialize {role} checkpoint: {e}")))?;
    s.push('\n');
    Ok(s)
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn policy_json(p: &GaussianPolicy) -> Result<String> {
    to_json(Role::Policy, p.net(), Some(p.sigma().to_vec()), None, p.k())
}

pub fn critic_json(c: &Critic) -> Result<String> {
    to_json(Role::Critic, c.net(), None, Some(c.objective()), 0)
}

pub fn posterior_json(q: &Posterior) -> Result<String> {
    to_json(Role::Posterior, q.net(), None, None, q.k())
}

pub fn baseline_json(b: &Baseline) -> Result<String> {
    to_json(Role::Baseline, b.net(), None, None, b.k())
}

fn parse(text: &str, path: &Path, role: Role) -> Result<CheckpointIn> {
    let parse_err = |e: serde_json::Error| Error::Parse {
        path: path.to_path_buf(),
        message: format!("line {}: {e}", e.line()),
    };
    let probe: VersionProbe = serde_json::from_str(text).map_err(parse_err)?;
    match probe.format_version {
        Some(CHECKPOINT_FORMAT_VERSION) => {}
        Some(found) => {
            return Err(Error::Version {
                path: path.to_path_buf(),
                expected: CHECKPOINT_FORMAT_VERSION,
                found,
            })
        }
        None => return Err(Error::Missing(format!("format_version in {}", path.display()))),
    }
    let doc: CheckpointIn = serde_json::from_str(text).map_err(parse_err)?;
    if doc.role != role {
        return Err(Error::InvalidArgument(format!(
            "{} holds a {} checkpoint, expected {role}",
            path.display(),
            doc.role
        )));
    }
    Ok(doc)
}

fn net_of(doc: &CheckpointIn) -> Result<Mlp> {
    Mlp::from_params(&doc.layer_sizes, doc.activation, doc.params.clone())
}

pub fn policy_from_json(text: &str, path: &Path) -> Result<GaussianPolicy> {
    let doc = parse(text, path, Role::Policy)?;
    let sigma = doc
        .sigma
        .clone()
        .ok_or_else(|| Error::Missing(format!("sigma in {}", path.display())))?;
    GaussianPolicy::from_parts(net_of(&doc)?, sigma, doc.k)
}

pub fn critic_from_json(text: &str, path: &Path) -> Result<Critic> {
    let doc = parse(text, path, Role::Critic)?;
    let objective = doc
        .objective
        .ok_or_else(|| Error::Missing(format!("objective in {}", path.display())))?;
    Critic::from_parts(net_of(&doc)?, objective)
}

pub fn posterior_from_json(text: &str, path: &Path) -> Result<Posterior> {
    Posterior::from_parts(net_of(&parse(text, path, Role::Posterior)?)?)
}

pub fn baseline_from_json(text: &str, path: &Path) -> Result<Baseline> {
    let doc = parse(text, path, Role::Baseline)?;
    Baseline::from_parts(net_of(&doc)?, doc.k)
}

/// Writes one file per present model into `dir`; returns role → file name.
pub fn save_models(models: &Models, dir: &Path) -> Result<BTreeMap<Role, String>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = BTreeMap::new();
    let mut put = |role: Role, text: Result<String>| -> Result<()> {
        let name = role.file_name();
        write(&dir.join(&name), &text?)?;
        files.insert(role, name);
        Ok(())
    };
    put(Role::Policy, policy_json(&models.policy))?;
    if let Some(c) = &models.critic {
        put(Role::Critic, critic_json(c))?;
    }
    if let Some(q) = &models.posterior {
        put(Role::Posterior, posterior_json(q))?;
    }
    if let Some(b) = &models.baseline {
        put(Role::Baseline, baseline_json(b))?;
    }
    Ok(files)
}

fn read(path: &Path, role: Role) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => {
            Error::Missing(format!("{role} checkpoint {}", path.display()))
        }
        _ => Error::io(path, e),
    })
}

/// Reproduces everything needed to rerun or evaluate a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub format_version: u32,
    pub revision: String,
    pub algo: Algo,
    pub seed: u64,
    pub config: TrainConfig,
    pub checkpoints: BTreeMap<Role, String>,
    pub metrics: Option<String>,
    pub demos: Option<String>,
}

impl RunManifest {
    pub fn save(&self, dir: &Path) -> Result<()> {
        for name in self.checkpoints.values().chain(self.metrics.iter()) {
            if !dir.join(name).exists() {
                return Err(Error::Missing(format!("manifest entry {name} in {}", dir.display())));
            }
        }
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidArgument(format!("cannot serialize manifest: {e}")))?;
        text.push('\n');
        write(&dir.join(MANIFEST_FILE), &text)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::Missing(format!("run manifest {}", path.display())),
            _ => Error::io(&path, e),
        })?;
        let parse_err = |e: serde_json::Error| Error::Parse {
            path: path.clone(),
            message: format!("line {}: {e}", e.line()),
        };
        let probe: VersionProbe = serde_json::from_str(&text).map_err(parse_err)?;
        if probe.format_version != Some(CHECKPOINT_FORMAT_VERSION) {
            return Err(Error::Version {
                path: path.clone(),
                expected: CHECKPOINT_FORMAT_VERSION,
                found: probe.format_version.unwrap_or(0),
            });
        }
        serde_json::from_str(&text).map_err(parse_err)
    }
}

/// Loads every model the manifest in `dir` lists.
pub fn load_models(dir: &Path) -> Result<(RunManifest, Models)> {
    let manifest = RunManifest::load(dir)?;
    let path_of = |role: Role| -> Option<PathBuf> { manifest.checkpoints.get(&role).map(|f| dir.join(f)) };
    let policy_path = path_of(Role::Policy)
        .ok_or_else(|| Error::Missing("policy checkpoint entry in the run manifest".into()))?;
    let policy = policy_from_json(&read(&policy_path, Role::Policy)?, &policy_path)?;
    let critic = match path_of(Role::Critic) {
        Some(p) => Some(critic_from_json(&read(&p, Role::Critic)?, &p)?),
        None => None,
    };
    let posterior = match path_of(Role::Posterior) {
        Some(p) => Some(posterior_from_json(&read(&p, Role::Posterior)?, &p)?),
        None => None,
    };
    let baseline = match path_of(Role::Baseline) {
        Some(p) => Some(baseline_from_json(&read(&p, Role::Baseline)?, &p)?),
        None => None,
    };
    Ok((
        manifest,
        Models {
            policy,
            critic,
            posterior,
            baseline,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvAction, Observation};
    use crate::models::LatentCode;

    fn models() -> Models {
        Models {
            policy: GaussianPolicy::new(&[16, 16], 3, 0.1, 1).unwrap(),
            critic: Some(Critic::new(&[16], Objective::Wgan, 2).unwrap()),
            posterior: Some(Posterior::new(&[16], 3, 3).unwrap()),
            baseline: Some(Baseline::new(&[8], 3, 4).unwrap()),
        }
    }

    fn manifest(files: BTreeMap<Role, String>) -> RunManifest {
        RunManifest {
            format_version: CHECKPOINT_FORMAT_VERSION,
            revision: REVISION.into(),
            algo: Algo::Infogail,
            seed: 5,
            config: TrainConfig::default(),
            checkpoints: files,
            metrics: None,
            demos: None,
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let m = models();
        let files = save_models(&m, dir.path()).unwrap();
        manifest(files).save(dir.path()).unwrap();
        let (back_manifest, back) = load_models(dir.path()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back_manifest.config, TrainConfig::default());
        let obs = Observation([0.3, -0.1, 0.2, 0.0, 0.5, 0.7, -0.2, 0.1, 0.9, -0.4]);
        let code = LatentCode::new(1, 3).unwrap();
        let a = m.policy.mean(&obs, &code).unwrap();
        let b = back.policy.mean(&obs, &code).unwrap();
        assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
        let act = EnvAction([0.3, 0.4]);
        assert_eq!(
            m.critic.as_ref().unwrap().logit(&obs, &act).unwrap().to_bits(),
            back.critic.as_ref().unwrap().logit(&obs, &act).unwrap().to_bits()
        );
    }

    #[test]
    fn tampered_version_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let files = save_models(&models(), dir.path()).unwrap();
        manifest(files).save(dir.path()).unwrap();
        let p = dir.path().join("posterior.json");
        let text = std::fs::read_to_string(&p).unwrap();
        std::fs::write(&p, text.replace("\"format_version\": 1", "\"format_version\": 2")).unwrap();
        assert!(matches!(load_models(dir.path()), Err(Error::Version { found: 2, .. })));
    }

    #[test]
    fn missing_role_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let files = save_models(&models(), dir.path()).unwrap();
        manifest(files).save(dir.path()).unwrap();
        std::fs::remove_file(dir.path().join("critic.json")).unwrap();
        let err = load_models(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Missing(_)));
        assert!(err.to_string().contains("critic"), "{err}");
    }

    #[test]
    fn policy_only_set_loads() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = models();
        m.critic = None;
        m.posterior = None;
        m.baseline = None;
        let files = save_models(&m, dir.path()).unwrap();
        assert_eq!(files.len(), 1);
        manifest(files).save(dir.path()).unwrap();
        assert_eq!(load_models(dir.path()).unwrap().1, m);
    }

    #[test]
    fn manifest_rejects_dangling_paths() {
        let dir = tempfile::tempdir().unwrap();
        let mut files = BTreeMap::new();
        files.insert(Role::Policy, "policy.json".to_string());
        assert!(manifest(files).save(dir.path()).is_err());
    }
}
