//! Mode-recovery accuracy, the information bound, and trajectory export
//! and plotting.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::env::{Env2d, Trajectory};
use crate::error::{Error, Result};
use crate::models::{validate_prior, GaussianPolicy, LatentCode, Posterior};
use crate::rng::{self, domain};
use crate::sig17;
use crate::training::{rollout_with_code, Models, Pair};

/// Largest code count for exhaustive permutation matching.
pub const MAX_PERMUTED_CODES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeAccuracy {
    #[serde(serialize_with = "sig17::real")]
    pub accuracy_best_perm: f64,
    #[serde(serialize_with = "sig17::real")]
    pub accuracy_identity: f64,
    /// `permutation[code] = mode`.
    pub permutation: Vec<usize>,
    /// `per_mode_confusion[mode][code]` pair counts.
    pub per_mode_confusion: Vec<Vec<u64>>,
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(k), &mut vec![false; k], &mut out);
    out
}

/// Accuracy of a confusion matrix under the best code-to-mode relabeling.
/// Among equally good permutations the lexicographically first wins.
pub fn best_permutation(confusion: &[Vec<u64>]) -> Result<(f64, Vec<usize>)> {
    let k = confusion.len();
    if k == 0 || k > MAX_PERMUTED_CODES {
        return Err(Error::InvalidArgument(format!(
            "permutation matching supports 1..={MAX_PERMUTED_CODES} codes, got {k}"
        )));
    }
    if confusion.iter().any(|row| row.len() != k) {
        return Err(Error::InvalidArgument("confusion matrix must be square".into()));
    }
    let total: u64 = confusion.iter().flatten().sum();
    if total == 0 {
        return Err(Error::InvalidArgument("no pairs to score".into()));
    }
    let mut best = (0u64, (0..k).collect::<Vec<_>>());
    for perm in permutations(k) {
        let hits: u64 = perm.iter().enumerate().map(|(c, &m)| confusion[m][c]).sum();
        if hits > best.0 {
            best = (hits, perm);
        }
    }
    Ok((best.0 as f64 / total as f64, best.1))
}

/// Per-pair argmax classification of labeled expert pairs, scored under
/// the best relabeling of codes to modes.
pub fn posterior_accuracy(posterior: &Posterior, pairs: &[Pair]) -> Result<ModeAccuracy> {
    let k = posterior.k();
    let mut confusion = vec![vec![0u64; k]; k];
    for p in pairs {
        let mode = p
            .label
            .ok_or_else(|| Error::Missing("mode label on expert pair".into()))?;
        if mode >= k {
            return Err(Error::InvalidArgument(format!(
                "mode label {mode} outside the {k} codes"
            )));
        }
        confusion[mode][posterior.predict(&p.obs, &p.action)?] += 1;
    }
    let (accuracy_best_perm, permutation) = best_permutation(&confusion)?;
    let total: u64 = confusion.iter().flatten().sum();
    let diag: u64 = (0..k).map(|i| confusion[i][i]).sum();
    Ok(ModeAccuracy {
        accuracy_best_perm,
        accuracy_identity: diag as f64 / total as f64,
        permutation,
        per_mode_confusion: confusion,
    })
}

/// `-sum p ln p`, with `0 ln 0 = 0`.
pub fn latent_entropy(prior: &[f64]) -> Result<f64> {
    validate_prior(prior)?;
    Ok(-prior
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>())
}

/// `mean log Q(c|s,a) + H(c)` over generated pairs.
pub fn mi_lower_bound(posterior: &Posterior, pairs: &[Pair], prior: &[f64]) -> Result<f64> {
    let h = latent_entropy(prior)?;
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no pairs for the information bound".into()));
    }
    let mut total = 0.0;
    for p in pairs {
        total += posterior.logprob(&p.obs, &p.action, &p.code()?)?;
    }
    Ok(total / pairs.len() as f64 + h)
}

/// Everything `eval` reports about a trained model set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    /// Absent when there is no posterior (behavior cloning).
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<ModeAccuracy>,
    #[serde(serialize_with = "sig17::opt_real", skip_serializing_if = "Option::is_none")]
    pub l_i_estimate: Option<f64>,
    #[serde(serialize_with = "sig17::real")]
    pub h_c: f64,
    pub n_rollouts: usize,
    pub rollouts_per_code: Vec<usize>,
    /// Mean distance from each rollout's final position to the nearest expert circle.
    #[serde(serialize_with = "sig17::real")]
    pub mean_final_distance: f64,
}

/// Expert pairs with their mode labels and no codes.
pub fn labeled_pairs(demos: &[Trajectory]) -> Vec<Pair> {
    demos
        .iter()
        .flat_map(|t| {
            t.observations.iter().zip(&t.actions).map(|(o, a)| Pair {
                obs: *o,
                action: *a,
                code: None,
                label: t.mode_label,
            })
        })
        .collect()
}

/// `n_rollouts` policy episodes with codes cycled `0, 1, .., K-1, 0, ..`;
/// episode `i` draws from its own stream of `seed`.
pub fn eval_rollouts(
    policy: &GaussianPolicy,
    env: &Env2d,
    n_rollouts: usize,
    steps: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    let k = policy.k();
    (0..n_rollouts)
        .map(|i| {
            let mut rng = rng::stream(seed, domain::EVAL, i as u64);
            rollout_with_code(policy, env, LatentCode::new(i % k, k)?, steps, &mut rng)
        })
        .collect()
}

/// Posterior accuracy on the labeled demos (when a posterior exists), the
/// information bound on fresh rollouts, and how far those rollouts end
/// from the expert circles. Returns the rollouts too.
pub fn evaluate(
    models: &Models,
    env: &Env2d,
    demos: &[Trajectory],
    n_rollouts: usize,
    steps: usize,
    seed: u64,
) -> Result<(EvalReport, Vec<Trajectory>)> {
    if n_rollouts == 0 {
        return Err(Error::InvalidArgument("need at least one evaluation rollout".into()));
    }
    let k = models.policy.k();
    let prior = vec![1.0 / k as f64; k];
    let rollouts = eval_rollouts(&models.policy, env, n_rollouts, steps, seed)?;
    let (accuracy, l_i_estimate) = match &models.posterior {
        Some(q) => {
            let gen: Vec<Pair> = rollouts
                .iter()
                .flat_map(|t| {
                    t.observations.iter().zip(&t.actions).map(|(o, a)| Pair {
                        obs: *o,
                        action: *a,
                        code: t.code,
                        label: None,
                    })
                })
                .collect();
            (
                Some(posterior_accuracy(q, &labeled_pairs(demos))?),
                Some(mi_lower_bound(q, &gen, &prior)?),
            )
        }
        None => (None, None),
    };
    let mut per_code = vec![0; k];
    let mut dist = 0.0;
    for t in &rollouts {
        per_code[t.code.map_or(0, |c| c.index())] += 1;
        let end = t
            .final_position()
            .ok_or_else(|| Error::InvalidArgument("empty evaluation rollout".into()))?;
        dist += env.mixture.distance_to_nearest_circle(end);
    }
    let report = EvalReport {
        accuracy,
        l_i_estimate,
        h_c: latent_entropy(&prior)?,
        n_rollouts,
        rollouts_per_code: per_code,
        mean_final_distance: dist / n_rollouts as f64,
    };
    Ok((report, rollouts))
}

pub const EXPORT_HEADER: &str = "traj_id,step,x,y,code_index,mode_label";

/// A trajectory reduced to what the export and plot need.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPath {
    pub points: Vec<[f64; 2]>,
    pub code_index: Option<usize>,
    pub mode_label: Option<usize>,
}

impl From<&Trajectory> for TrajectoryPath {
    fn from(t: &Trajectory) -> Self {
        Self {
            points: t.positions().collect(),
            code_index: t.code.map(|c| c.index()),
            mode_label: t.mode_label,
        }
    }
}

fn sentinel(v: Option<usize>) -> String {
    v.map_or_else(|| "-1".to_string(), |x| x.to_string())
}

pub fn export_csv(paths: &[TrajectoryPath]) -> String {
    let mut s = String::from(EXPORT_HEADER);
    s.push('\n');
    for (id, p) in paths.iter().enumerate() {
        let (code, label) = (sentinel(p.code_index), sentinel(p.mode_label));
        for (step, pt) in p.points.iter().enumerate() {
            let _ = writeln!(
                s,
                "{id},{step},{},{},{code},{label}",
                sig17::format(pt[0]),
                sig17::format(pt[1])
            );
        }
    }
    s
}

/// One row per step, ordered by trajectory then step; positions at 17
/// significant digits; `-1` stands for a missing code or label.
pub fn export_trajectories(trajs: &[Trajectory], path: &Path) -> Result<()> {
    let paths: Vec<TrajectoryPath> = trajs.iter().map(TrajectoryPath::from).collect();
    std::fs::write(path, export_csv(&paths)).map_err(|e| Error::io(path, e))
}

pub fn parse_export(text: &str, origin: &Path) -> Result<Vec<TrajectoryPath>> {
    let bad = |line: usize, msg: &str| Error::Parse {
        path: origin.to_path_buf(),
        message: format!("line {line}: {msg}"),
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == EXPORT_HEADER => {}
        _ => return Err(bad(1, "expected trajectory export header")),
    }
    let mut out: Vec<TrajectoryPath> = Vec::new();
    for (i, line) in lines {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 6 {
            return Err(bad(n, "expected 6 fields"));
        }
        let id: usize = f[0].parse().map_err(|_| bad(n, "bad traj_id"))?;
        let step: usize = f[1].parse().map_err(|_| bad(n, "bad step"))?;
        let x: f64 = f[2].parse().map_err(|_| bad(n, "bad x"))?;
        let y: f64 = f[3].parse().map_err(|_| bad(n, "bad y"))?;
        let tag = |s: &str, what: &str| -> Result<Option<usize>> {
            let v: i64 = s.parse().map_err(|_| bad(n, what))?;
            match v {
                -1 => Ok(None),
                v if v >= 0 => Ok(Some(v as usize)),
                _ => Err(bad(n, what)),
            }
        };
        let code = tag(f[4], "bad code_index")?;
        let label = tag(f[5], "bad mode_label")?;
        if id == out.len() && step == 0 {
            out.push(TrajectoryPath {
                points: Vec::new(),
                code_index: code,
                mode_label: label,
            });
        }
        let count = out.len();
        let cur = match out.last_mut() {
            Some(c) if id + 1 == count && step == c.points.len() => c,
            _ => return Err(bad(n, "rows out of order")),
        };
        if cur.code_index != code || cur.mode_label != label {
            return Err(bad(n, "code or label changes within a trajectory"));
        }
        cur.points.push([x, y]);
    }
    Ok(out)
}

pub fn read_export(path: &Path) -> Result<Vec<TrajectoryPath>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_export(&text, path)
}

/// Colors indexed by code; cycled beyond eight codes.
pub const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const NO_CODE_COLOR: &str = "#7f7f7f";
const CANVAS: f64 = 600.0;

pub fn svg_document(paths: &[TrajectoryPath]) -> String {
    let pts = paths.iter().flat_map(|p| p.points.iter());
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in pts.filter(|p| p[0].is_finite() && p[1].is_finite()) {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    if lo[0] > hi[0] {
        lo = [-1.0, -1.0];
        hi = [1.0, 1.0];
    }
    // Square frame around the larger extent, widened by 10% on every side.
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
    let center = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    let half = span * 0.5 * 1.2;
    let (x0, y0) = (center[0] - half, center[1] - half);
    let scale = CANVAS / (2.0 * half);
    let sx = |x: f64| (x - x0) * scale;
    let sy = |y: f64| CANVAS - (y - y0) * scale;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{c}" height="{c}" viewBox="0 0 {c} {c}">"#,
        c = CANVAS
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{CANVAS}" height="{CANVAS}" fill="white" stroke="black"/>"#);
    let _ = writeln!(s, r##"<g id="axes" stroke="#bbbbbb" stroke-width="1">"##);
    if (x0..=x0 + 2.0 * half).contains(&0.0) {
        let _ = writeln!(s, r#"<line x1="{0:.3}" y1="0" x2="{0:.3}" y2="{CANVAS}"/>"#, sx(0.0));
    }
    if (y0..=y0 + 2.0 * half).contains(&0.0) {
        let _ = writeln!(s, r#"<line x1="0" y1="{0:.3}" x2="{CANVAS}" y2="{0:.3}"/>"#, sy(0.0));
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(
        s,
        r#"<text x="4" y="{:.0}" font-size="11" font-family="monospace">x [{:.3}, {:.3}]  y [{:.3}, {:.3}]</text>"#,
        CANVAS - 6.0,
        x0,
        x0 + 2.0 * half,
        y0,
        y0 + 2.0 * half
    );
    for p in paths {
        let color = p.code_index.map_or(NO_CODE_COLOR, |c| PALETTE[c % PALETTE.len()]);
        let coords: Vec<String> = p
            .points
            .iter()
            .map(|q| format!("{:.3},{:.3}", sx(q[0]), sy(q[1])))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" stroke-opacity="0.8" points="{}"/>"#,
            coords.join(" ")
        );
    }
    s.push_str("</svg>\n");
    s
}

/// One polyline per trajectory colored by code, on auto-scaled axes.
pub fn render_svg(paths: &[TrajectoryPath], path: &Path) -> Result<()> {
    std::fs::write(path, svg_document(paths)).map_err(|e| Error::io(path, e))
}
