//! First-order optimizers, weight clipping and the trust-region machinery
//! (conjugate gradient, Fisher-vector products, KL-constrained line search).

use serde::{Deserialize, Serialize};

use crate::env::Observation;
use crate::error::{Error, Result};
use crate::models::{obs_code_input, GaussianPolicy, LatentCode};
use crate::nn::{dot, Gradient};

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::dim(what, expected, got));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            config,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update; descends when `minimize`, ascends otherwise.
    pub fn step(&mut self, params: &mut [f64], grad: &Gradient, minimize: bool) -> Result<()> {
        check_len("adam parameters", self.m.len(), params.len())?;
        check_len("adam gradient", self.m.len(), grad.len())?;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let sign = if minimize { -1.0 } else { 1.0 };
        for i in 0..params.len() {
            let g = grad.values[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] += sign * lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RmspropConfig {
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
}

impl Default for RmspropConfig {
    fn default() -> Self {
        Self {
            lr: 5e-5,
            rho: 0.99,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RmspropState {
    acc: Vec<f64>,
    pub config: RmspropConfig,
}

impl RmspropState {
    pub fn new(len: usize, config: RmspropConfig) -> Self {
        Self {
            acc: vec![0.0; len],
            config,
        }
    }

    pub fn accumulator(&self) -> &[f64] {
        &self.acc
    }

    /// `acc <- rho acc + (1 - rho) g^2`, then `p <- p ± lr g / sqrt(acc + eps)`.
    pub fn step(&mut self, params: &mut [f64], grad: &Gradient, maximize: bool) -> Result<()> {
        check_len("rmsprop parameters", self.acc.len(), params.len())?;
        check_len("rmsprop gradient", self.acc.len(), grad.len())?;
        let RmspropConfig { lr, rho, eps } = self.config;
        let sign = if maximize { 1.0 } else { -1.0 };
        for i in 0..params.len() {
            let g = grad.values[i];
            self.acc[i] = rho * self.acc[i] + (1.0 - rho) * g * g;
            if g != 0.0 {
                params[i] += sign * lr * g / (self.acc[i] + eps).sqrt();
            }
        }
        Ok(())
    }
}

/// Clamps every coordinate into `[-bound, bound]`.
pub fn clip_params(params: &mut [f64], bound: f64) -> Result<()> {
    if !(bound > 0.0) {
        return Err(Error::InvalidArgument(format!("clip bound must be positive, got {bound}")));
    }
    params.iter_mut().for_each(|p| *p = p.clamp(-bound, bound));
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
}

/// Solves `A x = b` for symmetric positive-definite `A`, stopping once
/// `|r| <= tol |b|` or after `iters` iterations.
pub fn conjugate_gradient<F>(mut apply_a: F, b: &[f64], iters: usize, tol: f64) -> Result<CgSolution>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let target = tol * rr.sqrt();
    let mut iterations = 0;
    while iterations < iters && rr.sqrt() > target && rr > 0.0 {
        let ap = apply_a(&p);
        check_len("operator output", n, ap.len())?;
        let pap = dot(&p, &ap);
        if !pap.is_finite() || !rr.is_finite() {
            return Err(Error::NonFinite("conjugate gradient curvature".into()));
        }
        if pap <= 0.0 {
            // Not positive definite along p; keep the current iterate.
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
        iterations += 1;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("conjugate gradient iterate".into()));
    }
    Ok(CgSolution {
        x,
        iterations,
        residual_norm: rr.sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrpoConfig {
    pub kl_radius: f64,
    pub cg_iters: usize,
    pub cg_tol: f64,
    pub damping: f64,
    pub backtrack_ratio: f64,
    pub max_backtracks: usize,
}

impl Default for TrpoConfig {
    fn default() -> Self {
        Self {
            kl_radius: 0.01,
            cg_iters: 10,
            cg_tol: 1e-10,
            damping: 0.1,
            backtrack_ratio: 0.5,
            max_backtracks: 10,
        }
    }
}

impl TrpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kl_radius > 0.0) {
            return Err(Error::config("optim.kl_radius", "must be positive"));
        }
        if self.cg_iters == 0 {
            return Err(Error::config("optim.cg_iters", "must be at least 1"));
        }
        if !(self.cg_tol >= 0.0) {
            return Err(Error::config("optim.cg_tol", "must be non-negative"));
        }
        if !(self.damping >= 0.0) {
            return Err(Error::config("optim.damping", "must be non-negative"));
        }
        if !(self.backtrack_ratio > 0.0 && self.backtrack_ratio < 1.0) {
            return Err(Error::config("optim.backtrack_ratio", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// `(F + damping I) v` where `F` is the Hessian of the batch-mean
/// `KL(pi_old || pi)` at the current parameters. For a fixed-sigma Gaussian
/// this is `mean_i J_i^T Sigma^-1 J_i v`, with `J_i` the Jacobian of the mean
/// network at sample `i`: one forward-mode and one reverse pass per sample.
pub fn fisher_vector_product(
    policy: &GaussianPolicy,
    batch: &[(Observation, LatentCode)],
    v: &[f64],
    damping: f64,
) -> Result<Vec<f64>> {
    let net = policy.net();
    check_len("fisher vector", net.num_params(), v.len())?;
    let mut out = vec![0.0; v.len()];
    if !batch.is_empty() {
        let inv_var: Vec<f64> = policy.sigma().iter().map(|s| 1.0 / (s * s)).collect();
        let scale = 1.0 / batch.len() as f64;
        for (obs, code) in batch {
            let x = obs_code_input(obs, code);
            let (_, jv) = net.jvp(&x, v)?;
            let upstream: Vec<f64> = jv.iter().zip(&inv_var).map(|(a, b)| a * b).collect();
            let trace = net.forward_trace(&x)?;
            net.backward_trace(&trace, &upstream, &mut out, scale)?;
        }
    }
    for (o, vi) in out.iter_mut().zip(v) {
        *o += damping * vi;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrpoOutcome {
    pub params: Vec<f64>,
    pub accepted: bool,
    /// KL of the returned parameters from the old ones.
    pub kl: f64,
    /// Surrogate gain of the returned parameters.
    pub improvement: f64,
    /// Fraction of the full natural step that was taken.
    pub step_fraction: f64,
}

/// One trust-region step on `params`.
///
/// Solves `F x = g` by conjugate gradient, scales `x` to the KL radius and
/// backtracks until the measured mean KL is within `kl_radius` and the
/// surrogate improves. Failure of any kind returns the old parameters
/// untouched with `accepted = false`.
pub fn trpo_step<Fv, Kl, Su>(
    params: &[f64],
    grad: &Gradient,
    mut fvp: Fv,
    mut kl_fn: Kl,
    mut surrogate_fn: Su,
    cfg: &TrpoConfig,
) -> TrpoOutcome
where
    Fv: FnMut(&[f64]) -> Vec<f64>,
    Kl: FnMut(&[f64]) -> f64,
    Su: FnMut(&[f64]) -> f64,
{
    let unchanged = |accepted| TrpoOutcome {
        params: params.to_vec(),
        accepted,
        kl: 0.0,
        improvement: 0.0,
        step_fraction: 0.0,
    };
    if grad.len() != params.len() || grad.values.iter().any(|g| !g.is_finite()) {
        return unchanged(false);
    }
    if grad.values.iter().all(|&g| g == 0.0) {
        return unchanged(true);
    }
    let Ok(sol) = conjugate_gradient(&mut fvp, &grad.values, cfg.cg_iters, cfg.cg_tol) else {
        return unchanged(false);
    };
    let x = sol.x;
    let fx = fvp(&x);
    let shs = dot(&x, &fx);
    if !shs.is_finite() || shs <= 0.0 {
        return unchanged(false);
    }
    let scale = (2.0 * cfg.kl_radius / shs).sqrt();
    let old = surrogate_fn(params);
    if !old.is_finite() {
        return unchanged(false);
    }
    let mut candidate = vec![0.0; params.len()];
    let mut fraction = 1.0;
    for _ in 0..=cfg.max_backtracks {
        for i in 0..params.len() {
            candidate[i] = params[i] + fraction * scale * x[i];
        }
        let kl = kl_fn(&candidate);
        let improvement = surrogate_fn(&candidate) - old;
        if kl.is_finite() && kl <= cfg.kl_radius && improvement.is_finite() && improvement > 0.0 {
            return TrpoOutcome {
                params: candidate,
                accepted: true,
                kl,
                improvement,
                step_fraction: fraction,
            };
        }
        fraction *= cfg.backtrack_ratio;
    }
    unchanged(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn grad(v: &[f64]) -> Gradient {
        Gradient { values: v.to_vec() }
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut s = AdamState::new(3, AdamConfig::default());
        let mut p = vec![1.0, -2.0, 3.0];
        s.step(&mut p, &grad(&[0.0; 3]), true).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let cfg = AdamConfig {
            eps: 0.0,
            ..AdamConfig::default()
        };
        let mut s = AdamState::new(3, cfg);
        let mut p = vec![0.0; 3];
        s.step(&mut p, &grad(&[5.0, -0.01, 2.0]), true).unwrap();
        for (v, sign) in p.iter().zip([-1.0, 1.0, -1.0]) {
            assert_abs_diff_eq!(*v, sign * cfg.lr, epsilon = 1e-15);
        }
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        let mut s = AdamState::new(2, cfg);
        let mut p = vec![1.0, 1.0];
        let mut norms = Vec::new();
        for _ in 0..200 {
            let g = grad(&[2.0 * p[0], 2.0 * p[1]]);
            s.step(&mut p, &g, true).unwrap();
            norms.push(p[0].hypot(p[1]));
        }
        // Adam at a fixed rate hovers around the optimum; the iterate gets
        // within 1e-3 and the tail stays small.
        let best = norms.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(best < 1e-3, "best {best}");
        assert!(norms[190..].iter().all(|n| *n < 0.05));
    }

    #[test]
    fn adam_shape_mismatch() {
        let mut s = AdamState::new(2, AdamConfig::default());
        assert!(s.step(&mut [0.0; 3], &grad(&[0.0; 3]), true).is_err());
    }

    #[test]
    fn rmsprop_zero_and_saturation() {
        let cfg = RmspropConfig {
            lr: 0.01,
            rho: 0.9,
            eps: 0.0,
        };
        let mut s = RmspropState::new(1, cfg);
        let mut p = vec![0.0];
        s.step(&mut p, &grad(&[0.0]), true).unwrap();
        assert_eq!(p, vec![0.0]);
        s.acc = vec![0.0];
        let mut last = 0.0;
        for _ in 0..500 {
            let before = p[0];
            s.step(&mut p, &grad(&[3.0]), true).unwrap();
            last = p[0] - before;
        }
        assert_abs_diff_eq!(last, 0.01, epsilon = 1e-9);
        assert!(s.accumulator()[0] >= 0.0);
    }

    #[test]
    fn rmsprop_ascends_concave_objective() {
        let mut s = RmspropState::new(2, RmspropConfig {
            lr: 0.01,
            ..RmspropConfig::default()
        });
        let mut p: Vec<f64> = vec![1.0, 1.0];
        let mut prev = p[0].hypot(p[1]);
        let mut decreases = 0;
        for _ in 0..500 {
            // gradient of -|p|^2
            let g = grad(&[-2.0 * p[0], -2.0 * p[1]]);
            s.step(&mut p, &g, true).unwrap();
            let n = p[0].hypot(p[1]);
            if n < prev {
                decreases += 1;
            }
            prev = n;
        }
        assert!(prev < 0.1, "final norm {prev}");
        assert!(decreases > 90, "{decreases} decreasing steps");
    }

    #[test]
    fn clip_cases() {
        let mut p = vec![0.05, -0.003, -0.5, 0.01];
        clip_params(&mut p, 0.01).unwrap();
        assert_eq!(p, vec![0.01, -0.003, -0.01, 0.01]);
        let once = p.clone();
        clip_params(&mut p, 0.01).unwrap();
        assert_eq!(p, once);
        assert!(clip_params(&mut p, 0.0).is_err());
        assert!(clip_params(&mut p, -1.0).is_err());
    }

    #[test]
    fn cg_identity_and_diagonal() {
        let sol = conjugate_gradient(|v| v.to_vec(), &[1.0, -2.0, 3.0], 10, 1e-12).unwrap();
        assert_eq!(sol.iterations, 1);
        assert_eq!(sol.x, vec![1.0, -2.0, 3.0]);

        let sol =
            conjugate_gradient(|v| vec![2.0 * v[0], 4.0 * v[1]], &[2.0, 4.0], 10, 1e-14).unwrap();
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.x[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn cg_random_spd() {
        let mut r = rng::seeded(42);
        let n = 20;
        let m: Vec<f64> = (0..n * n).map(|_| r.random_range(-1.0..1.0)).collect();
        // A = M M^T + I
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = dot(&m[i * n..(i + 1) * n], &m[j * n..(j + 1) * n])
                    + if i == j { 1.0 } else { 0.0 };
            }
        }
        let b: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let apply = |v: &[f64]| (0..n).map(|i| dot(&a[i * n..(i + 1) * n], v)).collect::<Vec<_>>();
        let sol = conjugate_gradient(apply, &b, n, 1e-12).unwrap();
        let ax = apply(&sol.x);
        let res: f64 = ax.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        assert!(res < 1e-8, "residual {res}");
        assert!(sol.iterations <= n);
    }

    #[test]
    fn cg_reports_non_finite() {
        let res = conjugate_gradient(|v| v.iter().map(|x| x * f64::NAN).collect(), &[1.0], 5, 0.0);
        assert!(matches!(res, Err(Error::NonFinite(_))));
    }

    #[test]
    fn trpo_zero_gradient_is_accepted_noop() {
        let p = vec![0.5, -0.5];
        let out = trpo_step(
            &p,
            &grad(&[0.0, 0.0]),
            |v| v.to_vec(),
            |_| 0.0,
            |_| 0.0,
            &TrpoConfig::default(),
        );
        assert!(out.accepted);
        assert_eq!(out.params, p);
    }

    #[test]
    fn trpo_identity_fisher_step_length() {
        // Linear surrogate g.d, KL = 0.5 |d|^2 with Hessian F = I.
        let cfg = TrpoConfig {
            damping: 0.0,
            ..TrpoConfig::default()
        };
        let p0 = vec![0.2, -0.1, 0.4];
        let g = [0.3, -1.2, 0.5];
        let kl = |p: &[f64]| 0.5 * p.iter().zip(&p0).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let sur = |p: &[f64]| p.iter().zip(&p0).zip(&g).map(|((a, b), gi)| (a - b) * gi).sum::<f64>();
        let out = trpo_step(&p0, &grad(&g), |v| v.to_vec(), kl, sur, &cfg);
        assert!(out.accepted);
        let d: Vec<f64> = out.params.iter().zip(&p0).map(|(a, b)| a - b).collect();
        let len = dot(&d, &d).sqrt();
        // hand computation: x = g, |step| = sqrt(2 delta) along g / |g|
        let full = (2.0 * cfg.kl_radius).sqrt();
        assert_abs_diff_eq!(len, out.step_fraction * full, epsilon = 1e-12);
        assert!(out.step_fraction >= 0.5);
        let gn = dot(&g, &g).sqrt();
        for i in 0..3 {
            assert_abs_diff_eq!(d[i] / len, g[i] / gn, epsilon = 1e-12);
        }
        assert!(out.kl <= cfg.kl_radius);
    }

    #[test]
    fn trpo_rejects_when_surrogate_never_improves() {
        let p0 = vec![1.0, 2.0];
        let out = trpo_step(
            &p0,
            &grad(&[1.0, 1.0]),
            |v| v.to_vec(),
            |_| 0.0,
            |p| -(p[0] + p[1]),
            &TrpoConfig::default(),
        );
        assert!(!out.accepted);
        assert_eq!(out.params, p0);
    }

    #[test]
    fn trpo_rejects_non_finite_curvature() {
        let p0 = vec![1.0];
        let out = trpo_step(
            &p0,
            &grad(&[1.0]),
            |v| vec![v[0] * f64::NAN],
            |_| 0.0,
            |p| p[0],
            &TrpoConfig::default(),
        );
        assert!(!out.accepted);
        assert_eq!(out.params, p0);
    }
}
