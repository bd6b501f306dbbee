//! Sampling-based estimators for the integral Lipschitz and monotonicity
//! assumptions.
//!
//! Sampling cannot prove a universally quantified inequality. Each check runs
//! a structured family of trials and reports the worst case it saw.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::coefficients::{
    assemble_f, dot, mat_t_vec, mat_vec, matrix_norm, CoefficientSet, ControlPair, Dims, FTriple,
};
use crate::error::{Error, Result};
use crate::paths::{for_each_prefix, Path};

/// `(c₁, β₁, β₂, μ₁)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AssumptionConstants {
    pub c1: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub mu1: f64,
}

impl AssumptionConstants {
    pub fn new(c1: f64, beta1: f64, beta2: f64, mu1: f64) -> Self {
        Self { c1, beta1, beta2, mu1 }
    }

    /// Sign rules, including the dimension-dependent ones.
    pub fn validate(&self, dims: Dims) -> Result<()> {
        let all = [self.c1, self.beta1, self.beta2, self.mu1];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("constants", "must be finite"));
        }
        if !(self.c1 > 0.0) {
            return Err(Error::param("c1", "must be positive"));
        }
        if self.beta1 < 0.0 || self.beta2 < 0.0 {
            return Err(Error::param("beta", "beta1 and beta2 must be nonnegative"));
        }
        if !(self.beta1 + self.beta2 > 0.0) {
            return Err(Error::param("beta", "beta1 + beta2 must be positive"));
        }
        if !(self.mu1 + self.beta2 > 0.0) {
            return Err(Error::param("mu1", "mu1 + beta2 must be positive"));
        }
        if dims.m > dims.n && !(self.beta1 > 0.0 && self.mu1 > 0.0) {
            return Err(Error::param("beta1", "m > n requires beta1 > 0 and mu1 > 0"));
        }
        if dims.n > dims.m && !(self.beta2 > 0.0 && self.mu1 > 0.0) {
            return Err(Error::param("beta2", "n > m requires beta2 > 0 and mu1 > 0"));
        }
        Ok(())
    }
}

/// Grid and scales of the trial sampler.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub num_steps: usize,
    pub horizon: f64,
    /// Scale of base paths and perturbations.
    pub amplitude: f64,
    /// Standard deviation of sampled controls.
    pub control_scale: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            num_steps: 32,
            horizon: 1.0,
            amplitude: 1.0,
            control_scale: 1.0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_steps < 1 {
            return Err(Error::param("sampler.num_steps", "must be at least 1"));
        }
        for (name, v) in [
            ("sampler.horizon", self.horizon),
            ("sampler.amplitude", self.amplitude),
            ("sampler.control_scale", self.control_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, "must be positive"));
            }
        }
        Ok(())
    }

    fn step(&self) -> f64 {
        self.horizon / self.num_steps as f64
    }
}

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CheckReport {
    pub check: String,
    pub trials: usize,
    /// Trials skipped for a zero denominator.
    pub skipped: usize,
    pub violations: usize,
    /// Most negative slack observed; `+∞` when no bound was checked.
    pub worst_margin: f64,
    pub estimated_constant: f64,
    pub sampler_seed: u64,
}

impl CheckReport {
    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[{}]", self.check);
        let _ = writeln!(s, "trials = {}", self.trials);
        let _ = writeln!(s, "skipped = {}", self.skipped);
        let _ = writeln!(s, "violations = {}", self.violations);
        let _ = writeln!(s, "worst_margin = {:e}", self.worst_margin);
        let _ = writeln!(s, "estimated_constant = {:e}", self.estimated_constant);
        let _ = writeln!(s, "sampler_seed = {}", self.sampler_seed);
        s
    }
}

/// Per-trial outcome before aggregation.
struct Sample {
    /// `None` when the denominator vanished.
    ratio: Option<f64>,
    slack: Option<f64>,
    tol: f64,
}

fn aggregate(check: &str, seed: u64, samples: Vec<Result<Sample>>, maximize: bool) -> Result<CheckReport> {
    let trials = samples.len();
    let mut report = CheckReport {
        check: check.to_string(),
        trials,
        skipped: 0,
        violations: 0,
        worst_margin: f64::INFINITY,
        estimated_constant: if maximize { 0.0 } else { f64::INFINITY },
        sampler_seed: seed,
    };
    for s in samples {
        let s = s?;
        match s.ratio {
            Some(r) if maximize => report.estimated_constant = report.estimated_constant.max(r),
            Some(r) => report.estimated_constant = report.estimated_constant.min(r),
            None => report.skipped += 1,
        }
        if let Some(slack) = s.slack {
            report.worst_margin = report.worst_margin.min(slack);
            if slack < -s.tol {
                report.violations += 1;
            }
        }
    }
    Ok(report)
}

fn run_trials<F>(trials: usize, seed: u64, f: F) -> Vec<Result<Sample>>
where
    F: Fn(&mut ChaCha8Rng, usize) -> Result<Sample> + Sync,
{
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            f(&mut rng, i)
        })
        .collect()
}

fn check_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::param("trials", "must be at least 1"));
    }
    Ok(())
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn normals(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| scale * normal(rng)).collect()
}

fn brownian_values(rng: &mut ChaCha8Rng, cfg: &SamplerConfig, dim: usize) -> Vec<f64> {
    let sd = cfg.amplitude * cfg.step().sqrt();
    let mut values = normals(rng, dim, cfg.amplitude);
    for k in 0..cfg.num_steps {
        for i in 0..dim {
            let prev = values[k * dim + i];
            values.push(prev + sd * normal(rng));
        }
    }
    values
}

/// A base path and a perturbed copy. The perturbation is an independent
/// Brownian path, a single-point spike or a low-frequency sinusoid,
/// cycling with the trial index.
fn path_pair(rng: &mut ChaCha8Rng, cfg: &SamplerConfig, dim: usize, trial: usize) -> Result<(Path, Path)> {
    let k = cfg.num_steps;
    let base = brownian_values(rng, cfg, dim);
    let pert = match trial % 3 {
        0 => brownian_values(rng, cfg, dim),
        1 => {
            let j = rng.random_range(0..=k);
            let mut v = vec![0.0; (k + 1) * dim];
            for i in 0..dim {
                v[j * dim + i] = cfg.amplitude * normal(rng);
            }
            v
        }
        _ => {
            let freq = [0.5, 1.0, 2.0][rng.random_range(0..3)];
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let amp = normals(rng, dim, cfg.amplitude);
            (0..=k)
                .flat_map(|j| {
                    let t = j as f64 * cfg.step();
                    let s = (std::f64::consts::TAU * freq * t / cfg.horizon + phase).sin();
                    amp.iter().map(move |a| a * s).collect::<Vec<_>>()
                })
                .collect()
        }
    };
    let second: Vec<f64> = base.iter().zip(&pert).map(|(a, b)| a + b).collect();
    Ok((Path::new(dim, cfg.step(), base)?, Path::new(dim, cfg.step(), second)?))
}

fn control(rng: &mut ChaCha8Rng, dims: Dims, scale: f64) -> ControlPair {
    ControlPair::new(normals(rng, dims.m, scale), normals(rng, dims.m * dims.d, scale))
}

fn control_process(rng: &mut ChaCha8Rng, dims: Dims, len: usize, scale: f64) -> Vec<ControlPair> {
    (0..len).map(|_| control(rng, dims, scale)).collect()
}

/// `f(x_{t_k}, u_k)` for `k = 0..K−1`.
fn f_along(cs: &CoefficientSet, path: &Path, controls: &[ControlPair]) -> Result<Vec<FTriple>> {
    let mut out = Vec::with_capacity(controls.len());
    let mut err = None;
    for_each_prefix(path, cs.features(), |k, ctx| {
        if k < controls.len() && err.is_none() {
            match assemble_f(cs, &ctx, controls[k].as_control()) {
                Ok(f) => out.push(f),
                Err(e) => err = Some(e),
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn sq(v: &[f64]) -> f64 {
    dot(v, v)
}

/// Estimates `c₁` in `∫|f(x¹,u) − f(x²,u)|²dt ≤ c₁∫|x¹ − x²|²dt` as the
/// largest sampled ratio. With `bound`, ratios above it count as violations.
pub fn estimate_path_lipschitz(
    cs: &CoefficientSet,
    trials: usize,
    seed: u64,
    cfg: &SamplerConfig,
    bound: Option<f64>,
) -> Result<CheckReport> {
    check_trials(trials)?;
    cfg.validate()?;
    let dims = cs.dims();
    let step = cfg.step();
    let samples = run_trials(trials, seed, |rng, i| {
        let (x1, x2) = path_pair(rng, cfg, dims.n, i)?;
        let u = control_process(rng, dims, cfg.num_steps, cfg.control_scale);
        let f1 = f_along(cs, &x1, &u)?;
        let f2 = f_along(cs, &x2, &u)?;
        let num: f64 = f1.iter().zip(&f2).map(|(a, b)| a.sub(b).norm_squared()).sum::<f64>() * step;
        let den: f64 = (0..cfg.num_steps).map(|k| sq(&diff(x1.point(k), x2.point(k)))).sum::<f64>() * step;
        Ok(lipschitz_sample(num, den, bound))
    });
    aggregate("path_lipschitz", seed, samples, true)
}

fn lipschitz_sample(num: f64, den: f64, bound: Option<f64>) -> Sample {
    if den == 0.0 {
        return Sample {
            ratio: None,
            slack: None,
            tol: 0.0,
        };
    }
    Sample {
        ratio: Some(num / den),
        slack: bound.map(|c| c * den - num),
        tol: 1e-10 * (1.0 + num.abs() + bound.unwrap_or(0.0) * den),
    }
}

/// Estimates `c₁` in `|f(x,u¹) − f(x,u²)| ≤ c₁|u¹ − u²|` at sampled prefixes.
/// Control pairs differ in both parts, in `y` only or in `z` only.
pub fn estimate_u_lipschitz(
    cs: &CoefficientSet,
    trials: usize,
    seed: u64,
    cfg: &SamplerConfig,
    bound: Option<f64>,
) -> Result<CheckReport> {
    check_trials(trials)?;
    cfg.validate()?;
    let dims = cs.dims();
    let samples = run_trials(trials, seed, |rng, i| {
        let x = Path::new(dims.n, cfg.step(), brownian_values(rng, cfg, dims.n))?;
        let k = rng.random_range(0..=cfg.num_steps);
        let prefix = cs.prepare(x.restrict_steps(k));
        let u1 = control(rng, dims, cfg.control_scale);
        let mut u2 = control(rng, dims, cfg.control_scale);
        match i % 3 {
            1 => u2.z.clone_from(&u1.z),
            2 => u2.y.clone_from(&u1.y),
            _ => {}
        }
        let ctx = prefix.context();
        let f1 = assemble_f(cs, &ctx, u1.as_control())?;
        let f2 = assemble_f(cs, &ctx, u2.as_control())?;
        let num = f1.sub(&f2).norm_squared().sqrt();
        let du = u1.sub(&u2).norm_squared().sqrt();
        Ok(lipschitz_sample(num, du, bound))
    });
    aggregate("u_lipschitz", seed, samples, true)
}

/// Terminal point pairs: independent, nearby, or far apart.
fn point_pair(rng: &mut ChaCha8Rng, cfg: &SamplerConfig, n: usize, trial: usize) -> (Vec<f64>, Vec<f64>) {
    let x1 = normals(rng, n, cfg.amplitude);
    let x2 = match trial % 3 {
        0 => normals(rng, n, cfg.amplitude),
        1 => x1.iter().map(|v| v + 1e-3 * cfg.amplitude * normal(rng)).collect(),
        _ => normals(rng, n, 10.0 * cfg.amplitude),
    };
    (x1, x2)
}

/// Estimates `c₁` in `|g(x¹) − g(x²)| ≤ c₁|x¹ − x²|`.
pub fn estimate_g_lipschitz(
    cs: &CoefficientSet,
    trials: usize,
    seed: u64,
    cfg: &SamplerConfig,
    bound: Option<f64>,
) -> Result<CheckReport> {
    check_trials(trials)?;
    cfg.validate()?;
    let n = cs.dims().n;
    let samples = run_trials(trials, seed, |rng, i| {
        let (x1, x2) = point_pair(rng, cfg, n, i);
        let num = sq(&diff(&cs.terminal(&x1), &cs.terminal(&x2))).sqrt();
        let den = sq(&diff(&x1, &x2)).sqrt();
        Ok(lipschitz_sample(num, den, bound))
    });
    aggregate("g_lipschitz", seed, samples, true)
}

/// Slack of `∫[f(x¹,u¹) − f(x²,u²), (x̂,û)]dt ≥ ∫β₁|Gx̂|² + β₂(|Gᵀŷ|² + |Gᵀẑ|²)dt`
/// over sampled pairs. Even control families draw independent processes, odd
/// ones share the control so only the path differs.
///
/// `estimated_constant` is the smallest sampled ratio of the left side to
/// `∫|Gx̂|² + |Gᵀŷ|² + |Gᵀẑ|²`, the largest common `β` the samples allow.
pub fn check_monotonicity(
    cs: &CoefficientSet,
    k: &AssumptionConstants,
    trials: usize,
    seed: u64,
    cfg: &SamplerConfig,
) -> Result<CheckReport> {
    check_trials(trials)?;
    cfg.validate()?;
    let dims = cs.dims();
    k.validate(dims)?;
    let Dims { n, m, d } = dims;
    let g = cs.g_matrix();
    let step = cfg.step();
    let samples = run_trials(trials, seed, |rng, i| {
        let (x1, x2) = path_pair(rng, cfg, n, i)?;
        let u1 = control_process(rng, dims, cfg.num_steps, cfg.control_scale);
        let u2 = if (i / 3) % 2 == 1 {
            u1.clone()
        } else {
            control_process(rng, dims, cfg.num_steps, cfg.control_scale)
        };
        let f1 = f_along(cs, &x1, &u1)?;
        let f2 = f_along(cs, &x2, &u2)?;
        let (mut lhs, mut gx, mut gyz) = (0.0, 0.0, 0.0);
        let mut gxv = vec![0.0; m];
        let mut gyv = vec![0.0; n];
        let mut gzv = vec![0.0; n * d];
        for kk in 0..cfg.num_steps {
            let xh = diff(x1.point(kk), x2.point(kk));
            let uh = u1[kk].sub(&u2[kk]);
            lhs += f1[kk].sub(&f2[kk]).bracket_with(&xh, uh.as_control());
            mat_vec(g, &xh, &mut gxv);
            gx += sq(&gxv);
            mat_t_vec(g, &uh.y, &mut gyv);
            for j in 0..n {
                for c in 0..d {
                    gzv[j * d + c] = (0..m).map(|r| g[(r, j)] * uh.z[r * d + c]).sum();
                }
            }
            gyz += sq(&gyv) + matrix_norm(&gzv).powi(2);
        }
        let (lhs, gx, gyz) = (lhs * step, gx * step, gyz * step);
        let rhs = k.beta1 * gx + k.beta2 * gyz;
        let total = gx + gyz;
        Ok(Sample {
            ratio: (total > 0.0).then(|| lhs / total),
            slack: Some(lhs - rhs),
            tol: 1e-10 * (1.0 + lhs.abs() + rhs.abs()),
        })
    });
    aggregate("monotonicity", seed, samples, false)
}

/// Slack of `⟨g(x¹) − g(x²), G(x¹ − x²)⟩ ≤ −μ₁|G(x¹ − x²)|²`.
/// `estimated_constant` is the largest `μ₁` the samples allow.
pub fn check_g_monotonicity(
    cs: &CoefficientSet,
    mu1: f64,
    trials: usize,
    seed: u64,
    cfg: &SamplerConfig,
) -> Result<CheckReport> {
    check_trials(trials)?;
    cfg.validate()?;
    if !mu1.is_finite() {
        return Err(Error::param("mu1", "must be finite"));
    }
    let Dims { n, m, .. } = cs.dims();
    let g = cs.g_matrix();
    let samples = run_trials(trials, seed, |rng, i| {
        let (x1, x2) = point_pair(rng, cfg, n, i);
        let mut gx = vec![0.0; m];
        mat_vec(g, &diff(&x1, &x2), &mut gx);
        let inner = dot(&diff(&cs.terminal(&x1), &cs.terminal(&x2)), &gx);
        let norm = sq(&gx);
        let rhs = -mu1 * norm;
        Ok(Sample {
            ratio: (norm > 0.0).then(|| -inner / norm),
            slack: Some(rhs - inner),
            tol: 1e-10 * (1.0 + inner.abs() + rhs.abs()),
        })
    });
    aggregate("g_monotonicity", seed, samples, false)
}

/// All five checks with the Lipschitz ones bounded by `c₁`.
pub fn check_all(
    cs: &CoefficientSet,
    k: &AssumptionConstants,
    trials: usize,
    seed: u64,
    cfg: &SamplerConfig,
) -> Result<Vec<CheckReport>> {
    Ok(vec![
        estimate_path_lipschitz(cs, trials, seed, cfg, Some(k.c1))?,
        estimate_u_lipschitz(cs, trials, seed, cfg, Some(k.c1))?,
        estimate_g_lipschitz(cs, trials, seed, cfg, Some(k.c1))?,
        check_monotonicity(cs, k, trials, seed, cfg)?,
        check_g_monotonicity(cs, k.mu1, trials, seed, cfg)?,
    ])
}
