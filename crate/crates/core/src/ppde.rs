//! Numerical functional Itô calculus: finite-difference vertical and
//! horizontal derivatives, Itô-formula residuals, the lifted `(W, X)` system,
//! path-dependent PDE residuals and the Feynman–Kac comparison.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::coefficients::{CoefficientSet, Control, Dims, PathFn, TerminalFn};
use crate::conditions::AssumptionConstants;
use crate::error::{Error, Result};
use crate::paths::{csv_writer, fmt_f64, Path};
use crate::solver::{
    solve_fbsde_on, BrownianGrid, ContinuationSchedule, Discretization, ForwardStart,
};

/// Claimed regularity of a functional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Smoothness {
    C0,
    /// Once horizontally and twice vertically differentiable.
    C12,
}

type Evaluator = Arc<dyn Fn(&Path) -> Vec<f64> + Send + Sync>;

/// A map `γ_t ↦ ℝᵏ` on grid paths.
#[derive(Clone)]
pub struct PathFunctional {
    eval: Evaluator,
    dim: usize,
    smoothness: Smoothness,
    bump_scale: Option<f64>,
}

impl fmt::Debug for PathFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PathFunctional")
            .field("dim", &self.dim)
            .field("smoothness", &self.smoothness)
            .field("bump_scale", &self.bump_scale)
            .finish_non_exhaustive()
    }
}

impl PathFunctional {
    pub fn new<F>(dim: usize, smoothness: Smoothness, f: F) -> Self
    where
        F: Fn(&Path) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            eval: Arc::new(f),
            dim,
            smoothness,
            bump_scale: None,
        }
    }

    pub fn scalar<F>(smoothness: Smoothness, f: F) -> Self
    where
        F: Fn(&Path) -> f64 + Send + Sync + 'static,
    {
        Self::new(1, smoothness, move |p| vec![f(p)])
    }

    /// Fixes the vertical bump size instead of `10⁻⁴(1 + ‖γ‖)`.
    pub fn with_bump_scale(mut self, eps: f64) -> Self {
        self.bump_scale = Some(eps);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn bump_scale(&self, p: &Path) -> f64 {
        self.bump_scale.unwrap_or(1e-4 * (1.0 + p.sup_norm()))
    }

    pub fn eval(&self, p: &Path) -> Result<Vec<f64>> {
        let v = (self.eval)(p);
        Error::check_dim("functional output", self.dim, v.len())?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteCoefficient {
                name: "functional",
                context: format!("path ending at t = {}", p.end_time()),
            });
        }
        Ok(v)
    }
}

fn resolve_eps(f: &PathFunctional, p: &Path, eps: Option<f64>) -> Result<f64> {
    let eps = eps.unwrap_or_else(|| f.bump_scale(p));
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::param("eps", "must be positive"));
    }
    Ok(eps)
}

fn bumped(f: &PathFunctional, p: &Path, bump: &[f64]) -> Result<Vec<f64>> {
    f.eval(&p.vertical_bump(bump)?)
}

fn unit(n: usize, i: usize, scale: f64) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[i] = scale;
    e
}

/// `D_x f(γ_t)` by central differences, row-major `f.dim() × n`.
pub fn vertical_derivative(f: &PathFunctional, p: &Path, eps: Option<f64>) -> Result<Vec<f64>> {
    let eps = resolve_eps(f, p, eps)?;
    let n = p.dim();
    let mut out = vec![0.0; f.dim * n];
    for i in 0..n {
        let plus = bumped(f, p, &unit(n, i, eps))?;
        let minus = bumped(f, p, &unit(n, i, -eps))?;
        for r in 0..f.dim {
            out[r * n + i] = (plus[r] - minus[r]) / (2.0 * eps);
        }
    }
    Ok(out)
}

/// Vertical Hessians, one symmetric `n×n` matrix per output component.
#[derive(Debug, Clone, PartialEq)]
pub struct VerticalHessian {
    pub matrices: Vec<DMatrix<f64>>,
    /// `max |H_ij − H_ji|` before symmetrization.
    pub asymmetry: f64,
}

/// `D²_xx f(γ_t)`: three-point stencil on the diagonal, four-point stencil off
/// it, then `(H + Hᵀ)/2`.
pub fn second_vertical_derivative(f: &PathFunctional, p: &Path, eps: Option<f64>) -> Result<VerticalHessian> {
    let eps = resolve_eps(f, p, eps)?;
    let n = p.dim();
    let k = f.dim;
    let centre = f.eval(p)?;
    let mut raw = vec![DMatrix::zeros(n, n); k];
    for i in 0..n {
        let plus = bumped(f, p, &unit(n, i, eps))?;
        let minus = bumped(f, p, &unit(n, i, -eps))?;
        for r in 0..k {
            raw[r][(i, i)] = (plus[r] - 2.0 * centre[r] + minus[r]) / (eps * eps);
        }
        for j in 0..n {
            if j == i {
                continue;
            }
            let corner = |si: f64, sj: f64| {
                let mut b = vec![0.0; n];
                b[i] = si * eps;
                b[j] = sj * eps;
                bumped(f, p, &b)
            };
            let (pp, pm, mp, mm) = (corner(1.0, 1.0)?, corner(1.0, -1.0)?, corner(-1.0, 1.0)?, corner(-1.0, -1.0)?);
            for r in 0..k {
                raw[r][(i, j)] = (pp[r] - pm[r] - mp[r] + mm[r]) / (4.0 * eps * eps);
            }
        }
    }
    let mut asymmetry = 0.0f64;
    let matrices = raw
        .into_iter()
        .map(|h| {
            let t = h.transpose();
            asymmetry = asymmetry.max((&h - &t).abs().max());
            (&h + &t) * 0.5
        })
        .collect();
    Ok(VerticalHessian { matrices, asymmetry })
}

/// `D_t f(γ_t) ≈ [f(γ_{t,t+dt}) − f(γ_t)]/dt` over a flat extension.
/// `dt` defaults to the grid step.
pub fn horizontal_derivative(f: &PathFunctional, p: &Path, dt: Option<f64>) -> Result<Vec<f64>> {
    let dt = dt.unwrap_or(p.grid_step());
    if !(dt > 0.0) {
        return Err(Error::param("dt", "must be positive"));
    }
    let ext = p.horizontal_extend(p.end_time() + dt)?;
    let real_dt = ext.end_time() - p.end_time();
    let a = f.eval(p)?;
    let b = f.eval(&ext)?;
    Ok(a.iter().zip(&b).map(|(x, y)| (y - x) / real_dt).collect())
}

/// Quadratic-variation increment used by [`ito_residual`].
#[derive(Debug, Clone, PartialEq)]
pub enum Bracket {
    /// `ΔX_k ΔX_kᵀ`.
    Realized,
    /// `σσᵀ Δ` for a constant row-major `n×n` covariance rate.
    Model(Vec<f64>),
}

impl Bracket {
    /// `σσᵀ = I`, the bracket of an `n`-dimensional Brownian motion.
    pub fn brownian(n: usize) -> Self {
        Bracket::Model(DMatrix::<f64>::identity(n, n).as_slice().to_vec())
    }
}

/// Norm of `f(γ_T) − f(γ_0) − Σ D_t f Δ − Σ D_x f ΔX_k − ½ Σ tr(D_xx f d⟨X⟩_k)`
/// with derivatives taken at the prefixes `γ_{t_k}`.
pub fn ito_residual(f: &PathFunctional, p: &Path, bracket: &Bracket, eps: Option<f64>) -> Result<f64> {
    let n = p.dim();
    if let Bracket::Model(c) = bracket {
        Error::check_dim("bracket covariance", n * n, c.len())?;
    }
    let step = p.grid_step();
    let k = f.dim;
    let mut acc = vec![0.0; k];
    for j in 0..p.num_steps() {
        let prefix = p.restrict_steps(j);
        let dt = horizontal_derivative(f, &prefix, Some(step))?;
        let dx = vertical_derivative(f, &prefix, eps)?;
        let hess = second_vertical_derivative(f, &prefix, eps)?;
        let inc: Vec<f64> = p.point(j + 1).iter().zip(p.point(j)).map(|(a, b)| a - b).collect();
        let qv = |a: usize, b: usize| match bracket {
            Bracket::Realized => inc[a] * inc[b],
            Bracket::Model(c) => c[a * n + b] * step,
        };
        for r in 0..k {
            let mut term = dt[r] * step;
            for a in 0..n {
                term += dx[r * n + a] * inc[a];
                for b in 0..n {
                    term += 0.5 * hess.matrices[r][(a, b)] * qv(a, b);
                }
            }
            acc[r] += term;
        }
    }
    let start = f.eval(&p.restrict_steps(0))?;
    let end = f.eval(p)?;
    Ok(end
        .iter()
        .zip(&start)
        .zip(&acc)
        .map(|((e, s), a)| (e - s - a).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// One row of an Itô convergence table.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ItoRow {
    pub num_steps: usize,
    pub rms_residual: f64,
    pub max_residual: f64,
}

/// RMS and max [`ito_residual`] over Brownian paths from `start`, one row per
/// step count. Coarser grids reuse the increments of the finest one, so all
/// rows see the same Brownian paths.
pub fn ito_convergence_table(
    f: &PathFunctional,
    step_counts: &[usize],
    num_paths: usize,
    horizon: f64,
    start: &[f64],
    seed: u64,
    bracket: &Bracket,
) -> Result<Vec<ItoRow>> {
    let finest = *step_counts
        .iter()
        .max()
        .ok_or_else(|| Error::param("step_counts", "must not be empty"))?;
    if step_counts.contains(&0) || step_counts.iter().any(|k| finest % k != 0) {
        return Err(Error::param("step_counts", "every entry must divide the largest"));
    }
    let n = start.len();
    let disc = Discretization::new(finest, horizon, num_paths.max(2), 1, seed)?;
    let fine = BrownianGrid::generate(&disc, n)?;
    step_counts
        .iter()
        .map(|&k| {
            let bg = fine.coarsen(finest / k)?;
            let residuals = (0..num_paths)
                .into_par_iter()
                .map(|p| ito_residual(f, &brownian_path(&bg, p, start)?, bracket, None))
                .collect::<Result<Vec<f64>>>()?;
            let rms = (residuals.iter().map(|r| r * r).sum::<f64>() / num_paths as f64).sqrt();
            let max = residuals.iter().copied().fold(0.0, f64::max);
            Ok(ItoRow {
                num_steps: k,
                rms_residual: rms,
                max_residual: max,
            })
        })
        .collect()
}

/// `start + Σ_{j<k} ΔW_j` along path `p` of the grid.
pub fn brownian_path(bg: &BrownianGrid, p: usize, start: &[f64]) -> Result<Path> {
    Error::check_dim("brownian path start", bg.dim(), start.len())?;
    let mut values = start.to_vec();
    let mut cur = start.to_vec();
    for k in 0..bg.num_steps() {
        for (c, dw) in cur.iter_mut().zip(bg.increment(p, k)) {
            *c += dw;
        }
        values.extend_from_slice(&cur);
    }
    Path::new(start.len(), bg.step(), values)
}

/// `count` independent paths `start + scale·W` with `num_steps` steps; path
/// `i` uses its own random stream so the set is prefix-stable in `count`.
pub fn sample_paths(count: usize, start: &[f64], step: f64, num_steps: usize, scale: f64, seed: u64) -> Result<Vec<Path>> {
    let n = start.len();
    let sd = scale * step.sqrt();
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut values = start.to_vec();
            for k in 0..num_steps {
                for c in 0..n {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    values.push(values[k * n + c] + sd * z);
                }
            }
            Path::new(n, step, values)
        })
        .collect()
}

/// The system on the joint path `(W, X)` of dimension `d + n`:
/// `b̃ = (0, b)`, `σ̃ = (I, σ)`, `h̃ = h`, `g̃(w, x) = g(x)`, `G̃ = (0, G)`.
#[derive(Debug, Clone)]
pub struct LiftedCoefficients {
    base: CoefficientSet,
    lifted: CoefficientSet,
}

impl LiftedCoefficients {
    pub fn base(&self) -> &CoefficientSet {
        &self.base
    }

    pub fn lifted(&self) -> &CoefficientSet {
        &self.lifted
    }

    pub fn dims(&self) -> Dims {
        self.lifted.dims()
    }
}

pub fn lift_coefficients(cs: &CoefficientSet) -> Result<LiftedCoefficients> {
    let Dims { n, m, d } = cs.dims();
    let base = Arc::new(cs.clone());

    let b = base.clone();
    let drift: PathFn = Arc::new(move |x, u, out| {
        out[..d].fill(0.0);
        b.drift_into(&x.window(d, n), u, &mut out[d..]);
    });
    let b = base.clone();
    let diffusion: PathFn = Arc::new(move |x, u, out| {
        out[..d * d].fill(0.0);
        for i in 0..d {
            out[i * d + i] = 1.0;
        }
        b.diffusion_into(&x.window(d, n), u, &mut out[d * d..]);
    });
    let b = base.clone();
    let driver: PathFn = Arc::new(move |x, u, out| b.driver_into(&x.window(d, n), u, out));
    let b = base;
    let terminal: TerminalFn = Arc::new(move |x, out| b.terminal_into(&x[d..], out));

    let mut g = DMatrix::zeros(m, d + n);
    g.view_mut((0, d), (m, n)).copy_from(cs.g_matrix());
    let lifted = CoefficientSet::builder(format!("{}_lifted", cs.name()), Dims::new(d + n, m, d))
        .g_matrix(g)
        .drift(drift)
        .diffusion(diffusion)
        .driver(driver)
        .terminal(terminal)
        .features(cs.features())
        .skip_rank_check()
        .build()?;
    Ok(LiftedCoefficients {
        base: cs.clone(),
        lifted,
    })
}

/// Residual of `D_t u + ½tr(σ̃σ̃ᵀD²_xx u) + b̃·D_x u − h(γ, u, v)` and the gap
/// `|v − D_x u σ̃|`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PpdeResidual {
    pub residual: Vec<f64>,
    pub gap: f64,
}

pub fn ppde_residual(
    u: &PathFunctional,
    v: &PathFunctional,
    lc: &LiftedCoefficients,
    p: &Path,
    eps: Option<f64>,
    dt: Option<f64>,
) -> Result<PpdeResidual> {
    if u.smoothness() != Smoothness::C12 {
        return Err(Error::SmoothnessRequired);
    }
    let cs = lc.lifted();
    let Dims { n, m, d } = cs.dims();
    Error::check_dim("ppde path", n, p.dim())?;
    Error::check_dim("u output", m, u.dim())?;
    Error::check_dim("v output", m * d, v.dim())?;
    let uv = u.eval(p)?;
    let vv = v.eval(p)?;
    let prepared = cs.prepare(p.clone());
    let ctx = prepared.context();
    let ctl = Control { y: &uv, z: &vv };
    let sigma = cs.diffusion(&ctx, ctl);
    let b = cs.drift(&ctx, ctl);
    let h = cs.driver(&ctx, ctl);

    let du = vertical_derivative(u, p, eps)?;
    let hess = second_vertical_derivative(u, p, eps)?;
    let dtu = horizontal_derivative(u, p, dt)?;
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = (0..d).map(|c| sigma[i * d + c] * sigma[j * d + c]).sum();
        }
    }
    let residual = (0..m)
        .map(|r| {
            let second = 0.5 * a.component_mul(&hess.matrices[r]).sum();
            let first: f64 = (0..n).map(|i| b[i] * du[r * n + i]).sum();
            dtu[r] + second + first - h[r]
        })
        .collect();
    let mut gap = 0.0;
    for r in 0..m {
        for c in 0..d {
            let dus: f64 = (0..n).map(|i| du[r * n + i] * sigma[i * d + c]).sum();
            gap += (vv[r * d + c] - dus).powi(2);
        }
    }
    Ok(PpdeResidual {
        residual,
        gap: gap.sqrt(),
    })
}

/// Comparison of `u(γ_t)` with `Y^{γ_t}(t)`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct FeynmanKacReport {
    pub time: f64,
    pub u_value: Vec<f64>,
    pub y_value: Vec<f64>,
    /// Euclidean norm of `u − Y`.
    pub gap: f64,
    pub stderr: Vec<f64>,
    /// Whether the prefix already ends at the horizon, so `Y = g`.
    pub terminal: bool,
}

impl FeynmanKacReport {
    /// `gap ≤ max(rel·|u|, 3·SE, 10⁻¹⁰)`.
    pub fn passes(&self, rel: f64) -> bool {
        let unorm = self.u_value.iter().map(|v| v * v).sum::<f64>().sqrt();
        let se = self.stderr.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.gap <= (rel * unorm).max(3.0 * se).max(1e-10)
    }
}

/// Solves the lifted system from the joint prefix `(W, X)` and compares its
/// `Y` at the prefix end with `u(prefix)`. A prefix ending at the horizon is
/// compared with `g` directly.
pub fn feynman_kac_check(
    u: &PathFunctional,
    cs: &CoefficientSet,
    constants: &AssumptionConstants,
    prefix: &Path,
    disc: &Discretization,
    schedule: &ContinuationSchedule,
) -> Result<FeynmanKacReport> {
    let lc = lift_coefficients(cs)?;
    let lifted = lc.lifted();
    let Dims { n, d, .. } = lifted.dims();
    Error::check_dim("prefix", n, prefix.dim())?;
    let uv = u.eval(prefix)?;
    let t = prefix.end_time();
    if prefix.num_steps() >= disc.num_steps {
        if prefix.num_steps() > disc.num_steps {
            return Err(Error::OutOfRange {
                time: t,
                lower: 0.0,
                upper: disc.horizon,
            });
        }
        let g = lifted.terminal(prefix.last());
        return Ok(FeynmanKacReport {
            time: t,
            gap: distance(&uv, &g),
            stderr: vec![0.0; g.len()],
            u_value: uv,
            y_value: g,
            terminal: true,
        });
    }
    let bg = BrownianGrid::generate(disc, d)?;
    let sol = solve_fbsde_on(lifted, constants, disc, &bg, &ForwardStart::Prefix(prefix.clone()), schedule)?;
    Ok(FeynmanKacReport {
        time: t,
        gap: distance(&uv, &sol.y0),
        u_value: uv,
        y_value: sol.y0,
        stderr: sol.y0_stderr,
        terminal: false,
    })
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// One row of a residual sweep.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ResidualRow {
    pub path_id: usize,
    pub t: f64,
    pub residual: Vec<f64>,
    pub gap: f64,
}

/// Evaluates [`ppde_residual`] on every path in parallel.
pub fn ppde_sweep(
    u: &PathFunctional,
    v: &PathFunctional,
    lc: &LiftedCoefficients,
    paths: &[Path],
    eps: Option<f64>,
    dt: Option<f64>,
) -> Result<Vec<ResidualRow>> {
    paths
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let r = ppde_residual(u, v, lc, p, eps, dt)?;
            Ok(ResidualRow {
                path_id: i,
                t: p.end_time(),
                residual: r.residual,
                gap: r.gap,
            })
        })
        .collect()
}

/// Columns `path_id, t, residual_1..m, gap`.
pub fn write_residual_csv<W: Write>(rows: &[ResidualRow], writer: W) -> Result<()> {
    let mut w = csv_writer(writer);
    let m = rows.first().map_or(1, |r| r.residual.len());
    let mut header = vec!["path_id".to_string(), "t".to_string()];
    header.extend((1..=m).map(|i| format!("residual_{i}")));
    header.push("gap".into());
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.path_id.to_string(), fmt_f64(r.t)];
        rec.extend(r.residual.iter().map(|v| fmt_f64(*v)));
        rec.push(fmt_f64(r.gap));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `functional, num_steps, rms_residual, max_residual`.
pub fn write_ito_table_csv<W: Write>(tables: &[(&str, Vec<ItoRow>)], writer: W) -> Result<()> {
    let mut w = csv_writer(writer);
    w.write_record(["functional", "num_steps", "rms_residual", "max_residual"])?;
    for (name, rows) in tables {
        for r in rows {
            w.write_record([
                name.to_string(),
                r.num_steps.to_string(),
                fmt_f64(r.rms_residual),
                fmt_f64(r.max_residual),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `γ(t)ᵢ²` of component `i`.
pub fn last_value_squared(i: usize) -> PathFunctional {
    PathFunctional::scalar(Smoothness::C12, move |p| p.last()[i].powi(2))
}

/// `∫_0^t γᵢ(s) ds` by left sums.
pub fn running_integral_functional(i: usize) -> PathFunctional {
    PathFunctional::scalar(Smoothness::C12, move |p| {
        (0..p.num_steps()).map(|k| p.point(k)[i] * p.grid_step()).sum()
    })
}
