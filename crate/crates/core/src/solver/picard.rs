use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::backward::{backward_pass, basis_for, Backward};
use super::regression::RegressionBasis;
use super::{
    simulate_forward, AlphaLevel, BrownianGrid, ConvergenceTrace, Discretization, ForwardPaths, ForwardStart,
    PathField, SolutionEstimate,
};
use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};

/// Inner fixed-point settings.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PicardOptions {
    /// Stop when `R_i ≤ tol·(1 + R_0)`.
    pub tol: f64,
    pub max_iters: usize,
    /// Initial relaxation `θ` in `U ← U + θ(T(U) − U)`.
    pub relaxation: f64,
    /// `θ` is halved whenever the residual grows after the first
    /// iteration, down to this floor.
    pub min_relaxation: f64,
    /// Number of past iterates mixed in by Anderson acceleration; 0 gives
    /// the plain relaxed iteration.
    #[serde(default)]
    pub anderson_depth: usize,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 200,
            relaxation: 1.0,
            min_relaxation: 1.0 / 64.0,
            anderson_depth: 0,
        }
    }
}

impl PicardOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::param("tol", "must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters", "must be positive"));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(Error::param("relaxation", "must lie in (0, 1]"));
        }
        if !(self.min_relaxation > 0.0 && self.min_relaxation <= self.relaxation) {
            return Err(Error::param("min_relaxation", "must lie in (0, relaxation]"));
        }
        Ok(())
    }
}

/// A control process `(Y, Z)` on the solve window; `Y` has one more row
/// than `Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Controls {
    pub y: PathField,
    pub z: PathField,
}

impl Controls {
    pub fn zeros(num_paths: usize, window: usize, m: usize, md: usize) -> Self {
        Self {
            y: PathField::zeros(num_paths, window + 1, m),
            z: PathField::zeros(num_paths, window, md),
        }
    }
}

/// Lagged Picard iteration under frozen noise: `X^{i+1}` from the forward
/// pass driven by `U^i`, then `T(U^i)` from the backward pass on `X^{i+1}`,
/// and `U^{i+1} = U^i + θ(T(U^i) − U^i)`.
pub fn picard_solve(
    cs: &CoefficientSet,
    disc: &Discretization,
    bg: &BrownianGrid,
    start: &ForwardStart,
    init: Option<&Controls>,
    opts: &PicardOptions,
) -> Result<SolutionEstimate> {
    disc.validate()?;
    let basis = basis_for(cs, disc.basis_degree);
    let (result, level) = run_level(cs, &basis, bg, start, init, opts, 1.0, 1.0);
    let trace = ConvergenceTrace { levels: vec![level] };
    match result {
        Ok((fwd, back)) => Ok(SolutionEstimate::assemble(cs, fwd, back, trace)),
        Err(e) => Err(attach_trace(e, trace)),
    }
}

pub(crate) fn attach_trace(e: Error, trace: ConvergenceTrace) -> Error {
    match e {
        Error::NotConverged { reason, .. } => Error::NotConverged {
            reason,
            trace: Box::new(trace),
        },
        other => other,
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn run_level(
    cs: &CoefficientSet,
    basis: &RegressionBasis,
    bg: &BrownianGrid,
    start: &ForwardStart,
    init: Option<&Controls>,
    opts: &PicardOptions,
    alpha: f64,
    delta: f64,
) -> (Result<(ForwardPaths, Backward)>, AlphaLevel) {
    let mut level = AlphaLevel {
        alpha,
        delta,
        relaxation: opts.relaxation,
        ..AlphaLevel::default()
    };
    let result = iterate(cs, basis, bg, start, init, opts, &mut level);
    level.inner_iterations = level.residuals.len();
    level.final_residual = level.residuals.last().copied().unwrap_or(f64::NAN);
    level.converged = result.is_ok();
    (result, level)
}

fn iterate(
    cs: &CoefficientSet,
    basis: &RegressionBasis,
    bg: &BrownianGrid,
    start: &ForwardStart,
    init: Option<&Controls>,
    opts: &PicardOptions,
    level: &mut AlphaLevel,
) -> Result<(ForwardPaths, Backward)> {
    opts.validate()?;
    let dims = cs.dims();
    let n = dims.n;
    start.validate(n, bg)?;
    let paths = bg.num_paths();
    let num_steps = bg.num_steps();
    let offset = start.offset();
    let window = num_steps - offset;
    let step = bg.step();

    let mut u = match init {
        Some(c) => {
            Error::check_dim("initial controls (paths)", paths, c.y.num_paths())?;
            Error::check_dim("initial controls (rows)", window + 1, c.y.rows())?;
            Error::check_dim("initial controls (y)", dims.m, c.y.width())?;
            Error::check_dim("initial controls (z)", dims.m * dims.d, c.z.width())?;
            c.clone()
        }
        None => Controls::zeros(paths, window, dims.m, dims.m * dims.d),
    };
    let mut prev_x: Option<PathField> = None;
    let mut theta = opts.relaxation;
    let mut r0 = f64::NAN;
    let mut mixer = Anderson::new(opts.anderson_depth);

    for i in 0..opts.max_iters {
        let fwd = simulate_forward(cs, &u.y, &u.z, bg, start)?;
        let back = backward_pass(cs, &fwd, bg, basis)?;

        let per_path: Vec<f64> = (0..paths)
            .into_par_iter()
            .map(|p| {
                let mut du = 0.0;
                for j in 0..window {
                    for (a, b) in back.y.at(p, j).iter().zip(u.y.at(p, j)) {
                        du += (a - b) * (a - b);
                    }
                    for (a, b) in back.z.at(p, j).iter().zip(u.z.at(p, j)) {
                        du += (a - b) * (a - b);
                    }
                }
                let xk = |k: usize| match &prev_x {
                    Some(px) => px.at(p, k),
                    None => start.current(),
                };
                let mut dx = 0.0;
                for k in offset..num_steps {
                    for (a, b) in fwd.x.at(p, k).iter().zip(xk(k)) {
                        dx += (a - b) * (a - b);
                    }
                }
                let dxt: f64 = fwd
                    .x
                    .at(p, num_steps)
                    .iter()
                    .zip(xk(num_steps))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                theta * theta * du * step + dxt + dx * step
            })
            .collect();
        let r = per_path.iter().sum::<f64>() / paths as f64;
        if let Some(&last) = level.residuals.last() {
            level.ratios.push(r / last);
        } else {
            r0 = r;
        }
        level.residuals.push(r);
        level.relaxations.push(theta);
        if !r.is_finite() {
            return Err(Error::NotConverged {
                reason: format!("non-finite residual at iteration {i}"),
                trace: Box::default(),
            });
        }
        if r <= opts.tol * (1.0 + r0) {
            level.relaxation = theta;
            return Ok((fwd, back));
        }

        let grew = i >= 2 && r > level.residuals[i - 1];
        if grew {
            theta = (theta / 2.0).max(opts.min_relaxation);
            mixer.reset();
        }
        mixer.update(&mut u, &back, theta);
        prev_x = Some(fwd.x);
    }
    level.relaxation = theta;
    Err(Error::NotConverged {
        reason: format!("{} iterations without reaching tolerance {:e}", opts.max_iters, opts.tol),
        trace: Box::default(),
    })
}

/// Type-II Anderson mixing over the stacked `(Y, Z)` fields. With depth 0
/// this is `U ← U + θ(T(U) − U)`.
struct Anderson {
    depth: usize,
    prev: Option<(Vec<f64>, Vec<f64>)>,
    du: VecDeque<Vec<f64>>,
    df: VecDeque<Vec<f64>>,
}

impl Anderson {
    fn new(depth: usize) -> Self {
        Self {
            depth,
            prev: None,
            du: VecDeque::new(),
            df: VecDeque::new(),
        }
    }

    fn reset(&mut self) {
        self.prev = None;
        self.du.clear();
        self.df.clear();
    }

    fn update(&mut self, u: &mut Controls, back: &Backward, theta: f64) {
        if self.depth == 0 {
            relax(&mut u.y, &back.y, theta);
            relax(&mut u.z, &back.z, theta);
            return;
        }
        let x: Vec<f64> = u.y.data().iter().chain(u.z.data()).copied().collect();
        let f: Vec<f64> = back
            .y
            .data()
            .iter()
            .chain(back.z.data())
            .zip(&x)
            .map(|(t, a)| t - a)
            .collect();
        if let Some((px, pf)) = self.prev.take() {
            if self.du.len() == self.depth {
                self.du.pop_front();
                self.df.pop_front();
            }
            self.du.push_back(x.par_iter().zip(&px).map(|(a, b)| a - b).collect());
            self.df.push_back(f.par_iter().zip(&pf).map(|(a, b)| a - b).collect());
        }
        let mut next: Vec<f64> = x.par_iter().zip(&f).map(|(a, b)| a + theta * b).collect();
        let m = self.df.len();
        if m > 0 {
            let dot = |a: &[f64], b: &[f64]| a.par_iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
            let mut gram = DMatrix::zeros(m, m);
            let mut rhs = DVector::zeros(m);
            for i in 0..m {
                rhs[i] = dot(&self.df[i], &f);
                for j in 0..=i {
                    let v = dot(&self.df[i], &self.df[j]);
                    gram[(i, j)] = v;
                    gram[(j, i)] = v;
                }
            }
            let ridge = 1e-12 * gram.trace().max(f64::MIN_POSITIVE);
            for i in 0..m {
                gram[(i, i)] += ridge;
            }
            if let Some(gamma) = gram.cholesky().map(|c| c.solve(&rhs)) {
                for (j, g) in gamma.iter().enumerate() {
                    let (du, df) = (&self.du[j], &self.df[j]);
                    next.par_iter_mut()
                        .zip(du.par_iter().zip(df))
                        .for_each(|(v, (a, b))| *v -= g * (a + theta * b));
                }
            }
        }
        let (ny, nz) = next.split_at(u.y.data().len());
        u.y.data_mut().copy_from_slice(ny);
        u.z.data_mut().copy_from_slice(nz);
        self.prev = Some((x, f));
    }
}

fn relax(u: &mut PathField, target: &PathField, theta: f64) {
    for (a, b) in u.data_mut().iter_mut().zip(target.data()) {
        *a += theta * (b - *a);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{registry_get, Params};

    fn example31(m: usize) -> (CoefficientSet, Discretization, BrownianGrid) {
        let cs = registry_get("example31", &Params::new()).unwrap();
        let disc = Discretization::new(20, 1.0, m, 1, 11).unwrap();
        let bg = BrownianGrid::generate(&disc, 1).unwrap();
        (cs, disc, bg)
    }

    #[test]
    fn options_are_validated() {
        let bad = PicardOptions {
            min_relaxation: 0.5,
            relaxation: 0.25,
            ..PicardOptions::default()
        };
        assert!(bad.validate().is_err());
        assert!(PicardOptions {
            tol: 0.0,
            ..PicardOptions::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn anderson_mixing_reaches_the_same_fixed_point() {
        let (cs, disc, bg) = example31(400);
        let start = ForwardStart::Point(vec![1.0]);
        let plain = PicardOptions {
            tol: 1e-20,
            max_iters: 400,
            relaxation: 0.125,
            min_relaxation: 0.125,
            anderson_depth: 0,
        };
        let mixed = PicardOptions {
            anderson_depth: 4,
            ..plain
        };
        let a = picard_solve(&cs, &disc, &bg, &start, None, &plain).unwrap();
        let b = picard_solve(&cs, &disc, &bg, &start, None, &mixed).unwrap();
        assert!(b.trace.levels[0].inner_iterations < a.trace.levels[0].inner_iterations);
        assert!(a.y.relative_distance(&b.y) < 1e-7);
        assert!(a.z.relative_distance(&b.z) < 1e-7);
    }

    #[test]
    fn relaxation_halves_on_growth_and_respects_floor() {
        let (cs, disc, bg) = example31(200);
        let opts = PicardOptions {
            max_iters: 30,
            relaxation: 1.0,
            min_relaxation: 0.25,
            ..PicardOptions::default()
        };
        let trace = match picard_solve(&cs, &disc, &bg, &ForwardStart::Point(vec![1.0]), None, &opts) {
            Ok(sol) => sol.trace,
            Err(Error::NotConverged { trace, .. }) => *trace,
            Err(e) => panic!("{e}"),
        };
        let level = &trace.levels[0];
        assert!(level.relaxations.iter().all(|t| *t >= 0.25));
        for w in level.relaxations.windows(2) {
            assert!(w[1] == w[0] || w[1] == (w[0] / 2.0).max(0.25));
        }
    }
}
