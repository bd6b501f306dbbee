//! Discrete solver: Euler–Maruyama forward pass, least-squares Monte Carlo
//! backward pass, a relaxed Picard loop under frozen noise and an outer
//! continuation in `α`.

mod backward;
mod field;
mod forward;
mod grid;
mod linear;
mod picard;
mod regression;

use std::io::Write;

use crate::coefficients::{continuation_set, CoefficientSet, Dims};
use crate::conditions::AssumptionConstants;
use crate::error::{Error, Result};
use crate::paths::{csv_writer, fmt_f64};

pub use backward::{backward_lsmc, basis_for};
pub use field::PathField;
pub use forward::{simulate_forward, ForwardPaths, ForwardStart};
pub use grid::{BrownianGrid, Discretization};
pub use linear::{linear_base_set, solve_linear_base, LinearBaseSpec, TerminalForcing, TimeForcing};
pub use picard::{picard_solve, Controls, PicardOptions};
pub use regression::{project, RegressionBasis};

use backward::Backward;
use picard::{attach_trace, run_level};

/// One inner Picard run at a fixed `α`.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AlphaLevel {
    pub alpha: f64,
    /// Continuation step that led to this level.
    pub delta: f64,
    pub inner_iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
    /// Relaxation in force when the level ended.
    pub relaxation: f64,
    pub residuals: Vec<f64>,
    /// `R_{i+1} / R_i`.
    pub ratios: Vec<f64>,
    pub relaxations: Vec<f64>,
}

/// Every attempted level, accepted or not, in order.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConvergenceTrace {
    pub levels: Vec<AlphaLevel>,
}

impl ConvergenceTrace {
    /// `(α, δ, inner iterations, final residual)` per level.
    pub fn alpha_levels(&self) -> Vec<(f64, f64, usize, f64)> {
        self.levels
            .iter()
            .map(|l| (l.alpha, l.delta, l.inner_iterations, l.final_residual))
            .collect()
    }

    pub fn residual_history(&self) -> Vec<Vec<f64>> {
        self.levels.iter().map(|l| l.residuals.clone()).collect()
    }

    pub fn contraction_ratios(&self) -> Vec<Vec<f64>> {
        self.levels.iter().map(|l| l.ratios.clone()).collect()
    }

    pub fn last(&self) -> Option<&AlphaLevel> {
        self.levels.last()
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuationMode {
    /// A single level at `α = 1`.
    Direct,
    /// Levels from `α = 0` to `1` with adaptive steps.
    Homotopy,
}

/// Outer continuation settings.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ContinuationSchedule {
    pub mode: ContinuationMode,
    pub delta_init: f64,
    pub delta_min: f64,
    pub inner_tol: f64,
    pub max_inner_iters: usize,
    pub relaxation: f64,
    pub min_relaxation: f64,
    pub anderson_depth: usize,
}

impl Default for ContinuationSchedule {
    fn default() -> Self {
        Self {
            mode: ContinuationMode::Homotopy,
            delta_init: 0.5,
            delta_min: 1.0 / 64.0,
            inner_tol: 1e-8,
            max_inner_iters: 200,
            relaxation: 1.0,
            min_relaxation: 1.0 / 64.0,
            anderson_depth: 0,
        }
    }
}

impl ContinuationSchedule {
    pub fn direct() -> Self {
        Self {
            mode: ContinuationMode::Direct,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_init > 0.0 && self.delta_init <= 1.0) {
            return Err(Error::param("delta_init", "must lie in (0, 1]"));
        }
        if !(self.delta_min > 0.0) {
            return Err(Error::param("delta_min", "must be positive"));
        }
        if self.delta_min > self.delta_init {
            return Err(Error::param("delta_min", "must not exceed delta_init"));
        }
        self.picard_options().validate()
    }

    pub fn picard_options(&self) -> PicardOptions {
        PicardOptions {
            tol: self.inner_tol,
            max_iters: self.max_inner_iters,
            relaxation: self.relaxation,
            min_relaxation: self.min_relaxation,
            anderson_depth: self.anderson_depth,
        }
    }
}

/// Discrete `(X, Y, Z)` with `Y(0)` and diagnostics.
///
/// `x` covers the whole grid `t_0..t_K` (including any prefix); `y` and `z`
/// cover the solve window starting at grid index `offset`.
#[derive(Debug, Clone)]
pub struct SolutionEstimate {
    pub x: PathField,
    pub y: PathField,
    pub z: PathField,
    /// Cross-path mean of `Y` at the window start.
    pub y0: Vec<f64>,
    /// Standard error of `y0` from the pathwise reconstruction
    /// `g(X_K) − Σ h Δ − Σ Z ΔW`, with antithetic pairs averaged first.
    pub y0_stderr: Vec<f64>,
    pub trace: ConvergenceTrace,
    dims: Dims,
    offset: usize,
    step: f64,
}

impl SolutionEstimate {
    pub(crate) fn assemble(cs: &CoefficientSet, fwd: ForwardPaths, back: Backward, trace: ConvergenceTrace) -> Self {
        let dims = cs.dims();
        let m = dims.m;
        let y0 = back.y.mean_at(0);
        let paths = back.y.num_paths();
        // antithetic partners are averaged before the variance estimate
        let pairs = paths / 2;
        let mut y0_stderr = vec![0.0; m];
        for i in 0..m {
            let samples: Vec<f64> = if pairs >= 2 {
                (0..pairs)
                    .map(|q| 0.5 * (back.xi[2 * q * m + i] + back.xi[(2 * q + 1) * m + i]))
                    .collect()
            } else {
                (0..paths).map(|p| back.xi[p * m + i]).collect()
            };
            let count = samples.len() as f64;
            let mean = samples.iter().sum::<f64>() / count;
            let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (count - 1.0).max(1.0);
            y0_stderr[i] = (var / count).sqrt();
        }
        Self {
            offset: fwd.offset(),
            step: fwd.step(),
            x: fwd.x,
            y: back.y,
            z: back.z,
            y0,
            y0_stderr,
            trace,
            dims,
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn num_paths(&self) -> usize {
        self.y.num_paths()
    }

    /// Number of steps in the solve window.
    pub fn window(&self) -> usize {
        self.z.rows()
    }

    /// The `(Y, Z)` fields, e.g. to warm-start another solve.
    pub fn controls(&self) -> Controls {
        Controls {
            y: self.y.clone(),
            z: self.z.clone(),
        }
    }

    /// `max_p |Y_K − g(X_K)|`.
    pub fn terminal_gap(&self, cs: &CoefficientSet) -> f64 {
        let k = self.x.rows() - 1;
        let w = self.window();
        (0..self.num_paths())
            .flat_map(|p| {
                let g = cs.terminal(self.x.at(p, k));
                g.into_iter()
                    .zip(self.y.at(p, w).to_vec())
                    .map(|(a, b)| (a - b).abs())
                    .collect::<Vec<_>>()
            })
            .fold(0.0, f64::max)
    }

    /// Columns `t, mean_X*, mean_Y*, mean_Z*, se_X*, se_Y*, se_Z*` over the
    /// solve window. `Z` cells are empty on the terminal row.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let Dims { n, m, d } = self.dims;
        let mut w = csv_writer(writer);
        let mut header = vec!["t".to_string()];
        for prefix in ["mean", "se"] {
            header.extend((1..=n).map(|i| format!("{prefix}_X{i}")));
            header.extend((1..=m).map(|i| format!("{prefix}_Y{i}")));
            for i in 1..=m {
                header.extend((1..=d).map(|c| format!("{prefix}_Z{i}{c}")));
            }
        }
        w.write_record(&header)?;
        let window = self.window();
        for j in 0..=window {
            let k = self.offset + j;
            let mut row = vec![fmt_f64(k as f64 * self.step)];
            let z = (j < window).then(|| (self.z.mean_at(j), self.z.stderr_at(j)));
            let fmt_z = |v: Option<&Vec<f64>>| -> Vec<String> {
                match v {
                    Some(v) => v.iter().map(|x| fmt_f64(*x)).collect(),
                    None => vec![String::new(); m * d],
                }
            };
            row.extend(self.x.mean_at(k).iter().map(|v| fmt_f64(*v)));
            row.extend(self.y.mean_at(j).iter().map(|v| fmt_f64(*v)));
            row.extend(fmt_z(z.as_ref().map(|z| &z.0)));
            row.extend(self.x.stderr_at(k).iter().map(|v| fmt_f64(*v)));
            row.extend(self.y.stderr_at(j).iter().map(|v| fmt_f64(*v)));
            row.extend(fmt_z(z.as_ref().map(|z| &z.1)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Solves the functional FBSDE with a fresh Brownian grid drawn from
/// `disc.seed`.
pub fn solve_fbsde(
    cs: &CoefficientSet,
    constants: &AssumptionConstants,
    disc: &Discretization,
    start: &ForwardStart,
    schedule: &ContinuationSchedule,
) -> Result<SolutionEstimate> {
    let bg = BrownianGrid::generate(disc, cs.dims().d)?;
    solve_fbsde_on(cs, constants, disc, &bg, start, schedule)
}

/// As [`solve_fbsde`] on a given grid.
///
/// Homotopy mode solves the linear system at `α = 0`, then advances
/// `α ← min(1, α + δ)`, warm-starting each level from the previous one and
/// halving `δ` whenever a level fails to converge.
pub fn solve_fbsde_on(
    cs: &CoefficientSet,
    constants: &AssumptionConstants,
    disc: &Discretization,
    bg: &BrownianGrid,
    start: &ForwardStart,
    schedule: &ContinuationSchedule,
) -> Result<SolutionEstimate> {
    disc.validate()?;
    schedule.validate()?;
    constants.validate(cs.dims())?;
    let opts = schedule.picard_options();
    let basis = basis_for(cs, disc.basis_degree);
    let mut trace = ConvergenceTrace::default();

    if schedule.mode == ContinuationMode::Direct {
        let (result, level) = run_level(cs, &basis, bg, start, None, &opts, 1.0, 1.0);
        trace.levels.push(level);
        return match result {
            Ok((fwd, back)) => Ok(SolutionEstimate::assemble(cs, fwd, back, trace)),
            Err(e) => Err(attach_trace(e, trace)),
        };
    }

    let (beta1, beta2) = (constants.beta1, constants.beta2);
    let base = continuation_set(cs, 0.0, beta1, beta2)?;
    let (result, level) = run_level(&base, &basis, bg, start, None, &opts, 0.0, 0.0);
    trace.levels.push(level);
    let (mut fwd, mut back) = match result {
        Ok(v) => v,
        Err(e) => return Err(attach_trace(e, trace)),
    };
    let mut alpha = 0.0;
    let mut delta = schedule.delta_init;
    while alpha < 1.0 {
        let next = (alpha + delta).min(1.0);
        let level_set;
        let target = if next == 1.0 {
            cs
        } else {
            level_set = continuation_set(cs, next, beta1, beta2)?;
            &level_set
        };
        let warm = Controls {
            y: back.y.clone(),
            z: back.z.clone(),
        };
        let (result, level) = run_level(target, &basis, bg, start, Some(&warm), &opts, next, delta);
        trace.levels.push(level);
        match result {
            Ok((f, b)) => {
                alpha = next;
                fwd = f;
                back = b;
            }
            Err(Error::NotConverged { .. } | Error::BlowUp { .. } | Error::NonFiniteCoefficient { .. }) => {
                delta /= 2.0;
                if delta < schedule.delta_min {
                    return Err(Error::NotConverged {
                        reason: format!("continuation step fell below delta_min at alpha = {alpha}"),
                        trace: Box::new(trace),
                    });
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(SolutionEstimate::assemble(cs, fwd, back, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{registry_get, Params};

    fn identity_constants() -> AssumptionConstants {
        AssumptionConstants::new(1.0, 1.0, 1.0, 1.0)
    }

    #[test]
    fn schedule_validation() {
        assert!(ContinuationSchedule::default().validate().is_ok());
        let bad = ContinuationSchedule {
            delta_min: 0.75,
            delta_init: 0.5,
            ..ContinuationSchedule::default()
        };
        let err = bad.validate().unwrap_err().to_string();
        assert!(err.contains("delta_min"));
    }

    #[test]
    fn decoupled_identity_direct() {
        let cs = registry_get("decoupled_identity", &Params::new()).unwrap();
        let disc = Discretization::new(10, 1.0, 2000, 1, 1).unwrap();
        let sol = solve_fbsde(
            &cs,
            &identity_constants(),
            &disc,
            &ForwardStart::Point(vec![0.7]),
            &ContinuationSchedule::direct(),
        )
        .unwrap();
        assert!((sol.y0[0] - 0.7).abs() < 1e-8);
        assert_eq!(sol.terminal_gap(&cs), 0.0);
        assert_eq!(sol.trace.levels[0].inner_iterations, 2);
    }

    #[test]
    fn homotopy_on_decoupled_problem_reaches_alpha_one() {
        let cs = registry_get("decoupled_identity", &Params::new()).unwrap();
        let disc = Discretization::new(8, 1.0, 500, 1, 2).unwrap();
        let sol = solve_fbsde(
            &cs,
            &identity_constants(),
            &disc,
            &ForwardStart::Point(vec![0.2]),
            &ContinuationSchedule::default(),
        )
        .unwrap();
        let last = sol.trace.last().unwrap();
        assert_eq!(last.alpha, 1.0);
        assert!(last.converged);
        assert!((sol.y0[0] - 0.2).abs() < 1e-8);
    }

    #[test]
    fn csv_and_trace_exports() {
        let cs = registry_get("decoupled_identity", &Params::new()).unwrap();
        let disc = Discretization::new(4, 1.0, 50, 1, 3).unwrap();
        let sol = solve_fbsde(
            &cs,
            &identity_constants(),
            &disc,
            &ForwardStart::Point(vec![0.0]),
            &ContinuationSchedule::direct(),
        )
        .unwrap();
        let mut buf = Vec::new();
        sol.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,mean_X1,mean_Y1,mean_Z11,se_X1,se_Y1,se_Z11");
        assert_eq!(lines.len(), 6);
        assert!(lines[5].ends_with(','));
        let mut json = Vec::new();
        sol.trace.write_json(&mut json).unwrap();
        let back: ConvergenceTrace = serde_json::from_slice(&json).unwrap();
        assert_eq!(back, sol.trace);
    }
}
