use std::sync::Arc;

use nalgebra::DMatrix;

use super::{picard_solve, BrownianGrid, Discretization, ForwardStart, PicardOptions, SolutionEstimate};
use crate::coefficients::{mat_t_vec, mat_vec, CoefficientSet, Dims, PathFn, TerminalFn};
use crate::error::{Error, Result};
use crate::paths::grid_index;

/// A deterministic forcing process on the time grid.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeForcing {
    Zero,
    Constant(Vec<f64>),
    /// One value per grid point `t_k = k·step`; the last value is held
    /// beyond the end.
    Grid { step: f64, values: Vec<Vec<f64>> },
}

impl TimeForcing {
    fn len(&self) -> Option<usize> {
        match self {
            TimeForcing::Zero => None,
            TimeForcing::Constant(v) => Some(v.len()),
            TimeForcing::Grid { values, .. } => values.first().map(Vec::len),
        }
    }

    fn validate(&self, name: &'static str, expected: usize) -> Result<()> {
        if let Some(len) = self.len() {
            Error::check_dim(name, expected, len)?;
        }
        if let TimeForcing::Grid { step, values } = self {
            if !(*step > 0.0) || values.is_empty() {
                return Err(Error::param(name, "grid forcing needs a positive step and at least one value"));
            }
            if values.iter().any(|v| v.len() != expected) {
                return Err(Error::param(name, "grid forcing rows differ in length"));
            }
        }
        Ok(())
    }

    fn add_at(&self, t: f64, out: &mut [f64]) {
        let v = match self {
            TimeForcing::Zero => return,
            TimeForcing::Constant(v) => v,
            TimeForcing::Grid { step, values } => {
                let k = grid_index(t, *step).unwrap_or((t / step).round() as usize);
                &values[k.min(values.len() - 1)]
            }
        };
        for (o, f) in out.iter_mut().zip(v) {
            *o += f;
        }
    }
}

/// The terminal forcing `g₀`.
#[derive(Clone)]
pub enum TerminalForcing {
    Zero,
    Constant(Vec<f64>),
    /// A function of the terminal forward state.
    Function(TerminalFn),
}

impl std::fmt::Debug for TerminalForcing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TerminalForcing::Zero => write!(f, "Zero"),
            TerminalForcing::Constant(v) => f.debug_tuple("Constant").field(v).finish(),
            TerminalForcing::Function(_) => write!(f, "Function(..)"),
        }
    }
}

/// The linear system
/// `dX = (−β₂GᵀY + b₀)dt + (−β₂GᵀZ + σ₀)dW`,
/// `dY = (−β₁GX + h₀)dt + Z dW`, `Y(T) = λGX(T) + g₀`.
#[derive(Debug, Clone)]
pub struct LinearBaseSpec {
    pub beta1: f64,
    pub beta2: f64,
    pub lambda: f64,
    pub b0: TimeForcing,
    /// Row-major `n×d`.
    pub sigma0: TimeForcing,
    pub h0: TimeForcing,
    pub g0: TerminalForcing,
}

impl LinearBaseSpec {
    pub fn unforced(beta1: f64, beta2: f64, lambda: f64) -> Self {
        Self {
            beta1,
            beta2,
            lambda,
            b0: TimeForcing::Zero,
            sigma0: TimeForcing::Zero,
            h0: TimeForcing::Zero,
            g0: TerminalForcing::Zero,
        }
    }

    pub fn validate(&self, dims: Dims) -> Result<()> {
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2), ("lambda", self.lambda)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(name, "must be a nonnegative finite number"));
            }
        }
        self.b0.validate("b0", dims.n)?;
        self.sigma0.validate("sigma0", dims.n * dims.d)?;
        self.h0.validate("h0", dims.m)?;
        if let TerminalForcing::Constant(v) = &self.g0 {
            Error::check_dim("g0", dims.m, v.len())?;
        }
        Ok(())
    }
}

/// Builds the coefficient set of the linear system.
pub fn linear_base_set(spec: &LinearBaseSpec, dims: Dims, g: DMatrix<f64>) -> Result<CoefficientSet> {
    spec.validate(dims)?;
    let Dims { n, m, d } = dims;
    let gm = Arc::new(g.clone());

    let (beta1, beta2, lambda) = (spec.beta1, spec.beta2, spec.lambda);
    let (gd, b0) = (gm.clone(), spec.b0.clone());
    let drift: PathFn = Arc::new(move |x, u, out| {
        mat_t_vec(&gd, u.y, out);
        out.iter_mut().for_each(|o| *o *= -beta2);
        b0.add_at(x.time(), out);
    });
    let (gs, s0) = (gm.clone(), spec.sigma0.clone());
    let diffusion: PathFn = Arc::new(move |x, u, out| {
        for j in 0..n {
            for c in 0..d {
                let lin: f64 = (0..m).map(|i| gs[(i, j)] * u.z[i * d + c]).sum();
                out[j * d + c] = -beta2 * lin;
            }
        }
        s0.add_at(x.time(), out);
    });
    let (gh, h0) = (gm.clone(), spec.h0.clone());
    let driver: PathFn = Arc::new(move |x, _, out| {
        mat_vec(&gh, x.current(), out);
        out.iter_mut().for_each(|o| *o *= -beta1);
        h0.add_at(x.time(), out);
    });
    let g0 = spec.g0.clone();
    let terminal: TerminalFn = Arc::new(move |x, out| {
        mat_vec(&gm, x, out);
        out.iter_mut().for_each(|o| *o *= lambda);
        match &g0 {
            TerminalForcing::Zero => {}
            TerminalForcing::Constant(c) => out.iter_mut().zip(c).for_each(|(o, c)| *o += c),
            TerminalForcing::Function(f) => {
                let mut extra = vec![0.0; out.len()];
                f(x, &mut extra);
                out.iter_mut().zip(extra).for_each(|(o, c)| *o += c);
            }
        }
    });
    CoefficientSet::builder("linear_base", dims)
        .g_matrix(g)
        .drift(drift)
        .diffusion(diffusion)
        .driver(driver)
        .terminal(terminal)
        .build()
}

/// Solves the linear system by Picard iteration.
#[allow(clippy::too_many_arguments)]
pub fn solve_linear_base(
    spec: &LinearBaseSpec,
    dims: Dims,
    g: DMatrix<f64>,
    disc: &Discretization,
    bg: &BrownianGrid,
    start: &ForwardStart,
    opts: &PicardOptions,
) -> Result<SolutionEstimate> {
    let cs = linear_base_set(spec, dims, g)?;
    picard_solve(&cs, disc, bg, start, None, opts)
}
