//! Reference solution of `example31` through a Riccati reduction.
//!
//! With `A(t) = ∫_0^t X ds`, the ansatz `Y = aX + cA` turns the problem into
//!
//! ```text
//! a' = 3 − c − 2a²,   a(1) = −1
//! c' = 1 − a − 2ac,   c(1) = 0
//! Z  = aA / (1 − 2a)
//! ```
//!
//! Derivation: Itô on `Y = aX + cA` gives diffusion `a(A + 2Z)`, which must
//! equal `Z`, hence `Z = aA/(1 − 2a)`. The drift is
//! `a'X + a(A + 2Y) + c'A + cX`; substituting `Y` and matching the `X` and `A`
//! coefficients against `A + 3X` gives the two equations above.

use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::paths::{csv_writer, fmt_f64, Path};
use crate::ppde::{PathFunctional, Smoothness};

/// `a(0)` from an independent high-accuracy integration, kept as a fixed
/// regression target.
pub const REFERENCE_A0: f64 = -1.3683726524520;
/// `c(0)` from the same integration.
pub const REFERENCE_C0: f64 = -0.8087251886253;

const SINGULAR_TOL: f64 = 1e-3;

fn rhs(a: f64, c: f64) -> (f64, f64) {
    (3.0 - c - 2.0 * a * a, 1.0 - a - 2.0 * a * c)
}

/// `(a, c)` on the uniform grid `t_i = i / steps`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RiccatiSolution {
    pub grid: Vec<f64>,
    pub a: Vec<f64>,
    pub c: Vec<f64>,
    /// Blow-up or `a` within `1e-3` of `1/2` somewhere on the grid.
    pub singular: bool,
    pub y0_factor: f64,
}

/// Integrates the Riccati pair backward from `t = 1` with classical RK4.
pub fn solve_riccati_example31(steps: usize) -> Result<RiccatiSolution> {
    if steps < 100 {
        return Err(Error::param("steps", format!("need at least 100, got {steps}")));
    }
    let h = 1.0 / steps as f64;
    let mut a = vec![f64::NAN; steps + 1];
    let mut c = vec![f64::NAN; steps + 1];
    a[steps] = -1.0;
    c[steps] = 0.0;
    let mut singular = false;
    for i in (0..steps).rev() {
        let (a1, c1) = (a[i + 1], c[i + 1]);
        let k1 = rhs(a1, c1);
        let k2 = rhs(a1 - 0.5 * h * k1.0, c1 - 0.5 * h * k1.1);
        let k3 = rhs(a1 - 0.5 * h * k2.0, c1 - 0.5 * h * k2.1);
        let k4 = rhs(a1 - h * k3.0, c1 - h * k3.1);
        let an = a1 - h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        let cn = c1 - h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        if !an.is_finite() || !cn.is_finite() || (an - 0.5).abs() < SINGULAR_TOL {
            singular = true;
            break;
        }
        a[i] = an;
        c[i] = cn;
    }
    let grid = (0..=steps).map(|i| i as f64 * h).collect();
    Ok(RiccatiSolution {
        grid,
        y0_factor: a[0],
        a,
        c,
        singular,
    })
}

impl RiccatiSolution {
    pub fn steps(&self) -> usize {
        self.grid.len() - 1
    }

    fn usable(&self) -> Result<()> {
        if self.singular {
            Err(Error::SingularOracle(
                "Riccati trajectory blew up or approached a = 1/2".into(),
            ))
        } else {
            Ok(())
        }
    }

    /// Cubic Hermite interpolation of `(a, c)` using the ODE right-hand side
    /// as nodal slopes. Times slightly outside `[0, 1]` use the boundary cell.
    pub fn at(&self, t: f64) -> (f64, f64) {
        let steps = self.steps();
        let h = 1.0 / steps as f64;
        let i = ((t / h).floor().max(0.0) as usize).min(steps - 1);
        let s = (t - i as f64 * h) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let d0 = rhs(self.a[i], self.c[i]);
        let d1 = rhs(self.a[i + 1], self.c[i + 1]);
        let a = h00 * self.a[i] + h10 * h * d0.0 + h01 * self.a[i + 1] + h11 * h * d1.0;
        let c = h00 * self.c[i] + h10 * h * d0.1 + h01 * self.c[i + 1] + h11 * h * d1.1;
        (a, c)
    }

    /// Writes `t,a,c` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv_writer(writer);
        w.write_record(["t", "a", "c"])?;
        for i in 0..self.grid.len() {
            w.write_record([fmt_f64(self.grid[i]), fmt_f64(self.a[i]), fmt_f64(self.c[i])])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `Y(0) = a(0)·x0`.
pub fn oracle_y0(x0: f64, steps: usize) -> Result<f64> {
    let sol = solve_riccati_example31(steps)?;
    sol.usable()?;
    Ok(sol.y0_factor * x0)
}

/// `u(γ_t) = a(t)x(t) + c(t)A(t)` and `v(γ_t) = a(t)A(t)/(1 − 2a(t))` where
/// `x` is the last component of the path and `A` its left Riemann integral.
/// Works on plain `X` paths and on joint `(W, X)` paths alike.
pub fn oracle_functional(steps: usize) -> Result<(PathFunctional, PathFunctional)> {
    let sol = solve_riccati_example31(steps)?;
    sol.usable()?;
    Ok(oracle_functional_from(Arc::new(sol)))
}

pub fn oracle_functional_from(sol: Arc<RiccatiSolution>) -> (PathFunctional, PathFunctional) {
    fn last_component(p: &Path) -> (f64, f64) {
        let j = p.dim() - 1;
        let step = p.grid_step();
        let integral: f64 = (0..p.num_steps()).map(|k| p.point(k)[j] * step).sum();
        (p.last()[j], integral)
    }
    let s = sol.clone();
    let u = PathFunctional::scalar(Smoothness::C12, move |p| {
        let (a, c) = s.at(p.end_time());
        let (x, integral) = last_component(p);
        a * x + c * integral
    });
    let v = PathFunctional::scalar(Smoothness::C12, move |p| {
        let (a, _) = sol.at(p.end_time());
        let (_, integral) = last_component(p);
        a * integral / (1.0 - 2.0 * a)
    });
    (u, v)
}
