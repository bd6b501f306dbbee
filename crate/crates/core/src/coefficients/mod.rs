//! Coefficient functionals `(b, σ, h, g)` of a functional FBSDE.
//!
//! Matrices are stored row-major in flat slices: `σ` is `n×d`, `z` is `m×d`
//! and `G` is `m×n`.

mod registry;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::paths::{Path, PathContext, PathFeature, PreparedPath};

pub use registry::{registry_get, registry_names, Params};

/// Problem dimensions: state `n`, backward `m`, noise `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub d: usize,
}

impl Dims {
    pub fn new(n: usize, m: usize, d: usize) -> Self {
        Self { n, m, d }
    }

    pub fn scalar() -> Self {
        Self::new(1, 1, 1)
    }
}

/// Borrowed value `u = (y, z)` with `z` row-major `m×d`.
#[derive(Debug, Clone, Copy)]
pub struct Control<'a> {
    pub y: &'a [f64],
    pub z: &'a [f64],
}

/// Owned `u = (y, z) ∈ ℝᵐ × ℝ^{m×d}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPair {
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

impl ControlPair {
    pub fn new(y: Vec<f64>, z: Vec<f64>) -> Self {
        Self { y, z }
    }

    pub fn zeros(dims: Dims) -> Self {
        Self {
            y: vec![0.0; dims.m],
            z: vec![0.0; dims.m * dims.d],
        }
    }

    pub fn as_control(&self) -> Control<'_> {
        Control {
            y: &self.y,
            z: &self.z,
        }
    }

    pub fn sub(&self, other: &ControlPair) -> ControlPair {
        ControlPair {
            y: self.y.iter().zip(&other.y).map(|(a, b)| a - b).collect(),
            z: self.z.iter().zip(&other.z).map(|(a, b)| a - b).collect(),
        }
    }

    /// `|u|² = |y|² + |z|²`.
    pub fn norm_squared(&self) -> f64 {
        dot(&self.y, &self.y) + dot(&self.z, &self.z)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `[u¹, u²] = ⟨y¹, y²⟩ + tr(z¹ (z²)ᵀ)`.
pub fn bracket(u1: Control<'_>, u2: Control<'_>) -> Result<f64> {
    Error::check_dim("bracket (y)", u1.y.len(), u2.y.len())?;
    Error::check_dim("bracket (z)", u1.z.len(), u2.z.len())?;
    // tr(z¹ (z²)ᵀ) is the entrywise inner product
    Ok(dot(u1.y, u2.y) + dot(u1.z, u2.z))
}

/// `|z| = tr(z zᵀ)^{1/2}`.
pub fn matrix_norm(z: &[f64]) -> f64 {
    dot(z, z).sqrt()
}

/// Writes the path-dependent coefficient value into the output slice.
pub type PathFn = Arc<dyn Fn(&PathContext<'_>, Control<'_>, &mut [f64]) + Send + Sync>;
/// Terminal map `g: ℝⁿ → ℝᵐ`.
pub type TerminalFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// Pointwise map `(a, y, z) ↦ value` lifted by [`integral_lift`].
pub type PointwiseFn = Arc<dyn Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync>;

/// The functional quadruple `(b, σ, h, g)` with dimensions, `G` and the
/// declared path features.
#[derive(Clone)]
pub struct CoefficientSet {
    name: String,
    dims: Dims,
    g_matrix: DMatrix<f64>,
    drift: PathFn,
    diffusion: PathFn,
    driver: PathFn,
    terminal: TerminalFn,
    features: Vec<PathFeature>,
}

impl fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("name", &self.name)
            .field("dims", &self.dims)
            .field("g_matrix", &self.g_matrix)
            .field("features", &self.features)
            .finish_non_exhaustive()
    }
}

fn zero_path_fn() -> PathFn {
    Arc::new(|_, _, out: &mut [f64]| out.fill(0.0))
}

/// Builder for [`CoefficientSet`]; unset coefficients are zero.
pub struct CoefficientSetBuilder {
    name: String,
    dims: Dims,
    g_matrix: Option<DMatrix<f64>>,
    drift: PathFn,
    diffusion: PathFn,
    driver: PathFn,
    terminal: TerminalFn,
    features: Vec<PathFeature>,
    check_rank: bool,
}

impl CoefficientSetBuilder {
    pub fn g_matrix(mut self, g: DMatrix<f64>) -> Self {
        self.g_matrix = Some(g);
        self
    }

    pub fn drift(mut self, f: PathFn) -> Self {
        self.drift = f;
        self
    }

    pub fn diffusion(mut self, f: PathFn) -> Self {
        self.diffusion = f;
        self
    }

    pub fn driver(mut self, f: PathFn) -> Self {
        self.driver = f;
        self
    }

    pub fn terminal(mut self, f: TerminalFn) -> Self {
        self.terminal = f;
        self
    }

    pub fn features(mut self, features: &[PathFeature]) -> Self {
        self.features = features.to_vec();
        self
    }

    pub(crate) fn skip_rank_check(mut self) -> Self {
        self.check_rank = false;
        self
    }

    /// Validates `G` and spot-checks that every coefficient is finite on a few
    /// sample prefixes.
    pub fn build(self) -> Result<CoefficientSet> {
        let Dims { n, m, d } = self.dims;
        if n == 0 || m == 0 || d == 0 {
            return Err(Error::param("dims", "n, m, d must be positive"));
        }
        let g_matrix = match self.g_matrix {
            Some(g) => g,
            None if m == n => DMatrix::identity(m, n),
            None => {
                return Err(Error::param(
                    "G",
                    format!("must be given explicitly when m ({m}) != n ({n})"),
                ))
            }
        };
        if g_matrix.nrows() != m || g_matrix.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "G matrix shape",
                expected: m * n,
                actual: g_matrix.nrows() * g_matrix.ncols(),
            });
        }
        if self.check_rank {
            let sv = g_matrix.singular_values();
            let smallest = sv.iter().copied().fold(f64::INFINITY, f64::min);
            if !(smallest > 1e-10) {
                return Err(Error::RankDeficientG { smallest });
            }
        }
        let cs = CoefficientSet {
            name: self.name,
            dims: self.dims,
            g_matrix,
            drift: self.drift,
            diffusion: self.diffusion,
            driver: self.driver,
            terminal: self.terminal,
            features: self.features,
        };
        cs.spot_check()?;
        Ok(cs)
    }
}

impl CoefficientSet {
    pub fn builder(name: impl Into<String>, dims: Dims) -> CoefficientSetBuilder {
        CoefficientSetBuilder {
            name: name.into(),
            dims,
            g_matrix: None,
            drift: zero_path_fn(),
            diffusion: zero_path_fn(),
            driver: zero_path_fn(),
            terminal: Arc::new(|_, out: &mut [f64]| out.fill(0.0)),
            features: Vec::new(),
            check_rank: true,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn g_matrix(&self) -> &DMatrix<f64> {
        &self.g_matrix
    }

    pub fn features(&self) -> &[PathFeature] {
        &self.features
    }

    pub fn drift_into(&self, x: &PathContext<'_>, u: Control<'_>, out: &mut [f64]) {
        (self.drift)(x, u, out)
    }

    pub fn diffusion_into(&self, x: &PathContext<'_>, u: Control<'_>, out: &mut [f64]) {
        (self.diffusion)(x, u, out)
    }

    pub fn driver_into(&self, x: &PathContext<'_>, u: Control<'_>, out: &mut [f64]) {
        (self.driver)(x, u, out)
    }

    pub fn terminal_into(&self, x: &[f64], out: &mut [f64]) {
        (self.terminal)(x, out)
    }

    pub fn drift(&self, x: &PathContext<'_>, u: Control<'_>) -> Vec<f64> {
        let mut out = vec![0.0; self.dims.n];
        self.drift_into(x, u, &mut out);
        out
    }

    /// Row-major `n×d`.
    pub fn diffusion(&self, x: &PathContext<'_>, u: Control<'_>) -> Vec<f64> {
        let mut out = vec![0.0; self.dims.n * self.dims.d];
        self.diffusion_into(x, u, &mut out);
        out
    }

    pub fn driver(&self, x: &PathContext<'_>, u: Control<'_>) -> Vec<f64> {
        let mut out = vec![0.0; self.dims.m];
        self.driver_into(x, u, &mut out);
        out
    }

    pub fn terminal(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dims.m];
        self.terminal_into(x, &mut out);
        out
    }

    /// Prepares an owned path with this set's declared features.
    pub fn prepare(&self, path: Path) -> PreparedPath {
        PreparedPath::new(path, &self.features)
    }

    fn spot_check(&self) -> Result<()> {
        let Dims { n, m, d } = self.dims;
        let step = 0.25;
        let samples: [&dyn Fn(usize, usize) -> f64; 3] = [
            &|_, _| 0.0,
            &|k, i| 1.0 + 0.5 * k as f64 - 0.25 * i as f64,
            &|k, i| ((k * 7 + i * 3) as f64).sin() * 2.0,
        ];
        for (s, sample) in samples.iter().enumerate() {
            let values: Vec<f64> = (0..5).flat_map(|k| (0..n).map(move |i| sample(k, i))).collect();
            let path = Path::new(n, step, values)?;
            let prepared = self.prepare(path);
            let u = ControlPair::new(
                (0..m).map(|i| sample(1, i)).collect(),
                (0..m * d).map(|i| sample(2, i)).collect(),
            );
            let ctx = prepared.context();
            let context = format!("registration spot check {s}");
            let check = |name: &'static str, v: &[f64]| {
                if v.iter().all(|x| x.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::NonFiniteCoefficient {
                        name,
                        context: context.clone(),
                    })
                }
            };
            check("b", &self.drift(&ctx, u.as_control()))?;
            check("sigma", &self.diffusion(&ctx, u.as_control()))?;
            check("h", &self.driver(&ctx, u.as_control()))?;
            check("g", &self.terminal(ctx.current()))?;
        }
        Ok(())
    }
}

/// Value of `f(x_t, u) = (Gᵀh, Gb, Gσ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FTriple {
    /// `Gᵀh ∈ ℝⁿ`
    pub hpart: Vec<f64>,
    /// `Gb ∈ ℝᵐ`
    pub bpart: Vec<f64>,
    /// `Gσ ∈ ℝ^{m×d}`, row-major
    pub spart: Vec<f64>,
}

impl FTriple {
    pub fn sub(&self, other: &FTriple) -> FTriple {
        let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect();
        FTriple {
            hpart: diff(&self.hpart, &other.hpart),
            bpart: diff(&self.bpart, &other.bpart),
            spart: diff(&self.spart, &other.spart),
        }
    }

    pub fn norm_squared(&self) -> f64 {
        dot(&self.hpart, &self.hpart) + dot(&self.bpart, &self.bpart) + dot(&self.spart, &self.spart)
    }

    /// `[f, (x, u)] = ⟨Gᵀh, x⟩ + ⟨Gb, y⟩ + tr(Gσ zᵀ)`.
    pub fn bracket_with(&self, x: &[f64], u: Control<'_>) -> f64 {
        dot(&self.hpart, x) + dot(&self.bpart, u.y) + dot(&self.spart, u.z)
    }
}

/// `out = Mᵀ v` for row-major `M` of shape `rows×cols`.
pub(crate) fn mat_t_vec(mat: &DMatrix<f64>, v: &[f64], out: &mut [f64]) {
    for (j, o) in out.iter_mut().enumerate() {
        *o = (0..mat.nrows()).map(|i| mat[(i, j)] * v[i]).sum();
    }
}

pub(crate) fn mat_vec(mat: &DMatrix<f64>, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = (0..mat.ncols()).map(|j| mat[(i, j)] * v[j]).sum();
    }
}

/// `out (rows_out×d) = A · B` where `B` is row-major `inner×d` and `A` is
/// applied either directly or transposed.
fn mat_mul_rows(a: &DMatrix<f64>, transpose: bool, b: &[f64], d: usize, out: &mut [f64]) {
    let (rows, inner) = if transpose {
        (a.ncols(), a.nrows())
    } else {
        (a.nrows(), a.ncols())
    };
    for i in 0..rows {
        for c in 0..d {
            out[i * d + c] = (0..inner)
                .map(|k| {
                    let aik = if transpose { a[(k, i)] } else { a[(i, k)] };
                    aik * b[k * d + c]
                })
                .sum();
        }
    }
}

/// Evaluates `f(x_t, u) = (Gᵀh, Gb, Gσ)`.
pub fn assemble_f(cs: &CoefficientSet, x: &PathContext<'_>, u: Control<'_>) -> Result<FTriple> {
    let Dims { n, m, d } = cs.dims;
    Error::check_dim("assemble_f (path)", n, x.dim())?;
    Error::check_dim("assemble_f (y)", m, u.y.len())?;
    Error::check_dim("assemble_f (z)", m * d, u.z.len())?;
    let h = cs.driver(x, u);
    let b = cs.drift(x, u);
    let sigma = cs.diffusion(x, u);
    for (name, v) in [("h", &h), ("b", &b), ("sigma", &sigma)] {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteCoefficient {
                name,
                context: "assemble_f".into(),
            });
        }
    }
    let g = &cs.g_matrix;
    let mut hpart = vec![0.0; n];
    mat_t_vec(g, &h, &mut hpart);
    let mut bpart = vec![0.0; m];
    mat_vec(g, &b, &mut bpart);
    let mut spart = vec![0.0; m * d];
    mat_mul_rows(g, false, &sigma, d, &mut spart);
    Ok(FTriple {
        hpart,
        bpart,
        spart,
    })
}

/// The continuation family
/// `b^α = αb + (1−α)β₂(−Gᵀy)`, `σ^α = ασ + (1−α)β₂(−Gᵀz)`,
/// `h^α = αh + (1−α)β₁(−G x(t))`, `g^α = αg + (1−α)β₁ G x`.
pub fn continuation_set(cs: &CoefficientSet, alpha: f64, beta1: f64, beta2: f64) -> Result<CoefficientSet> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::param("alpha", format!("must lie in [0, 1], got {alpha}")));
    }
    if !(beta1 >= 0.0 && beta2 >= 0.0) {
        return Err(Error::param("beta", "beta1 and beta2 must be nonnegative"));
    }
    let Dims { n, m, d } = cs.dims;
    let w = 1.0 - alpha;
    let g = Arc::new(cs.g_matrix.clone());

    let base = cs.drift.clone();
    let gm = g.clone();
    let drift: PathFn = Arc::new(move |x, u, out| {
        base(x, u, out);
        for (j, o) in out.iter_mut().enumerate().take(n) {
            let lin: f64 = (0..m).map(|i| gm[(i, j)] * u.y[i]).sum();
            *o = alpha * *o + w * beta2 * (-lin);
        }
    });

    let base = cs.diffusion.clone();
    let gm = g.clone();
    let diffusion: PathFn = Arc::new(move |x, u, out| {
        base(x, u, out);
        for j in 0..n {
            for c in 0..d {
                let lin: f64 = (0..m).map(|i| gm[(i, j)] * u.z[i * d + c]).sum();
                let o = &mut out[j * d + c];
                *o = alpha * *o + w * beta2 * (-lin);
            }
        }
    });

    let base = cs.driver.clone();
    let gm = g.clone();
    let driver: PathFn = Arc::new(move |x, u, out| {
        base(x, u, out);
        let xt = x.current();
        for (i, o) in out.iter_mut().enumerate().take(m) {
            let lin: f64 = (0..n).map(|j| gm[(i, j)] * xt[j]).sum();
            *o = alpha * *o + w * beta1 * (-lin);
        }
    });

    let base = cs.terminal.clone();
    let gm = g;
    let terminal: TerminalFn = Arc::new(move |x, out| {
        base(x, out);
        for (i, o) in out.iter_mut().enumerate().take(m) {
            let lin: f64 = (0..n).map(|j| gm[(i, j)] * x[j]).sum();
            *o = alpha * *o + w * beta1 * lin;
        }
    });

    Ok(CoefficientSet {
        name: format!("{}@alpha={alpha}", cs.name),
        dims: cs.dims,
        g_matrix: cs.g_matrix.clone(),
        drift,
        diffusion,
        driver,
        terminal,
        features: cs.features.clone(),
    })
}

/// Lifts a pointwise map `(a, y, z) ↦ value` to the path functional
/// `x_t ↦ value(∫_0^t x(s) ds, y, z)`.
pub fn integral_lift(pointwise: PointwiseFn) -> PathFn {
    Arc::new(move |x, u, out| {
        let a = x.running_integral();
        pointwise(&a, u.y, u.z, out)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{for_each_prefix, Path};

    fn cp(y: &[f64], z: &[f64]) -> ControlPair {
        ControlPair::new(y.to_vec(), z.to_vec())
    }

    #[test]
    fn bracket_cases() {
        let u = cp(&[2.0], &[3.0]);
        let zero = cp(&[0.0], &[0.0]);
        assert_eq!(bracket(u.as_control(), zero.as_control()).unwrap(), 0.0);
        let v = cp(&[5.0], &[7.0]);
        assert_eq!(bracket(u.as_control(), v.as_control()).unwrap(), 31.0);
        let bad = cp(&[1.0, 2.0], &[3.0]);
        assert!(bracket(u.as_control(), bad.as_control()).is_err());
    }

    #[test]
    fn matrix_norm_cases() {
        assert_eq!(matrix_norm(&[0.0; 4]), 0.0);
        assert_eq!(matrix_norm(&[1.0, 0.0, 0.0, 1.0]), 2f64.sqrt());
        assert_eq!(matrix_norm(&[1.0, 2.0, 3.0, 4.0]), 30f64.sqrt());
    }

    #[test]
    fn identity_g_assembles_verbatim() {
        let cs = registry_get("example31", &Params::new()).unwrap();
        let path = Path::scalar(0.25, &[1.0, 0.5, -2.0]).unwrap();
        let prepared = cs.prepare(path);
        let ctx = prepared.context();
        let u = cp(&[0.7], &[-1.1]);
        let f = assemble_f(&cs, &ctx, u.as_control()).unwrap();
        assert_eq!(f.hpart, cs.driver(&ctx, u.as_control()));
        assert_eq!(f.bpart, cs.drift(&ctx, u.as_control()));
        assert_eq!(f.spart, cs.diffusion(&ctx, u.as_control()));
    }

    #[test]
    fn example31_assembly_at_constant_path() {
        let cs = registry_get("example31", &Params::new()).unwrap();
        let path = Path::constant(0.25, &[1.0], 4).unwrap();
        // oracle: left Riemann sum of a constant 1 over four steps of 0.25
        let a = path.running_integral().last()[0];
        assert_eq!(a, 1.0);
        let prepared = cs.prepare(path);
        let f = assemble_f(&cs, &prepared.context(), cp(&[0.0], &[0.0]).as_control()).unwrap();
        assert_eq!(f.hpart, vec![a + 3.0]);
        assert_eq!(f.bpart, vec![a]);
        assert_eq!(f.spart, vec![a]);
    }

    #[test]
    fn non_square_g_shapes() {
        // n = 2, m = 1, d = 2
        let dims = Dims::new(2, 1, 2);
        let g = DMatrix::from_row_slice(1, 2, &[2.0, -1.0]);
        let cs = CoefficientSet::builder("rect", dims)
            .g_matrix(g)
            .drift(Arc::new(|x, _, out| out.copy_from_slice(x.current())))
            .diffusion(Arc::new(|_, _, out| out.copy_from_slice(&[1.0, 2.0, 3.0, 4.0])))
            .driver(Arc::new(|_, u, out| out[0] = u.y[0]))
            .build()
            .unwrap();
        let prepared = cs.prepare(Path::constant(0.5, &[1.0, 3.0], 2).unwrap());
        let f = assemble_f(&cs, &prepared.context(), cp(&[5.0], &[0.0, 0.0]).as_control()).unwrap();
        assert_eq!(f.hpart, vec![10.0, -5.0]);
        assert_eq!(f.bpart, vec![2.0 - 3.0]);
        assert_eq!(f.spart, vec![2.0 - 3.0, 4.0 - 4.0]);
    }

    #[test]
    fn missing_g_for_rectangular_dims_is_an_error() {
        assert!(CoefficientSet::builder("x", Dims::new(2, 1, 1)).build().is_err());
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            CoefficientSet::builder("x", Dims::new(2, 2, 1)).g_matrix(singular).build(),
            Err(Error::RankDeficientG { .. })
        ));
    }

    #[test]
    fn non_finite_coefficients_fail_registration() {
        let r = CoefficientSet::builder("bad", Dims::scalar())
            .driver(Arc::new(|x, _, out| out[0] = 1.0 / x.current()[0]))
            .build();
        assert!(matches!(r, Err(Error::NonFiniteCoefficient { name: "h", .. })));
    }

    #[test]
    fn continuation_endpoints() {
        let cs = registry_get("example31", &Params::new()).unwrap();
        let path = Path::scalar(0.25, &[0.3, 1.2, -0.4, 0.9]).unwrap();
        let u = cp(&[0.8], &[-0.6]);

        let one = continuation_set(&cs, 1.0, 1.0, 1.0).unwrap();
        let zero = continuation_set(&cs, 0.0, 1.0, 1.0).unwrap();
        for_each_prefix(&path, cs.features(), |_, ctx| {
            let c = u.as_control();
            assert_eq!(one.drift(&ctx, c), cs.drift(&ctx, c));
            assert_eq!(one.diffusion(&ctx, c), cs.diffusion(&ctx, c));
            assert_eq!(one.driver(&ctx, c), cs.driver(&ctx, c));
            assert_eq!(zero.drift(&ctx, c), vec![-0.8]);
            assert_eq!(zero.diffusion(&ctx, c), vec![0.6]);
            assert_eq!(zero.driver(&ctx, c), vec![-ctx.current()[0]]);
        });
        assert_eq!(one.terminal(&[2.5]), cs.terminal(&[2.5]));
        assert_eq!(zero.terminal(&[2.5]), vec![2.5]);
        assert!(continuation_set(&cs, 1.5, 1.0, 1.0).is_err());
        assert!(continuation_set(&cs, -0.1, 1.0, 1.0).is_err());
    }

    #[test]
    fn continuation_midpoint_example31() {
        let cs = registry_get("example31", &Params::new()).unwrap();
        let path = Path::constant(0.25, &[1.0], 4).unwrap();
        let a = path.running_integral().last()[0];
        let half = continuation_set(&cs, 0.5, 1.0, 1.0).unwrap();
        let prepared = half.prepare(path);
        let u = cp(&[1.0], &[0.0]);
        let b = half.drift(&prepared.context(), u.as_control());
        assert_eq!(b, vec![0.5 * (a + 2.0) + 0.5 * (-1.0)]);
    }

    #[test]
    fn integral_lift_cases() {
        let y_only = integral_lift(Arc::new(|_, y, _, out: &mut [f64]| out[0] = y[0]));
        let a_only = integral_lift(Arc::new(|a, _, _, out: &mut [f64]| out[0] = a[0]));
        let path = Path::constant(0.5, &[2.0], 2).unwrap();
        let expected_a = path.running_integral().last()[0];
        assert_eq!(expected_a, 2.0);
        let prepared = PreparedPath::new(path, &[]);
        let u = cp(&[-3.0], &[0.0]);
        let mut out = [0.0];
        y_only(&prepared.context(), u.as_control(), &mut out);
        assert_eq!(out[0], -3.0);
        a_only(&prepared.context(), u.as_control(), &mut out);
        assert_eq!(out[0], expected_a);
    }
}
