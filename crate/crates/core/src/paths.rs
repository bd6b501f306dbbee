//! Discretely sampled càdlàg paths on a uniform grid.
//!
//! A [`Path`] stores the values `v_0, ..., v_K` at times `0, Δ, ..., KΔ` and is
//! read with right-continuous piecewise-constant semantics. The same type
//! carries stopped prefixes `γ_t`, solution paths `X_t` and Brownian paths.
//!
//! Functionals of paths are evaluated through a borrowed [`PathContext`], which
//! pairs a prefix view with precomputed [`PathFeature`] values (running
//! integrals, running maxima) so that simulation loops never recompute an
//! `O(K)` statistic per step.

use std::borrow::Cow;
use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Relative tolerance used when deciding whether a time sits on the grid.
const GRID_TOL: f64 = 1e-9;

/// Returns the grid index of `t`, if `t` is a non-negative multiple of `step`.
pub(crate) fn grid_index(t: f64, step: f64) -> Option<usize> {
    if !t.is_finite() || t < -GRID_TOL * step {
        return None;
    }
    let ratio = t / step;
    let k = ratio.round();
    if (ratio - k).abs() <= GRID_TOL * k.max(1.0) {
        Some(k as usize)
    } else {
        None
    }
}

pub(crate) fn same_step(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// A path on the uniform grid `{kΔ : k = 0..K}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    dim: usize,
    grid_step: f64,
    values: Vec<f64>,
}

impl Path {
    /// Builds a path from flat row-major values (`len = (K+1) * dim`).
    pub fn new(dim: usize, grid_step: f64, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidPath("dimension must be positive".into()));
        }
        if !(grid_step.is_finite() && grid_step > 0.0) {
            return Err(Error::InvalidPath(format!(
                "grid step must be positive, got {grid_step}"
            )));
        }
        if values.is_empty() || values.len() % dim != 0 {
            return Err(Error::InvalidPath(format!(
                "{} values do not form whole points of dimension {dim}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidPath(format!(
                "non-finite value at grid point {}",
                i / dim
            )));
        }
        Ok(Self {
            dim,
            grid_step,
            values,
        })
    }

    pub fn from_points(grid_step: f64, points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(points.len() * dim);
        for p in points {
            Error::check_dim("path point", dim, p.len())?;
            values.extend_from_slice(p);
        }
        Self::new(dim, grid_step, values)
    }

    /// Scalar path from a list of values.
    pub fn scalar(grid_step: f64, values: &[f64]) -> Result<Self> {
        Self::new(1, grid_step, values.to_vec())
    }

    /// The path frozen at `value` over `num_steps` grid steps.
    pub fn constant(grid_step: f64, value: &[f64], num_steps: usize) -> Result<Self> {
        let mut values = Vec::with_capacity(value.len() * (num_steps + 1));
        for _ in 0..=num_steps {
            values.extend_from_slice(value);
        }
        Self::new(value.len(), grid_step, values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }

    /// Number of grid points, `K + 1`.
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    /// Paths are never empty; provided for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of grid steps `K`.
    pub fn num_steps(&self) -> usize {
        self.len() - 1
    }

    pub fn end_time(&self) -> f64 {
        self.num_steps() as f64 * self.grid_step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.point(self.num_steps())
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    pub fn view(&self) -> PathView<'_> {
        PathView {
            rows: &self.values,
            stride: self.dim,
            offset: 0,
            dim: self.dim,
            len: self.len(),
            step: self.grid_step,
        }
    }

    /// `‖γ_t‖ = max_k |γ(kΔ)|`.
    pub fn sup_norm(&self) -> f64 {
        self.points().map(euclid).fold(0.0, f64::max)
    }

    /// Skorokhod-type distance `sup_s |a(s∧t) − b(s∧t̄)| + |t − t̄|` on the
    /// union grid, each path frozen at its last value beyond its end time.
    pub fn d_infty(&self, other: &Path) -> Result<f64> {
        Error::check_dim("d_infty", self.dim, other.dim)?;
        if !same_step(self.grid_step, other.grid_step) {
            return Err(Error::GridMismatch(self.grid_step, other.grid_step));
        }
        let (ka, kb) = (self.num_steps(), other.num_steps());
        let mut sup = 0.0f64;
        for k in 0..=ka.max(kb) {
            let a = self.point(k.min(ka));
            let b = other.point(k.min(kb));
            let d = a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            sup = sup.max(d);
        }
        Ok(sup + (ka as f64 - kb as f64).abs() * self.grid_step)
    }

    /// `γ_t^x`: the same prefix with `x` added to the endpoint.
    pub fn vertical_bump(&self, x: &[f64]) -> Result<Path> {
        Error::check_dim("vertical_bump", self.dim, x.len())?;
        let mut out = self.clone();
        let start = out.values.len() - self.dim;
        for (v, dx) in out.values[start..].iter_mut().zip(x) {
            *v += dx;
        }
        Ok(out)
    }

    /// `γ_{t,s}`: flat extension of the path up to time `s`.
    pub fn horizontal_extend(&self, s: f64) -> Result<Path> {
        let end = self.end_time();
        if s < end - GRID_TOL * self.grid_step.max(end) {
            return Err(Error::OutOfRange {
                time: s,
                lower: end,
                upper: f64::INFINITY,
            });
        }
        let total = grid_index(s, self.grid_step).ok_or(Error::OffGrid {
            time: s,
            step: self.grid_step,
        })?;
        Ok(self.extend_steps(total.saturating_sub(self.num_steps())))
    }

    /// Flat extension by a whole number of grid steps.
    pub fn extend_steps(&self, extra: usize) -> Path {
        let mut values = Vec::with_capacity(self.values.len() + extra * self.dim);
        values.extend_from_slice(&self.values);
        for _ in 0..extra {
            values.extend_from_slice(self.last());
        }
        Path {
            dim: self.dim,
            grid_step: self.grid_step,
            values,
        }
    }

    /// The prefix `X_t = X(r)_{0≤r≤t}`.
    pub fn restrict(&self, t: f64) -> Result<Path> {
        let end = self.end_time();
        if t < 0.0 || t > end + GRID_TOL * self.grid_step.max(end) {
            return Err(Error::OutOfRange {
                time: t,
                lower: 0.0,
                upper: end,
            });
        }
        let k = grid_index(t, self.grid_step).ok_or(Error::OffGrid {
            time: t,
            step: self.grid_step,
        })?;
        Ok(self.restrict_steps(k.min(self.num_steps())))
    }

    /// Prefix containing grid points `0..=k`.
    pub fn restrict_steps(&self, k: usize) -> Path {
        Path {
            dim: self.dim,
            grid_step: self.grid_step,
            values: self.values[..(k + 1) * self.dim].to_vec(),
        }
    }

    /// Left-endpoint Riemann sums `A_k = Σ_{j<k} v_j Δ`.
    pub fn running_integral(&self) -> Path {
        let mut acc = vec![0.0; self.dim];
        let mut values = Vec::with_capacity(self.values.len());
        values.extend_from_slice(&acc);
        for v in self.points().take(self.num_steps()) {
            for (a, x) in acc.iter_mut().zip(v) {
                *a += x * self.grid_step;
            }
            values.extend_from_slice(&acc);
        }
        Path {
            dim: self.dim,
            grid_step: self.grid_step,
            values,
        }
    }

    /// Components `offset..offset+dim` as a new path.
    pub fn project(&self, offset: usize, dim: usize) -> Result<Path> {
        if dim == 0 || offset + dim > self.dim {
            return Err(Error::DimensionMismatch {
                context: "project",
                expected: self.dim,
                actual: offset + dim,
            });
        }
        let values = self
            .points()
            .flat_map(|p| p[offset..offset + dim].iter().copied())
            .collect();
        Path::new(dim, self.grid_step, values)
    }

    /// Stacks two paths of equal length componentwise: `(self, other)`.
    pub fn join(&self, other: &Path) -> Result<Path> {
        if !same_step(self.grid_step, other.grid_step) {
            return Err(Error::GridMismatch(self.grid_step, other.grid_step));
        }
        Error::check_dim("join", self.len(), other.len())?;
        let values = self
            .points()
            .zip(other.points())
            .flat_map(|(a, b)| a.iter().chain(b).copied())
            .collect();
        Path::new(self.dim + other.dim, self.grid_step, values)
    }

    /// Pointwise linear combination `α·self + β·other` (equal shapes).
    pub fn combine(&self, alpha: f64, other: &Path, beta: f64) -> Result<Path> {
        Error::check_dim("combine", self.values.len(), other.values.len())?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        Path::new(self.dim, self.grid_step, values)
    }

    /// Writes `t,v1,...,vn` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim).map(|i| format!("v{i}")));
        w.write_record(&header)?;
        for (k, p) in self.points().enumerate() {
            let mut row = vec![fmt_f64(k as f64 * self.grid_step)];
            row.extend(p.iter().map(|v| fmt_f64(*v)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a path written by [`Path::write_csv`]. The time column must start
    /// at zero and advance by a constant step.
    pub fn read_csv<R: Read>(reader: R) -> Result<Path> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.get(0).map(str::trim) != Some("t") || headers.len() < 2 {
            return Err(Error::InvalidPath(
                "expected header `t,v1,...,vn`".to_string(),
            ));
        }
        let dim = headers.len() - 1;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidPath(format!("bad number `{s}`: {e}")))
            };
            times.push(parse(&rec[0])?);
            for i in 1..=dim {
                values.push(parse(&rec[i])?);
            }
        }
        if times.len() < 2 {
            return Err(Error::InvalidPath(
                "need at least two rows to infer the grid step".into(),
            ));
        }
        if times[0].abs() > GRID_TOL {
            return Err(Error::InvalidPath("time column must start at 0".into()));
        }
        let step = times[1] - times[0];
        if step <= 0.0 {
            return Err(Error::InvalidPath("time column must be increasing".into()));
        }
        for (k, t) in times.iter().enumerate() {
            if (t - k as f64 * step).abs() > 1e-9 * step.max(*t) {
                return Err(Error::InvalidPath(format!(
                    "time column is not uniform at row {k}"
                )));
            }
        }
        Path::new(dim, step, values)
    }
}

/// CSV writer with LF line endings.
pub(crate) fn csv_writer<W: Write>(writer: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer)
}

/// Formats with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Two paths on a common grid step.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPair {
    pub first: Path,
    pub second: Path,
}

impl PathPair {
    pub fn new(first: Path, second: Path) -> Result<Self> {
        if !same_step(first.grid_step, second.grid_step) {
            return Err(Error::GridMismatch(first.grid_step, second.grid_step));
        }
        Error::check_dim("path pair", first.dim, second.dim)?;
        Ok(Self { first, second })
    }

    pub fn distance(&self) -> f64 {
        // dims and steps were checked at construction
        self.first.d_infty(&self.second).unwrap_or(f64::NAN)
    }
}

/// Borrowed prefix of a path, optionally restricted to a window of
/// components. Rows are stored with `stride` values each.
#[derive(Debug, Clone, Copy)]
pub struct PathView<'a> {
    rows: &'a [f64],
    stride: usize,
    offset: usize,
    dim: usize,
    len: usize,
    step: f64,
}

impl<'a> PathView<'a> {
    /// View over the first `len` rows of a row-major buffer.
    pub fn from_rows(rows: &'a [f64], stride: usize, len: usize, step: f64) -> Self {
        debug_assert!(rows.len() >= stride * len && len > 0);
        Self {
            rows,
            stride,
            offset: 0,
            dim: stride,
            len,
            step,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn num_steps(&self) -> usize {
        self.len - 1
    }

    pub fn grid_step(&self) -> f64 {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.num_steps() as f64 * self.step
    }

    pub fn point(&self, k: usize) -> &'a [f64] {
        let start = k * self.stride + self.offset;
        &self.rows[start..start + self.dim]
    }

    pub fn current(&self) -> &'a [f64] {
        self.point(self.len - 1)
    }

    fn full_row(&self, k: usize) -> &'a [f64] {
        &self.rows[k * self.stride..(k + 1) * self.stride]
    }

    pub fn window(&self, offset: usize, dim: usize) -> PathView<'a> {
        assert!(offset + dim <= self.dim, "window out of range");
        PathView {
            offset: self.offset + offset,
            dim,
            ..*self
        }
    }

    pub fn to_path(&self) -> Path {
        let values = (0..self.len).flat_map(|k| self.point(k).iter().copied()).collect();
        Path {
            dim: self.dim,
            grid_step: self.step,
            values,
        }
    }
}

/// Path statistics that coefficient functionals may declare as inputs.
/// Declared features are tracked incrementally by the simulators and feed the
/// regression basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathFeature {
    /// `Σ_{j<k} v_j Δ` (left Riemann sum).
    RunningIntegral,
    /// Componentwise `max_{j≤k} v_j`.
    RunningMaximum,
}

impl PathFeature {
    fn initial(self, v0: &[f64], out: &mut [f64]) {
        match self {
            PathFeature::RunningIntegral => out.fill(0.0),
            PathFeature::RunningMaximum => out.copy_from_slice(v0),
        }
    }

    fn advance(self, state: &mut [f64], prev: &[f64], next: &[f64], step: f64) {
        match self {
            PathFeature::RunningIntegral => {
                for (a, v) in state.iter_mut().zip(prev) {
                    *a += v * step;
                }
            }
            PathFeature::RunningMaximum => {
                for (m, v) in state.iter_mut().zip(next) {
                    *m = m.max(*v);
                }
            }
        }
    }
}

/// Writes the feature values of a path's first point into `out`
/// (`spec.len() * v0.len()` values).
pub fn initial_features(spec: &[PathFeature], v0: &[f64], out: &mut [f64]) {
    let w = v0.len();
    for (f, block) in spec.iter().zip(out.chunks_exact_mut(w)) {
        f.initial(v0, block);
    }
}

/// Advances feature values in place from point `prev` to point `next`.
pub fn advance_features(
    spec: &[PathFeature],
    state: &mut [f64],
    prev: &[f64],
    next: &[f64],
    step: f64,
) {
    let w = prev.len();
    for (f, block) in spec.iter().zip(state.chunks_exact_mut(w)) {
        f.advance(block, prev, next, step);
    }
}

/// Feature values at the endpoint of `view`, over the view's full row width.
pub fn features_at_end(spec: &[PathFeature], view: &PathView<'_>) -> Vec<f64> {
    let mut state = vec![0.0; spec.len() * view.stride];
    initial_features(spec, view.full_row(0), &mut state);
    for k in 1..view.len {
        advance_features(spec, &mut state, view.full_row(k - 1), view.full_row(k), view.step);
    }
    state
}

/// Feature values attached to a [`PathView`].
#[derive(Debug, Clone, Copy)]
pub struct FeatureView<'a> {
    spec: &'a [PathFeature],
    data: &'a [f64],
    stride: usize,
    offset: usize,
    dim: usize,
}

impl<'a> FeatureView<'a> {
    pub fn get(&self, feature: PathFeature) -> Option<&'a [f64]> {
        let idx = self.spec.iter().position(|f| *f == feature)?;
        let start = idx * self.stride + self.offset;
        Some(&self.data[start..start + self.dim])
    }
}

/// The argument of a path functional: a prefix `x_t` plus declared features.
#[derive(Debug, Clone, Copy)]
pub struct PathContext<'a> {
    path: PathView<'a>,
    features: FeatureView<'a>,
}

impl<'a> PathContext<'a> {
    /// `features` must hold `spec.len()` blocks of the view's row width,
    /// evaluated at the view's endpoint.
    pub fn new(path: PathView<'a>, spec: &'a [PathFeature], features: &'a [f64]) -> Self {
        debug_assert_eq!(features.len(), spec.len() * path.stride);
        let features = FeatureView {
            spec,
            data: features,
            stride: path.stride,
            offset: path.offset,
            dim: path.dim,
        };
        Self { path, features }
    }

    pub fn path(&self) -> PathView<'a> {
        self.path
    }

    pub fn time(&self) -> f64 {
        self.path.time()
    }

    /// `x(t)`, the endpoint value.
    pub fn current(&self) -> &'a [f64] {
        self.path.current()
    }

    pub fn dim(&self) -> usize {
        self.path.dim
    }

    pub fn feature(&self, feature: PathFeature) -> Option<&'a [f64]> {
        self.features.get(feature)
    }

    /// `∫_0^t x(s) ds`; borrowed when declared, otherwise summed from the prefix.
    pub fn running_integral(&self) -> Cow<'a, [f64]> {
        match self.feature(PathFeature::RunningIntegral) {
            Some(a) => Cow::Borrowed(a),
            None => {
                let mut acc = vec![0.0; self.path.dim];
                for k in 0..self.path.num_steps() {
                    for (a, v) in acc.iter_mut().zip(self.path.point(k)) {
                        *a += v * self.path.step;
                    }
                }
                Cow::Owned(acc)
            }
        }
    }

    pub fn running_maximum(&self) -> Cow<'a, [f64]> {
        match self.feature(PathFeature::RunningMaximum) {
            Some(m) => Cow::Borrowed(m),
            None => {
                let mut acc = self.path.point(0).to_vec();
                for k in 1..self.path.len {
                    for (m, v) in acc.iter_mut().zip(self.path.point(k)) {
                        *m = m.max(*v);
                    }
                }
                Cow::Owned(acc)
            }
        }
    }

    /// Restricts both the path and the features to components
    /// `offset..offset+dim`.
    pub fn window(&self, offset: usize, dim: usize) -> PathContext<'a> {
        let path = self.path.window(offset, dim);
        PathContext {
            path,
            features: FeatureView {
                offset: path.offset,
                dim,
                ..self.features
            },
        }
    }
}

/// An owned path together with its endpoint features, for evaluating
/// functionals outside the simulation loops.
#[derive(Debug, Clone)]
pub struct PreparedPath {
    path: Path,
    spec: Vec<PathFeature>,
    features: Vec<f64>,
}

impl PreparedPath {
    pub fn new(path: Path, spec: &[PathFeature]) -> Self {
        let features = features_at_end(spec, &path.view());
        Self {
            path,
            spec: spec.to_vec(),
            features,
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn context(&self) -> PathContext<'_> {
        PathContext::new(self.path.view(), &self.spec, &self.features)
    }
}

/// Calls `visit(k, ctx)` for every prefix `x_{t_k}`, `k = 0..=K`, tracking the
/// declared features incrementally.
pub fn for_each_prefix<F>(path: &Path, spec: &[PathFeature], mut visit: F)
where
    F: FnMut(usize, PathContext<'_>),
{
    let w = path.dim;
    let mut state = vec![0.0; spec.len() * w];
    initial_features(spec, path.point(0), &mut state);
    for k in 0..path.len() {
        if k > 0 {
            advance_features(spec, &mut state, path.point(k - 1), path.point(k), path.grid_step);
        }
        let view = PathView::from_rows(&path.values, w, k + 1, path.grid_step);
        visit(k, PathContext::new(view, spec, &state));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p1(step: f64, v: &[f64]) -> Path {
        Path::scalar(step, v).unwrap()
    }

    #[test]
    fn sup_norm_cases() {
        assert_eq!(Path::constant(0.1, &[0.0], 7).unwrap().sup_norm(), 0.0);
        assert_eq!(Path::constant(0.1, &[3.0, 4.0], 3).unwrap().sup_norm(), 5.0);
        assert_eq!(p1(0.5, &[1.0, -7.0, 2.0]).sup_norm(), 7.0);
    }

    #[test]
    fn d_infty_cases() {
        let p = p1(0.5, &[0.3, -1.2, 4.0]);
        assert_eq!(p.d_infty(&p).unwrap(), 0.0);
        let a = Path::constant(0.5, &[1.0], 2).unwrap();
        let b = Path::constant(0.5, &[1.0], 4).unwrap();
        assert_eq!(a.d_infty(&b).unwrap(), 1.0);
        let a = p1(0.5, &[0.0, 1.0, 0.0]);
        let b = p1(0.5, &[0.0, 0.0, 2.0]);
        assert_eq!(a.d_infty(&b).unwrap(), 2.0);
    }

    #[test]
    fn d_infty_rejects_mismatch() {
        let a = p1(0.5, &[0.0, 1.0]);
        let b = p1(0.25, &[0.0, 1.0]);
        assert!(matches!(a.d_infty(&b), Err(Error::GridMismatch(..))));
        let c = Path::constant(0.5, &[0.0, 0.0], 1).unwrap();
        assert!(matches!(a.d_infty(&c), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn vertical_bump_cases() {
        let p = p1(0.5, &[1.0, 2.0, 3.0]);
        assert_eq!(p.vertical_bump(&[0.0]).unwrap(), p);
        assert_eq!(p1(0.5, &[5.0]).vertical_bump(&[2.0]).unwrap(), p1(0.5, &[7.0]));
        let q = Path::constant(0.25, &[1.0, -2.0], 3).unwrap();
        let bumped = q.vertical_bump(&[3.0, 4.0]).unwrap();
        assert_eq!(bumped.d_infty(&q).unwrap(), 5.0);
        assert_eq!(bumped.end_time(), q.end_time());
        assert!(q.vertical_bump(&[1.0]).is_err());
    }

    #[test]
    fn horizontal_extend_cases() {
        let p = p1(0.5, &[1.0, 2.0]);
        assert_eq!(p.horizontal_extend(0.5).unwrap(), p);
        assert_eq!(p.horizontal_extend(1.5).unwrap(), p1(0.5, &[1.0, 2.0, 2.0, 2.0]));
        assert_eq!(p.horizontal_extend(1.5).unwrap().sup_norm(), p.sup_norm());
        assert!(matches!(p.horizontal_extend(0.0), Err(Error::OutOfRange { .. })));
        assert!(matches!(p.horizontal_extend(0.7), Err(Error::OffGrid { .. })));
    }

    #[test]
    fn restrict_cases() {
        let p = p1(0.5, &[1.0, 2.0, 3.0]);
        assert_eq!(p.restrict(1.0).unwrap(), p);
        assert_eq!(p.restrict(0.5).unwrap(), p1(0.5, &[1.0, 2.0]));
        assert!(matches!(p.restrict(0.3), Err(Error::OffGrid { .. })));
        assert!(matches!(p.restrict(1.5), Err(Error::OutOfRange { .. })));
        assert!(matches!(p.restrict(-0.5), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn restrict_extend_distance_is_suffix_deviation() {
        let p = p1(0.25, &[0.0, 1.0, -0.5, 2.0, 0.25]);
        for k in 0..=4 {
            let stopped = p.restrict_steps(k).horizontal_extend(p.end_time()).unwrap();
            // brute force: sup over s > t_k of |p(s) - p(t_k)|
            let frozen = p.point(k)[0];
            let dev = (k..=4).map(|j| (p.point(j)[0] - frozen).abs()).fold(0.0, f64::max);
            assert_eq!(stopped.d_infty(&p).unwrap(), dev);
        }
    }

    #[test]
    fn running_integral_cases() {
        let z = Path::constant(0.1, &[0.0], 5).unwrap();
        assert_eq!(z.running_integral(), z);
        let c = Path::constant(0.25, &[2.0], 4).unwrap();
        assert_eq!(
            c.running_integral(),
            p1(0.25, &[0.0, 0.5, 1.0, 1.5, 2.0])
        );
        assert_eq!(p1(0.5, &[1.0, 2.0, 4.0]).running_integral(), p1(0.5, &[0.0, 0.5, 1.5]));
    }

    #[test]
    fn invalid_paths_are_rejected() {
        assert!(Path::new(1, 0.1, vec![]).is_err());
        assert!(Path::new(2, 0.1, vec![1.0]).is_err());
        assert!(Path::new(1, 0.0, vec![1.0]).is_err());
        assert!(Path::new(1, 0.1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn context_features_match_from_scratch() {
        let p = Path::from_points(
            0.1,
            &[vec![1.0, -1.0], vec![2.0, 0.5], vec![-3.0, 4.0], vec![0.5, 0.25]],
        )
        .unwrap();
        let spec = [PathFeature::RunningIntegral, PathFeature::RunningMaximum];
        for_each_prefix(&p, &spec, |k, ctx| {
            let prefix = p.restrict_steps(k);
            let integral = prefix.running_integral();
            assert_eq!(ctx.running_integral().as_ref(), integral.last());
            assert_eq!(ctx.current(), p.point(k));
            let w = ctx.window(1, 1);
            assert_eq!(w.running_integral()[0], integral.last()[1]);
            assert_eq!(w.current()[0], p.point(k)[1]);
            // undeclared path falls back to summation
            let bare = PathContext::new(prefix.view(), &[], &[]);
            assert_eq!(bare.running_integral().as_ref(), integral.last());
            assert_eq!(bare.running_maximum(), ctx.running_maximum());
        });
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let p = Path::from_points(0.1, &[vec![0.1, 1.0 / 3.0], vec![-2.5e-17, 7.0]]).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,v1,v2\n"));
        assert_eq!(Path::read_csv(buf.as_slice()).unwrap(), p);
    }

    #[test]
    fn csv_rejects_non_uniform_time() {
        let text = "t,v1\n0,1\n0.5,2\n0.7,3\n";
        assert!(Path::read_csv(text.as_bytes()).is_err());
        let text = "x,v1\n0,1\n0.5,2\n";
        assert!(Path::read_csv(text.as_bytes()).is_err());
    }
}
