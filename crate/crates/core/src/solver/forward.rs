use rayon::prelude::*;

use super::{BrownianGrid, PathField};
use crate::coefficients::{CoefficientSet, Control};
use crate::error::{Error, Result};
use crate::paths::{advance_features, initial_features, Path, PathContext, PathView};

/// Initial condition of the forward equation: a point `x0` at `t = 0`, or a
/// prefix path `γ_t` whose end time marks the start of the solve window.
#[derive(Debug, Clone, PartialEq)]
pub enum ForwardStart {
    Point(Vec<f64>),
    Prefix(Path),
}

impl ForwardStart {
    pub fn dim(&self) -> usize {
        match self {
            ForwardStart::Point(x) => x.len(),
            ForwardStart::Prefix(p) => p.dim(),
        }
    }

    /// Grid index of the start of the solve window.
    pub fn offset(&self) -> usize {
        match self {
            ForwardStart::Point(_) => 0,
            ForwardStart::Prefix(p) => p.num_steps(),
        }
    }

    /// Value at the start of the solve window.
    pub fn current(&self) -> &[f64] {
        match self {
            ForwardStart::Point(x) => x,
            ForwardStart::Prefix(p) => p.last(),
        }
    }

    fn history(&self) -> &[f64] {
        match self {
            ForwardStart::Point(x) => x,
            ForwardStart::Prefix(p) => p.values(),
        }
    }

    pub(crate) fn validate(&self, n: usize, bg: &BrownianGrid) -> Result<()> {
        Error::check_dim("forward start", n, self.dim())?;
        if self.history().iter().any(|v| !v.is_finite()) {
            return Err(Error::param("x0", "must be finite"));
        }
        if let ForwardStart::Prefix(p) = self {
            if !crate::paths::same_step(p.grid_step(), bg.step()) {
                return Err(Error::GridMismatch(p.grid_step(), bg.step()));
            }
        }
        if self.offset() >= bg.num_steps() {
            return Err(Error::OutOfRange {
                time: self.offset() as f64 * bg.step(),
                lower: 0.0,
                upper: (bg.num_steps() as f64 - 1.0) * bg.step(),
            });
        }
        Ok(())
    }
}

/// Simulated forward paths on the full grid `t_0..t_K`, with the declared
/// path features tracked at every grid point.
#[derive(Debug, Clone)]
pub struct ForwardPaths {
    pub x: PathField,
    pub features: PathField,
    offset: usize,
    step: f64,
}

impl ForwardPaths {
    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn num_steps(&self) -> usize {
        self.x.rows() - 1
    }

    /// Path `p` up to grid index `k` with its features at `k`.
    pub fn context<'a>(&'a self, cs: &'a CoefficientSet, p: usize, k: usize) -> PathContext<'a> {
        let view = PathView::from_rows(self.x.path(p), self.x.width(), k + 1, self.step);
        PathContext::new(view, cs.features(), self.features.at(p, k))
    }
}

/// Euler–Maruyama over the window: `X_{k+1} = X_k + b(X_{0..k}, u_k)Δ +
/// σ(X_{0..k}, u_k)ΔW_k`. Control rows are indexed from the window start.
pub fn simulate_forward(
    cs: &CoefficientSet,
    y: &PathField,
    z: &PathField,
    bg: &BrownianGrid,
    start: &ForwardStart,
) -> Result<ForwardPaths> {
    let dims = cs.dims();
    let (n, m, d) = (dims.n, dims.m, dims.d);
    start.validate(n, bg)?;
    Error::check_dim("noise dimension", d, bg.dim())?;
    let num_steps = bg.num_steps();
    let offset = start.offset();
    let window = num_steps - offset;
    let paths = bg.num_paths();
    Error::check_dim("control paths (y)", paths, y.num_paths())?;
    Error::check_dim("control paths (z)", paths, z.num_paths())?;
    Error::check_dim("control width (y)", m, y.width())?;
    Error::check_dim("control width (z)", m * d, z.width())?;
    if y.rows() < window || z.rows() < window {
        return Err(Error::DimensionMismatch {
            context: "control rows",
            expected: window,
            actual: y.rows().min(z.rows()),
        });
    }

    let spec = cs.features();
    let fw = spec.len() * n;
    let step = bg.step();
    let history = start.history();

    // features of the shared prefix, identical on every path
    let mut prefix_features = PathField::zeros(1, offset + 1, fw);
    {
        let mut state = vec![0.0; fw];
        initial_features(spec, &history[..n], &mut state);
        prefix_features.at_mut(0, 0).copy_from_slice(&state);
        for k in 1..=offset {
            advance_features(spec, &mut state, &history[(k - 1) * n..k * n], &history[k * n..(k + 1) * n], step);
            prefix_features.at_mut(0, k).copy_from_slice(&state);
        }
    }

    let mut x = PathField::zeros(paths, num_steps + 1, n);
    let mut features = PathField::zeros(paths, num_steps + 1, fw);
    let status: Vec<Result<Vec<f64>>> = x
        .par_paths_mut()
        .enumerate()
        .map(|(p, xp)| {
            xp[..history.len()].copy_from_slice(history);
            let mut fp = vec![0.0; (num_steps + 1) * fw];
            fp[..(offset + 1) * fw].copy_from_slice(prefix_features.path(0));
            let mut b = vec![0.0; n];
            let mut s = vec![0.0; n * d];
            let mut state = prefix_features.at(0, offset).to_vec();
            for k in offset..num_steps {
                let j = k - offset;
                let (done, rest) = xp.split_at_mut((k + 1) * n);
                let view = PathView::from_rows(done, n, k + 1, step);
                let ctx = PathContext::new(view, spec, &state);
                let u = Control {
                    y: y.at(p, j),
                    z: z.at(p, j),
                };
                cs.drift_into(&ctx, u, &mut b);
                cs.diffusion_into(&ctx, u, &mut s);
                let dw = bg.increment(p, k);
                let xk = &done[k * n..];
                let next = &mut rest[..n];
                for i in 0..n {
                    let noise: f64 = (0..d).map(|c| s[i * d + c] * dw[c]).sum();
                    next[i] = xk[i] + b[i] * step + noise;
                }
                if next.iter().any(|v| !v.is_finite()) {
                    return Err(Error::BlowUp { step: k + 1, path: p });
                }
                advance_features(spec, &mut state, xk, next, step);
                fp[(k + 1) * fw..(k + 2) * fw].copy_from_slice(&state);
            }
            Ok(fp)
        })
        .collect();
    for (p, fp) in status.into_iter().enumerate() {
        let fp = fp?;
        if fw > 0 {
            features.data_mut()[p * fp.len()..(p + 1) * fp.len()].copy_from_slice(&fp);
        }
    }
    Ok(ForwardPaths {
        x,
        features,
        offset,
        step,
    })
}
