use rayon::prelude::*;

use super::regression::{Projector, RegressionBasis};
use super::{BrownianGrid, ForwardPaths, PathField};
use crate::coefficients::{CoefficientSet, Control};
use crate::error::{Error, Result};

/// `(Y, Z)` on the solve window plus, per path, the reconstruction
/// `ξ = Y_K − Σ (h_k Δ + Z_k ΔW_k)` whose mean is `Y` at the window start.
#[derive(Debug, Clone)]
pub(crate) struct Backward {
    pub y: PathField,
    pub z: PathField,
    pub xi: Vec<f64>,
}

/// Regression basis for a coefficient set: monomials in `X(t_k)` and every
/// declared feature.
pub fn basis_for(cs: &CoefficientSet, degree: usize) -> RegressionBasis {
    let n = cs.dims().n;
    RegressionBasis::new(n * (1 + cs.features().len()), degree)
}

/// Least-squares Monte Carlo with an explicit driver:
/// `Ỹ_k = E[Y_{k+1} | 𝓕_k]`, `Z_k = E[(Y_{k+1} − Ỹ_k) ΔW_kᵀ/Δ | 𝓕_k]`,
/// `Y_k = Ỹ_k − h(X_{0..k}, Ỹ_k, Z_k)Δ`, from `Y_K = g(X_K)`.
pub fn backward_lsmc(
    cs: &CoefficientSet,
    fwd: &ForwardPaths,
    bg: &BrownianGrid,
    basis: &RegressionBasis,
) -> Result<(PathField, PathField)> {
    let out = backward_pass(cs, fwd, bg, basis)?;
    Ok((out.y, out.z))
}

pub(crate) fn backward_pass(
    cs: &CoefficientSet,
    fwd: &ForwardPaths,
    bg: &BrownianGrid,
    basis: &RegressionBasis,
) -> Result<Backward> {
    let dims = cs.dims();
    let (n, m, d) = (dims.n, dims.m, dims.d);
    Error::check_dim("forward state", n, fwd.x.width())?;
    Error::check_dim("regression variables", n + fwd.features.width(), basis.num_vars())?;
    let paths = fwd.x.num_paths();
    let num_steps = fwd.num_steps();
    let offset = fwd.offset();
    let window = num_steps - offset;
    let step = fwd.step();
    if fwd.x.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteCoefficient {
            name: "X",
            context: "backward pass input".into(),
        });
    }

    let mut y = PathField::zeros(paths, window + 1, m);
    let mut z = PathField::zeros(paths, window, m * d);
    let mut acc = vec![0.0; paths * m];
    for p in 0..paths {
        cs.terminal_into(fwd.x.at(p, num_steps), y.at_mut(p, window));
    }
    if y.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteCoefficient {
            name: "g",
            context: "terminal condition".into(),
        });
    }

    let c = basis.len();
    let md = m * d;
    let fw = fwd.features.width();
    let mut design = vec![0.0; paths * c];
    let mut next = vec![0.0; paths * m];
    let mut targets = vec![0.0; paths * md];
    let mut vars = vec![0.0; n + fw];
    for k in (offset..num_steps).rev() {
        let j = k - offset;
        for p in 0..paths {
            vars[..n].copy_from_slice(fwd.x.at(p, k));
            vars[n..].copy_from_slice(fwd.features.at(p, k));
            basis.eval(&vars, &mut design[p * c..(p + 1) * c]);
            next[p * m..(p + 1) * m].copy_from_slice(y.at(p, j + 1));
        }
        let proj = Projector::new(&design, c, paths, k)?;
        let ytilde = proj.fit(&next, m)?;
        // the continuation value is a control variate for the Z target
        for p in 0..paths {
            let dw = bg.increment(p, k);
            let row = &mut targets[p * md..(p + 1) * md];
            for i in 0..m {
                let centered = next[p * m + i] - ytilde[p * m + i];
                for q in 0..d {
                    row[i * d + q] = centered * dw[q] / step;
                }
            }
        }
        let zfit = proj.fit(&targets, md)?;

        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..paths)
            .into_par_iter()
            .map(|p| {
                let ytilde = &ytilde[p * m..(p + 1) * m];
                let zk = &zfit[p * md..(p + 1) * md];
                let mut h = vec![0.0; m];
                cs.driver_into(&fwd.context(cs, p, k), Control { y: ytilde, z: zk }, &mut h);
                let dw = bg.increment(p, k);
                let mut yk = vec![0.0; m];
                let mut inc = vec![0.0; m];
                for i in 0..m {
                    yk[i] = ytilde[i] - h[i] * step;
                    let noise: f64 = (0..d).map(|q| zk[i * d + q] * dw[q]).sum();
                    inc[i] = h[i] * step + noise;
                }
                (yk, inc)
            })
            .collect();
        for (p, (yk, inc)) in rows.into_iter().enumerate() {
            if yk.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteCoefficient {
                    name: "h",
                    context: format!("backward step {k}, path {p}"),
                });
            }
            y.at_mut(p, j).copy_from_slice(&yk);
            z.at_mut(p, j).copy_from_slice(&zfit[p * md..(p + 1) * md]);
            for (a, v) in acc[p * m..(p + 1) * m].iter_mut().zip(&inc) {
                *a += v;
            }
        }
    }

    let xi = (0..paths)
        .flat_map(|p| {
            let terminal = y.at(p, window).to_vec();
            let a = acc[p * m..(p + 1) * m].to_vec();
            terminal.into_iter().zip(a).map(|(g, s)| g - s)
        })
        .collect();
    Ok(Backward { y, z, xi })
}
