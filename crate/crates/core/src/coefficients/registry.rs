//! Built-in problems.
//!
//! | name                 | params                         |
//! |----------------------|--------------------------------|
//! | `example31`          | none                           |
//! | `example32_demo`     | `kappa`                        |
//! | `linear_base`        | `beta1`, `beta2`, `lambda`, `dim`? |
//! | `decoupled_identity` | `dim`?                         |
//! | `custom_lifted`      | `kappa`                        |
//!
//! `example31` uses `G = 1`; its coupling inequalities are consistent with
//! that choice.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::{integral_lift, CoefficientSet, Dims};
use crate::error::{Error, Result};
use crate::paths::PathFeature;

pub type Params = BTreeMap<String, f64>;

const NAMES: [&str; 5] = [
    "example31",
    "example32_demo",
    "linear_base",
    "decoupled_identity",
    "custom_lifted",
];

pub fn registry_names() -> &'static [&'static str] {
    &NAMES
}

struct ParamReader<'a> {
    problem: &'a str,
    params: &'a Params,
    allowed: &'a [&'a str],
}

impl ParamReader<'_> {
    fn check_unknown(&self) -> Result<()> {
        match self.params.keys().find(|k| !self.allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::param(
                k.clone(),
                format!("not a parameter of `{}`", self.problem),
            )),
            None => Ok(()),
        }
    }

    fn required(&self, key: &str) -> Result<f64> {
        self.params
            .get(key)
            .copied()
            .ok_or_else(|| Error::MissingParameter {
                problem: self.problem.to_string(),
                param: key.to_string(),
            })
    }

    fn dim(&self) -> Result<usize> {
        match self.params.get("dim") {
            None => Ok(1),
            Some(&v) if v >= 1.0 && v.fract() == 0.0 => Ok(v as usize),
            Some(&v) => Err(Error::param("dim", format!("must be a positive integer, got {v}"))),
        }
    }
}

/// Looks up a built-in problem by name.
pub fn registry_get(name: &str, params: &Params) -> Result<CoefficientSet> {
    let reader = |allowed| ParamReader {
        problem: name,
        params,
        allowed,
    };
    match name {
        "example31" => {
            reader(&[]).check_unknown()?;
            example31()
        }
        "example32_demo" => {
            let r = reader(&["kappa"]);
            r.check_unknown()?;
            example32_demo(r.required("kappa")?)
        }
        "linear_base" => {
            let r = reader(&["beta1", "beta2", "lambda", "dim"]);
            r.check_unknown()?;
            linear_base(r.required("beta1")?, r.required("beta2")?, r.required("lambda")?, r.dim()?)
        }
        "decoupled_identity" => {
            let r = reader(&["dim"]);
            r.check_unknown()?;
            decoupled_identity(r.dim()?)
        }
        "custom_lifted" => {
            let r = reader(&["kappa"]);
            r.check_unknown()?;
            custom_lifted(r.required("kappa")?)
        }
        other => Err(Error::UnknownProblem(other.to_string())),
    }
}

/// `dX = (A + 2Y)dt + (A + 2Z)dW`, `dY = (A + 3X)dt + Z dW`, `Y(1) = −X(1)`
/// with `A(t) = ∫_0^t X(s) ds`.
fn example31() -> Result<CoefficientSet> {
    CoefficientSet::builder("example31", Dims::scalar())
        .features(&[PathFeature::RunningIntegral])
        .drift(Arc::new(|x, u, out| out[0] = x.running_integral()[0] + 2.0 * u.y[0]))
        .diffusion(Arc::new(|x, u, out| out[0] = x.running_integral()[0] + 2.0 * u.z[0]))
        .driver(Arc::new(|x, _, out| out[0] = x.running_integral()[0] + 3.0 * x.current()[0]))
        .terminal(Arc::new(|x, out| out[0] = -x[0]))
        .build()
}

/// Integral-lifted linear instance `ĥ = κa`, `b̂ = κy`, `σ̂ = κz`, `g = −x`.
fn example32_demo(kappa: f64) -> Result<CoefficientSet> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::param("kappa", "must be positive"));
    }
    CoefficientSet::builder("example32_demo", Dims::scalar())
        .features(&[PathFeature::RunningIntegral])
        .driver(integral_lift(Arc::new(move |a, _, _, out| out[0] = kappa * a[0])))
        .drift(integral_lift(Arc::new(move |_, y, _, out| out[0] = kappa * y[0])))
        .diffusion(integral_lift(Arc::new(move |_, _, z, out| out[0] = kappa * z[0])))
        .terminal(Arc::new(|x, out| out[0] = -x[0]))
        .build()
}

/// The linear base system `b = −β₂y`, `σ = −β₂z`, `h = −β₁x`, `g = λx` with
/// `n = m = d = dim` and `G = I`.
fn linear_base(beta1: f64, beta2: f64, lambda: f64, dim: usize) -> Result<CoefficientSet> {
    for (name, v) in [("beta1", beta1), ("beta2", beta2), ("lambda", lambda)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::param(name, "must be nonnegative"));
        }
    }
    let d = dim;
    CoefficientSet::builder("linear_base", Dims::new(dim, dim, dim))
        .drift(Arc::new(move |_, u, out| {
            for (o, y) in out.iter_mut().zip(u.y) {
                *o = -beta2 * y;
            }
        }))
        .diffusion(Arc::new(move |_, u, out| {
            for (o, z) in out.iter_mut().zip(u.z) {
                *o = -beta2 * z;
            }
        }))
        .driver(Arc::new(move |x, _, out| {
            for (o, v) in out.iter_mut().zip(x.current()) {
                *o = -beta1 * v;
            }
        }))
        .terminal(Arc::new(move |x, out| {
            for (o, v) in out.iter_mut().zip(x).take(d) {
                *o = lambda * v;
            }
        }))
        .build()
}

/// `b = h = 0`, `σ = I`, `g(x) = x`: `Y = X`, `Z = I`.
fn decoupled_identity(dim: usize) -> Result<CoefficientSet> {
    CoefficientSet::builder("decoupled_identity", Dims::new(dim, dim, dim))
        .diffusion(Arc::new(move |_, _, out| {
            out.fill(0.0);
            for i in 0..dim {
                out[i * dim + i] = 1.0;
            }
        }))
        .terminal(Arc::new(|x, out| out.copy_from_slice(x)))
        .build()
}

/// `h = κ ∫_0^t x ds` through [`integral_lift`], `b = σ = 0`, `g = −x`.
fn custom_lifted(kappa: f64) -> Result<CoefficientSet> {
    if !kappa.is_finite() {
        return Err(Error::param("kappa", "must be finite"));
    }
    CoefficientSet::builder("custom_lifted", Dims::scalar())
        .features(&[PathFeature::RunningIntegral])
        .driver(integral_lift(Arc::new(move |a, _, _, out| out[0] = kappa * a[0])))
        .terminal(Arc::new(|x, out| out[0] = -x[0]))
        .build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::ControlPair;
    use crate::paths::{for_each_prefix, Path};

    #[test]
    fn example31_drift_at_zero_path() {
        let cs = registry_get("example31", &Params::new()).unwrap();
        let prepared = cs.prepare(Path::constant(0.1, &[0.0], 5).unwrap());
        let u = ControlPair::new(vec![1.0], vec![0.0]);
        assert_eq!(cs.drift(&prepared.context(), u.as_control()), vec![2.0]);
    }

    #[test]
    fn example31_driver_matches_direct_formula() {
        let cs = registry_get("example31", &Params::new()).unwrap();
        let path = Path::scalar(0.2, &[0.4, -1.3, 2.2, 0.1, -0.7, 1.9]).unwrap();
        let integral = path.running_integral();
        let u = ControlPair::new(vec![0.3], vec![-0.2]);
        for_each_prefix(&path, cs.features(), |k, ctx| {
            let expect = integral.point(k)[0] + 3.0 * path.point(k)[0];
            assert_eq!(cs.driver(&ctx, u.as_control()), vec![expect]);
        });
    }

    #[test]
    fn decoupled_identity_shape() {
        let p: Params = [("dim".to_string(), 2.0)].into_iter().collect();
        let cs = registry_get("decoupled_identity", &p).unwrap();
        assert_eq!(cs.dims(), Dims::new(2, 2, 2));
        let prepared = cs.prepare(Path::constant(0.1, &[1.0, 2.0], 1).unwrap());
        let u = ControlPair::zeros(cs.dims());
        let ctx = prepared.context();
        assert_eq!(cs.drift(&ctx, u.as_control()), vec![0.0, 0.0]);
        assert_eq!(cs.driver(&ctx, u.as_control()), vec![0.0, 0.0]);
        assert_eq!(cs.diffusion(&ctx, u.as_control()), vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(cs.terminal(&[3.0, -4.0]), vec![3.0, -4.0]);
    }

    #[test]
    fn registry_errors() {
        assert!(matches!(
            registry_get("nope", &Params::new()),
            Err(Error::UnknownProblem(_))
        ));
        assert!(matches!(
            registry_get("example32_demo", &Params::new()),
            Err(Error::MissingParameter { .. })
        ));
        let extra: Params = [("kappa".to_string(), 1.0)].into_iter().collect();
        assert!(matches!(
            registry_get("example31", &extra),
            Err(Error::InvalidParameter { .. })
        ));
        let bad_dim: Params = [("dim".to_string(), 1.5)].into_iter().collect();
        assert!(registry_get("decoupled_identity", &bad_dim).is_err());
    }

    #[test]
    fn every_registered_name_builds() {
        let params: Params = [
            ("kappa", 2.0),
            ("beta1", 1.0),
            ("beta2", 1.0),
            ("lambda", 1.0),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        for name in registry_names() {
            let allowed: Params = params
                .iter()
                .filter(|(k, _)| match *name {
                    "example32_demo" | "custom_lifted" => k.as_str() == "kappa",
                    "linear_base" => k.as_str() != "kappa",
                    _ => false,
                })
                .map(|(k, v)| (k.clone(), *v))
                .collect();
            registry_get(name, &allowed).unwrap();
        }
    }
}
