use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::PathField;
use crate::error::{Error, Result};

/// Time grid `t_k = kT/K`, path count and regression degree.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Discretization {
    pub num_steps: usize,
    pub horizon: f64,
    pub num_paths: usize,
    pub basis_degree: usize,
    pub seed: u64,
}

impl Discretization {
    pub fn new(num_steps: usize, horizon: f64, num_paths: usize, basis_degree: usize, seed: u64) -> Result<Self> {
        let d = Self {
            num_steps,
            horizon,
            num_paths,
            basis_degree,
            seed,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_steps < 1 {
            return Err(Error::param("num_steps", "must be at least 1"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::param("horizon", "must be positive"));
        }
        if self.num_paths < 2 {
            return Err(Error::param("num_paths", "must be at least 2"));
        }
        if !(1..=6).contains(&self.basis_degree) {
            return Err(Error::param("basis_degree", "must lie in 1..=6"));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.num_steps as f64
    }
}

/// Frozen Brownian increments `ΔW_k ~ N(0, Δ)`.
///
/// Paths come in antithetic pairs: paths `2i` and `2i + 1` share ChaCha stream
/// `i` with opposite signs, so cross-path increment means vanish when `M` is
/// even. Streams are per pair, so the grid does not depend on the thread
/// count.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianGrid {
    step: f64,
    seed: u64,
    increments: PathField,
}

impl BrownianGrid {
    pub fn generate(disc: &Discretization, dim: usize) -> Result<Self> {
        disc.validate()?;
        if dim == 0 {
            return Err(Error::param("dim", "noise dimension must be positive"));
        }
        let step = disc.step();
        let sd = step.sqrt();
        let mut increments = PathField::zeros(disc.num_paths, disc.num_steps, dim);
        increments.par_paths_mut().enumerate().for_each(|(p, row)| {
            let mut rng = ChaCha8Rng::seed_from_u64(disc.seed);
            rng.set_stream((p / 2) as u64);
            let sign = if p % 2 == 0 { sd } else { -sd };
            for v in row.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = sign * z;
            }
        });
        Ok(Self {
            step,
            seed: disc.seed,
            increments,
        })
    }

    /// Wraps externally supplied increments laid out `[path][step][dim]`.
    pub fn from_increments(step: f64, seed: u64, increments: PathField) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::param("step", "must be positive"));
        }
        if !increments.is_finite() {
            return Err(Error::param("increments", "must be finite"));
        }
        Ok(Self {
            step,
            seed,
            increments,
        })
    }

    /// Sums `factor` consecutive increments, giving the same Brownian paths on
    /// a grid `factor` times coarser.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        let k = self.num_steps();
        if factor == 0 || k % factor != 0 {
            return Err(Error::param(
                "factor",
                format!("must divide the step count {k}"),
            ));
        }
        let d = self.dim();
        let mut out = PathField::zeros(self.num_paths(), k / factor, d);
        out.par_paths_mut().enumerate().for_each(|(p, row)| {
            for (j, chunk) in row.chunks_exact_mut(d).enumerate() {
                for i in 0..factor {
                    for (o, v) in chunk.iter_mut().zip(self.increment(p, j * factor + i)) {
                        *o += v;
                    }
                }
            }
        });
        Ok(Self {
            step: self.step * factor as f64,
            seed: self.seed,
            increments: out,
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_steps(&self) -> usize {
        self.increments.rows()
    }

    pub fn num_paths(&self) -> usize {
        self.increments.num_paths()
    }

    pub fn dim(&self) -> usize {
        self.increments.width()
    }

    /// `ΔW_k = W(t_{k+1}) − W(t_k)` on path `p`.
    pub fn increment(&self, p: usize, k: usize) -> &[f64] {
        self.increments.at(p, k)
    }

    pub fn increments(&self) -> &PathField {
        &self.increments
    }
}
