use nalgebra::{ColPivQR, DMatrix};

use crate::error::{Error, Result};

/// Columns whose pivoted-QR diagonal falls below this fraction of the first
/// are treated as exact linear combinations of earlier ones.
const COLLINEAR_TOL: f64 = 1e-11;
const MAX_CONDITION: f64 = 1e12;
/// Columns whose cross-path spread is below this fraction of `1 + |mean|`
/// are treated as constant.
const MIN_SPREAD: f64 = 1e-4;

/// Monomials of total degree `1..=degree` in `num_vars` variables; the
/// constant term is handled by centering.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionBasis {
    num_vars: usize,
    degree: usize,
    exponents: Vec<Vec<u32>>,
}

impl RegressionBasis {
    pub fn new(num_vars: usize, degree: usize) -> Self {
        let mut exponents = Vec::new();
        for total in 1..=degree as u32 {
            let mut current = vec![0u32; num_vars];
            push_compositions(&mut exponents, &mut current, 0, total);
        }
        Self {
            num_vars,
            degree,
            exponents,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of non-constant columns.
    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    pub fn eval(&self, vars: &[f64], out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(&self.exponents) {
            *o = vars.iter().zip(e).map(|(v, &p)| v.powi(p as i32)).product();
        }
    }
}

fn push_compositions(out: &mut Vec<Vec<u32>>, current: &mut [u32], i: usize, left: u32) {
    if i == current.len() - 1 {
        current[i] = left;
        out.push(current.to_vec());
        current[i] = 0;
        return;
    }
    for e in (0..=left).rev() {
        current[i] = e;
        push_compositions(out, current, i + 1, left - e);
    }
    current[i] = 0;
}

/// Least-squares projection of `targets` (`rows × t`, row-major) onto the
/// span of a constant and the columns of `design` (`rows × c`, row-major).
/// Columns are centered and scaled; constant and collinear columns are
/// dropped. Returns the fitted values, row-major `rows × t`.
pub fn project(design: &[f64], c: usize, targets: &[f64], t: usize, step: usize) -> Result<Vec<f64>> {
    let rows = targets.len() / t;
    Projector::new(design, c, rows, step)?.fit(targets, t)
}

/// A factored design matrix, reusable across target sets.
pub(crate) struct Projector {
    rows: usize,
    step: usize,
    /// Standardized retained columns and their QR factors.
    x: Option<(DMatrix<f64>, ColPivQR<f64, nalgebra::Dyn, nalgebra::Dyn>, DMatrix<f64>, Vec<usize>)>,
}

impl Projector {
    pub(crate) fn new(design: &[f64], c: usize, rows: usize, step: usize) -> Result<Self> {
        debug_assert_eq!(design.len(), rows * c);
        let mean = column_means(design, c, rows);
        let mut scale = vec![0.0; c];
        for r in 0..rows {
            for j in 0..c {
                let dv = design[r * c + j] - mean[j];
                scale[j] += dv * dv;
            }
        }
        let keep: Vec<usize> = (0..c)
            .filter(|&j| {
                let sd = (scale[j] / rows as f64).sqrt();
                sd > MIN_SPREAD * (1.0 + mean[j].abs())
            })
            .collect();
        if keep.is_empty() {
            return Ok(Self { rows, step, x: None });
        }

        let sd: Vec<f64> = keep.iter().map(|&j| (scale[j] / rows as f64).sqrt()).collect();
        let x = DMatrix::from_fn(rows, keep.len(), |r, q| (design[r * c + keep[q]] - mean[keep[q]]) / sd[q]);
        let qr = ColPivQR::new(x.clone());
        let r_full = qr.r();
        let first = r_full[(0, 0)].abs();
        let mut rank = 0;
        while rank < keep.len().min(rows) && r_full[(rank, rank)].abs() > COLLINEAR_TOL * first {
            rank += 1;
        }
        if rank == 0 {
            return Ok(Self { rows, step, x: None });
        }
        let mut order = DMatrix::from_fn(1, keep.len(), |_, q| q as f64);
        qr.p().permute_columns(&mut order);
        let order: Vec<usize> = (0..rank).map(|q| order[(0, q)] as usize).collect();

        let r = r_full.view((0, 0), (rank, rank)).into_owned();
        let sv = r.singular_values();
        let (smax, smin) = sv.iter().fold((0.0f64, f64::INFINITY), |(a, b), &s| (a.max(s), b.min(s)));
        let condition = smax / smin;
        if !(condition <= MAX_CONDITION) {
            return Err(Error::IllConditioned { step, condition });
        }
        Ok(Self {
            rows,
            step,
            x: Some((x, qr, r, order)),
        })
    }

    pub(crate) fn fit(&self, targets: &[f64], t: usize) -> Result<Vec<f64>> {
        let rows = self.rows;
        debug_assert_eq!(targets.len(), rows * t);
        let target_mean = column_means(targets, t, rows);
        let mut fitted = Vec::with_capacity(rows * t);
        for _ in 0..rows {
            fitted.extend_from_slice(&target_mean);
        }
        let Some((x, qr, r, order)) = &self.x else {
            return Ok(fitted);
        };
        let rank = order.len();
        let mut b = DMatrix::from_fn(rows, t, |row, q| targets[row * t + q] - target_mean[q]);
        qr.q_tr_mul(&mut b);
        let rhs = b.rows(0, rank).into_owned();
        let coef = r.solve_upper_triangular(&rhs).ok_or(Error::IllConditioned {
            step: self.step,
            condition: f64::INFINITY,
        })?;

        for row in 0..rows {
            let out = &mut fitted[row * t..(row + 1) * t];
            for (q, &col) in order.iter().enumerate() {
                let xv = x[(row, col)];
                for (o, k) in out.iter_mut().enumerate() {
                    *k += coef[(q, o)] * xv;
                }
            }
        }
        Ok(fitted)
    }
}

fn column_means(data: &[f64], width: usize, rows: usize) -> Vec<f64> {
    let mut acc = vec![0.0; width];
    for row in data.chunks_exact(width) {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    acc.iter().map(|a| a / rows as f64).collect()
}
