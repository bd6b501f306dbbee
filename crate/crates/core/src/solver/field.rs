use rayon::prelude::*;

/// Per-path arrays of `rows` values of `width` each, stored path-major so
/// that one path's history is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct PathField {
    num_paths: usize,
    rows: usize,
    width: usize,
    data: Vec<f64>,
}

impl PathField {
    pub fn zeros(num_paths: usize, rows: usize, width: usize) -> Self {
        Self {
            num_paths,
            rows,
            width,
            data: vec![0.0; num_paths * rows * width],
        }
    }

    /// Fills every path with the same history.
    pub fn broadcast(num_paths: usize, rows: usize, width: usize, history: &[f64]) -> Self {
        assert_eq!(history.len(), rows * width);
        let mut data = Vec::with_capacity(num_paths * history.len());
        for _ in 0..num_paths {
            data.extend_from_slice(history);
        }
        Self {
            num_paths,
            rows,
            width,
            data,
        }
    }

    pub fn num_paths(&self) -> usize {
        self.num_paths
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn path_len(&self) -> usize {
        self.rows * self.width
    }

    pub fn path(&self, p: usize) -> &[f64] {
        let n = self.path_len();
        &self.data[p * n..(p + 1) * n]
    }

    pub fn at(&self, p: usize, k: usize) -> &[f64] {
        let start = p * self.path_len() + k * self.width;
        &self.data[start..start + self.width]
    }

    pub fn at_mut(&mut self, p: usize, k: usize) -> &mut [f64] {
        let start = p * self.path_len() + k * self.width;
        &mut self.data[start..start + self.width]
    }

    pub(crate) fn par_paths_mut(&mut self) -> rayon::slice::ChunksMut<'_, f64> {
        let n = self.path_len().max(1);
        self.data.par_chunks_mut(n)
    }

    /// Cross-path mean of row `k`.
    pub fn mean_at(&self, k: usize) -> Vec<f64> {
        let mut acc = vec![0.0; self.width];
        for p in 0..self.num_paths {
            for (a, v) in acc.iter_mut().zip(self.at(p, k)) {
                *a += v;
            }
        }
        acc.iter().map(|a| a / self.num_paths as f64).collect()
    }

    /// Sample standard deviation over `√M` for row `k`.
    pub fn stderr_at(&self, k: usize) -> Vec<f64> {
        let mean = self.mean_at(k);
        let mut acc = vec![0.0; self.width];
        for p in 0..self.num_paths {
            for ((a, v), m) in acc.iter_mut().zip(self.at(p, k)).zip(&mean) {
                *a += (v - m) * (v - m);
            }
        }
        let m = self.num_paths as f64;
        acc.iter().map(|a| (a / (m - 1.0).max(1.0)).sqrt() / m.sqrt()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `max |self − other| / max(max |other|, tiny)`.
    pub fn relative_distance(&self, other: &PathField) -> f64 {
        assert_eq!(self.data.len(), other.data.len());
        let diff = self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let scale = other.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        diff / scale.max(f64::MIN_POSITIVE)
    }
}
