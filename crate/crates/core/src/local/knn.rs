//! Exact k-nearest-neighbor search by linear scan over row-major points.

use crate::error::{Error, Result};

/// A neighbor as `(index, squared Euclidean distance)`.
pub type Neighbor = (usize, f64);

/// Rows of equal dimension stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    data: Vec<f64>,
    dim: usize,
}

impl PointSet {
    pub fn new(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 || data.is_empty() {
            return Err(Error::Shape(format!(
                "{} values do not form a non-empty set of {dim}-vectors",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "point set entries must be finite".into(),
            ));
        }
        Ok(Self { data, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> &[f64] {
        &self.data
    }

    /// The `k` nearest points to `query`, ascending by distance, ties by index.
    pub fn knn(&self, query: &[f64], k: usize) -> Result<Vec<Neighbor>> {
        if k < 1 || k > self.len() {
            return Err(Error::InvalidParameter(format!(
                "k = {k} must lie in 1..={}",
                self.len()
            )));
        }
        if query.len() != self.dim {
            return Err(Error::Shape(format!(
                "query has {} components, points have {}",
                query.len(),
                self.dim
            )));
        }
        let mut best: Vec<Neighbor> = Vec::with_capacity(k + 1);
        let mut worst = f64::INFINITY;
        for (i, p) in self.data.chunks_exact(self.dim).enumerate() {
            let mut d = 0.0;
            for (a, b) in p.iter().zip(query) {
                let t = a - b;
                d += t * t;
            }
            // strict comparison keeps the earlier index on ties
            if best.len() < k || d < worst {
                let pos = best.partition_point(|&(_, bd)| bd <= d);
                best.insert(pos, (i, d));
                if best.len() > k {
                    best.pop();
                }
                if best.len() == k {
                    worst = best[k - 1].1;
                }
            }
        }
        Ok(best)
    }

    /// Index of the nearest point (lowest index on ties).
    pub fn nearest(&self, query: &[f64]) -> Result<Neighbor> {
        Ok(self.knn(query, 1)?[0])
    }
}
