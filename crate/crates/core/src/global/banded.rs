//! Banded LU factorization with partial pivoting.

use crate::error::{Error, Result};

/// Square matrix with `kl` sub- and `ku` super-diagonals, stored row by row
/// with room for the `kl` extra super-diagonals that pivoting can fill.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let kl = kl.min(n.saturating_sub(1));
        let ku = ku.min(n.saturating_sub(1));
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn dense(n: usize) -> Self {
        Self::zeros(n, n, n)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[self.idx(i, j)]
        } else {
            0.0
        }
    }

    /// Adds `v` to entry `(i, j)`, which must lie inside the band.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(
            self.in_band(i, j),
            "({i}, {j}) outside band {:?}",
            self.bandwidths()
        );
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            self.in_band(i, j),
            "({i}, {j}) outside band {:?}",
            self.bandwidths()
        );
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.data[self.idx(i, j)] * x[j]).sum()
            })
            .collect()
    }

    /// Factorizes in place. A pivot below `1e-14 · max|a_ij|` is reported as singular.
    pub fn factorize(mut self) -> Result<BandLu> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tiny = 1e-14 * scale;
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + ku + kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.idx(k, k)].abs();
            for i in k + 1..=last_row {
                let v = self.data[self.idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > tiny) {
                return Err(Error::Singular { pivot: k });
            }
            piv[k] = p;
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (self.idx(k, j), self.idx(p, j));
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.idx(k, k)];
            let row_k = self.idx(k, k);
            for i in k + 1..=last_row {
                let ik = self.idx(i, k);
                let l = self.data[ik] / pivot;
                self.data[ik] = l;
                if l == 0.0 {
                    continue;
                }
                let base_i = self.idx(i, k + 1);
                let base_k = row_k + 1;
                let len = last_col - k;
                for t in 0..len {
                    self.data[base_i + t] -= l * self.data[base_k + t];
                }
            }
        }
        Ok(BandLu { a: self, piv })
    }
}

/// LU factors of a [`BandMatrix`].
#[derive(Debug, Clone)]
pub struct BandLu {
    a: BandMatrix,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let a = &self.a;
        let n = a.n;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..=(k + a.kl).min(n - 1) {
                    b[i] -= a.data[a.idx(i, k)] * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let last = (k + a.ku + a.kl).min(n - 1);
            let mut s = b[k];
            for j in k + 1..=last {
                s -= a.data[a.idx(k, j)] * b[j];
            }
            b[k] = s / a.data[a.idx(k, k)];
        }
    }
}

/// Dense inverse through the banded factorization with full bandwidth.
pub fn dense_inverse(m: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = m.len();
    let mut a = BandMatrix::dense(n);
    for (i, row) in m.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            a.set(i, j, v);
        }
    }
    let lu = a.factorize()?;
    let mut cols = vec![vec![0.0; n]; n];
    for (j, col) in cols.iter_mut().enumerate() {
        col[j] = 1.0;
        lu.solve_in_place(col);
    }
    Ok((0..n)
        .map(|i| (0..n).map(|j| cols[j][i]).collect())
        .collect())
}
