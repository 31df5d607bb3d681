//! Compressed-row sparse matrices with full (both-triangle) storage.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Zero matrix with the symmetric pattern spanned by `pairs` plus the diagonal.
    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (u32, u32)>) -> CsrMatrix {
        let mut keys: Vec<u64> = pairs
            .into_iter()
            .filter(|(i, j)| i != j)
            .map(|(i, j)| {
                let (lo, hi) = if i < j { (i, j) } else { (j, i) };
                ((lo as u64) << 32) | hi as u64
            })
            .collect();
        keys.sort_unstable();
        keys.dedup();
        let mut counts = vec![1usize; n];
        for &key in &keys {
            counts[(key >> 32) as usize] += 1;
            counts[(key & 0xffff_ffff) as usize] += 1;
        }
        let mut row_ptr = vec![0usize; n + 1];
        for i in 0..n {
            row_ptr[i + 1] = row_ptr[i] + counts[i];
        }
        let mut cols = vec![0u32; row_ptr[n]];
        let mut fill: Vec<usize> = row_ptr[..n].to_vec();
        for i in 0..n {
            cols[fill[i]] = i as u32;
            fill[i] += 1;
        }
        for key in keys {
            let (i, j) = ((key >> 32) as usize, (key & 0xffff_ffff) as usize);
            cols[fill[i]] = j as u32;
            fill[i] += 1;
            cols[fill[j]] = i as u32;
            fill[j] += 1;
        }
        for i in 0..n {
            cols[row_ptr[i]..row_ptr[i + 1]].sort_unstable();
        }
        let nnz = cols.len();
        CsrMatrix { n, row_ptr, cols, values: vec![0.0; nnz] }
    }

    pub fn from_dense(n: usize, dense: &[f64]) -> CsrMatrix {
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if dense[i * n + j] != 0.0 {
                    pairs.push((i as u32, j as u32));
                }
            }
        }
        let mut m = CsrMatrix::from_pairs(n, pairs);
        for i in 0..n {
            for j in 0..n {
                if dense[i * n + j] != 0.0 {
                    m.add(i, j, dense[i * n + j]);
                }
            }
        }
        m
    }

    pub fn diagonal_matrix(d: &[f64]) -> CsrMatrix {
        let n = d.len();
        CsrMatrix {
            n,
            row_ptr: (0..=n).collect(),
            cols: (0..n as u32).collect(),
            values: d.to_vec(),
        }
    }

    /// Same pattern, all values zero.
    pub fn zeros_like(&self) -> CsrMatrix {
        CsrMatrix { values: vec![0.0; self.values.len()], ..self.clone() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_indices(&self) -> &[u32] {
        &self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().zip(&self.values[r]).map(|(&j, &v)| (j as usize, v))
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_ptr[i];
        let row = &self.cols[start..self.row_ptr[i + 1]];
        row.binary_search(&(j as u32)).ok().map(|p| start + p)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |p| self.values[p])
    }

    /// Adds `v` to entry `(i, j)`, which must be in the pattern.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        match self.position(i, j) {
            Some(p) => self.values[p] += v,
            None => panic!("entry ({i}, {j}) outside the sparsity pattern"),
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            y.par_iter_mut().enumerate().for_each(|(i, yi)| *yi = self.row_dot(i, x));
        }
        #[cfg(not(feature = "parallel"))]
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row_dot(i, x);
        }
    }

    #[inline]
    fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        let mut acc = 0.0;
        for p in s..e {
            acc += self.values[p] * x[self.cols[p] as usize];
        }
        acc
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    /// `self + alpha * other` on the union pattern.
    pub fn add_scaled(&self, alpha: f64, other: &CsrMatrix) -> Result<CsrMatrix> {
        if self.n != other.n {
            return Err(Error::InvalidParameter(format!(
                "dimension mismatch: {} vs {}",
                self.n, other.n
            )));
        }
        if self.row_ptr == other.row_ptr && self.cols == other.cols {
            let values = self.values.iter().zip(&other.values).map(|(a, b)| a + alpha * b).collect();
            return Ok(CsrMatrix { values, ..self.clone() });
        }
        let mut pairs = Vec::with_capacity(self.nnz() + other.nnz());
        for m in [self, other] {
            for i in 0..m.n {
                for (j, _) in m.row(i) {
                    pairs.push((i as u32, j as u32));
                }
            }
        }
        let mut out = CsrMatrix::from_pairs(self.n, pairs);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                out.add(i, j, v);
            }
            for (j, v) in other.row(i) {
                out.add(i, j, alpha * v);
            }
        }
        Ok(out)
    }

    /// `D A D` for the diagonal `d`.
    pub fn scale_symmetric(&self, d: &[f64]) -> CsrMatrix {
        let mut out = self.clone();
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.values[p] *= d[i] * d[self.cols[p] as usize];
            }
        }
        out
    }

    pub fn scale(&mut self, alpha: f64) {
        for v in self.values.iter_mut() {
            *v *= alpha;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `max |A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// `xᵀ A y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.n).map(|i| x[i] * self.row_dot(i, y)).sum()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                d[i * self.n + j] = v;
            }
        }
        d
    }

    /// Applies `perm` (new index of old row `i` is `perm[i]`) to rows and columns.
    pub fn permuted(&self, perm: &[usize]) -> CsrMatrix {
        let mut pairs = Vec::with_capacity(self.nnz());
        for i in 0..self.n {
            for (j, _) in self.row(i) {
                pairs.push((perm[i] as u32, perm[j] as u32));
            }
        }
        let mut out = CsrMatrix::from_pairs(self.n, pairs);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                out.add(perm[i], perm[j], v);
            }
        }
        out
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}
