//! Symmetric banded matrices and their Cholesky factorization.

use crate::error::{Error, Result};
use crate::real::Real;

/// Symmetric matrix stored by its lower band: `data[i * (bw + 1) + (i - j)]`
/// holds entry `(i, j)` for `i - bw ≤ j ≤ i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBanded<T> {
    n: usize,
    bw: usize,
    data: Vec<T>,
}

impl<T: Real> SymBanded<T> {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![T::zero(); n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if r - c > self.bw || r >= self.n {
            None
        } else {
            Some(r * (self.bw + 1) + (r - c))
        }
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.slot(i, j).map_or(T::zero(), |k| self.data[k])
    }

    /// Adds `v` to the symmetric pair `(i, j)`, `(j, i)`.
    ///
    /// # Panics
    /// If `(i, j)` lies outside the band.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        let k = self.slot(i, j).expect("entry outside the band");
        self.data[k] = self.data[k] + v;
    }

    /// Number of stored entries of the full symmetric matrix that are nonzero.
    pub fn nnz(&self) -> usize {
        let mut count = 0;
        for i in 0..self.n {
            for d in 0..=self.bw.min(i) {
                if self.data[i * (self.bw + 1) + d] != T::zero() {
                    count += if d == 0 { 1 } else { 2 };
                }
            }
        }
        count
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j)).collect()).collect()
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n];
        let w = self.bw + 1;
        for i in 0..self.n {
            let row = &self.data[i * w..(i + 1) * w];
            out[i] = out[i] + row[0] * x[i];
            for d in 1..=self.bw.min(i) {
                let a = row[d];
                if a != T::zero() {
                    out[i] = out[i] + a * x[i - d];
                    out[i - d] = out[i - d] + a * x[i];
                }
            }
        }
        out
    }

    /// Largest absolute entry-wise difference relative to the largest entry of `self`.
    pub fn max_relative_difference(&self, other: &Self) -> f64 {
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.to_f64_lossy().abs()));
        let mut diff = 0.0f64;
        for i in 0..self.n.max(other.n) {
            for d in 0..=self.bw.max(other.bw).min(i) {
                let a = self.get(i, i - d).to_f64_lossy();
                let b = other.get(i, i - d).to_f64_lossy();
                diff = diff.max((a - b).abs());
            }
        }
        if scale == 0.0 {
            diff
        } else {
            diff / scale
        }
    }

    /// In-place banded Cholesky `A = L Lᵀ`. A tridiagonal matrix (`bw = 1`)
    /// reduces to the Thomas recursion.
    pub fn cholesky(&self) -> Result<BandCholesky<T>> {
        let w = self.bw + 1;
        let mut l = self.data.clone();
        for i in 0..self.n {
            let jmin = i.saturating_sub(self.bw);
            for j in jmin..=i {
                // s = A_ij - Σ_k L_ik L_jk
                let mut s = l[i * w + (i - j)];
                let kmin = jmin.max(j.saturating_sub(self.bw));
                for k in kmin..j {
                    s = s - l[i * w + (i - k)] * l[j * w + (j - k)];
                }
                if i == j {
                    if !(s > T::zero()) {
                        return Err(Error::NotPositiveDefinite {
                            row: i,
                            pivot: s.to_f64_lossy(),
                        });
                    }
                    l[i * w] = s.sqrt();
                } else {
                    l[i * w + (i - j)] = s / l[j * w];
                }
            }
        }
        Ok(BandCholesky {
            n: self.n,
            bw: self.bw,
            l,
        })
    }
}

/// Lower-band Cholesky factor.
#[derive(Debug, Clone)]
pub struct BandCholesky<T> {
    n: usize,
    bw: usize,
    l: Vec<T>,
}

impl<T: Real> BandCholesky<T> {
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let w = self.bw + 1;
        let mut x = b.to_vec();
        for i in 0..self.n {
            let mut s = x[i];
            for k in i.saturating_sub(self.bw)..i {
                s = s - self.l[i * w + (i - k)] * x[k];
            }
            x[i] = s / self.l[i * w];
        }
        for i in (0..self.n).rev() {
            let mut s = x[i];
            for k in (i + 1)..(i + w).min(self.n) {
                s = s - self.l[k * w + (k - i)] * x[k];
            }
            x[i] = s / self.l[i * w];
        }
        x
    }

    /// Ratio of the extreme pivots squared, a cheap conditioning indicator.
    pub fn pivot_ratio(&self) -> f64 {
        let w = self.bw + 1;
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..self.n {
            let p = self.l[i * w].to_f64_lossy();
            lo = lo.min(p);
            hi = hi.max(p);
        }
        (hi / lo).powi(2)
    }
}

pub fn norm2<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt()
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}
