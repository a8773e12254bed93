//! Compressed sparse rows, symmetric banded LDLᵀ and matrix export.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

/// Triplet accumulator. Duplicates are summed in insertion order, so two
/// entries fed by mirrored contributions in the same order come out
/// bitwise equal.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(n: usize) -> Self {
        TripletBuilder {
            n,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(n: usize, cap: usize) -> Self {
        TripletBuilder {
            n,
            entries: Vec::with_capacity(cap),
        }
    }

    #[inline]
    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.n && j < self.n);
        self.entries.push((i, j, v));
    }

    pub fn build(mut self) -> CsrMatrix {
        self.entries.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = alloc::vec![0usize; self.n + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len() / 2);
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len() / 2);
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in self.entries {
            if last == Some((i, j)) {
                *values.last_mut().expect("entry exists") += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..self.n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            n: self.n,
            row_ptr,
            col_idx,
            values,
        }
    }
}

impl CsrMatrix {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yi = acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = alloc::vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, xi) in x.iter().enumerate().take(self.n) {
            let mut row = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                row += self.values[k] * y[self.col_idx[k]];
            }
            acc += xi * row;
        }
        acc
    }

    pub fn quadratic(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    /// Exact (bitwise) symmetry.
    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| self.get(j, i) == v))
    }

    pub fn bandwidth(&self) -> usize {
        (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, _)| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }

    /// `a·self + b·other` on the union pattern.
    pub fn linear_combination(&self, a: f64, other: &CsrMatrix, b: f64) -> CsrMatrix {
        assert_eq!(self.n, other.n);
        let mut tb = TripletBuilder::with_capacity(self.n, self.nnz() + other.nnz());
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                tb.push(i, j, a * v);
            }
            for (j, v) in other.row(i) {
                tb.push(i, j, b * v);
            }
        }
        tb.build()
    }

    /// Principal submatrix on the leading `m` indices.
    pub fn leading_block(&self, m: usize) -> CsrMatrix {
        let mut tb = TripletBuilder::new(m);
        for i in 0..m {
            for (j, v) in self.row(i) {
                if j < m {
                    tb.push(i, j, v);
                }
            }
        }
        tb.build()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = alloc::vec![alloc::vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }

    /// Plain coordinate text: one `row col value` line per stored entry,
    /// zero-based.
    pub fn to_coo_text(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                let _ = writeln!(out, "{i} {j} {v:.17e}");
            }
        }
        out
    }

    /// Matrix Market coordinate format, symmetric storage (lower triangle,
    /// one-based).
    pub fn to_matrix_market(&self) -> String {
        let lower: usize = (0..self.n)
            .map(|i| self.row(i).filter(|&(j, _)| j <= i).count())
            .sum();
        let mut out = String::from("%%MatrixMarket matrix coordinate real symmetric\n");
        let _ = writeln!(out, "{} {} {}", self.n, self.n, lower);
        for i in 0..self.n {
            for (j, v) in self.row(i).filter(|&(j, _)| j <= i) {
                let _ = writeln!(out, "{} {} {v:.17e}", i + 1, j + 1);
            }
        }
        out
    }
}

/// `A = L D Lᵀ` for a symmetric banded matrix, without pivoting.
///
/// Used on the possibly indefinite `K - σM`; the number of negative pivots
/// is the number of eigenvalues of the pencil below `σ`.
#[derive(Debug, Clone)]
pub struct BandLdl {
    n: usize,
    bw: usize,
    // row i holds L[i, i-bw..i] at i*bw..(i+1)*bw, oldest column first
    lower: Vec<f64>,
    diag: Vec<f64>,
}

impl BandLdl {
    /// Factors `a + shift_mass·b` (pass `-σ` to factor `K - σM`).
    /// Fails when a pivot is tiny relative to the diagonal scale.
    pub fn factor_combination(a: &CsrMatrix, b: &CsrMatrix, coef_b: f64) -> Result<Self> {
        let n = a.n;
        let bw = a.bandwidth().max(b.bandwidth()).max(1);
        let mut lower = alloc::vec![0.0; n * bw];
        let mut diag = alloc::vec![0.0; n];
        let mut scale = 0.0f64;
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j < i {
                    lower[i * bw + (j + bw - i)] += v;
                } else if j == i {
                    diag[i] += v;
                }
            }
            for (j, v) in b.row(i) {
                if j < i {
                    lower[i * bw + (j + bw - i)] += coef_b * v;
                } else if j == i {
                    diag[i] += coef_b * v;
                }
            }
            scale = scale.max(diag[i].abs());
        }
        let tiny = scale * 1e-14;
        let mut work = alloc::vec![0.0; bw];
        for j in 0..n {
            let k0 = j.saturating_sub(bw);
            // work[k - k0] = L[j,k] d[k]
            let mut dj = diag[j];
            for k in k0..j {
                let ljk = lower[j * bw + (k + bw - j)];
                let v = ljk * diag[k];
                work[k - k0] = v;
                dj -= ljk * v;
            }
            if !(dj.abs() > tiny) {
                return Err(Error::Factorization {
                    shift: -coef_b,
                    pivot: j,
                });
            }
            diag[j] = dj;
            let i_end = (j + bw).min(n - 1);
            for i in j + 1..=i_end {
                let ki0 = i.saturating_sub(bw).max(k0);
                let mut acc = lower[i * bw + (j + bw - i)];
                for k in ki0..j {
                    acc -= lower[i * bw + (k + bw - i)] * work[k - k0];
                }
                lower[i * bw + (j + bw - i)] = acc / dj;
            }
        }
        Ok(BandLdl {
            n,
            bw,
            lower,
            diag,
        })
    }

    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let zero = CsrMatrix {
            n: a.n,
            row_ptr: alloc::vec![0; a.n + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        };
        Self::factor_combination(a, &zero, 0.0)
    }

    pub fn negative_pivots(&self) -> usize {
        self.diag.iter().filter(|d| **d < 0.0).count()
    }

    pub fn pivots(&self) -> &[f64] {
        &self.diag
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        for i in 0..n {
            let k0 = i.saturating_sub(bw);
            let mut acc = x[i];
            for k in k0..i {
                acc -= self.lower[i * bw + (k + bw - i)] * x[k];
            }
            x[i] = acc;
        }
        for (xi, d) in x.iter_mut().zip(&self.diag) {
            *xi /= d;
        }
        for i in (0..n).rev() {
            let xi = x[i];
            let k0 = i.saturating_sub(bw);
            for k in k0..i {
                x[k] -= self.lower[i * bw + (k + bw - i)] * xi;
            }
        }
    }
}
