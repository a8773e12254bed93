//! Dense reference solvers used as oracles by the integration tests.
//!
//! Nothing here touches the banded factorization or the Lanczos iteration of
//! the library: the generalized problem is reduced with a dense Cholesky
//! factor, tridiagonalized by Householder reflections and diagonalized by
//! implicit QL.

#![allow(dead_code)]

use ablayer::sparse::CsrMatrix;

pub struct Dense {
    pub n: usize,
    pub a: Vec<f64>,
}

impl Dense {
    pub fn from_csr(m: &CsrMatrix) -> Self {
        let n = m.n;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for k in m.row_ptr[i]..m.row_ptr[i + 1] {
                a[i * n + m.col_idx[k]] += m.values[k];
            }
        }
        Dense { n, a }
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }
}

/// Lower Cholesky factor, row-major. Panics if `m` is not positive definite.
pub fn cholesky(m: &Dense) -> Vec<f64> {
    let n = m.n;
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = m.at(j, j);
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        assert!(d > 0.0, "matrix not positive definite at row {j}");
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut s = m.at(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    l
}

/// Solves `L Y = B` in place, row by row.
fn forward_rows(l: &[f64], b: &mut [f64], n: usize) {
    for i in 0..n {
        let (done, rest) = b.split_at_mut(i * n);
        let row = &mut rest[..n];
        for p in 0..i {
            let f = l[i * n + p];
            if f != 0.0 {
                for (r, y) in row.iter_mut().zip(&done[p * n..(p + 1) * n]) {
                    *r -= f * y;
                }
            }
        }
        let d = l[i * n + i];
        row.iter_mut().for_each(|r| *r /= d);
    }
}

fn transpose(a: &mut [f64], n: usize) {
    for i in 0..n {
        for j in 0..i {
            a.swap(i * n + j, j * n + i);
        }
    }
}

/// `L⁻¹ K L⁻ᵀ` for the Cholesky factor `L` of `M`.
pub fn reduce_pencil(k: &Dense, m: &Dense) -> Dense {
    let n = k.n;
    let l = cholesky(m);
    let mut x = k.a.clone();
    forward_rows(&l, &mut x, n);
    transpose(&mut x, n);
    forward_rows(&l, &mut x, n);
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (x[i * n + j] + x[j * n + i]);
            x[i * n + j] = v;
            x[j * n + i] = v;
        }
    }
    Dense { n, a: x }
}

/// Householder reduction of a symmetric matrix to tridiagonal form.
/// Returns `(diagonal, subdiagonal)` with `sub[i]` coupling rows `i` and `i+1`.
pub fn tridiagonalize(mut m: Dense) -> (Vec<f64>, Vec<f64>) {
    let n = m.n;
    let a = &mut m.a;
    let mut sub = vec![0.0; n.saturating_sub(1)];
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    for k in 0..n.saturating_sub(2) {
        let lo = k + 1;
        let norm = (lo..n).map(|i| a[i * n + k] * a[i * n + k]).sum::<f64>().sqrt();
        let x0 = a[lo * n + k];
        if norm == 0.0 || norm == x0.abs() {
            sub[k] = x0;
            continue;
        }
        let alpha = if x0 > 0.0 { -norm } else { norm };
        for i in lo..n {
            v[i] = a[i * n + k];
        }
        v[lo] -= alpha;
        let vv: f64 = (lo..n).map(|i| v[i] * v[i]).sum();
        let beta = 2.0 / vv;
        for i in lo..n {
            let row = &a[i * n + lo..i * n + n];
            p[i] = beta * row.iter().zip(&v[lo..n]).map(|(x, y)| x * y).sum::<f64>();
        }
        let kk = 0.5 * beta * (lo..n).map(|i| v[i] * p[i]).sum::<f64>();
        for i in lo..n {
            p[i] -= kk * v[i];
        }
        for i in lo..n {
            let (vi, wi) = (v[i], p[i]);
            let row = &mut a[i * n + lo..i * n + n];
            for ((r, vj), wj) in row.iter_mut().zip(&v[lo..n]).zip(&p[lo..n]) {
                *r -= vi * wj + wi * vj;
            }
        }
        sub[k] = alpha;
    }
    if n >= 2 {
        sub[n - 2] = a[(n - 1) * n + n - 2];
    }
    let diag = (0..n).map(|i| a[i * n + i]).collect();
    (diag, sub)
}

/// Eigenvalues of a symmetric tridiagonal matrix by implicit QL, ascending.
pub fn tridiagonal_eigenvalues(diag: &[f64], sub: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n.saturating_sub(1)].copy_from_slice(&sub[..n.saturating_sub(1)]);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            assert!(iter < 60, "QL iteration did not converge");
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d.sort_by(f64::total_cmp);
    d
}

/// All eigenvalues of the pencil `(K, M)`, ascending.
pub fn pencil_eigenvalues(k: &CsrMatrix, m: &CsrMatrix) -> Vec<f64> {
    let c = reduce_pencil(&Dense::from_csr(k), &Dense::from_csr(m));
    let (d, e) = tridiagonalize(c);
    tridiagonal_eigenvalues(&d, &e)
}

/// Eigenvalues of `(K, M)` for positive definite `K`, computed as
/// reciprocals of the pencil `(M, K)`. Accurate for the lowest eigenvalues
/// when `M` is badly conditioned. Ascending.
pub fn pencil_eigenvalues_via_stiffness(k: &CsrMatrix, m: &CsrMatrix) -> Vec<f64> {
    let mut lambda: Vec<f64> = pencil_eigenvalues(m, k)
        .into_iter()
        .filter(|mu| *mu > 0.0)
        .map(|mu| 1.0 / mu)
        .collect();
    lambda.sort_by(f64::total_cmp);
    lambda
}

/// All eigenvalues of a dense symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: Dense) -> Vec<f64> {
    let (d, e) = tridiagonalize(m);
    tridiagonal_eigenvalues(&d, &e)
}

pub fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
