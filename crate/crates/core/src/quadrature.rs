//! Gauss-Legendre rules on intervals, rectangles and triangles.

use alloc::vec::Vec;
use core::f64::consts::PI;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Computes the `n`-point rule by Newton iteration on `P_n`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "quadrature order must be positive");
        let mut nodes = alloc::vec![0.0; n];
        let mut weights = alloc::vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = libm::cos(PI * (i as f64 + 0.75) / (n as f64 + 0.5));
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn on_interval(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (mid + half * x, half * w))
    }

    /// Integrates `f` over the triangle with vertices `a`, `b`, `c` using the
    /// collapsed (Duffy) tensor rule. Exact for polynomials of total degree
    /// `2n - 2`.
    pub fn integrate_triangle<F>(&self, a: [f64; 2], b: [f64; 2], c: [f64; 2], mut f: F) -> f64
    where
        F: FnMut(f64, f64) -> f64,
    {
        let e1 = [b[0] - a[0], b[1] - a[1]];
        let e2 = [c[0] - a[0], c[1] - a[1]];
        let jac = (e1[0] * e2[1] - e1[1] * e2[0]).abs();
        if jac == 0.0 {
            return 0.0;
        }
        let mut acc = 0.0;
        for (u, wu) in self.on_interval(0.0, 1.0) {
            for (v, wv) in self.on_interval(0.0, 1.0) {
                // (u, v) in the unit square -> (xi, eta) in the unit triangle
                let xi = u * (1.0 - v);
                let eta = u * v;
                let x = a[0] + xi * e1[0] + eta * e2[0];
                let y = a[1] + xi * e1[1] + eta * e2[1];
                acc += wu * wv * u * f(x, y);
            }
        }
        acc * jac
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
