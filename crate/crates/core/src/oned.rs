//! Half-line comparison operators `-d²/dx² - γ/(x + a)²` on `(1, ∞)` with a
//! Dirichlet or Neumann condition at `x = 1`.
//!
//! Their negative eigenvalues accumulate at zero with the counting law
//! `N(-E) ≈ √(γ - 1/4)/(2π) |ln E|`. Geometric grids reach the logarithmic
//! scales involved with a few thousand nodes, and every count is exact
//! through Sturm sequences of the tridiagonal pencil.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::forms::{check_omega, gamma_coefficient};
use crate::geometry::Aperture;
use crate::quadrature::GaussLegendre;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BoundaryCondition {
    Dirichlet,
    /// Natural condition of the form on `H¹(1, ∞)`.
    Neumann,
}

impl BoundaryCondition {
    pub fn label(self) -> &'static str {
        match self {
            BoundaryCondition::Dirichlet => "dirichlet",
            BoundaryCondition::Neumann => "neumann",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneDProblem {
    pub gamma: f64,
    pub bc: BoundaryCondition,
    /// Right truncation; the artificial end carries a Dirichlet condition.
    pub length: f64,
    /// Ascending nodes on `[1, length]`.
    pub nodes: Vec<f64>,
    /// Offset `a` of the potential `-γ/(x + a)²`; zero for the plain problem.
    pub offset: f64,
    /// Set when `γ ≤ 1/4`: only finitely many negative eigenvalues.
    pub subcritical_gamma: bool,
}

impl OneDProblem {
    /// Problem on a geometric grid of `n_nodes` nodes over `[1, length]`.
    pub fn geometric(gamma: f64, bc: BoundaryCondition, length: f64, n_nodes: usize) -> Result<Self> {
        if !(length > 1.0) || !length.is_finite() {
            return Err(Error::param(format!(
                "right truncation L1d must exceed 1, got {length}"
            )));
        }
        if n_nodes < 3 {
            return Err(Error::param(format!(
                "at least 3 grid nodes are required, got {n_nodes}"
            )));
        }
        let step = libm::log(length) / (n_nodes - 1) as f64;
        let mut nodes: Vec<f64> = (0..n_nodes).map(|i| libm::exp(step * i as f64)).collect();
        nodes[0] = 1.0;
        nodes[n_nodes - 1] = length;
        Self::on_grid(gamma, bc, nodes)
    }

    pub fn on_grid(gamma: f64, bc: BoundaryCondition, nodes: Vec<f64>) -> Result<Self> {
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(Error::param(format!(
                "gamma must be finite and non-negative, got {gamma}"
            )));
        }
        if nodes.len() < 3 || nodes[0] != 1.0 || nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::param("grid must be ascending, start at 1 and have at least 3 nodes"));
        }
        Ok(OneDProblem {
            gamma,
            bc,
            length: nodes[nodes.len() - 1],
            nodes,
            offset: 0.0,
            subcritical_gamma: gamma <= 0.25,
        })
    }

    /// Switches to the potential `-γ/(x + π cotθ)²`.
    pub fn with_offset_for(mut self, theta: Aperture) -> Self {
        self.offset = PI * theta.cot();
        self
    }

    /// Magnitude below which eigenvalues are dominated by the truncation.
    pub fn zero_tolerance(&self) -> f64 {
        let l = self.length + self.offset;
        10.0 * (PI / l) * (PI / l)
    }
}

/// Symmetric tridiagonal pencil `(K, M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalPencil {
    pub k_diag: Vec<f64>,
    pub k_off: Vec<f64>,
    pub m_diag: Vec<f64>,
    pub m_off: Vec<f64>,
}

pub fn assemble_1d(problem: &OneDProblem) -> TridiagonalPencil {
    let gauss = GaussLegendre::new(8);
    let x = &problem.nodes;
    let n = x.len();
    let mut kd = alloc::vec![0.0; n];
    let mut ko = alloc::vec![0.0; n - 1];
    let mut md = alloc::vec![0.0; n];
    let mut mo = alloc::vec![0.0; n - 1];
    for e in 0..n - 1 {
        let (a, b) = (x[e], x[e + 1]);
        let h = b - a;
        let mut pot = [0.0; 3];
        for (y, w) in gauss.on_interval(a, b) {
            let phi = [(b - y) / h, (y - a) / h];
            let v = w / ((y + problem.offset) * (y + problem.offset));
            pot[0] += v * phi[0] * phi[0];
            pot[1] += v * phi[0] * phi[1];
            pot[2] += v * phi[1] * phi[1];
        }
        kd[e] += 1.0 / h - problem.gamma * pot[0];
        kd[e + 1] += 1.0 / h - problem.gamma * pot[2];
        ko[e] += -1.0 / h - problem.gamma * pot[1];
        md[e] += h / 3.0;
        md[e + 1] += h / 3.0;
        mo[e] += h / 6.0;
    }
    // Dirichlet at the artificial end, and at x = 1 if requested
    let lo = match problem.bc {
        BoundaryCondition::Dirichlet => 1,
        BoundaryCondition::Neumann => 0,
    };
    TridiagonalPencil {
        k_diag: kd[lo..n - 1].to_vec(),
        k_off: ko[lo..n - 2].to_vec(),
        m_diag: md[lo..n - 1].to_vec(),
        m_off: mo[lo..n - 2].to_vec(),
    }
}

impl TridiagonalPencil {
    pub fn dim(&self) -> usize {
        self.k_diag.len()
    }

    /// Number of eigenvalues strictly below `lambda` (Sturm count of
    /// `K - λM`).
    pub fn count_below(&self, lambda: f64) -> usize {
        let n = self.dim();
        let mut count = 0;
        let mut d = 0.0;
        for i in 0..n {
            let a = self.k_diag[i] - lambda * self.m_diag[i];
            d = if i == 0 {
                a
            } else {
                let b = self.k_off[i - 1] - lambda * self.m_off[i - 1];
                a - b * b / d
            };
            if d == 0.0 {
                d = f64::MIN_POSITIVE;
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// Every eigenvalue below `upper`, ascending, by bisection on Sturm
    /// counts.
    pub fn eigenvalues_below(&self, upper: f64) -> Vec<f64> {
        let total = self.count_below(upper);
        if total == 0 {
            return Vec::new();
        }
        let mut lower = -1.0;
        while self.count_below(lower) > 0 {
            lower *= 2.0;
        }
        (0..total)
            .map(|k| {
                // λ_k is the point where the count passes from k to k + 1
                let (mut lo, mut hi) = (lower, upper);
                for _ in 0..2000 {
                    let mid = 0.5 * (lo + hi);
                    if mid == lo || mid == hi {
                        break;
                    }
                    if self.count_below(mid) > k {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                    if hi - lo <= 1e-15 * hi.abs().max(lo.abs()) {
                        break;
                    }
                }
                0.5 * (lo + hi)
            })
            .collect()
    }

    /// Negative eigenvalues, most negative first.
    pub fn negative_eigenvalues(&self) -> Vec<f64> {
        self.eigenvalues_below(0.0)
    }
}

/// `√(γ - 1/4) / (2π)`.
pub fn ks_slope(gamma: f64) -> Result<f64> {
    if !(gamma >= 0.25) {
        return Err(Error::param(format!(
            "gamma must be at least 1/4, got {gamma}"
        )));
    }
    Ok(libm::sqrt(gamma - 0.25) / (2.0 * PI))
}

/// `√(cos²θ - 4ω²) / (4π sinθ)`, the counting coefficient of the layer.
pub fn layer_slope(theta: Aperture, omega: f64) -> Result<f64> {
    check_omega(omega)?;
    let c = theta.cos();
    if !(2.0 * omega < c) {
        return Err(Error::param(format!(
            "counting slope needs 2*omega < cos(theta), got omega = {omega} with cos(theta)/2 = {}",
            0.5 * c
        )));
    }
    Ok(libm::sqrt(c * c - 4.0 * omega * omega) / (4.0 * PI * theta.sin()))
}

/// Same value through `γ(ω, θ)`.
pub fn layer_slope_via_gamma(theta: Aperture, omega: f64) -> Result<f64> {
    ks_slope(gamma_coefficient(omega, theta))
}

/// Transverse Dirichlet eigenvalues `1, 4, ..., n²` of the layer cross
/// section.
pub fn transverse_modes(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::param("number of transverse modes must be at least 1"));
    }
    Ok((1..=n).map(|k| (k * k) as f64).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CountingPoint {
    pub e: f64,
    pub count: usize,
    pub abs_ln_e: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CountingFit {
    pub slope: f64,
    pub intercept: f64,
    pub e_min: f64,
    pub e_max: f64,
    /// Root mean square deviation of the fitted line.
    pub residual: f64,
    pub theory_slope: f64,
    pub points: usize,
}

impl CountingFit {
    pub fn relative_deviation(&self) -> f64 {
        (self.slope - self.theory_slope).abs() / self.theory_slope
    }
}

/// Energy window of the slope fit.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum FitWindow {
    /// Drops the `drop` deepest eigenvalues and everything inside the
    /// truncation zero band, then centers the window on the remaining jumps
    /// with half a level spacing of margin at both ends.
    Auto { drop: usize },
    Explicit { e_min: f64, e_max: f64 },
}

impl Default for FitWindow {
    fn default() -> Self {
        FitWindow::Auto { drop: 3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CountingCurve {
    pub gamma: f64,
    pub bc: BoundaryCondition,
    pub length: f64,
    pub offset: f64,
    pub points: Vec<CountingPoint>,
    /// Resolved negative eigenvalues, most negative first.
    pub eigenvalues: Vec<f64>,
    pub fit: CountingFit,
}

pub const MIN_FIT_POINTS: usize = 5;

/// Logarithmically spaced energies from `e_max` down to `e_min`.
pub fn log_energy_grid(e_max: f64, e_min: f64, n: usize) -> Vec<f64> {
    let (a, b) = (libm::log(e_max), libm::log(e_min));
    (0..n)
        .map(|i| libm::exp(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect()
}

/// Counts `N(-E)` over `e_grid` and fits the slope against `|ln E|`.
pub fn negative_counting_curve(
    problem: &OneDProblem,
    e_grid: &[f64],
    window: FitWindow,
) -> Result<CountingCurve> {
    if e_grid.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
        return Err(Error::param("energies must lie in (0, 1)"));
    }
    if e_grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::param("energy grid must be strictly descending"));
    }
    let pencil = assemble_1d(problem);
    let zero = problem.zero_tolerance();
    let eigenvalues: Vec<f64> = pencil
        .negative_eigenvalues()
        .into_iter()
        .filter(|l| *l < -zero)
        .collect();
    if eigenvalues.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientPoints {
            found: eigenvalues.len(),
            needed: MIN_FIT_POINTS,
        });
    }
    let points: Vec<CountingPoint> = e_grid
        .iter()
        .map(|&e| CountingPoint {
            e,
            count: eigenvalues.iter().filter(|l| **l < -e).count(),
            abs_ln_e: libm::log(e).abs(),
        })
        .collect();

    let (e_min, e_max) = match window {
        FitWindow::Explicit { e_min, e_max } => (e_min, e_max),
        FitWindow::Auto { drop } => {
            let mags: Vec<f64> = eigenvalues.iter().map(|l| -l).collect();
            auto_window(&mags, drop)?
        }
    };
    let fit = fit_counting(&points, e_min, e_max, ks_slope(problem.gamma).unwrap_or(0.0))?;
    Ok(CountingCurve {
        gamma: problem.gamma,
        bc: problem.bc,
        length: problem.length,
        offset: problem.offset,
        fit,
        points,
        eigenvalues,
    })
}

/// Fit window for binding energies `mags` (deepest first): skips the `drop`
/// deepest levels and keeps half a level spacing of margin at both ends.
pub fn auto_window(mags: &[f64], drop: usize) -> Result<(f64, f64)> {
    if mags.len() < drop + 2 {
        return Err(Error::InsufficientPoints {
            found: mags.len().saturating_sub(drop),
            needed: 2,
        });
    }
    let last = mags.len() - 1;
    let e_max = if drop == 0 {
        mags[0] * libm::sqrt(mags[0] / mags[1])
    } else {
        libm::sqrt(mags[drop - 1] * mags[drop])
    };
    let e_min = mags[last] * libm::sqrt(mags[last] / mags[last - 1]);
    Ok((e_min, e_max))
}

/// Least-squares line of `N` against `|ln E|` over the points with
/// `e_min <= E <= e_max`.
pub fn fit_counting(
    points: &[CountingPoint],
    e_min: f64,
    e_max: f64,
    theory_slope: f64,
) -> Result<CountingFit> {
    let used: Vec<&CountingPoint> = points
        .iter()
        .filter(|p| p.e >= e_min && p.e <= e_max)
        .collect();
    if used.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientPoints {
            found: used.len(),
            needed: MIN_FIT_POINTS,
        });
    }
    let (slope, intercept, residual) = least_squares(
        &used.iter().map(|p| p.abs_ln_e).collect::<Vec<_>>(),
        &used.iter().map(|p| p.count as f64).collect::<Vec<_>>(),
    );
    Ok(CountingFit {
        slope,
        intercept,
        e_min,
        e_max,
        residual,
        theory_slope,
        points: used.len(),
    })
}

/// Slope, intercept and RMS residual of the line through `(x, y)`.
pub fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - (slope * a + intercept);
            r * r
        })
        .sum();
    (slope, intercept, libm::sqrt(ss / n))
}
