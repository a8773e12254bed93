//! Meridian domain, rotation onto the corner half-strip, shear onto the
//! quarter strip and structured graded meshes of its truncation.
//!
//! Coordinates:
//! * meridian `(r, z)`, the half-plane cross-section of the layer,
//! * corner `(s, t)`, rotated so the layer becomes `{s > -t cot θ, 0 < t < π}`,
//! * sheared `(σ, t)` with `σ = s + t cot θ`, the quarter strip
//!   `(0, ∞) × (0, π)`.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};

/// Half-opening angle of the cone, strictly inside `(0, π/2)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "f64", into = "f64"))]
pub struct Aperture(f64);

impl Aperture {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < FRAC_PI_2) {
            return Err(Error::param(format!(
                "theta must lie in the open interval (0, pi/2), got {theta}"
            )));
        }
        Ok(Aperture(theta))
    }

    #[inline]
    pub fn radians(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn sin(self) -> f64 {
        libm::sin(self.0)
    }

    #[inline]
    pub fn cos(self) -> f64 {
        libm::cos(self.0)
    }

    #[inline]
    pub fn cot(self) -> f64 {
        self.cos() / self.sin()
    }

    #[inline]
    pub fn tan(self) -> f64 {
        libm::tan(self.0)
    }
}

impl TryFrom<f64> for Aperture {
    type Error = Error;

    fn try_from(theta: f64) -> Result<Self> {
        Aperture::new(theta)
    }
}

impl From<Aperture> for f64 {
    fn from(a: Aperture) -> f64 {
        a.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeridianPoint {
    pub r: f64,
    pub z: f64,
}

impl MeridianPoint {
    pub fn new(r: f64, z: f64) -> Self {
        MeridianPoint { r, z }
    }

    /// Whether the point lies in the open meridian domain of the layer.
    pub fn in_domain(&self, theta: Aperture) -> bool {
        let tan = theta.tan();
        let lower = if self.z * tan > 0.0 { self.z * tan } else { 0.0 };
        -PI / theta.sin() < self.z && lower < self.r && self.r < self.z * tan + PI / theta.cos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerPoint {
    pub s: f64,
    pub t: f64,
}

impl CornerPoint {
    pub fn new(s: f64, t: f64) -> Self {
        CornerPoint { s, t }
    }

    pub fn in_domain(&self, theta: Aperture) -> bool {
        self.t > 0.0 && self.t < PI && self.s > -self.t * theta.cot()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShearedPoint {
    pub sigma: f64,
    pub t: f64,
}

pub fn rotate_to_corner(p: MeridianPoint, theta: Aperture) -> CornerPoint {
    let (sin, cos) = (theta.sin(), theta.cos());
    CornerPoint {
        s: p.z * cos + p.r * sin,
        t: -p.z * sin + p.r * cos,
    }
}

pub fn rotate_to_meridian(q: CornerPoint, theta: Aperture) -> MeridianPoint {
    let (sin, cos) = (theta.sin(), theta.cos());
    MeridianPoint {
        r: q.s * sin + q.t * cos,
        z: q.s * cos - q.t * sin,
    }
}

pub fn shear_to_rectangle(q: CornerPoint, theta: Aperture) -> ShearedPoint {
    ShearedPoint {
        sigma: q.s + q.t * theta.cot(),
        t: q.t,
    }
}

pub fn unshear(p: ShearedPoint, theta: Aperture) -> CornerPoint {
    CornerPoint {
        s: p.sigma - p.t * theta.cot(),
        t: p.t,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BoundaryTag {
    Interior,
    /// `σ = 0`, `t = 0` or `t = π`.
    DirichletPhysical,
    /// The truncation edge `σ = L`.
    DirichletArtificial,
}

impl BoundaryTag {
    pub fn is_dirichlet(self) -> bool {
        !matches!(self, BoundaryTag::Interior)
    }
}

/// Mesh parameters, kept apart from the aperture so one spec can be reused
/// across a parameter scan.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MeshSpec {
    pub length: f64,
    pub n_sigma: usize,
    pub n_t: usize,
    pub grading: f64,
}

impl MeshSpec {
    pub fn new(length: f64, n_sigma: usize, n_t: usize, grading: f64) -> Self {
        MeshSpec {
            length,
            n_sigma,
            n_t,
            grading,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length >= 2.0 * PI) || !self.length.is_finite() {
            return Err(Error::param(format!(
                "truncation length L must be at least 2*pi, got {}",
                self.length
            )));
        }
        if self.n_sigma < 4 || self.n_t < 4 {
            return Err(Error::param(format!(
                "n_sigma and n_t must be at least 4, got {} and {}",
                self.n_sigma, self.n_t
            )));
        }
        if !(self.grading >= 1.0) || !self.grading.is_finite() {
            return Err(Error::param(format!(
                "grading ratio must be at least 1, got {}",
                self.grading
            )));
        }
        Ok(())
    }

    /// Same grading, both directions refined by a factor two.
    pub fn refined(&self) -> Self {
        MeshSpec {
            n_sigma: 2 * self.n_sigma,
            n_t: 2 * self.n_t,
            grading: libm::sqrt(self.grading),
            ..*self
        }
    }
}

/// Compact description of a mesh, carried along with every result.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MeshDescriptor {
    pub theta: f64,
    pub length: f64,
    pub n_sigma: usize,
    pub n_t: usize,
    pub grading: f64,
    /// Largest cell width in σ.
    pub h_max: f64,
    /// Smallest cell width in σ.
    pub h_min: f64,
}

/// Structured tensor mesh of `[0, L] × [0, π]` in sheared coordinates.
///
/// Node `(i, j)` sits at `(sigma[i], t[j])` and has index `i * (n_t + 1) + j`.
/// Cells are listed counterclockwise starting at their lower-left node.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ShearedMesh {
    pub theta: Aperture,
    pub length: f64,
    pub grading: f64,
    pub sigma: Vec<f64>,
    pub t: Vec<f64>,
    pub nodes: Vec<[f64; 2]>,
    pub cells: Vec<[usize; 4]>,
    pub tags: Vec<BoundaryTag>,
    /// Set when `L < 4π`: the artificial boundary is close enough to bias
    /// near-threshold states.
    pub truncation_warning: bool,
}

pub fn build_mesh(
    theta: Aperture,
    length: f64,
    n_sigma: usize,
    n_t: usize,
    grading_ratio: f64,
) -> Result<ShearedMesh> {
    let spec = MeshSpec::new(length, n_sigma, n_t, grading_ratio);
    spec.validate()?;
    Ok(ShearedMesh::from_grids(
        theta,
        graded_grid(length, n_sigma, grading_ratio),
        uniform_grid(PI, n_t),
        grading_ratio,
    ))
}

impl ShearedMesh {
    pub fn from_spec(theta: Aperture, spec: &MeshSpec) -> Result<Self> {
        build_mesh(theta, spec.length, spec.n_sigma, spec.n_t, spec.grading)
    }

    /// Builds a mesh from explicit ascending grids with `sigma[0] = 0` and
    /// `t = [0, ..., π]`.
    pub fn from_grids(theta: Aperture, sigma: Vec<f64>, t: Vec<f64>, grading: f64) -> Self {
        let ns = sigma.len();
        let nt = t.len();
        let length = sigma[ns - 1];
        let mut nodes = Vec::with_capacity(ns * nt);
        let mut tags = Vec::with_capacity(ns * nt);
        for (i, &s) in sigma.iter().enumerate() {
            for (j, &tt) in t.iter().enumerate() {
                nodes.push([s, tt]);
                let tag = if i == ns - 1 {
                    BoundaryTag::DirichletArtificial
                } else if i == 0 || j == 0 || j == nt - 1 {
                    BoundaryTag::DirichletPhysical
                } else {
                    BoundaryTag::Interior
                };
                tags.push(tag);
            }
        }
        let mut cells = Vec::with_capacity((ns - 1) * (nt - 1));
        for i in 0..ns - 1 {
            for j in 0..nt - 1 {
                let a = i * nt + j;
                cells.push([a, a + nt, a + nt + 1, a + 1]);
            }
        }
        ShearedMesh {
            theta,
            length,
            grading,
            sigma,
            t,
            nodes,
            cells,
            tags,
            truncation_warning: length < 4.0 * PI,
        }
    }

    pub fn n_sigma(&self) -> usize {
        self.sigma.len() - 1
    }

    pub fn n_t(&self) -> usize {
        self.t.len() - 1
    }

    #[inline]
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        i * self.t.len() + j
    }

    /// Interior nodes in σ-major order; the position in this list is the
    /// degree-of-freedom index used by every assembled matrix.
    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&n| !self.tags[n].is_dirichlet())
            .collect()
    }

    /// Map node index -> DOF index, `None` for Dirichlet nodes.
    pub fn dof_map(&self) -> Vec<Option<usize>> {
        let mut next = 0;
        self.tags
            .iter()
            .map(|tag| {
                if tag.is_dirichlet() {
                    None
                } else {
                    next += 1;
                    Some(next - 1)
                }
            })
            .collect()
    }

    pub fn n_dofs(&self) -> usize {
        (self.sigma.len() - 2) * (self.t.len() - 2)
    }

    pub fn cell_area(&self, c: usize) -> f64 {
        let [a, b, _, d] = self.cells[c];
        (self.nodes[b][0] - self.nodes[a][0]) * (self.nodes[d][1] - self.nodes[a][1])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.cells.len()).map(|c| self.cell_area(c)).sum()
    }

    pub fn descriptor(&self) -> MeshDescriptor {
        let widths = self.sigma.windows(2).map(|w| w[1] - w[0]);
        let (h_min, h_max) = widths.fold((f64::INFINITY, 0.0f64), |(lo, hi), h| {
            (lo.min(h), hi.max(h))
        });
        MeshDescriptor {
            theta: self.theta.radians(),
            length: self.length,
            n_sigma: self.n_sigma(),
            n_t: self.n_t(),
            grading: self.grading,
            h_max,
            h_min,
        }
    }

    /// Extends the σ grid beyond `L` to at least `new_length`, continuing the
    /// geometric growth of the cell widths. The old nodes are kept, so the
    /// old interior space is a subspace of the new one and the old matrices
    /// are principal submatrices of the new ones.
    pub fn extend_to(&self, new_length: f64) -> ShearedMesh {
        let mut sigma = self.sigma.clone();
        let n = sigma.len();
        let mut h = sigma[n - 1] - sigma[n - 2];
        while *sigma.last().unwrap_or(&0.0) < new_length * (1.0 - 1e-12) {
            h *= self.grading;
            let last = sigma[sigma.len() - 1];
            let remaining = new_length - last;
            // avoid a sliver cell at the end
            if remaining < 1.5 * h {
                sigma.push(new_length);
            } else {
                sigma.push(last + h);
            }
        }
        ShearedMesh::from_grids(self.theta, sigma, self.t.clone(), self.grading)
    }
}

/// Nodes `0 = x_0 < ... < x_n = L` with widths growing by `ratio` from one
/// cell to the next. The fractions depend on `n` and `ratio` only, so grids
/// of different lengths are exact scalings of each other.
pub fn graded_grid(length: f64, n: usize, ratio: f64) -> Vec<f64> {
    let mut x = Vec::with_capacity(n + 1);
    if ratio == 1.0 {
        for i in 0..=n {
            x.push(length * (i as f64 / n as f64));
        }
    } else {
        let total = libm::pow(ratio, n as f64) - 1.0;
        for i in 0..=n {
            x.push(length * ((libm::pow(ratio, i as f64) - 1.0) / total));
        }
    }
    x[n] = length;
    x
}

pub fn uniform_grid(length: f64, n: usize) -> Vec<f64> {
    let mut x: Vec<f64> = (0..=n).map(|i| length * (i as f64 / n as f64)).collect();
    x[n] = length;
    x
}
