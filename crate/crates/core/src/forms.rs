//! Scalar coefficients of the fiber forms and finite element assembly on
//! the sheared rectangle.
//!
//! In sheared coordinates the fiber form of index `m` reads
//!
//! ```text
//! ∫ (1 + cot²θ)|∂σ u|² + 2 cotθ ∂σu ∂t u + |∂t u|² + c_m σ⁻² |u|²  dσ dt
//! ```
//!
//! with `c_m = ((m - ω)² - 1/4) / sin²θ`. Elements are continuous bilinear
//! on the tensor mesh.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{Aperture, MeshDescriptor, ShearedMesh};
use crate::quadrature::GaussLegendre;
use crate::sparse::{CsrMatrix, TripletBuilder};

/// Physical problem instance: aperture, reduced flux and fiber index.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LayerParams {
    pub theta: Aperture,
    pub omega: f64,
    pub m: i32,
}

impl LayerParams {
    pub fn new(theta: Aperture, omega: f64, m: i32) -> Result<Self> {
        check_omega(omega)?;
        Ok(LayerParams { theta, omega, m })
    }

    /// Same problem at the `m = 0` fiber.
    pub fn radial(theta: Aperture, omega: f64) -> Result<Self> {
        Self::new(theta, omega, 0)
    }

    pub fn is_subcritical(&self) -> bool {
        2.0 * self.omega < self.theta.cos()
    }
}

pub fn check_omega(omega: f64) -> Result<()> {
    if omega > 0.0 && omega <= 0.5 {
        Ok(())
    } else {
        Err(Error::param(format!(
            "omega must lie in (0, 0.5], got {omega}"
        )))
    }
}

/// `γ = (1/4 - ω²) / sin²θ`.
pub fn gamma_coefficient(omega: f64, theta: Aperture) -> f64 {
    let s = theta.sin();
    (0.25 - omega * omega) / (s * s)
}

/// `ω_cr = cosθ / 2`.
pub fn critical_flux(theta: Aperture) -> f64 {
    0.5 * theta.cos()
}

/// Coefficient `c_m` of the `σ⁻²` potential on the sheared rectangle.
pub fn potential_coefficient(params: &LayerParams) -> f64 {
    let s = params.theta.sin();
    let d = params.m as f64 - params.omega;
    (d * d - 0.25) / (s * s)
}

/// Samples of a flux function on a uniform periodic grid over `[0, 2π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxProfile {
    samples: Vec<f64>,
}

impl FluxProfile {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::param("flux profile needs at least one sample"));
        }
        if let Some(bad) = samples.iter().find(|v| !v.is_finite()) {
            return Err(Error::param(format!(
                "flux profile samples must be finite, found {bad}"
            )));
        }
        Ok(FluxProfile { samples })
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::new(alloc::vec![value])
    }

    pub fn from_fn(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            (0..n)
                .map(|k| f(2.0 * PI * k as f64 / n as f64))
                .collect(),
        )
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// `Φ = (1/2π) ∫ ω`, trapezoid rule on the periodic grid.
    pub fn total_flux(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReducedFlux {
    /// Reduced flux in `[0, 1/2]`.
    pub omega: f64,
    pub total_flux: f64,
    /// Set when the reduced flux is zero; no operator accepts that value.
    pub is_zero: bool,
}

pub fn reduce_flux(profile: &FluxProfile) -> ReducedFlux {
    let phi = profile.total_flux();
    // round() breaks ties away from zero, so half-integers give |±1/2| = 1/2
    let omega = (phi - libm::round(phi)).abs();
    ReducedFlux {
        omega,
        total_flux: phi,
        is_zero: omega == 0.0,
    }
}

/// Generalized eigenproblem `K u = λ M u`.
#[derive(Debug, Clone)]
pub struct SymmetricPencil {
    pub stiffness: CsrMatrix,
    pub mass: CsrMatrix,
}

impl SymmetricPencil {
    pub fn dim(&self) -> usize {
        self.mass.n
    }

    pub fn rayleigh_quotient(&self, u: &[f64]) -> f64 {
        self.stiffness.quadratic(u) / self.mass.quadratic(u)
    }

    /// Restriction to the leading `m` degrees of freedom.
    pub fn leading_block(&self, m: usize) -> SymmetricPencil {
        SymmetricPencil {
            stiffness: self.stiffness.leading_block(m),
            mass: self.mass.leading_block(m),
        }
    }
}

/// Assembled fiber operator together with what is needed to interpret it.
#[derive(Debug, Clone)]
pub struct OperatorPencil {
    pub pencil: SymmetricPencil,
    /// Mesh node index of each degree of freedom.
    pub dof_nodes: Vec<usize>,
    pub params: LayerParams,
    pub mesh: MeshDescriptor,
    pub element: &'static str,
}

/// Coefficients of a constant-coefficient tensor form
/// `a|∂σu|² + 2b ∂σu ∂tu + c|∂tu|² + p σ⁻²|u|² + q|u|²`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FormCoefficients {
    pub dsds: f64,
    pub cross: f64,
    pub dtdt: f64,
    pub inverse_square: f64,
    pub mass: f64,
}

impl FormCoefficients {
    pub fn fiber(params: &LayerParams) -> Self {
        let cot = params.theta.cot();
        FormCoefficients {
            dsds: 1.0 + cot * cot,
            cross: cot,
            dtdt: 1.0,
            inverse_square: potential_coefficient(params),
            mass: 0.0,
        }
    }

    pub fn mass() -> Self {
        FormCoefficients {
            mass: 1.0,
            ..Default::default()
        }
    }
}

const POTENTIAL_GAUSS: usize = 8;

/// One-dimensional element matrices on a cell: stiffness, mass, the
/// derivative coupling `C[p][q] = ∫ φ_p' φ_q` and the `x⁻²` mass.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Cell1d {
    pub stiff: [[f64; 2]; 2],
    pub mass: [[f64; 2]; 2],
    pub coupling: [[f64; 2]; 2],
    pub inv_sq: [[f64; 2]; 2],
}

impl Cell1d {
    pub(crate) fn new(a: f64, b: f64, gauss: &GaussLegendre) -> Self {
        let h = b - a;
        let mut inv_sq = [[0.0; 2]; 2];
        if a == 0.0 {
            // only the right hat function survives the Dirichlet condition
            // at 0, and ∫ (x/h)² / x² = 1/h
            inv_sq[1][1] = 1.0 / h;
        } else {
            for (x, w) in gauss.on_interval(a, b) {
                let phi = [(b - x) / h, (x - a) / h];
                let wx = w / (x * x);
                for p in 0..2 {
                    for q in 0..2 {
                        inv_sq[p][q] += wx * phi[p] * phi[q];
                    }
                }
            }
            inv_sq[1][0] = inv_sq[0][1];
        }
        Cell1d {
            stiff: [[1.0 / h, -1.0 / h], [-1.0 / h, 1.0 / h]],
            mass: [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]],
            coupling: [[-0.5, -0.5], [0.5, 0.5]],
            inv_sq,
        }
    }
}

/// Local index -> (σ position, t position) within a cell.
pub(crate) const LOCAL: [(usize, usize); 4] = [(0, 0), (1, 0), (1, 1), (0, 1)];

pub(crate) fn cell_tables(mesh: &ShearedMesh) -> (Vec<Cell1d>, Vec<Cell1d>) {
    let gauss = GaussLegendre::new(POTENTIAL_GAUSS);
    let cs = mesh
        .sigma
        .windows(2)
        .map(|w| Cell1d::new(w[0], w[1], &gauss))
        .collect();
    let ct = mesh
        .t
        .windows(2)
        .map(|w| Cell1d::new(w[0], w[1], &gauss))
        .collect();
    (cs, ct)
}

/// Scatters symmetric 4×4 element matrices into a global matrix over the
/// interior degrees of freedom.
fn scatter<F>(mesh: &ShearedMesh, mut element: F) -> CsrMatrix
where
    F: FnMut(usize, usize, &mut [[f64; 4]; 4]) -> bool,
{
    let dof = mesh.dof_map();
    let n_t_cells = mesh.t.len() - 1;
    let mut tb = TripletBuilder::with_capacity(mesh.n_dofs(), 16 * mesh.cells.len());
    for (c, cell) in mesh.cells.iter().enumerate() {
        let (ci, cj) = (c / n_t_cells, c % n_t_cells);
        let mut local = [[0.0; 4]; 4];
        if !element(ci, cj, &mut local) {
            continue;
        }
        for l1 in 0..4 {
            let Some(g1) = dof[cell[l1]] else { continue };
            for l2 in 0..4 {
                let Some(g2) = dof[cell[l2]] else { continue };
                // mirror the upper triangle so K is bitwise symmetric
                let v = if l1 <= l2 { local[l1][l2] } else { local[l2][l1] };
                tb.push(g1, g2, v);
            }
        }
    }
    tb.build()
}

/// Assembles a constant-coefficient tensor form on the interior DOFs.
pub fn assemble_form(mesh: &ShearedMesh, coef: &FormCoefficients) -> CsrMatrix {
    let (cs, ct) = cell_tables(mesh);
    scatter(mesh, |ci, cj, local| {
        let (s, t) = (&cs[ci], &ct[cj]);
        for (l1, &(p1, q1)) in LOCAL.iter().enumerate() {
            for (l2, &(p2, q2)) in LOCAL.iter().enumerate().skip(l1) {
                let mut v = 0.0;
                if coef.dsds != 0.0 {
                    v += coef.dsds * s.stiff[p1][p2] * t.mass[q1][q2];
                }
                if coef.dtdt != 0.0 {
                    v += coef.dtdt * s.mass[p1][p2] * t.stiff[q1][q2];
                }
                if coef.cross != 0.0 {
                    v += coef.cross
                        * (s.coupling[p1][p2] * t.coupling[q2][q1]
                            + s.coupling[p2][p1] * t.coupling[q1][q2]);
                }
                if coef.inverse_square != 0.0 {
                    v += coef.inverse_square * s.inv_sq[p1][p2] * t.mass[q1][q2];
                }
                if coef.mass != 0.0 {
                    v += coef.mass * s.mass[p1][p2] * t.mass[q1][q2];
                }
                local[l1][l2] = v;
            }
        }
        true
    })
}

pub fn assemble_mass(mesh: &ShearedMesh) -> CsrMatrix {
    assemble_form(mesh, &FormCoefficients::mass())
}

pub fn assemble_fiber(mesh: &ShearedMesh, params: &LayerParams) -> Result<OperatorPencil> {
    if mesh.theta != params.theta {
        return Err(Error::Mismatch(format!(
            "mesh aperture {} differs from parameter aperture {}",
            mesh.theta.radians(),
            params.theta.radians()
        )));
    }
    let stiffness = assemble_form(mesh, &FormCoefficients::fiber(params));
    let mass = assemble_mass(mesh);
    if let Some(i) = mass.diagonal().iter().position(|d| !(*d > 0.0)) {
        return Err(Error::Assembly(format!(
            "mass matrix diagonal entry {i} is not positive"
        )));
    }
    Ok(OperatorPencil {
        pencil: SymmetricPencil { stiffness, mass },
        dof_nodes: mesh.interior_nodes(),
        params: *params,
        mesh: mesh.descriptor(),
        element: "Q1",
    })
}

/// Weighted mass `∫ w φ_a φ_b` with an `order × order` Gauss rule per cell.
/// Nonnegative weights give a positive semidefinite matrix.
pub fn assemble_weighted_mass<W>(mesh: &ShearedMesh, order: usize, weight: W) -> CsrMatrix
where
    W: Fn(f64, f64) -> f64,
{
    let gauss = GaussLegendre::new(order);
    scatter(mesh, |ci, cj, local| {
        let (a, b) = (mesh.sigma[ci], mesh.sigma[ci + 1]);
        let (c, d) = (mesh.t[cj], mesh.t[cj + 1]);
        accumulate_rect(&gauss, [a, b], [c, d], [a, b], [c, d], &weight, local);
        true
    })
}

/// Weighted mass restricted to the wedge `{σ < κ t}` of the rectangle.
/// Cells cut by the line are clipped and integrated on triangles.
pub fn assemble_wedge_mass<W>(mesh: &ShearedMesh, kappa: f64, order: usize, weight: W) -> CsrMatrix
where
    W: Fn(f64, f64) -> f64,
{
    let gauss = GaussLegendre::new(order);
    scatter(mesh, |ci, cj, local| {
        let (a, b) = (mesh.sigma[ci], mesh.sigma[ci + 1]);
        let (c, d) = (mesh.t[cj], mesh.t[cj + 1]);
        let inside = |s: f64, t: f64| s - kappa * t;
        let corners = [[a, c], [b, c], [b, d], [a, d]];
        let vals = corners.map(|p| inside(p[0], p[1]));
        if vals.iter().all(|v| *v >= 0.0) {
            return false;
        }
        if vals.iter().all(|v| *v <= 0.0) {
            accumulate_rect(&gauss, [a, b], [c, d], [a, b], [c, d], &weight, local);
            return true;
        }
        // clip the rectangle against σ - κt ≤ 0
        let mut poly: Vec<[f64; 2]> = Vec::with_capacity(5);
        for k in 0..4 {
            let (p, q) = (corners[k], corners[(k + 1) % 4]);
            let (vp, vq) = (vals[k], vals[(k + 1) % 4]);
            if vp <= 0.0 {
                poly.push(p);
            }
            if (vp < 0.0 && vq > 0.0) || (vp > 0.0 && vq < 0.0) {
                let s = vp / (vp - vq);
                poly.push([p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])]);
            }
        }
        for k in 1..poly.len().saturating_sub(1) {
            accumulate_triangle(
                &gauss,
                [poly[0], poly[k], poly[k + 1]],
                [a, b],
                [c, d],
                &weight,
                local,
            );
        }
        true
    })
}

fn hats(x: f64, lo: f64, hi: f64) -> [f64; 2] {
    let h = hi - lo;
    [(hi - x) / h, (x - lo) / h]
}

fn accumulate_rect<W: Fn(f64, f64) -> f64>(
    gauss: &GaussLegendre,
    int_s: [f64; 2],
    int_t: [f64; 2],
    cell_s: [f64; 2],
    cell_t: [f64; 2],
    weight: &W,
    local: &mut [[f64; 4]; 4],
) {
    for (s, ws) in gauss.on_interval(int_s[0], int_s[1]) {
        let phi = hats(s, cell_s[0], cell_s[1]);
        for (t, wt) in gauss.on_interval(int_t[0], int_t[1]) {
            let psi = hats(t, cell_t[0], cell_t[1]);
            let w = ws * wt * weight(s, t);
            add_outer(local, &phi, &psi, w);
        }
    }
}

fn accumulate_triangle<W: Fn(f64, f64) -> f64>(
    gauss: &GaussLegendre,
    tri: [[f64; 2]; 3],
    cell_s: [f64; 2],
    cell_t: [f64; 2],
    weight: &W,
    local: &mut [[f64; 4]; 4],
) {
    for l1 in 0..4 {
        for l2 in l1..4 {
            let (p1, q1) = LOCAL[l1];
            let (p2, q2) = LOCAL[l2];
            local[l1][l2] += gauss.integrate_triangle(tri[0], tri[1], tri[2], |s, t| {
                let phi = hats(s, cell_s[0], cell_s[1]);
                let psi = hats(t, cell_t[0], cell_t[1]);
                weight(s, t) * phi[p1] * psi[q1] * phi[p2] * psi[q2]
            });
        }
    }
}

fn add_outer(local: &mut [[f64; 4]; 4], phi: &[f64; 2], psi: &[f64; 2], w: f64) {
    let n = LOCAL.map(|(p, q)| phi[p] * psi[q]);
    for l1 in 0..4 {
        for l2 in l1..4 {
            local[l1][l2] += w * n[l1] * n[l2];
        }
    }
}

/// Which expression of the Hardy weight to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum WeightVariant {
    /// `t³ / (1 + σ² ln²(σ/ρ₀))` with `ρ₀ = t cotθ / 2`.
    Sheared,
    /// The same weight written in meridian coordinates `(r, z)`.
    Meridian,
}

/// Hardy weight in sheared coordinates.
pub fn hardy_weight_sheared(sigma: f64, t: f64, theta: Aperture) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let t3 = t * t * t;
    if sigma <= 0.0 {
        return t3;
    }
    let rho0 = 0.5 * t * theta.cot();
    let l = libm::log(sigma / rho0);
    t3 / (1.0 + sigma * sigma * l * l)
}

/// Hardy weight in meridian coordinates.
pub fn hardy_weight_meridian(r: f64, z: f64, theta: Aperture) -> f64 {
    let (sin, cos) = (theta.sin(), theta.cos());
    let depth = r * cos - z * sin;
    if depth <= 0.0 {
        return 0.0;
    }
    let d3 = depth * depth * depth;
    if r <= 0.0 {
        return d3;
    }
    let l = libm::log((r / cos) * (2.0 / depth));
    d3 / (1.0 + (r * r) / (sin * sin) * l * l)
}

#[derive(Debug, Clone)]
pub struct HardyWeightMatrix {
    pub matrix: CsrMatrix,
    pub variant: WeightVariant,
}

const WEIGHT_GAUSS: usize = 4;

pub fn assemble_hardy_weight(
    mesh: &ShearedMesh,
    theta: Aperture,
    variant: WeightVariant,
) -> HardyWeightMatrix {
    let cot = theta.cot();
    let matrix = match variant {
        WeightVariant::Sheared => assemble_weighted_mass(mesh, WEIGHT_GAUSS, |s, t| {
            hardy_weight_sheared(s, t, theta)
        }),
        WeightVariant::Meridian => assemble_weighted_mass(mesh, WEIGHT_GAUSS, |sigma, t| {
            let (sin, cos) = (theta.sin(), theta.cos());
            let s = sigma - t * cot;
            hardy_weight_meridian(s * sin + t * cos, s * cos - t * sin, theta)
        }),
    };
    HardyWeightMatrix { matrix, variant }
}
