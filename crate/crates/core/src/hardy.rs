//! Hardy-type lower bounds at critical flux.
//!
//! At `ω = cosθ/2` the sheared potential is exactly `-1/(4σ²)` and the
//! shifted form splits as
//!
//! ```text
//! h[u] - ‖u‖² = (∫|∂t u|² - ‖u‖²) + ∫ (|∂s u|² - |u|²/(4σ²))
//! ```
//!
//! where `∂t` is taken at fixed `s`, i.e. `∂t + cotθ ∂σ` in sheared
//! coordinates. The first bracket is bounded below on the wedge
//! `T = {σ < (3/4) t cotθ}` by `f(t)`, the second by the weighted term.

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::eigensolve::{solve_pencil, SolverOptions};
use crate::error::{Error, Result};
use crate::forms::{
    assemble_form, assemble_hardy_weight, assemble_mass, assemble_wedge_mass, critical_flux,
    FormCoefficients, SymmetricPencil, WeightVariant,
};
use crate::geometry::{Aperture, MeshDescriptor, MeshSpec, ShearedMesh};
use crate::sparse::CsrMatrix;

/// `f(t) = π²/(π - t/4)² - 1`.
pub fn local_hardy_f(t: f64) -> f64 {
    let d = PI - 0.25 * t;
    PI * PI / (d * d) - 1.0
}

/// Slope `κ` of the wedge `{σ < κ t}` that carries the local bound.
pub fn wedge_slope(theta: Aperture) -> f64 {
    0.75 * theta.cot()
}

/// Largest admissible ε of the refined bound (exclusive).
pub fn refined_eps_limit() -> f64 {
    1.0 / (PI * PI * PI)
}

const WEDGE_GAUSS: usize = 6;

/// Every matrix entering the Hardy-type bounds on one mesh.
#[derive(Debug, Clone)]
pub struct HardyForms {
    pub theta: Aperture,
    pub mesh: MeshDescriptor,
    pub mass: CsrMatrix,
    /// `∫ |∂t u|²` at fixed `s`.
    pub transverse: CsrMatrix,
    /// `∫ |∂σ u|²`.
    pub longitudinal: CsrMatrix,
    /// `∫ |u|² / σ²`.
    pub inverse_square: CsrMatrix,
    /// `∫_T f(t) |u|²`.
    pub wedge_f: CsrMatrix,
    /// `∫_T t³ (4/ρ₀² + 1/8) |u|²`.
    pub wedge_penalty: CsrMatrix,
    /// `∫ w |u|²` with the Hardy weight.
    pub weight: CsrMatrix,
}

impl HardyForms {
    pub fn assemble(mesh: &ShearedMesh) -> Self {
        let theta = mesh.theta;
        let cot = theta.cot();
        let tan2 = 1.0 / (cot * cot);
        let kappa = wedge_slope(theta);
        HardyForms {
            theta,
            mesh: mesh.descriptor(),
            mass: assemble_mass(mesh),
            transverse: assemble_form(
                mesh,
                &FormCoefficients {
                    dsds: cot * cot,
                    cross: cot,
                    dtdt: 1.0,
                    ..Default::default()
                },
            ),
            longitudinal: assemble_form(
                mesh,
                &FormCoefficients {
                    dsds: 1.0,
                    ..Default::default()
                },
            ),
            inverse_square: assemble_form(
                mesh,
                &FormCoefficients {
                    inverse_square: 1.0,
                    ..Default::default()
                },
            ),
            wedge_f: assemble_wedge_mass(mesh, kappa, WEDGE_GAUSS, |_, t| local_hardy_f(t)),
            // t³(4/ρ₀² + 1/8) with ρ₀ = t cotθ/2
            wedge_penalty: assemble_wedge_mass(mesh, kappa, WEDGE_GAUSS, |_, t| {
                16.0 * tan2 * t + t * t * t / 8.0
            }),
            weight: assemble_hardy_weight(mesh, theta, WeightVariant::Sheared).matrix,
        }
    }

    /// The critical-flux pencil `(K, M)` built from the split form.
    pub fn critical_stiffness(&self) -> CsrMatrix {
        let hardy = self.longitudinal.linear_combination(1.0, &self.inverse_square, -0.25);
        self.transverse.linear_combination(1.0, &hardy, 1.0)
    }

    fn normalized(&self, u: &[f64], form: impl Fn(&[f64]) -> f64) -> f64 {
        form(u) / self.mass.quadratic(u)
    }

    /// `∫|∂t u|² - ‖u‖² - ∫_T f|u|²`, per unit mass.
    pub fn local_margin(&self, u: &[f64]) -> f64 {
        self.normalized(u, |u| {
            self.transverse.quadratic(u) - self.mass.quadratic(u) - self.wedge_f.quadratic(u)
        })
    }

    /// `∫ |∂σu|² - |u|²/(4σ²)`, per unit mass.
    pub fn one_dimensional_hardy(&self, u: &[f64]) -> f64 {
        self.normalized(u, |u| {
            self.longitudinal.quadratic(u) - 0.25 * self.inverse_square.quadratic(u)
        })
    }

    /// Left side minus right side of the refined bound, per unit mass.
    pub fn refined_margin(&self, u: &[f64], eps: f64) -> f64 {
        let rhs = self.normalized(u, |u| {
            eps / 16.0 * self.weight.quadratic(u) - eps * self.wedge_penalty.quadratic(u)
        });
        self.one_dimensional_hardy(u) - rhs
    }

    /// `h[u] - ‖u‖² - ∫_T f|u|²` at critical flux, per unit mass.
    pub fn combined_margin(&self, u: &[f64], critical: &CsrMatrix) -> f64 {
        self.normalized(u, |u| {
            critical.quadratic(u) - self.mass.quadratic(u) - self.wedge_f.quadratic(u)
        })
    }
}

/// Per-trial margins of one inequality.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Margins {
    pub labels: Vec<alloc::string::String>,
    pub values: Vec<f64>,
}

impl Margins {
    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// A labelled discrete function on the interior DOFs.
#[derive(Debug, Clone)]
pub struct Trial {
    pub label: alloc::string::String,
    pub values: Vec<f64>,
}

/// Random and structured trial functions on `mesh`.
///
/// The structured ones are products `sin(jt)·σ e^{-σ/ℓ}`, a function living
/// inside the wedge `T` and one supported away from it. The discrete
/// critical ground state is added by [`trial_battery_with_ground_state`].
pub fn trial_battery(mesh: &ShearedMesh, n_random: usize, seed: u64) -> Vec<Trial> {
    let nodes = mesh.interior_nodes();
    let kappa = wedge_slope(mesh.theta);
    let eval = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
        nodes
            .iter()
            .map(|&n| {
                let [s, t] = mesh.nodes[n];
                f(s, t)
            })
            .collect()
    };
    let mut out = Vec::new();
    for j in 1..=2 {
        for scale in [0.5, 2.0, 8.0] {
            out.push(Trial {
                label: alloc::format!("smooth_j{j}_l{scale}"),
                values: eval(&|s, t| libm::sin(j as f64 * t) * s * libm::exp(-s / scale)),
            });
        }
    }
    out.push(Trial {
        label: "wedge".into(),
        values: eval(&|s, t| libm::sin(t) * (kappa * t - s).max(0.0)),
    });
    out.push(Trial {
        label: "off_wedge".into(),
        values: eval(&|s, t| {
            let gap = s - 1.5 * kappa * t - 0.5;
            libm::sin(t) * gap.max(0.0) * libm::exp(-0.2 * s)
        }),
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for r in 0..n_random {
        out.push(Trial {
            label: alloc::format!("random_{r}"),
            values: (0..nodes.len())
                .map(|_| 2.0 * ((rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64) - 1.0)
                .collect(),
        });
    }
    out.retain(|t| t.values.iter().any(|v| *v != 0.0));
    out
}

/// Lowest eigenvector of the critical pencil.
pub fn critical_ground_state(forms: &HardyForms, solver: &SolverOptions) -> Result<Vec<f64>> {
    let pencil = SymmetricPencil {
        stiffness: forms.critical_stiffness(),
        mass: forms.mass.clone(),
    };
    let opts = SolverOptions { k: 1, ..*solver };
    let pairs = solve_pencil(&pencil, &opts)?;
    Ok(pairs.vectors.into_iter().next().expect("one vector requested"))
}

pub fn trial_battery_with_ground_state(
    mesh: &ShearedMesh,
    forms: &HardyForms,
    n_random: usize,
    seed: u64,
    solver: &SolverOptions,
) -> Result<Vec<Trial>> {
    let mut trials = trial_battery(mesh, n_random, seed);
    trials.insert(
        0,
        Trial {
            label: "critical_ground_state".into(),
            values: critical_ground_state(forms, solver)?,
        },
    );
    Ok(trials)
}

pub fn check_local_hardy(forms: &HardyForms, trials: &[Trial]) -> Margins {
    Margins {
        labels: trials.iter().map(|t| t.label.clone()).collect(),
        values: trials.iter().map(|t| forms.local_margin(&t.values)).collect(),
    }
}

pub fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < refined_eps_limit()) {
        return Err(Error::param(alloc::format!(
            "eps must lie in (0, pi^-3) = (0, {:.6}), got {eps}",
            refined_eps_limit()
        )));
    }
    Ok(())
}

pub fn check_refined_bound(forms: &HardyForms, eps: f64, trials: &[Trial]) -> Result<Margins> {
    check_eps(eps)?;
    Ok(Margins {
        labels: trials.iter().map(|t| t.label.clone()).collect(),
        values: trials.iter().map(|t| forms.refined_margin(&t.values, eps)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HardyReport {
    pub theta: f64,
    pub critical_flux: f64,
    /// Extrapolated minimum of `(h[u] - ‖u‖²) / ∫ w|u|²`.
    pub c_est: f64,
    pub eps_reg: Vec<f64>,
    /// Lowest eigenvalue of `(K - M, W + ε M)` for each regularization.
    pub lambda_min: Vec<f64>,
    pub mesh: MeshDescriptor,
    pub refined_eps: f64,
    pub local: Margins,
    pub refined: Margins,
    /// Smallest `margin(combined) - margin(local)`, which is the 1D Hardy
    /// term and should not be negative.
    pub chain_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HardyOptions {
    pub eps_reg: Vec<f64>,
    pub refined_eps: f64,
    pub n_random: usize,
    pub solver: SolverOptions,
}

impl Default for HardyOptions {
    fn default() -> Self {
        HardyOptions {
            eps_reg: alloc::vec![1e-2, 1e-3, 1e-4],
            refined_eps: 0.5 * refined_eps_limit(),
            n_random: 100,
            solver: SolverOptions {
                k: 1,
                shift: 0.0,
                tol: 1e-8,
                ..Default::default()
            },
        }
    }
}

/// Richardson extrapolation to `ε → 0` from the two smallest
/// regularizations, assuming `λ(ε) = λ₀ + aε`.
pub fn extrapolate(eps: &[f64], lambdas: &[f64]) -> f64 {
    let n = eps.len();
    if n < 2 {
        return lambdas[0];
    }
    let (e1, e2) = (eps[n - 2], eps[n - 1]);
    let (l1, l2) = (lambdas[n - 2], lambdas[n - 1]);
    (l2 * e1 - l1 * e2) / (e1 - e2)
}

pub fn estimate_hardy_constant(
    theta: Aperture,
    mesh: &MeshSpec,
    opts: &HardyOptions,
) -> Result<HardyReport> {
    if opts.eps_reg.is_empty()
        || opts.eps_reg.iter().any(|e| !(*e > 0.0))
        || opts.eps_reg.windows(2).any(|w| !(w[1] < w[0]))
    {
        return Err(Error::param(
            "regularization sequence must be positive and strictly decreasing",
        ));
    }
    let mesh = ShearedMesh::from_spec(theta, mesh)?;
    let forms = HardyForms::assemble(&mesh);
    let critical = forms.critical_stiffness();
    let shifted = critical.linear_combination(1.0, &forms.mass, -1.0);

    let mut lambdas = Vec::with_capacity(opts.eps_reg.len());
    for &eps in &opts.eps_reg {
        let pencil = SymmetricPencil {
            stiffness: shifted.clone(),
            mass: forms.weight.linear_combination(1.0, &forms.mass, eps),
        };
        let pairs = solve_pencil(&pencil, &SolverOptions { k: 1, ..opts.solver })?;
        lambdas.push(pairs.values[0]);
    }
    let c_est = extrapolate(&opts.eps_reg, &lambdas);

    let trials = trial_battery_with_ground_state(&mesh, &forms, opts.n_random, opts.solver.seed, &opts.solver)?;
    let local = check_local_hardy(&forms, &trials);
    let refined = check_refined_bound(&forms, opts.refined_eps, &trials)?;
    let chain_gap = trials
        .iter()
        .map(|t| forms.combined_margin(&t.values, &critical) - forms.local_margin(&t.values))
        .fold(f64::INFINITY, f64::min);

    let report = HardyReport {
        theta: theta.radians(),
        critical_flux: critical_flux(theta),
        c_est,
        eps_reg: opts.eps_reg.clone(),
        lambda_min: lambdas,
        mesh: forms.mesh,
        refined_eps: opts.refined_eps,
        local,
        refined,
        chain_gap,
    };
    if !(c_est > 0.0) {
        return Err(Error::NonPositiveEstimate {
            c_est,
            report: Box::new(report),
        });
    }
    Ok(report)
}

/// Estimates on a sequence of meshes with the relative drift between the
/// first and every later estimate.
pub fn hardy_sweep(
    theta: Aperture,
    meshes: &[MeshSpec],
    opts: &HardyOptions,
) -> Result<(Vec<HardyReport>, f64)> {
    let mut reports = Vec::with_capacity(meshes.len());
    for m in meshes {
        reports.push(estimate_hardy_constant(theta, m, opts)?);
    }
    let drift = relative_drift(&reports.iter().map(|r| r.c_est).collect::<Vec<_>>());
    Ok((reports, drift))
}

/// Largest `|c_j - c_0| / c_0`.
pub fn relative_drift(values: &[f64]) -> f64 {
    let c0 = values[0];
    values
        .iter()
        .map(|c| (c - c0).abs() / c0.abs())
        .fold(0.0, f64::max)
}
