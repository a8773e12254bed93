//! Lowest eigenvalues of sparse symmetric pencils and the truncation
//! stability filter that separates bound states from box artifacts.
//!
//! The solver is a thick-restart Lanczos iteration on the shift-inverted
//! operator `(K - σM)⁻¹ M`, which is self-adjoint in the `M` inner product.
//! The shift is always moved below the whole spectrum (checked through the
//! inertia of the factorization), so the wanted eigenvalues are the largest
//! ones of the inverted operator.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::dense::symmetric_eigen;
use crate::error::{Error, Result};
use crate::forms::{assemble_fiber, check_omega, LayerParams, OperatorPencil, SymmetricPencil};
use crate::geometry::{Aperture, MeshDescriptor, MeshSpec, ShearedMesh};
use crate::sparse::{BandLdl, CsrMatrix};
use crate::THRESHOLD;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolverOptions {
    /// Number of eigenvalues wanted.
    pub k: usize,
    pub shift: f64,
    /// Bound on `‖Ku - λMu‖ / ‖u‖` for every returned pair.
    pub tol: f64,
    pub seed: u64,
    pub max_restarts: usize,
    /// Lanczos basis size; `0` picks a default from `k`.
    pub basis: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            k: 4,
            shift: 0.5,
            tol: 1e-8,
            seed: 0x5eed,
            max_restarts: 400,
            basis: 0,
        }
    }
}

impl SolverOptions {
    pub fn with_k(k: usize) -> Self {
        SolverOptions {
            k,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::param("k must be at least 1"));
        }
        if !(self.shift < THRESHOLD) {
            return Err(Error::param(format!(
                "shift must be below the threshold 1, got {}",
                self.shift
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::param(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// Raw output of the Lanczos iteration.
#[derive(Debug, Clone)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    /// `M`-normalized eigenvectors.
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub shift_used: f64,
    pub restarts: usize,
    pub applications: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolverMeta {
    pub shift_requested: f64,
    pub shift_used: f64,
    pub restarts: usize,
    pub applications: usize,
    pub tol: f64,
    pub seed: u64,
    pub element: alloc::string::String,
    pub mesh: Option<MeshDescriptor>,
    /// Truncation lengths of the stability runs, shortest first.
    pub lengths: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpectrumResult {
    pub params: Option<LayerParams>,
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
    pub threshold: f64,
    /// Guard band: only eigenvalues below `threshold - delta` count as
    /// discrete.
    pub delta: f64,
    pub stable: Vec<bool>,
    /// Largest change of a stable eigenvalue between truncations.
    pub drift: f64,
    /// All `k` computed eigenvalues were discrete, so more may exist.
    pub saturated: bool,
    pub meta: SolverMeta,
    #[cfg_attr(feature = "serde", serde(skip))]
    pub vectors: Vec<Vec<f64>>,
}

impl SpectrumResult {
    /// Stable eigenvalues strictly below `threshold - delta`.
    pub fn discrete(&self) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .zip(&self.stable)
            .filter(|(l, s)| **s && **l < self.threshold - self.delta)
            .map(|(l, _)| *l)
            .collect()
    }

    pub fn discrete_count(&self) -> usize {
        self.discrete().len()
    }

    pub fn lowest(&self) -> f64 {
        self.eigenvalues[0]
    }
}

/// Number of stable eigenvalues below `1 - e`.
pub fn counting_function(result: &SpectrumResult, e: f64) -> usize {
    debug_assert!(e > 0.0 && e < 1.0, "energy must lie in (0, 1)");
    result
        .eigenvalues
        .iter()
        .zip(&result.stable)
        .filter(|(l, s)| **s && **l < result.threshold - e)
        .count()
}

/// Lowest eigenpairs of an assembled fiber operator.
pub fn solve_lowest(op: &OperatorPencil, opts: &SolverOptions) -> Result<SpectrumResult> {
    let wrap = |pairs: Eigenpairs| SpectrumResult {
        params: Some(op.params),
        stable: alloc::vec![false; pairs.values.len()],
        eigenvalues: pairs.values,
        residuals: pairs.residuals,
        threshold: THRESHOLD,
        delta: opts.tol,
        drift: 0.0,
        saturated: false,
        meta: SolverMeta {
            shift_requested: opts.shift,
            shift_used: pairs.shift_used,
            restarts: pairs.restarts,
            applications: pairs.applications,
            tol: opts.tol,
            seed: opts.seed,
            element: op.element.into(),
            mesh: Some(op.mesh),
            lengths: alloc::vec![op.mesh.length],
        },
        vectors: pairs.vectors,
    };
    match solve_pencil(&op.pencil, opts) {
        Ok(pairs) => Ok(wrap(pairs)),
        Err(PencilError::Fatal(e)) => Err(e),
        Err(PencilError::Unconverged(pairs)) => {
            let converged = pairs.residuals.iter().filter(|r| **r <= opts.tol).count();
            Err(Error::NoConvergence {
                converged,
                requested: opts.k,
                partial: Box::new(wrap(*pairs)),
            })
        }
    }
}

#[derive(Debug)]
pub enum PencilError {
    Fatal(Error),
    Unconverged(Box<Eigenpairs>),
}

impl From<PencilError> for Error {
    fn from(e: PencilError) -> Self {
        match e {
            PencilError::Fatal(e) => e,
            PencilError::Unconverged(p) => {
                let converged = p.residuals.iter().filter(|r| **r <= 1e-8).count();
                Error::NoConvergence {
                    converged,
                    requested: p.values.len(),
                    partial: Box::new(SpectrumResult {
                        params: None,
                        stable: alloc::vec![false; p.values.len()],
                        eigenvalues: p.values,
                        residuals: p.residuals,
                        threshold: THRESHOLD,
                        delta: 0.0,
                        drift: 0.0,
                        saturated: false,
                        meta: SolverMeta {
                            shift_requested: p.shift_used,
                            shift_used: p.shift_used,
                            restarts: p.restarts,
                            applications: p.applications,
                            tol: 0.0,
                            seed: 0,
                            element: "Q1".into(),
                            mesh: None,
                            lengths: Vec::new(),
                        },
                        vectors: p.vectors,
                    }),
                }
            }
        }
    }
}

/// Factors `K - σM`, lowering `σ` until no eigenvalue lies below it and
/// nudging it off exact singularities.
fn factor_below_spectrum(pencil: &SymmetricPencil, shift: f64) -> Result<(BandLdl, f64)> {
    let mut sigma = shift;
    let mut last_err = None;
    for attempt in 0..60 {
        match BandLdl::factor_combination(&pencil.stiffness, &pencil.mass, -sigma) {
            Ok(f) if f.negative_pivots() == 0 => return Ok((f, sigma)),
            Ok(_) => sigma -= 2.0 * sigma.abs().max(1.0),
            Err(e) => {
                last_err = Some(e);
                sigma -= 1e-6 * sigma.abs().max(1.0) * (attempt as f64 + 1.0);
            }
        }
    }
    Err(last_err.unwrap_or(Error::Factorization { shift, pivot: 0 }))
}

fn m_dot(mx: &[f64], y: &[f64]) -> f64 {
    mx.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn norm2(x: &[f64]) -> f64 {
    libm::sqrt(x.iter().map(|v| v * v).sum())
}

/// `‖Ku - λMu‖₂ / ‖u‖₂`.
pub fn residual_norm(k: &CsrMatrix, m: &CsrMatrix, lambda: f64, u: &[f64]) -> f64 {
    let ku = k.mul_vec(u);
    let mu = m.mul_vec(u);
    let r: Vec<f64> = ku.iter().zip(&mu).map(|(a, b)| a - lambda * b).collect();
    norm2(&r) / norm2(u)
}

/// Thick-restart Lanczos on `(K - σM)⁻¹ M` for the lowest `k` eigenpairs.
pub fn solve_pencil(
    pencil: &SymmetricPencil,
    opts: &SolverOptions,
) -> core::result::Result<Eigenpairs, PencilError> {
    opts.validate().map_err(PencilError::Fatal)?;
    let n = pencil.dim();
    if n == 0 {
        return Err(PencilError::Fatal(Error::param(
            "the pencil has no degrees of freedom",
        )));
    }
    let k = opts.k.min(n);
    let (ldl, sigma) = factor_below_spectrum(pencil, opts.shift).map_err(PencilError::Fatal)?;
    let mass = &pencil.mass;

    let m_max = if opts.basis > 0 {
        opts.basis.max(k + 2)
    } else {
        (2 * k + 24).max(40)
    }
    .min(n);
    let keep = (k + (m_max - k) / 3).min(m_max.saturating_sub(2)).max(k.min(m_max));
    let ritz_tol = (opts.tol * 1e-2).min(1e-10);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m_max + 1);
    let mut mbasis: Vec<Vec<f64>> = Vec::with_capacity(m_max + 1);
    let mut h = alloc::vec![0.0; m_max * m_max];
    let mut applications = 0usize;

    let random_vector = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n)
            .map(|_| 2.0 * ((rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64) - 1.0)
            .collect()
    };

    // orthogonalizes w against the basis (twice), returns coefficients and
    // the M-norm of what is left
    let orthogonalize = |w: &mut Vec<f64>, basis: &[Vec<f64>], mbasis: &[Vec<f64>]| {
        let mut coef = alloc::vec![0.0; basis.len()];
        for _ in 0..2 {
            for (j, (v, mv)) in basis.iter().zip(mbasis).enumerate() {
                let c = m_dot(mv, w);
                coef[j] += c;
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= c * vi;
                }
            }
        }
        let mw = mass.mul_vec(w);
        let nrm = libm::sqrt(m_dot(&mw, w).max(0.0));
        (coef, mw, nrm)
    };

    let mut start = random_vector(&mut rng);
    let (_, mut mstart, mut nrm) = orthogonalize(&mut start, &basis, &mbasis);
    for (x, y) in start.iter_mut().zip(mstart.iter_mut()) {
        *x /= nrm;
        *y /= nrm;
    }
    basis.push(start);
    mbasis.push(mstart);

    let mut restarts = 0usize;
    let mut beta_last;
    let mut best: Option<Eigenpairs> = None;
    loop {
        // expand to m_max vectors
        let mut j = basis.len() - 1;
        beta_last = 0.0;
        let mut exhausted = false;
        while j < m_max {
            let mut w = mbasis[j].clone();
            ldl.solve_in_place(&mut w);
            applications += 1;
            let (coef, mw, beta) = orthogonalize(&mut w, &basis, &mbasis);
            for (i, c) in coef.iter().enumerate().take(j + 1) {
                h[i * m_max + j] = *c;
                h[j * m_max + i] = *c;
            }
            let scale = coef[j].abs().max(1e-300);
            if j + 1 == m_max {
                beta_last = beta;
                if beta <= 1e-13 * scale {
                    exhausted = basis.len() >= n;
                }
                // keep the residual direction for the restart
                let inv = if beta > 0.0 { 1.0 / beta } else { 0.0 };
                basis.push(w.iter().map(|x| x * inv).collect());
                mbasis.push(mw.iter().map(|x| x * inv).collect());
                break;
            }
            if beta <= 1e-13 * scale {
                // invariant subspace: continue with a fresh direction
                if basis.len() >= n {
                    exhausted = true;
                    beta_last = 0.0;
                    break;
                }
                let mut r = random_vector(&mut rng);
                let (_, mut mr, nr) = orthogonalize(&mut r, &basis, &mbasis);
                for (x, y) in r.iter_mut().zip(mr.iter_mut()) {
                    *x /= nr;
                    *y /= nr;
                }
                basis.push(r);
                mbasis.push(mr);
            } else {
                basis.push(w.iter().map(|x| x / beta).collect());
                mbasis.push(mw.iter().map(|x| x / beta).collect());
                h[(j + 1) * m_max + j] = beta;
                h[j * m_max + j + 1] = beta;
            }
            j += 1;
        }
        let dim = (j + 1).min(m_max).min(basis.len());
        let mut hs = alloc::vec![0.0; dim * dim];
        for a in 0..dim {
            for b in 0..dim {
                hs[a * dim + b] = h[a * m_max + b];
            }
        }
        let (theta, y) = symmetric_eigen(&hs, dim);
        // wanted: largest θ first
        let order: Vec<usize> = (0..dim).rev().collect();
        let last_row = dim - 1;
        let ritz_res = |c: usize| (beta_last * y[last_row * dim + c]).abs();

        let wanted = k.min(dim);
        let all_ritz_ok = order[..wanted]
            .iter()
            .all(|&c| ritz_res(c) <= ritz_tol * theta[c].abs() || exhausted);

        let build = |cols: &[usize]| -> Vec<Vec<f64>> {
            cols.iter()
                .map(|&c| {
                    let mut x = alloc::vec![0.0; n];
                    for (r, v) in basis.iter().enumerate().take(dim) {
                        let coef = y[r * dim + c];
                        for (xi, vi) in x.iter_mut().zip(v) {
                            *xi += coef * vi;
                        }
                    }
                    x
                })
                .collect()
        };

        if all_ritz_ok || restarts >= opts.max_restarts {
            let cols: Vec<usize> = order[..wanted].to_vec();
            let vectors = build(&cols);
            let values: Vec<f64> = cols.iter().map(|&c| sigma + 1.0 / theta[c]).collect();
            let residuals: Vec<f64> = values
                .iter()
                .zip(&vectors)
                .map(|(l, u)| residual_norm(&pencil.stiffness, mass, *l, u))
                .collect();
            let ok = residuals.iter().all(|r| *r <= opts.tol);
            let pairs = Eigenpairs {
                values,
                vectors,
                residuals,
                shift_used: sigma,
                restarts,
                applications,
                converged: ok,
            };
            if ok {
                return Ok(pairs);
            }
            if restarts >= opts.max_restarts {
                return Err(PencilError::Unconverged(Box::new(best.unwrap_or(pairs))));
            }
            best = Some(pairs);
        }

        // thick restart with the `keep` leading Ritz vectors plus the
        // residual direction
        let keep_now = keep.min(dim.saturating_sub(1)).max(1);
        let cols: Vec<usize> = order[..keep_now].to_vec();
        let new_vecs = build(&cols);
        let new_m: Vec<Vec<f64>> = new_vecs.iter().map(|x| mass.mul_vec(x)).collect();
        let residual_dir = basis.pop();
        let residual_mdir = mbasis.pop();
        basis.clear();
        mbasis.clear();
        h.iter_mut().for_each(|x| *x = 0.0);
        for (i, (&c, (v, mv))) in cols.iter().zip(new_vecs.into_iter().zip(new_m)).enumerate() {
            h[i * m_max + i] = theta[c];
            basis.push(v);
            mbasis.push(mv);
        }
        match (residual_dir, residual_mdir) {
            (Some(r), Some(mr)) if beta_last > 0.0 && basis.len() < n => {
                basis.push(r);
                mbasis.push(mr);
            }
            _ => {
                let mut r = random_vector(&mut rng);
                let (_, mut mr, nr) = orthogonalize(&mut r, &basis, &mbasis);
                nrm = nr;
                for (x, y) in r.iter_mut().zip(mr.iter_mut()) {
                    *x /= nrm;
                    *y /= nrm;
                }
                basis.push(r);
                mbasis.push(mr);
            }
        }
        restarts += 1;
    }
}

/// Options of the truncation-stability filter.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpectrumOptions {
    pub solver: SolverOptions,
    /// Number of truncation lengths `L, 1.25 L, 1.25² L, ...`; at least 2.
    pub levels: usize,
    pub growth: f64,
    /// Absolute agreement required between consecutive truncations.
    pub match_tol: f64,
    /// Base guard band below the threshold.
    pub guard: f64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions {
            solver: SolverOptions::default(),
            levels: 2,
            growth: 1.25,
            match_tol: 1e-6,
            guard: 1e-4,
        }
    }
}

/// Eigenvalues below the threshold that survive enlargement of the
/// truncation length.
///
/// The meshes for the longer truncations extend the base σ grid, so every
/// shorter problem is a principal block of the longest one.
pub fn discrete_spectrum(
    params: &LayerParams,
    mesh: &MeshSpec,
    opts: &SpectrumOptions,
) -> Result<SpectrumResult> {
    if opts.levels < 2 {
        return Err(Error::param(format!(
            "refinement_levels must be at least 2, got {}",
            opts.levels
        )));
    }
    opts.solver.validate()?;
    let base = ShearedMesh::from_spec(params.theta, mesh)?;
    let mut lengths = alloc::vec![mesh.length];
    for _ in 1..opts.levels {
        lengths.push(lengths[lengths.len() - 1] * opts.growth);
    }
    let longest = base.extend_to(lengths[lengths.len() - 1]);
    let full = assemble_fiber(&longest, params)?;
    let n_t_inner = longest.t.len() - 2;

    let mut runs = Vec::with_capacity(opts.levels);
    for &len in &lengths {
        // interior σ nodes strictly inside (0, len)
        let inner = longest
            .sigma
            .iter()
            .filter(|&&s| s > 0.0 && s < len * (1.0 - 1e-12))
            .count();
        let block = full.pencil.leading_block(inner * n_t_inner);
        let op = OperatorPencil {
            pencil: block,
            dof_nodes: full.dof_nodes[..inner * n_t_inner].to_vec(),
            params: *params,
            mesh: base.descriptor(),
            element: full.element,
        };
        runs.push(solve_lowest(&op, &opts.solver)?);
    }

    let finest = runs.pop().expect("at least two runs");
    let count = finest.eigenvalues.len();
    let mut stable = alloc::vec![true; count];
    let mut drift = 0.0f64;
    let mut chain = finest.eigenvalues.clone();
    for run in runs.iter().rev() {
        for (i, s) in stable.iter_mut().enumerate() {
            let d = match run.eigenvalues.get(i) {
                Some(l) => (l - chain[i]).abs(),
                None => f64::INFINITY,
            };
            if d > opts.match_tol {
                *s = false;
            }
        }
        chain.clone_from(&run.eigenvalues);
    }
    // drift of stable eigenvalues between the two longest truncations
    let previous = &runs[runs.len() - 1];
    for i in 0..count {
        if stable[i] && finest.eigenvalues[i] < THRESHOLD {
            drift = drift.max((previous.eigenvalues[i] - finest.eigenvalues[i]).abs());
        }
    }
    let delta = opts.solver.tol.max(opts.guard + drift);
    let saturated = finest
        .eigenvalues
        .iter()
        .zip(&stable)
        .all(|(l, s)| *s && *l < THRESHOLD - delta);
    let mut meta = finest.meta.clone();
    meta.lengths = lengths;
    meta.restarts = runs.iter().map(|r| r.meta.restarts).sum::<usize>() + finest.meta.restarts;
    Ok(SpectrumResult {
        params: Some(*params),
        stable,
        delta,
        drift,
        saturated,
        meta,
        ..finest
    })
}

/// Stable bound-state counts along an ω grid at fixed θ.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TransitionScan {
    pub theta: f64,
    pub omegas: Vec<f64>,
    pub counts: Vec<usize>,
    /// Estimated flux at which the discrete spectrum empties.
    pub omega_star: f64,
    pub critical: f64,
    pub warning: Option<TransitionWarning>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TransitionWarning {
    /// No grid point has a bound state; ω* sits at the lower grid edge.
    AllEmpty,
    /// Every grid point has a bound state; ω* sits at the upper grid edge.
    NoneEmpty,
}

impl TransitionScan {
    /// Builds the scan from per-point counts. The grid must be ascending.
    pub fn from_counts(theta: Aperture, omegas: Vec<f64>, counts: Vec<usize>) -> Result<Self> {
        if omegas.is_empty() || omegas.len() != counts.len() {
            return Err(Error::param("omega grid and counts must be non-empty and equal in length"));
        }
        if omegas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::param("omega grid must be strictly ascending"));
        }
        let last_bound = counts.iter().rposition(|c| *c > 0);
        let (omega_star, warning) = match last_bound {
            None => (omegas[0], Some(TransitionWarning::AllEmpty)),
            Some(i) if i + 1 == omegas.len() => {
                (omegas[omegas.len() - 1], Some(TransitionWarning::NoneEmpty))
            }
            Some(i) => (0.5 * (omegas[i] + omegas[i + 1]), None),
        };
        Ok(TransitionScan {
            theta: theta.radians(),
            critical: 0.5 * theta.cos(),
            omegas,
            counts,
            omega_star,
            warning,
        })
    }

    pub fn is_non_increasing(&self) -> bool {
        self.counts.windows(2).all(|w| w[1] <= w[0])
    }

    pub fn deviation(&self) -> f64 {
        (self.omega_star - self.critical).abs()
    }
}

/// Runs `discrete_spectrum` at every grid point, in order.
pub fn transition_scan(
    theta: Aperture,
    omegas: &[f64],
    mesh: &MeshSpec,
    opts: &SpectrumOptions,
) -> Result<TransitionScan> {
    let mut counts = Vec::with_capacity(omegas.len());
    for &w in omegas {
        let p = LayerParams::radial(theta, w)?;
        counts.push(discrete_spectrum(&p, mesh, opts)?.discrete_count());
    }
    TransitionScan::from_counts(theta, omegas.to_vec(), counts)
}

/// How ω moves along a θ grid.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum OmegaRule {
    Constant(f64),
    /// `ω_j = cosθ_j / cosθ_0 · ω_0`, the smallest flux the ordering allows.
    Compensated(f64),
    Explicit(Vec<f64>),
}

impl OmegaRule {
    pub fn omegas(&self, thetas: &[Aperture]) -> Result<Vec<f64>> {
        let out = match self {
            OmegaRule::Constant(w) => alloc::vec![*w; thetas.len()],
            OmegaRule::Compensated(w0) => {
                let c0 = thetas.first().map(|t| t.cos()).unwrap_or(1.0);
                thetas.iter().map(|t| t.cos() / c0 * w0).collect()
            }
            OmegaRule::Explicit(v) => {
                if v.len() != thetas.len() {
                    return Err(Error::param("explicit omega list must match the theta grid"));
                }
                v.clone()
            }
        };
        for w in &out {
            check_omega(*w)?;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MonotonicityTable {
    pub thetas: Vec<f64>,
    pub omegas: Vec<f64>,
    /// `values[j][k]` is `E_{k+1}` at grid point `j`.
    pub values: Vec<Vec<f64>>,
    pub tolerance: f64,
    /// Largest decrease of any `E_k` between consecutive grid points.
    pub max_violation: f64,
    pub non_decreasing: bool,
    pub reference_length: f64,
}

impl MonotonicityTable {
    pub fn from_values(
        thetas: &[Aperture],
        omegas: Vec<f64>,
        values: Vec<Vec<f64>>,
        tolerance: f64,
        reference_length: f64,
    ) -> Self {
        let mut worst = 0.0f64;
        for w in values.windows(2) {
            for (a, b) in w[0].iter().zip(&w[1]) {
                worst = worst.max(a - b);
            }
        }
        MonotonicityTable {
            thetas: thetas.iter().map(|t| t.radians()).collect(),
            omegas,
            values,
            tolerance,
            max_violation: worst,
            non_decreasing: worst <= tolerance,
            reference_length,
        }
    }
}

/// Checks the ordering hypothesis of the monotonicity scan.
pub fn validate_monotonicity_grid(thetas: &[Aperture], omegas: &[f64]) -> Result<()> {
    for j in 1..thetas.len() {
        if thetas[j] < thetas[j - 1] {
            return Err(Error::param("theta grid must be ascending"));
        }
        let floor = thetas[j].cos() / thetas[j - 1].cos() * omegas[j - 1];
        if omegas[j] < floor * (1.0 - 1e-12) {
            return Err(Error::param(format!(
                "omega at grid point {j} is {} but must be at least cos(theta_j)/cos(theta_(j-1))*omega_(j-1) = {floor}",
                omegas[j]
            )));
        }
    }
    Ok(())
}

/// Mesh used at grid point θ of a monotonicity scan: the reference σ grid
/// scaled by `cotθ`, so that after `σ ↦ σ tanθ` all grid points share one
/// mesh and the discrete Rayleigh quotients compare exactly.
pub fn scan_mesh(theta: Aperture, reference: &MeshSpec) -> Result<ShearedMesh> {
    let spec = MeshSpec {
        length: reference.length * theta.cot(),
        ..*reference
    };
    ShearedMesh::from_spec(theta, &spec)
}

pub fn monotonicity_point(
    theta: Aperture,
    omega: f64,
    k_max: usize,
    reference: &MeshSpec,
    solver: &SolverOptions,
) -> Result<Vec<f64>> {
    let mesh = scan_mesh(theta, reference)?;
    let op = assemble_fiber(&mesh, &LayerParams::radial(theta, omega)?)?;
    let opts = SolverOptions { k: k_max, ..*solver };
    Ok(solve_lowest(&op, &opts)?.eigenvalues)
}

/// `E_1..E_kmax` of the `m = 0` fiber along a θ grid.
pub fn monotonicity_scan(
    thetas: &[Aperture],
    rule: &OmegaRule,
    k_max: usize,
    reference: &MeshSpec,
    solver: &SolverOptions,
) -> Result<MonotonicityTable> {
    let omegas = rule.omegas(thetas)?;
    validate_monotonicity_grid(thetas, &omegas)?;
    let mut values = Vec::with_capacity(thetas.len());
    for (t, w) in thetas.iter().zip(&omegas) {
        values.push(monotonicity_point(*t, *w, k_max, reference, solver)?);
    }
    Ok(MonotonicityTable::from_values(
        thetas,
        omegas,
        values,
        1e-8,
        reference.length,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_mesh;
    use crate::sparse::TripletBuilder;
    use core::f64::consts::{FRAC_PI_3, FRAC_PI_4, PI};

    fn ap(x: f64) -> Aperture {
        Aperture::new(x).unwrap()
    }

    fn diag_pencil(vals: &[f64]) -> SymmetricPencil {
        let n = vals.len();
        let mut k = TripletBuilder::new(n);
        let mut m = TripletBuilder::new(n);
        for (i, v) in vals.iter().enumerate() {
            k.push(i, i, *v * 2.0);
            m.push(i, i, 2.0);
        }
        SymmetricPencil {
            stiffness: k.build(),
            mass: m.build(),
        }
    }

    #[test]
    fn diagonal_pencil() {
        let vals: Vec<f64> = (0..300).map(|i| 0.3 + 0.01 * ((i * 37) % 300) as f64).collect();
        let p = diag_pencil(&vals);
        let r = solve_pencil(&p, &SolverOptions::with_k(5)).unwrap();
        for (i, l) in r.values.iter().enumerate() {
            assert!((l - (0.3 + 0.01 * i as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn tiny_pencil_is_solved_exactly() {
        let p = diag_pencil(&[3.0, 1.0, 2.0]);
        let r = solve_pencil(&p, &SolverOptions::with_k(3)).unwrap();
        for (l, e) in r.values.iter().zip([1.0, 2.0, 3.0]) {
            assert!((l - e).abs() < 1e-12);
        }
    }

    #[test]
    fn shift_does_not_change_eigenvalues() {
        let a = ap(FRAC_PI_4);
        let mesh = build_mesh(a, 4.0 * PI, 24, 8, 1.05).unwrap();
        let op = assemble_fiber(&mesh, &LayerParams::radial(a, 0.2).unwrap()).unwrap();
        let base = SolverOptions {
            k: 3,
            tol: 1e-9,
            ..Default::default()
        };
        let r1 = solve_lowest(&op, &base).unwrap();
        let r2 = solve_lowest(&op, &SolverOptions { shift: -10.0, ..base }).unwrap();
        for (x, y) in r1.eigenvalues.iter().zip(&r2.eigenvalues) {
            assert!((x - y).abs() < 1e-10 * x.abs());
        }
        assert!(r1.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        assert!(r1.residuals.iter().all(|r| *r <= 1e-9));
    }

    #[test]
    fn deterministic_given_seed() {
        let a = ap(1.0);
        let mesh = build_mesh(a, 2.0 * PI, 16, 6, 1.0).unwrap();
        let op = assemble_fiber(&mesh, &LayerParams::radial(a, 0.3).unwrap()).unwrap();
        let o = SolverOptions::with_k(2);
        let r1 = solve_lowest(&op, &o).unwrap();
        let r2 = solve_lowest(&op, &o).unwrap();
        assert_eq!(r1.eigenvalues, r2.eigenvalues);
    }

    #[test]
    fn shift_precondition() {
        let p = diag_pencil(&[1.0, 2.0]);
        let o = SolverOptions {
            shift: 1.0,
            ..SolverOptions::with_k(1)
        };
        assert!(matches!(solve_pencil(&p, &o), Err(PencilError::Fatal(Error::Parameter(_)))));
        let o = SolverOptions {
            k: 0,
            ..Default::default()
        };
        assert!(solve_pencil(&p, &o).is_err());
    }

    #[test]
    fn iteration_cap_returns_partial_results() {
        let a = ap(0.6);
        let mesh = build_mesh(a, 3.0 * PI, 40, 10, 1.0).unwrap();
        let op = assemble_fiber(&mesh, &LayerParams::radial(a, 0.3).unwrap()).unwrap();
        let o = SolverOptions {
            k: 6,
            max_restarts: 0,
            basis: 8,
            tol: 1e-14,
            ..Default::default()
        };
        match solve_lowest(&op, &o) {
            Err(Error::NoConvergence { partial, requested, .. }) => {
                assert_eq!(requested, 6);
                assert_eq!(partial.eigenvalues.len(), 6);
            }
            other => panic!("expected no_convergence, got {other:?}"),
        }
    }

    #[test]
    fn counting_examples() {
        let r = SpectrumResult {
            params: None,
            eigenvalues: alloc::vec![0.90, 0.95, 0.99],
            residuals: alloc::vec![0.0; 3],
            threshold: 1.0,
            delta: 1e-4,
            stable: alloc::vec![true; 3],
            drift: 0.0,
            saturated: true,
            meta: SolverMeta {
                shift_requested: 0.5,
                shift_used: 0.5,
                restarts: 0,
                applications: 0,
                tol: 1e-8,
                seed: 0,
                element: "Q1".into(),
                mesh: None,
                lengths: Vec::new(),
            },
            vectors: Vec::new(),
        };
        assert_eq!(counting_function(&r, 0.05), 1);
        assert_eq!(counting_function(&r, 0.5), 0);
        assert_eq!(counting_function(&r, 1e-9), 3);
    }

    #[test]
    fn transition_estimate() {
        let a = ap(FRAC_PI_3);
        let om = alloc::vec![0.15, 0.175, 0.2, 0.225, 0.25, 0.275];
        let s = TransitionScan::from_counts(a, om.clone(), alloc::vec![3, 2, 2, 1, 0, 0]).unwrap();
        assert!((s.omega_star - 0.2375).abs() < 1e-12);
        assert!(s.is_non_increasing());
        assert!(s.warning.is_none());
        let s = TransitionScan::from_counts(a, om.clone(), alloc::vec![0; 6]).unwrap();
        assert_eq!(s.warning, Some(TransitionWarning::AllEmpty));
        assert_eq!(s.omega_star, 0.15);
        let s = TransitionScan::from_counts(a, om, alloc::vec![1; 6]).unwrap();
        assert_eq!(s.warning, Some(TransitionWarning::NoneEmpty));
    }

    #[test]
    fn monotonicity_hypothesis_is_enforced() {
        let th = [ap(0.5), ap(0.7)];
        let bad = OmegaRule::Explicit(alloc::vec![0.3, 0.2]);
        let spec = MeshSpec::new(20.0, 8, 4, 1.0);
        assert!(monotonicity_scan(&th, &bad, 1, &spec, &SolverOptions::default()).is_err());
        let descending = [ap(0.7), ap(0.5)];
        assert!(monotonicity_scan(
            &descending,
            &OmegaRule::Constant(0.1),
            1,
            &spec,
            &SolverOptions::default()
        )
        .is_err());
    }

    #[test]
    fn monotone_along_theta_and_equal_for_equal_points() {
        let th = [ap(0.5), ap(0.5), ap(0.8), ap(1.1)];
        let spec = MeshSpec::new(4.0 * PI, 24, 8, 1.05);
        let t = monotonicity_scan(&th, &OmegaRule::Constant(0.1), 2, &spec, &SolverOptions::default())
            .unwrap();
        assert!(t.non_decreasing, "{:?}", t.values);
        assert_eq!(t.values[0], t.values[1]);
        let t = monotonicity_scan(
            &[ap(0.5), ap(0.7)],
            &OmegaRule::Compensated(0.2),
            2,
            &spec,
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(t.non_decreasing, "{:?}", t.values);
    }

    #[test]
    fn discrete_spectrum_rejects_single_level() {
        let p = LayerParams::radial(ap(0.5), 0.2).unwrap();
        let o = SpectrumOptions {
            levels: 1,
            ..Default::default()
        };
        assert!(discrete_spectrum(&p, &MeshSpec::new(20.0, 16, 6, 1.0), &o).is_err());
    }

    #[test]
    fn fibers_with_nonzero_m_have_no_discrete_spectrum() {
        for m in [-1, 1] {
            let p = LayerParams::new(ap(0.6), 0.3, m).unwrap();
            let r = discrete_spectrum(&p, &MeshSpec::new(4.0 * PI, 32, 8, 1.05), &SpectrumOptions::default())
                .unwrap();
            assert_eq!(r.discrete_count(), 0);
            assert!(r.lowest() >= 1.0);
        }
    }

    #[test]
    fn small_aperture_has_a_bound_state() {
        let a = ap(0.15);
        let p = LayerParams::radial(a, 0.3).unwrap();
        let r = discrete_spectrum(&p, &MeshSpec::new(100.0, 300, 24, 1.01), &SpectrumOptions::default())
            .unwrap();
        assert!(r.discrete_count() >= 1, "{:?}", r.eigenvalues);
        assert!(r.lowest() < 0.99);
    }
}
