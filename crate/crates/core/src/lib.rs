//! Spectral toolkit for the Aharonov-Bohm magnetic Dirichlet Laplacian on
//! conical layers.
//!
//! The three-dimensional operator decomposes over angular momenta into
//! two-dimensional fiber operators on the meridian domain. This crate works
//! with those fibers after rotating the meridian domain onto a corner
//! half-strip and shearing it onto the quarter strip `(0, ∞) × (0, π)`:
//!
//! * [`geometry`] holds the coordinate maps and the graded tensor mesh,
//! * [`forms`] assembles stiffness, mass and Hardy-weight matrices,
//! * [`eigensolve`] computes the lowest eigenvalues by shift-invert Lanczos
//!   and filters truncation artifacts,
//! * [`oned`] handles the half-line comparison operators `-d²/dx² - γ/x²`,
//! * [`hardy`] evaluates the local and refined Hardy-type bounds and
//!   estimates the Hardy constant at critical flux.
//!
//! The crate is `no_std` and only needs `alloc`; all file formats and the
//! command-line front end live in the companion CLI crate.

#![no_std]
#![forbid(unsafe_code)]
// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
#![cfg_attr(test, allow(clippy::approx_constant))]

extern crate alloc;

pub mod dense;
pub mod eigensolve;
pub mod error;
pub mod forms;
pub mod geometry;
pub mod hardy;
pub mod oned;
pub mod quadrature;
pub mod sparse;

pub use eigensolve::{
    counting_function, discrete_spectrum, monotonicity_scan, solve_lowest, MonotonicityTable,
    OmegaRule, SolverOptions, SpectrumOptions, SpectrumResult, TransitionScan,
};
pub use error::{Error, Result};
pub use forms::{
    assemble_fiber, assemble_hardy_weight, critical_flux, gamma_coefficient,
    potential_coefficient, reduce_flux, FluxProfile, LayerParams, OperatorPencil, ReducedFlux,
    SymmetricPencil, WeightVariant,
};
pub use geometry::{build_mesh, Aperture, MeshSpec, ShearedMesh};

/// Bottom of the essential spectrum: the first transverse Dirichlet mode of
/// a layer of width π.
pub const THRESHOLD: f64 = 1.0;
