//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::f64::consts::{FRAC_PI_3, FRAC_PI_4, FRAC_PI_6, PI};
use std::time::Instant;

use ablayer::eigensolve::{scan_mesh, solve_pencil};
use ablayer::geometry::MeshSpec;
use ablayer::hardy::{estimate_hardy_constant, HardyForms, HardyOptions, HardyReport};
use ablayer::oned::{
    assemble_1d, ks_slope, log_energy_grid, negative_counting_curve, BoundaryCondition, FitWindow,
    OneDProblem,
};
use ablayer::*;
use common::{pencil_eigenvalues, pencil_eigenvalues_via_stiffness, relative_gap};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn ap(x: f64) -> Aperture {
    Aperture::new(x).unwrap()
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

const SLOPE_TOL: f64 = 0.10;
const GUARD_TOL: f64 = 1e-4;
const FIBER_DELTA_MAX: f64 = 5e-3;
const MONOTONE_TOL: f64 = 1e-8;
const HARDY_DRIFT: f64 = 0.20;
const MARGIN_FLOOR: f64 = -1e-8;
const ORACLE_TOL: f64 = 1e-8;
const ORACLE_MAX_DOFS: usize = 2000;

/// A pencil small enough for the dense check, recorded by the criteria that
/// build it.
struct OracleCase {
    label: String,
    pencil: SymmetricPencil,
    sparse: Vec<f64>,
    /// Reduce through the stiffness factor; used when the mass side is
    /// nearly singular.
    via_stiffness: bool,
}

fn counting_slopes() -> Outcome {
    let theory = ks_slope(5.0).unwrap();
    let grid = log_energy_grid(0.9, 1e-14, 600);
    let mut pass = true;
    let mut parts = vec![format!("theory {theory:.5}")];
    for bc in [BoundaryCondition::Dirichlet, BoundaryCondition::Neumann] {
        let p = OneDProblem::geometric(5.0, bc, 12f64.exp(), 8000).unwrap();
        match negative_counting_curve(&p, &grid, FitWindow::default()) {
            Ok(c) => {
                let dev = c.fit.relative_deviation();
                pass &= dev <= SLOPE_TOL;
                parts.push(format!(
                    "{} slope {:.5} ({:.2}% off, {} points)",
                    bc.label(),
                    c.fit.slope,
                    100.0 * dev,
                    c.fit.points
                ));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{}: {e}", bc.label()));
            }
        }
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn bracketing_sandwich() -> Outcome {
    let theta = ap(0.15);
    let omega = 0.3;
    let params = LayerParams::radial(theta, omega).unwrap();
    let opts = SpectrumOptions {
        solver: SolverOptions::with_k(4),
        ..Default::default()
    };
    let spectrum = match discrete_spectrum(&params, &MeshSpec::new(800.0, 600, 48, 1.01), &opts) {
        Ok(s) => s,
        Err(e) => {
            return Outcome {
                pass: false,
                detail: format!("2D solve failed: {e}"),
            }
        }
    };
    let gamma = gamma_coefficient(omega, theta);
    let scale = (1.0 + PI * theta.cot()).powi(2);
    let levels = |bc| {
        let p = OneDProblem::geometric(gamma, bc, 12f64.exp(), 8000).unwrap();
        assemble_1d(&p).negative_eigenvalues()
    };
    let dirichlet = levels(BoundaryCondition::Dirichlet);
    let neumann = levels(BoundaryCondition::Neumann);

    // a truncation-sensitive eigenvalue below 1 - E would make the counts
    // at the two lengths differ
    let unstable_floor = spectrum
        .eigenvalues
        .iter()
        .zip(&spectrum.stable)
        .filter(|(_, s)| !**s)
        .map(|(l, _)| *l)
        .fold(f64::INFINITY, f64::min);
    let energies: Vec<f64> = log_energy_grid(0.5, spectrum.delta, 80)
        .into_iter()
        .filter(|e| 1.0 - e < unstable_floor)
        .collect();
    let mut lower_ok = true;
    let mut c_emp = 0i64;
    for &e in &energies {
        let n2d = counting_function(&spectrum, e) as i64;
        let nd = dirichlet.iter().filter(|l| **l < -scale * e).count() as i64;
        let nn = neumann.iter().filter(|l| **l < -e).count() as i64;
        lower_ok &= nd <= n2d;
        c_emp = c_emp.max(n2d - nn);
    }
    let pass = lower_ok && energies.len() >= 5 && spectrum.discrete_count() >= 1;
    Outcome {
        pass,
        detail: format!(
            "{} admissible E in [{:.1e}, 0.5], stable eigenvalues {:?}, lower bound {}, C = {}",
            energies.len(),
            spectrum.delta,
            spectrum.discrete(),
            if lower_ok { "holds" } else { "violated" },
            c_emp.max(0)
        ),
    }
}

fn spectral_transition() -> Outcome {
    let theta = ap(FRAC_PI_3);
    let omegas: Vec<f64> = (0..9).map(|i| 0.15 + 0.025 * i as f64).collect();
    let mesh = MeshSpec::new(200.0, 400, 40, 1.01);
    let opts = SpectrumOptions {
        solver: SolverOptions::with_k(3),
        ..Default::default()
    };
    let mut counts = Vec::new();
    for &w in &omegas {
        match discrete_spectrum(&LayerParams::radial(theta, w).unwrap(), &mesh, &opts) {
            Ok(r) => counts.push(r.discrete_count()),
            Err(e) => {
                return Outcome {
                    pass: false,
                    detail: format!("ω={w}: {e}"),
                }
            }
        }
    }
    let scan = TransitionScan::from_counts(theta, omegas.clone(), counts).unwrap();
    let empty_above = omegas
        .iter()
        .zip(&scan.counts)
        .filter(|(w, _)| **w >= 0.275 - 1e-12)
        .all(|(_, c)| *c == 0);
    let pass = scan.is_non_increasing()
        && scan.counts[0] >= 1
        && empty_above
        && scan.deviation() <= 0.025 + 1e-12;
    Outcome {
        pass,
        detail: format!(
            "counts {:?}, ω* = {:.4} (|ω* - 0.25| = {:.4}){}",
            scan.counts,
            scan.omega_star,
            scan.deviation(),
            scan.warning.map(|w| format!(", warning {w:?}")).unwrap_or_default()
        ),
    }
}

fn supercritical_emptiness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0004);
    let mesh = MeshSpec::new(40.0, 160, 24, 1.02);
    let opts = SpectrumOptions {
        solver: SolverOptions::with_k(2),
        ..Default::default()
    };
    let mut worst: f64 = f64::INFINITY;
    let mut bound = 0;
    for _ in 0..10 {
        let theta = ap(uniform(&mut rng, 0.05, 1.52));
        let omega = uniform(&mut rng, 0.5 * theta.cos(), 0.5).max(1e-9);
        match discrete_spectrum(&LayerParams::radial(theta, omega).unwrap(), &mesh, &opts) {
            Ok(r) => {
                bound += counting_function(&r, GUARD_TOL);
                worst = worst.min(r.lowest());
            }
            Err(e) => {
                return Outcome {
                    pass: false,
                    detail: format!("θ={} ω={omega}: {e}", theta.radians()),
                }
            }
        }
    }
    Outcome {
        pass: bound == 0,
        detail: format!("{bound} stable eigenvalues below 1 - 1e-4 over 10 draws, lowest {worst:.6}"),
    }
}

fn fiber_bound(oracle: &mut Vec<OracleCase>) -> Outcome {
    let reference = MeshSpec::new(8.0 * PI, 64, 16, 1.05);
    let mut pass = true;
    let mut worst_ref: f64 = 0.0;
    let mut lowest: f64 = f64::INFINITY;
    for m in [-2, -1, 1, 2] {
        for theta in [0.3, FRAC_PI_4, 1.2] {
            for omega in [0.1, 0.5] {
                let a = ap(theta);
                let params = LayerParams::new(a, omega, m).unwrap();
                let mut deltas = [0.0; 2];
                let mut values = [0.0; 2];
                for (slot, spec) in [reference, reference.refined()].iter().enumerate() {
                    let mesh = ShearedMesh::from_spec(a, spec).unwrap();
                    let op = assemble_fiber(&mesh, &params).unwrap();
                    let r = solve_lowest(&op, &SolverOptions::with_k(1)).unwrap();
                    values[slot] = r.eigenvalues[0];
                    deltas[slot] = (1.0 - r.eigenvalues[0]).max(0.0);
                    if op.pencil.dim() <= ORACLE_MAX_DOFS {
                        oracle.push(OracleCase {
                            label: format!("fiber m={m} θ={theta:.3} ω={omega}"),
                            pencil: op.pencil,
                            sparse: r.eigenvalues,
                            via_stiffness: false,
                        });
                    }
                }
                lowest = lowest.min(values[0]);
                worst_ref = worst_ref.max(deltas[0]);
                pass &= deltas[0] < FIBER_DELTA_MAX && deltas[1] <= deltas[0] && values[1] <= values[0];
            }
        }
    }
    Outcome {
        pass,
        detail: format!(
            "24 cases, lowest reference eigenvalue {lowest:.6}, largest δ_disc {worst_ref:.2e}, non-increasing under refinement: {pass}"
        ),
    }
}

fn monotonicity(oracle: &mut Vec<OracleCase>) -> Outcome {
    let thetas: Vec<Aperture> = [0.5, 0.7, 0.9, 1.1].into_iter().map(ap).collect();
    let reference = MeshSpec::new(30.0, 120, 16, 1.02);
    let solver = SolverOptions::default();
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, rule) in [
        ("fixed ω=0.1", OmegaRule::Constant(0.1)),
        ("compensated ω₁=0.1", OmegaRule::Compensated(0.1)),
        ("compensated ω₁=0.2", OmegaRule::Compensated(0.2)),
    ] {
        match monotonicity_scan(&thetas, &rule, 2, &reference, &solver) {
            Ok(table) => {
                pass &= table.max_violation <= MONOTONE_TOL;
                let e1: Vec<String> = table.values.iter().map(|v| format!("{:.5}", v[0])).collect();
                parts.push(format!(
                    "{name}: E₁ {} max violation {:.1e}",
                    e1.join(" ≤ "),
                    table.max_violation.max(0.0)
                ));
                for (t, (w, v)) in thetas.iter().zip(table.omegas.iter().zip(&table.values)) {
                    let mesh = scan_mesh(*t, &reference).unwrap();
                    let op = assemble_fiber(&mesh, &LayerParams::radial(*t, *w).unwrap()).unwrap();
                    if op.pencil.dim() <= ORACLE_MAX_DOFS {
                        oracle.push(OracleCase {
                            label: format!("scan θ={:.2} ω={w:.4}", t.radians()),
                            pencil: op.pencil,
                            sparse: v.clone(),
                            via_stiffness: false,
                        });
                    }
                }
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{name}: {e}"));
            }
        }
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn hardy_positivity(oracle: &mut Vec<OracleCase>) -> Outcome {
    let opts = HardyOptions::default();
    let mut pass = true;
    let mut parts = Vec::new();
    for theta in [FRAC_PI_6, FRAC_PI_4, FRAC_PI_3] {
        let a = ap(theta);
        let base = MeshSpec::new(4.0 * PI, 32, 16, 1.05);
        let enlarged = MeshSpec::new(5.0 * PI, 40, 16, 1.05);
        let mut reports: Vec<HardyReport> = Vec::new();
        for spec in [base, base.refined(), enlarged] {
            match estimate_hardy_constant(a, &spec, &opts) {
                Ok(r) => reports.push(r),
                Err(e) => {
                    pass = false;
                    parts.push(format!("θ={theta:.4}: {e}"));
                    continue;
                }
            }
            let mesh = ShearedMesh::from_spec(a, &spec).unwrap();
            let forms = HardyForms::assemble(&mesh);
            let shifted = forms.critical_stiffness().linear_combination(1.0, &forms.mass, -1.0);
            if shifted.n <= ORACLE_MAX_DOFS {
                for &eps in &opts.eps_reg {
                    let pencil = SymmetricPencil {
                        stiffness: shifted.clone(),
                        mass: forms.weight.linear_combination(1.0, &forms.mass, eps),
                    };
                    let sparse = solve_pencil(&pencil, &opts.solver).unwrap().values;
                    oracle.push(OracleCase {
                        label: format!("hardy θ={theta:.4} n={} ε={eps:.0e}", shifted.n),
                        pencil,
                        sparse,
                        via_stiffness: true,
                    });
                }
            }
        }
        if reports.len() < 3 {
            continue;
        }
        let c: Vec<f64> = reports.iter().map(|r| r.c_est).collect();
        let drift = ablayer::hardy::relative_drift(&c);
        let local = reports.iter().map(|r| r.local.min()).fold(f64::INFINITY, f64::min);
        let refined = reports.iter().map(|r| r.refined.min()).fold(f64::INFINITY, f64::min);
        pass &= c.iter().all(|x| *x > 0.0)
            && drift <= HARDY_DRIFT
            && local >= MARGIN_FLOOR
            && refined >= MARGIN_FLOOR;
        parts.push(format!(
            "θ={theta:.4}: c_est {:.4}/{:.4}/{:.4} drift {:.1}% local min {local:.2e} refined min {refined:.2e}",
            c[0],
            c[1],
            c[2],
            100.0 * drift
        ));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn oracle_equivalence(mut cases: Vec<OracleCase>) -> Outcome {
    // the coarse mesh named for the fiber assembly
    let a = ap(FRAC_PI_4);
    let mesh = build_mesh(a, 4.0 * PI, 16, 8, 1.05).unwrap();
    let op = assemble_fiber(&mesh, &LayerParams::radial(a, 0.45).unwrap()).unwrap();
    let r = solve_lowest(&op, &SolverOptions::with_k(3)).unwrap();
    cases.push(OracleCase {
        label: "coarse θ=π/4 ω=0.45".into(),
        pencil: op.pencil,
        sparse: r.eigenvalues,
        via_stiffness: false,
    });
    let mut worst: f64 = 0.0;
    let mut worst_label = String::new();
    let mut largest = 0;
    for case in &cases {
        let (k, m) = (&case.pencil.stiffness, &case.pencil.mass);
        let dense = if case.via_stiffness {
            pencil_eigenvalues_via_stiffness(k, m)
        } else {
            pencil_eigenvalues(k, m)
        };
        largest = largest.max(case.pencil.dim());
        for (s, d) in case.sparse.iter().zip(&dense) {
            let gap = relative_gap(*s, *d);
            if gap > worst {
                worst = gap;
                worst_label.clone_from(&case.label);
            }
        }
    }
    Outcome {
        pass: worst <= ORACLE_TOL,
        detail: format!(
            "{} pencils up to {largest} DOFs, worst relative gap {worst:.1e} ({worst_label})",
            cases.len()
        ),
    }
}

fn flux_reduction() -> Outcome {
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    let strategy = (prop::collection::vec(-5.0f64..5.0, 1..64), -20i32..20);
    let result = runner.run(&strategy, |(samples, k)| {
        let base = reduce_flux(&FluxProfile::new(samples.clone()).unwrap()).omega;
        let shifted: Vec<f64> = samples.iter().map(|x| x + k as f64).collect();
        let negated: Vec<f64> = samples.iter().map(|x| -x).collect();
        let s = reduce_flux(&FluxProfile::new(shifted).unwrap()).omega;
        let n = reduce_flux(&FluxProfile::new(negated).unwrap()).omega;
        prop_assert!((0.0..=0.5).contains(&base));
        prop_assert!((s - base).abs() < 1e-9, "shift by {}: {} vs {}", k, s, base);
        prop_assert!((n - base).abs() < 1e-12, "negation: {} vs {}", n, base);
        Ok(())
    });
    Outcome {
        pass: result.is_ok(),
        detail: match result {
            Ok(()) => "1000 random profiles: integer shifts and negation leave the reduced flux unchanged, values in [0, 1/2]".into(),
            Err(e) => format!("{e}"),
        },
    }
}

fn main() {
    let mut oracle_cases = Vec::new();
    let mut failures = 0;
    let mut report = |n: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        if !o.pass {
            failures += 1;
        }
        println!(
            "criterion {n} [{}] {name}: {} ({:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    };
    report(1, "half-line counting slope", &mut counting_slopes);
    report(2, "bracketing sandwich", &mut bracketing_sandwich);
    report(3, "spectral transition", &mut spectral_transition);
    report(4, "supercritical emptiness", &mut supercritical_emptiness);
    report(5, "nonzero fiber bound", &mut || fiber_bound(&mut oracle_cases));
    report(6, "aperture monotonicity", &mut || monotonicity(&mut oracle_cases));
    report(7, "Hardy positivity", &mut || hardy_positivity(&mut oracle_cases));
    let cases = std::mem::take(&mut oracle_cases);
    let mut cases = Some(cases);
    report(8, "dense oracle equivalence", &mut || oracle_equivalence(cases.take().unwrap()));
    report(9, "flux reduction", &mut flux_reduction);
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
