use std::f64::consts::PI;

use ablayer::eigensolve::{monotonicity_point, validate_monotonicity_grid, SpectrumOptions, TransitionScan};
use ablayer::hardy::{estimate_hardy_constant, relative_drift, HardyOptions, HardyReport};
use ablayer::oned::{
    auto_window, fit_counting, layer_slope, log_energy_grid, negative_counting_curve, CountingFit,
    CountingPoint, FitWindow, OneDProblem,
};
use ablayer::{
    assemble_fiber, counting_function, discrete_spectrum, Aperture, Error, LayerParams, MonotonicityTable,
    OmegaRule, ShearedMesh, SpectrumResult,
};
use anyhow::Result;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{CommandKind, CountingMode, RuleKind, RunConfig};
use crate::output::Output;
use crate::svg::{Plot, Series, Style};

pub fn dispatch(cfg: &RunConfig) -> Result<()> {
    let mut out = Output::new(cfg)?;
    let result = match cfg.command {
        CommandKind::Spectrum => spectrum(cfg, &mut out),
        CommandKind::Transition => transition(cfg, &mut out),
        CommandKind::Counting => match cfg.mode {
            CountingMode::Oned => counting_oned(cfg, &mut out),
            CountingMode::Layer => counting_layer(cfg, &mut out),
        },
        CommandKind::Monotonicity => monotonicity(cfg, &mut out),
        CommandKind::Hardy => hardy(cfg, &mut out),
        CommandKind::MeshExport => mesh_export(cfg, &mut out),
    };
    out.report();
    result
}

fn spectrum_options(cfg: &RunConfig) -> SpectrumOptions {
    SpectrumOptions {
        solver: cfg.solver(),
        levels: cfg.levels,
        ..SpectrumOptions::default()
    }
}

#[derive(Serialize)]
struct SpectrumRow {
    theta: f64,
    omega: f64,
    m: i32,
    #[serde(rename = "L")]
    length: f64,
    h: f64,
    index: usize,
    eigenvalue: f64,
    residual: f64,
    stable: bool,
}

#[derive(Serialize)]
struct SpectrumSummary<'a> {
    results: &'a [SpectrumResult],
}

fn spectrum(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let theta = cfg.aperture()?;
    let omega = cfg.omega()?;
    let opts = spectrum_options(cfg);
    let mesh = cfg.mesh();
    let results = cfg
        .m
        .par_iter()
        .map(|&m| discrete_spectrum(&LayerParams::new(theta, omega, m)?, &mesh, &opts))
        .collect::<ablayer::Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for (m, r) in cfg.m.iter().zip(&results) {
        let h = r.meta.mesh.map(|d| d.h_max).unwrap_or(f64::NAN);
        for (i, ((l, res), st)) in r.eigenvalues.iter().zip(&r.residuals).zip(&r.stable).enumerate() {
            rows.push(SpectrumRow {
                theta: theta.radians(),
                omega,
                m: *m,
                length: mesh.length,
                h,
                index: i + 1,
                eigenvalue: *l,
                residual: *res,
                stable: *st,
            });
        }
        println!(
            "m = {m}: {} stable eigenvalue(s) below 1 - {:.2e}: {:?}",
            r.discrete_count(),
            r.delta,
            r.discrete()
        );
    }
    out.table("spectrum", &SpectrumSummary { results: &results }, &rows)?;
    out.svg("spectrum.svg", || {
        let series: Vec<Series> = cfg
            .m
            .iter()
            .zip(&results)
            .map(|(m, r)| Series {
                label: format!("m = {m}"),
                points: r.eigenvalues.iter().enumerate().map(|(i, l)| ((i + 1) as f64, *l)).collect(),
            })
            .collect();
        Plot {
            title: &format!("theta = {}, omega = {omega}", theta.radians()),
            x_label: "index",
            y_label: "eigenvalue",
            style: Style::Markers,
            h_line: Some(ablayer::THRESHOLD),
            v_line: None,
        }
        .render(&series)
    })
}

#[derive(Serialize)]
struct TransitionRow {
    theta: f64,
    omega: f64,
    count: usize,
}

#[derive(Serialize)]
struct TransitionSummary<'a> {
    scan: &'a TransitionScan,
    deviation: f64,
    results: &'a [SpectrumResult],
}

fn transition(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let theta = cfg.aperture()?;
    let grid = cfg.omega_grid.clone().unwrap_or_default();
    let opts = spectrum_options(cfg);
    let mesh = cfg.mesh();
    let results = grid
        .par_iter()
        .map(|&w| discrete_spectrum(&LayerParams::radial(theta, w)?, &mesh, &opts))
        .collect::<ablayer::Result<Vec<_>>>()?;
    let counts: Vec<usize> = results.iter().map(|r| r.discrete_count()).collect();
    let scan = TransitionScan::from_counts(theta, grid.clone(), counts)?;

    println!("omega* = {}", scan.omega_star);
    println!("|omega* - cos(theta)/2| = {}", scan.deviation());
    if let Some(w) = scan.warning {
        eprintln!("warning: {w:?}; omega* sits at the grid edge");
    }
    let rows: Vec<TransitionRow> = grid
        .iter()
        .zip(&scan.counts)
        .map(|(w, c)| TransitionRow {
            theta: theta.radians(),
            omega: *w,
            count: *c,
        })
        .collect();
    let summary = TransitionSummary {
        scan: &scan,
        deviation: scan.deviation(),
        results: &results,
    };
    out.table("transition", &summary, &rows)?;
    out.svg("transition.svg", || {
        Plot {
            title: &format!("bound states at theta = {}", theta.radians()),
            x_label: "omega",
            y_label: "count",
            style: Style::Steps,
            h_line: None,
            v_line: Some(scan.critical),
        }
        .render(&[Series {
            label: "stable count".into(),
            points: rows.iter().map(|r| (r.omega, r.count as f64)).collect(),
        }])
    })
}

#[derive(Serialize)]
struct OnedRow {
    gamma: f64,
    bc: &'static str,
    #[serde(rename = "L1d")]
    length: f64,
    #[serde(rename = "E")]
    e: f64,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "abs_ln_E")]
    abs_ln_e: f64,
}

#[derive(Serialize)]
struct FitSummary<'a> {
    fit: &'a CountingFit,
    relative_deviation: f64,
    eigenvalues: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    caveat: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    spectrum: Option<&'a SpectrumResult>,
}

fn print_fit(fit: &CountingFit) {
    println!(
        "fitted slope {:.6}, theory {:.6}, relative deviation {:.4} ({} points in [{:.3e}, {:.3e}])",
        fit.slope,
        fit.theory_slope,
        fit.relative_deviation(),
        fit.points,
        fit.e_min,
        fit.e_max
    );
}

fn counting_plot(points: &[CountingPoint], fit: &CountingFit, title: &str) -> String {
    let line: Vec<(f64, f64)> = [fit.e_max, fit.e_min]
        .iter()
        .map(|e| {
            let x = e.ln().abs();
            (x, fit.intercept + fit.slope * x)
        })
        .collect();
    Plot {
        title,
        x_label: "|ln E|",
        y_label: "N",
        style: Style::Steps,
        h_line: None,
        v_line: None,
    }
    .render(&[
        Series {
            label: "count".into(),
            points: points.iter().rev().map(|p| (p.abs_ln_e, p.count as f64)).collect(),
        },
        Series {
            label: "fit".into(),
            points: line,
        },
    ])
}

fn counting_oned(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let mut problem = OneDProblem::geometric(cfg.gamma, cfg.bc.into(), cfg.length_1d, cfg.nodes)?;
    if cfg.shifted {
        problem = problem.with_offset_for(cfg.aperture()?);
    }
    let grid = log_energy_grid(cfg.e_max, cfg.e_min.unwrap_or(1e-14), cfg.e_points);
    let curve = negative_counting_curve(&problem, &grid, FitWindow::Auto { drop: cfg.drop.unwrap_or(3) })?;
    print_fit(&curve.fit);
    let rows: Vec<OnedRow> = curve
        .points
        .iter()
        .map(|p| OnedRow {
            gamma: cfg.gamma,
            bc: problem.bc.label(),
            length: cfg.length_1d,
            e: p.e,
            n: p.count,
            abs_ln_e: p.abs_ln_e,
        })
        .collect();
    out.csv("counting.csv", &rows)?;
    out.json(
        "counting_fit.json",
        &FitSummary {
            fit: &curve.fit,
            relative_deviation: curve.fit.relative_deviation(),
            eigenvalues: &curve.eigenvalues,
            caveat: None,
            spectrum: None,
        },
    )?;
    out.svg("counting.svg", || {
        counting_plot(&curve.points, &curve.fit, &format!("gamma = {}, {}", cfg.gamma, problem.bc.label()))
    })
}

#[derive(Serialize)]
struct LayerRow {
    theta: f64,
    omega: f64,
    #[serde(rename = "L")]
    length: f64,
    #[serde(rename = "E")]
    e: f64,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "abs_ln_E")]
    abs_ln_e: f64,
}

const LAYER_CAVEAT: &str = "counts are limited by the truncation length and the mesh; \
    only bindings above the guard band are resolved, far from the asymptotic regime";

fn counting_layer(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let theta = cfg.aperture()?;
    let omega = cfg.omega()?;
    let theory = layer_slope(theta, omega)?;
    let r = discrete_spectrum(&LayerParams::radial(theta, omega)?, &cfg.mesh(), &spectrum_options(cfg))?;
    let mags: Vec<f64> = r.discrete().iter().map(|l| ablayer::THRESHOLD - l).collect();
    let e_min = cfg.e_min.unwrap_or(r.delta).max(r.delta);
    if !(e_min < cfg.e_max) {
        return Err(Error::InsufficientPoints { found: 0, needed: 2 }.into());
    }
    let points: Vec<CountingPoint> = log_energy_grid(cfg.e_max, e_min, cfg.e_points)
        .into_iter()
        .map(|e| CountingPoint {
            e,
            count: counting_function(&r, e),
            abs_ln_e: e.ln().abs(),
        })
        .collect();
    let rows: Vec<LayerRow> = points
        .iter()
        .map(|p| LayerRow {
            theta: theta.radians(),
            omega,
            length: cfg.length,
            e: p.e,
            n: p.count,
            abs_ln_e: p.abs_ln_e,
        })
        .collect();
    out.csv("counting.csv", &rows)?;

    let (lo, hi) = auto_window(&mags, cfg.drop.unwrap_or(0))?;
    let fit = fit_counting(&points, lo.max(e_min), hi, theory)?;
    print_fit(&fit);
    eprintln!("note: {LAYER_CAVEAT}");
    out.json(
        "counting_fit.json",
        &FitSummary {
            fit: &fit,
            relative_deviation: fit.relative_deviation(),
            eigenvalues: &r.discrete(),
            caveat: Some(LAYER_CAVEAT),
            spectrum: Some(&r),
        },
    )?;
    out.svg("counting.svg", || {
        counting_plot(&points, &fit, &format!("theta = {}, omega = {omega}", theta.radians()))
    })
}

#[derive(Serialize)]
struct MonotonicityRow {
    theta: f64,
    omega: f64,
    k: usize,
    #[serde(rename = "E")]
    e: f64,
}

#[derive(Serialize)]
struct MonotonicitySummary<'a> {
    table: &'a MonotonicityTable,
}

fn monotonicity(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let thetas = cfg
        .theta_grid
        .clone()
        .unwrap_or_default()
        .into_iter()
        .map(Aperture::new)
        .collect::<ablayer::Result<Vec<_>>>()?;
    let w0 = cfg.omega()?;
    let rule = match cfg.omega_rule {
        RuleKind::Constant => OmegaRule::Constant(w0),
        RuleKind::Compensated => OmegaRule::Compensated(w0),
    };
    let omegas = rule.omegas(&thetas)?;
    validate_monotonicity_grid(&thetas, &omegas)?;
    let mesh = cfg.mesh();
    let solver = cfg.solver();
    let values = thetas
        .par_iter()
        .zip(&omegas)
        .map(|(t, w)| monotonicity_point(*t, *w, cfg.k, &mesh, &solver))
        .collect::<ablayer::Result<Vec<_>>>()?;
    let table = MonotonicityTable::from_values(&thetas, omegas, values, 1e-8, mesh.length);
    println!(
        "max violation {:.3e}; non-decreasing: {}",
        table.max_violation, table.non_decreasing
    );
    let mut rows = Vec::new();
    for ((t, w), vals) in table.thetas.iter().zip(&table.omegas).zip(&table.values) {
        for (i, e) in vals.iter().enumerate() {
            rows.push(MonotonicityRow {
                theta: *t,
                omega: *w,
                k: i + 1,
                e: *e,
            });
        }
    }
    out.table("monotonicity", &MonotonicitySummary { table: &table }, &rows)?;
    out.svg("monotonicity.svg", || {
        let series: Vec<Series> = (0..cfg.k)
            .map(|i| Series {
                label: format!("E{}", i + 1),
                points: table
                    .thetas
                    .iter()
                    .zip(&table.values)
                    .filter_map(|(t, v)| v.get(i).map(|e| (*t, *e)))
                    .collect(),
            })
            .collect();
        Plot {
            title: "lowest eigenvalues along the aperture grid",
            x_label: "theta",
            y_label: "E",
            style: Style::Lines,
            h_line: Some(ablayer::THRESHOLD),
            v_line: None,
        }
        .render(&series)
    })
}

#[derive(Serialize)]
struct MarginRow<'a> {
    mesh: usize,
    label: &'a str,
    margin: f64,
}

#[derive(Serialize)]
struct HardySummary<'a> {
    reports: &'a [HardyReport],
    c_est: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    drift: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    failure: Option<String>,
}

fn hardy(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let theta = cfg.aperture()?;
    let base = HardyOptions::default();
    let opts = HardyOptions {
        eps_reg: cfg.eps_reg.clone(),
        refined_eps: cfg.eps,
        n_random: cfg.n_random,
        solver: ablayer::SolverOptions {
            tol: cfg.tol,
            seed: cfg.seed,
            ..base.solver
        },
    };
    let mesh = cfg.mesh();
    let mut meshes = vec![mesh];
    if cfg.sweep {
        meshes.push(mesh.refined());
        meshes.push(ablayer::MeshSpec {
            length: 1.25 * mesh.length,
            n_sigma: (1.25 * mesh.n_sigma as f64).round() as usize,
            ..mesh
        });
    }
    let outcomes: Vec<ablayer::Result<HardyReport>> =
        meshes.par_iter().map(|m| estimate_hardy_constant(theta, m, &opts)).collect();

    let mut reports = Vec::new();
    let mut failure = None;
    for o in outcomes {
        match o {
            Ok(r) => reports.push(r),
            Err(Error::NonPositiveEstimate { c_est, report }) => {
                reports.push(*report);
                failure.get_or_insert(Error::NonPositiveEstimate {
                    c_est,
                    report: Box::new(reports[reports.len() - 1].clone()),
                });
            }
            Err(e) => return Err(e.into()),
        }
    }
    let c_est: Vec<f64> = reports.iter().map(|r| r.c_est).collect();
    let drift = (reports.len() > 1).then(|| relative_drift(&c_est));
    for (r, spec) in reports.iter().zip(&meshes) {
        println!(
            "L = {:.4}, {}x{}: c_est = {:.6}, local margin min {:.3e}, refined margin min {:.3e}",
            spec.length,
            spec.n_sigma,
            spec.n_t,
            r.c_est,
            r.local.min(),
            r.refined.min()
        );
    }
    if let Some(d) = drift {
        println!("relative drift {d:.4}");
    }
    out.json(
        "hardy_report.json",
        &HardySummary {
            reports: &reports,
            c_est: c_est.clone(),
            drift,
            failure: failure.as_ref().map(|e| e.to_string()),
        },
    )?;
    let margin_rows = |pick: fn(&HardyReport) -> &ablayer::hardy::Margins| {
        reports
            .iter()
            .enumerate()
            .flat_map(|(i, r)| {
                let m = pick(r);
                m.labels.iter().zip(&m.values).map(move |(l, v)| MarginRow {
                    mesh: i,
                    label: l,
                    margin: *v,
                })
            })
            .collect::<Vec<_>>()
    };
    out.csv("hardy_local_margins.csv", &margin_rows(|r| &r.local))?;
    out.csv("hardy_refined_margins.csv", &margin_rows(|r| &r.refined))?;
    out.svg("hardy.svg", || {
        Plot {
            title: &format!("Hardy estimate at theta = {}", theta.radians()),
            x_label: "regularization (log10)",
            y_label: "lowest eigenvalue",
            style: Style::Lines,
            h_line: Some(0.0),
            v_line: None,
        }
        .render(
            &reports
                .iter()
                .enumerate()
                .map(|(i, r)| Series {
                    label: format!("mesh {i}"),
                    points: r.eps_reg.iter().zip(&r.lambda_min).map(|(e, l)| (e.log10(), *l)).collect(),
                })
                .collect::<Vec<_>>(),
        )
    })?;
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct MeshSummary<'a> {
    mesh: &'a ShearedMesh,
    n_dofs: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    matrices: Vec<MatrixFiles>,
}

#[derive(Serialize)]
struct MatrixFiles {
    m: i32,
    dim: usize,
    stiffness: String,
    mass: String,
}

fn mesh_export(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let theta = cfg.aperture()?;
    let mesh = ShearedMesh::from_spec(theta, &cfg.mesh())?;
    if mesh.truncation_warning {
        eprintln!("warning: L < 4 pi; the artificial boundary biases states near the threshold");
    }
    let mut matrices = Vec::new();
    if cfg.matrices {
        let omega = cfg.omega()?;
        for &m in &cfg.m {
            let op = assemble_fiber(&mesh, &LayerParams::new(theta, omega, m)?)?;
            let (k, mm) = (&op.pencil.stiffness, &op.pencil.mass);
            let tag = format!("m{m}");
            out.text(&format!("K_{tag}.mtx"), &k.to_matrix_market())?;
            out.text(&format!("M_{tag}.mtx"), &mm.to_matrix_market())?;
            out.text(&format!("K_{tag}.coo"), &k.to_coo_text())?;
            out.text(&format!("M_{tag}.coo"), &mm.to_coo_text())?;
            matrices.push(MatrixFiles {
                m,
                dim: k.n,
                stiffness: format!("K_{tag}.mtx"),
                mass: format!("M_{tag}.mtx"),
            });
        }
    }
    println!(
        "mesh: {} nodes, {} cells, {} interior dofs, area {:.6} (L*pi = {:.6})",
        mesh.nodes.len(),
        mesh.cells.len(),
        mesh.n_dofs(),
        mesh.total_area(),
        mesh.length * PI
    );
    out.json(
        "mesh.json",
        &MeshSummary {
            mesh: &mesh,
            n_dofs: mesh.n_dofs(),
            matrices,
        },
    )
}
