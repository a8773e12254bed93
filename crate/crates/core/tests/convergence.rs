mod common;

use ablayer::geometry::{unshear, MeshSpec, ShearedPoint};
use ablayer::sparse::{CsrMatrix, TripletBuilder};
use ablayer::*;
use common::pencil_eigenvalues;
use std::f64::consts::{FRAC_PI_4, PI};

fn ap(x: f64) -> Aperture {
    Aperture::new(x).unwrap()
}

/// P1 Dirichlet Laplacian on the truncated corner half-strip in the
/// original `(s, t)` coordinates, each parallelogram cell split in two.
fn unsheared_p1(theta: Aperture, length: f64, ns: usize, nt: usize) -> (CsrMatrix, CsrMatrix) {
    let point = |i: usize, j: usize| {
        let q = unshear(
            ShearedPoint {
                sigma: length * i as f64 / ns as f64,
                t: PI * j as f64 / nt as f64,
            },
            theta,
        );
        [q.s, q.t]
    };
    let dof = |i: usize, j: usize| {
        (i > 0 && i < ns && j > 0 && j < nt).then(|| (i - 1) * (nt - 1) + (j - 1))
    };
    let n = (ns - 1) * (nt - 1);
    let mut k = TripletBuilder::new(n);
    let mut m = TripletBuilder::new(n);
    for i in 0..ns {
        for j in 0..nt {
            let quads = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            for tri in [[0, 1, 2], [0, 2, 3]] {
                let v: Vec<(usize, usize)> = tri.iter().map(|&c| quads[c]).collect();
                let p: Vec<[f64; 2]> = v.iter().map(|&(a, b)| point(a, b)).collect();
                let area2 = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                    - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
                let area = 0.5 * area2.abs();
                let grad: Vec<[f64; 2]> = (0..3)
                    .map(|a| {
                        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
                        [(p[b][1] - p[c][1]) / area2, (p[c][0] - p[b][0]) / area2]
                    })
                    .collect();
                for a in 0..3 {
                    for b in 0..3 {
                        let (Some(da), Some(db)) = (dof(v[a].0, v[a].1), dof(v[b].0, v[b].1)) else {
                            continue;
                        };
                        k.push(da, db, area * (grad[a][0] * grad[b][0] + grad[a][1] * grad[b][1]));
                        m.push(da, db, area / 12.0 * if a == b { 2.0 } else { 1.0 });
                    }
                }
            }
        }
    }
    (k.build(), m.build())
}

#[test]
fn sheared_and_unsheared_assemblies_agree() {
    let a = ap(FRAC_PI_4);
    let length = 4.0 * PI;
    let params = LayerParams::radial(a, 0.5).unwrap();
    let mut gaps = Vec::new();
    for (ns, nt) in [(16, 8), (32, 16)] {
        let mesh = build_mesh(a, length, ns, nt, 1.0).unwrap();
        let q1 = solve_lowest(&assemble_fiber(&mesh, &params).unwrap(), &SolverOptions::with_k(1))
            .unwrap()
            .eigenvalues[0];
        let (k, m) = unsheared_p1(a, length, ns, nt);
        let p1 = pencil_eigenvalues(&k, &m)[0];
        gaps.push((q1 - p1).abs() / p1);
    }
    assert!(gaps[1] < 5e-3, "{gaps:?}");
    assert!(gaps[1] < gaps[0], "{gaps:?}");
}

#[test]
fn longer_truncation_never_raises_eigenvalues() {
    let a = ap(0.5);
    let params = LayerParams::radial(a, 0.1).unwrap();
    let base = ShearedMesh::from_spec(a, &MeshSpec::new(30.0, 80, 12, 1.02)).unwrap();
    let opts = SolverOptions::with_k(4);
    let short = solve_lowest(&assemble_fiber(&base, &params).unwrap(), &opts).unwrap();
    let long = solve_lowest(&assemble_fiber(&base.extend_to(37.5), &params).unwrap(), &opts).unwrap();
    for (s, l) in short.eigenvalues.iter().zip(&long.eigenvalues) {
        assert!(*l <= s + 1e-6, "{l} > {s}");
    }
}

#[test]
fn nested_refinement_is_non_increasing() {
    let a = ap(0.7);
    let params = LayerParams::radial(a, 0.1).unwrap();
    let opts = SolverOptions::with_k(3);
    let mut spec = MeshSpec::new(20.0, 20, 6, 1.0);
    let mut previous: Option<Vec<f64>> = None;
    for _ in 0..3 {
        let mesh = ShearedMesh::from_spec(a, &spec).unwrap();
        let now = solve_lowest(&assemble_fiber(&mesh, &params).unwrap(), &opts)
            .unwrap()
            .eigenvalues;
        if let Some(prev) = &previous {
            for (p, n) in prev.iter().zip(&now) {
                assert!(*n <= p + opts.tol, "{n} > {p}");
            }
        }
        previous = Some(now);
        spec = spec.refined();
    }
}

#[test]
fn nonzero_fibers_approach_threshold_under_refinement() {
    let a = ap(0.3);
    let params = LayerParams::new(a, 0.1, 1).unwrap();
    let spec = MeshSpec::new(8.0 * PI, 32, 8, 1.05);
    let lowest = |s: &MeshSpec| {
        let mesh = ShearedMesh::from_spec(a, s).unwrap();
        solve_lowest(&assemble_fiber(&mesh, &params).unwrap(), &SolverOptions::with_k(1))
            .unwrap()
            .eigenvalues[0]
    };
    let coarse = lowest(&spec);
    let fine = lowest(&spec.refined());
    assert!(fine >= 1.0 && fine <= coarse, "{coarse} {fine}");
}

#[test]
fn rayleigh_quotient_of_interpolant_bounds_the_ground_state() {
    let a = ap(FRAC_PI_4);
    let mesh = build_mesh(a, 4.0 * PI, 32, 12, 1.05).unwrap();
    let op = assemble_fiber(&mesh, &LayerParams::radial(a, 0.2).unwrap()).unwrap();
    let u: Vec<f64> = op
        .dof_nodes
        .iter()
        .map(|&n| {
            let [sigma, t] = mesh.nodes[n];
            t.sin() * sigma * (-sigma).exp()
        })
        .collect();
    let rq = op.pencil.rayleigh_quotient(&u);
    let lowest = solve_lowest(&op, &SolverOptions::with_k(1)).unwrap().eigenvalues[0];
    assert!(rq >= lowest, "{rq} < {lowest}");
}
