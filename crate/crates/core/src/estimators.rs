//! A posteriori error estimators for the energy error `|| grad_pw (u - R u_h) ||`.
//!
//! All three estimators are guaranteed upper bounds with the explicit constants
//! of [`Constants`], which are valid on triangulations into right-isosceles
//! triangles.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::basis::{lattice, ref_basis};
use crate::hho::{local_operators, HhoSolution};
use crate::mesh::{ref_edge_point, Mesh, Point};
use crate::poly::PiecewisePoly;
use crate::quadrature::edge_rule;
use crate::source::SourceSamples;

/// First positive zero of the Bessel function `J_1`, from its power series.
pub fn bessel_j1_first_zero() -> f64 {
    let j1 = |x: f64| {
        // J_1(x) = sum_m (-1)^m (x/2)^{2m+1} / (m! (m+1)!)
        let mut term = x / 2.0;
        let mut s = term;
        let q = -(x * x) / 4.0;
        for m in 0..60 {
            let mf = m as f64;
            term *= q / ((mf + 1.0) * (mf + 2.0));
            s += term;
        }
        s
    };
    let (mut a, mut b) = (3.0, 4.5);
    assert!(j1(a) > 0.0 && j1(b) < 0.0);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if j1(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Explicit constants for right-isosceles triangulations of a domain with
/// maximal interior angle `omega_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    pub omega_max: f64,
    pub m_bd: f64,
    pub c_apx: f64,
    pub c_st: f64,
    /// Volume constant `C_T` (first column of the constants table).
    pub c_vol: f64,
    /// Edge constant `C_F` (second column of the constants table).
    pub c_edge: f64,
    /// Poincare constant `1 / (sqrt 2 pi)` of right-isosceles triangles.
    pub c_p: f64,
    pub c_tr: f64,
    /// Trace-Poincare constant `12 C_P (C_P + C_tr)`.
    pub c_trace: f64,
}

impl Constants {
    pub fn new(omega_max: f64) -> Self {
        let m_bd = 4.0 * omega_max.max(PI) / PI;
        let c_apx = 3f64.sqrt() / (2.0 - 2.0 * (PI / m_bd.max(4.0)).cos());
        let j11 = bessel_j1_first_zero();
        let c_vol = (1.0 / 48.0 + 1.0 / (j11 * j11) + c_apx * c_apx).sqrt();
        let c_st = 1.0 + 72f64.sqrt() * c_apx;
        let c_tr = 5f64.sqrt() / (3.0 * 2f64.sqrt());
        let c_edge = (c_vol * (c_vol + c_tr * c_st)).sqrt();
        let c_p = 1.0 / (2f64.sqrt() * PI);
        let c_trace = 12.0 * c_p * (c_p + c_tr);
        Constants { omega_max, m_bd, c_apx, c_st, c_vol, c_edge, c_p, c_tr, c_trace }
    }
}

/// Global value and squared local refinement indicators.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub value: f64,
    pub indicators: Vec<f64>,
}

/// The four contributions of the residual estimator.
#[derive(Debug, Clone, Copy, Default)]
pub struct ResidualParts {
    pub volume: f64,
    pub oscillation: f64,
    pub normal_jumps: f64,
    pub tangential_jumps: f64,
}

/// Coefficients of `Pi_r f` on triangle `t`, computed from the source samples.
pub fn project_source(samples: &SourceSamples, t: usize, r: usize, det: f64) -> Vec<f64> {
    let c = samples.cell(t);
    let b = ref_basis(r);
    let mut v = vec![0.0; b.dim];
    let mut out = vec![0.0; b.dim];
    let s = 1.0 / det.sqrt();
    for ((xi, w), f) in c.ref_points.iter().zip(c.weights).zip(c.values) {
        b.eval(*xi, &mut v);
        for j in 0..b.dim {
            out[j] += w * f * s * v[j];
        }
    }
    out
}

/// `osc_r(f, T)^2 = h_T^2 || (1 - Pi_r) f ||^2_T` for every triangle.
pub fn oscillation(mesh: &Mesh, samples: &SourceSamples, r: usize) -> Vec<f64> {
    (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let g = mesh.geom(t);
            let p = project_source(samples, t, r, g.det);
            let b = ref_basis(r);
            let mut v = vec![0.0; b.dim];
            let c = samples.cell(t);
            let s = 1.0 / g.det.sqrt();
            let mut acc = 0.0;
            for ((xi, w), f) in c.ref_points.iter().zip(c.weights).zip(c.values) {
                b.eval(*xi, &mut v);
                let pf: f64 = v.iter().zip(&p).map(|(a, b)| a * b).sum::<f64>() * s;
                acc += w * (f - pf).powi(2);
            }
            g.diam * g.diam * acc
        })
        .collect()
}

/// Nodal averaging of a piecewise `P_{k+1}` function into the conforming
/// Lagrange space of degree `k+1` with zero boundary values.
pub fn average(mesh: &Mesh, r: &PiecewisePoly) -> PiecewisePoly {
    let d = r.degree;
    if d == 0 {
        return PiecewisePoly::zeros(mesh.n_triangles(), 0);
    }
    let nodes = lattice(d);
    let nt = mesh.n_triangles();
    // Node classification: vertex (local id), edge (local edge, lattice position s), or interior.
    #[derive(Clone, Copy)]
    enum Kind {
        Vertex(usize),
        Edge(usize, usize),
        Interior,
    }
    let kinds: Vec<Kind> = nodes
        .iter()
        .map(|p| {
            let a = (p[0] * d as f64).round() as usize;
            let b = (p[1] * d as f64).round() as usize;
            let l = [d - a - b, a, b];
            if let Some(v) = (0..3).find(|&i| l[i] == d) {
                Kind::Vertex(v)
            } else if let Some(i) = (0..3).find(|&i| l[i] == 0) {
                // Position from local vertex i+1 towards i+2 is l[i+2].
                Kind::Edge(i, l[(i + 2) % 3])
            } else {
                Kind::Interior
            }
        })
        .collect();

    let values: Vec<Vec<f64>> = (0..nt)
        .into_par_iter()
        .map(|t| {
            let g = mesh.geom(t);
            nodes.iter().map(|p| r.value_ref(&g, t, *p)).collect()
        })
        .collect();

    let bvert = mesh.boundary_vertices();
    let mut vsum = vec![0.0; mesh.n_vertices()];
    let mut vcnt = vec![0usize; mesh.n_vertices()];
    let mut esum: HashMap<(usize, usize), (f64, usize)> = HashMap::new();
    for t in 0..nt {
        for (n, kind) in kinds.iter().enumerate() {
            match *kind {
                Kind::Vertex(i) => {
                    let v = mesh.triangles[t].v[i];
                    vsum[v] += values[t][n];
                    vcnt[v] += 1;
                }
                Kind::Edge(i, s) => {
                    let e = mesh.tri_edges[t][i];
                    let pos = if mesh.edge_forward(t, i) { s } else { d - s };
                    let ent = esum.entry((e, pos)).or_insert((0.0, 0));
                    ent.0 += values[t][n];
                    ent.1 += 1;
                }
                Kind::Interior => {}
            }
        }
    }

    let b = ref_basis(d);
    let dim = b.dim;
    let mut vand = DMatrix::zeros(dim, dim);
    let mut row = vec![0.0; dim];
    for (n, p) in nodes.iter().enumerate() {
        b.eval(*p, &mut row);
        for j in 0..dim {
            vand[(n, j)] = row[j];
        }
    }
    let lu = vand.lu();

    let mut out = PiecewisePoly::zeros(nt, d);
    for t in 0..nt {
        let g = mesh.geom(t);
        let mut vals = nalgebra::DVector::zeros(dim);
        for (n, kind) in kinds.iter().enumerate() {
            vals[n] = match *kind {
                Kind::Vertex(i) => {
                    let v = mesh.triangles[t].v[i];
                    if bvert[v] {
                        0.0
                    } else {
                        vsum[v] / vcnt[v] as f64
                    }
                }
                Kind::Edge(i, s) => {
                    let e = mesh.tri_edges[t][i];
                    if mesh.edges[e].is_boundary() {
                        0.0
                    } else {
                        let pos = if mesh.edge_forward(t, i) { s } else { d - s };
                        let (sum, cnt) = esum[&(e, pos)];
                        sum / cnt as f64
                    }
                }
                Kind::Interior => values[t][n],
            };
        }
        let c = lu.solve(&vals).expect("Lagrange lattice is unisolvent") * g.det.sqrt();
        out.cell_mut(t).copy_from_slice(c.as_slice());
    }
    out
}

/// `|| grad (1 - A) R u_h ||^2_T` for every triangle, together with `A R u_h`.
pub fn averaging_defect(mesh: &Mesh, recon: &PiecewisePoly) -> (PiecewisePoly, Vec<f64>) {
    let a = average(mesh, recon);
    let diff = recon.sub(&a);
    let local = (0..mesh.n_triangles()).into_par_iter().map(|t| diff.energy_sq_cell(mesh, t)).collect();
    (a, local)
}

/// Jump `[grad R u_h]_F` on edge `e` at global parameter `t`, plus minus minus,
/// or the one-sided value on the boundary.
fn gradient_jump(mesh: &Mesh, recon: &PiecewisePoly, e: usize, t: f64) -> Point {
    let edge = &mesh.edges[e];
    let side = |tri: usize| -> Point {
        let i = mesh.local_edge(tri, e).unwrap();
        let s = if mesh.edge_forward(tri, i) { t } else { 1.0 - t };
        let g = mesh.geom(tri);
        recon.grad_ref(&g, tri, ref_edge_point(i, s))
    };
    let gp = side(edge.plus);
    match edge.minus {
        None => gp,
        Some(m) => {
            let gm = side(m);
            [gp[0] - gm[0], gp[1] - gm[1]]
        }
    }
}

/// Per-edge `(|| [G] . nu ||^2, || [G] x nu ||^2)`.
fn jump_norms(mesh: &Mesh, recon: &PiecewisePoly) -> Vec<(f64, f64)> {
    let rule = edge_rule(recon.degree + 1);
    (0..mesh.n_edges())
        .into_par_iter()
        .map(|e| {
            let edge = &mesh.edges[e];
            let n = edge.normal;
            let (mut a, mut b) = (0.0, 0.0);
            for (t, w) in rule.points.iter().zip(&rule.weights) {
                let j = gradient_jump(mesh, recon, e, *t);
                let wl = w * edge.length;
                a += wl * (j[0] * n[0] + j[1] * n[1]).powi(2);
                b += wl * (j[0] * n[1] - j[1] * n[0]).powi(2);
            }
            (a, b)
        })
        .collect()
}

/// Per-triangle `(||f + Δ R u_h||^2, ||(1 - Pi_0)(f + Δ R u_h)||^2, (∫ f)^2 / |T|, ||f - Pi_0 f||^2)`.
fn volume_terms(mesh: &Mesh, recon: &PiecewisePoly, samples: &SourceSamples) -> Vec<[f64; 4]> {
    (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let g = mesh.geom(t);
            let c = samples.cell(t);
            let res: Vec<f64> =
                c.ref_points.iter().zip(c.values).map(|(xi, f)| f + recon.laplacian_ref(&g, t, *xi)).collect();
            let area: f64 = c.weights.iter().sum();
            let mean_r = res.iter().zip(c.weights).map(|(r, w)| r * w).sum::<f64>() / area;
            let int_f: f64 = c.values.iter().zip(c.weights).map(|(f, w)| f * w).sum();
            let mean_f = int_f / area;
            let mut out = [0.0, 0.0, int_f * int_f / area, 0.0];
            for ((r, w), f) in res.iter().zip(c.weights).zip(c.values) {
                out[0] += w * r * r;
                out[1] += w * (r - mean_r).powi(2);
                out[3] += w * (f - mean_f).powi(2);
            }
            out
        })
        .collect()
}

/// Residual-based guaranteed upper bound.
pub fn residual(mesh: &Mesh, sol: &HhoSolution, samples: &SourceSamples, c: &Constants) -> (Estimate, ResidualParts) {
    let k = sol.u.k;
    let recon = &sol.recon;
    let vol = volume_terms(mesh, recon, samples);
    let jumps = jump_norms(mesh, recon);
    let mut p = ResidualParts::default();
    let mut indicators = vec![0.0; mesh.n_triangles()];
    for t in 0..mesh.n_triangles() {
        let g = mesh.geom(t);
        let h2 = g.diam * g.diam;
        if k >= 1 {
            p.volume += h2 * vol[t][0];
        } else {
            p.volume += h2 * vol[t][2];
            p.oscillation += h2 * vol[t][3];
        }
        let mut ind = g.area * vol[t][0];
        for &e in &mesh.tri_edges[t] {
            let (a, b) = jumps[e];
            // Full jump inside, tangential part of the trace on the boundary.
            ind += g.area.sqrt() * if mesh.edges[e].is_boundary() { b } else { a + b };
        }
        indicators[t] = ind;
    }
    for (e, edge) in mesh.edges.iter().enumerate() {
        let l = mesh.trace_weight(e);
        if !edge.is_boundary() {
            p.normal_jumps += l * jumps[e].0;
        }
        p.tangential_jumps += l * jumps[e].1;
    }
    p.volume = p.volume.sqrt();
    p.oscillation = p.oscillation.sqrt();
    p.normal_jumps = p.normal_jumps.sqrt();
    p.tangential_jumps = p.tangential_jumps.sqrt();
    let lin = c.c_vol * p.volume + c.c_p * p.oscillation + c.c_edge * p.normal_jumps;
    let value = (lin * lin + (c.c_edge * p.tangential_jumps).powi(2)).sqrt();
    (Estimate { value, indicators }, p)
}

/// Estimator with stabilisation and averaging contributions.
pub fn hho_estimator(
    mesh: &Mesh,
    sol: &HhoSolution,
    samples: &SourceSamples,
    c: &Constants,
    averaging: &[f64],
) -> Estimate {
    let k = sol.u.k;
    let vol = volume_terms(mesh, &sol.recon, samples);
    let parts: Vec<(f64, f64)> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let g = mesh.geom(t);
            let op = local_operators(mesh, t, k);
            let lu = sol.u.local(mesh, t);
            // R_TF = h_F^{-1} S_TF, so that h_F ||R_TF u||_F^2 sums to s_T(u, u).
            let s: f64 = (0..3).map(|i| (&op.s_tf[i] * &lu).norm_squared() / op.edge_length[i].powi(2)).sum();
            let term = c.c_p * g.diam * vol[t][1].sqrt() + (c.c_trace * g.diam * s).sqrt();
            let ind = g.area * vol[t][1] + averaging[t] + g.area.sqrt() * s;
            (term * term, ind)
        })
        .collect();
    let total: f64 = parts.iter().map(|p| p.0).sum::<f64>() + averaging.iter().sum::<f64>();
    Estimate { value: total.sqrt(), indicators: parts.into_iter().map(|p| p.1).collect() }
}

/// Equilibration-based bound from per-triangle `osc_r^2`, `||Q^Δ||^2` and averaging defects.
pub fn eq_estimator(c: &Constants, osc: &[f64], q_delta: &[f64], averaging: &[f64]) -> Estimate {
    let o: f64 = osc.iter().sum::<f64>().sqrt();
    let q: f64 = q_delta.iter().sum::<f64>().sqrt();
    let a: f64 = averaging.iter().sum();
    let value = ((c.c_p * o + q).powi(2) + a).sqrt();
    let indicators = osc.iter().zip(q_delta).zip(averaging).map(|((o, q), a)| o + q + a).collect();
    Estimate { value, indicators }
}

/// Squared energy error of `R u_h` against an exact gradient.
///
/// Triangles touching `singular` use a rule collapsed at that vertex.
pub fn energy_error_sq(
    mesh: &Mesh,
    recon: &PiecewisePoly,
    grad_u: &(dyn Fn(Point) -> Point + Sync),
    singular: Option<Point>,
) -> f64 {
    let k = recon.degree;
    (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let g = mesh.geom(t);
            crate::source::cell_rule(mesh, t, k + 6, singular, k + 30)
                .into_iter()
                .map(|(xi, x, w)| {
                    let d = recon.grad_ref(&g, t, xi);
                    let e = grad_u(x);
                    w * ((e[0] - d[0]).powi(2) + (e[1] - d[1]).powi(2))
                })
                .sum::<f64>()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Domain;

    #[test]
    fn bessel_zero() {
        assert!((bessel_j1_first_zero() - 3.831_705_970_207_512_3).abs() < 1e-13);
    }

    #[test]
    fn averaging_is_conforming_and_zero_on_boundary() {
        let mesh = Mesh::build(Domain::LShape, 1).unwrap();
        for d in 1..=3 {
            let r = PiecewisePoly::project(&mesh, d, |t, g, xi| {
                let x = g.map(xi);
                (t as f64 * 0.37).sin() + x[0] * x[1] + x[0].powi(d as i32)
            });
            let a = average(&mesh, &r);
            let rule = edge_rule(d + 1);
            for (e, edge) in mesh.edges.iter().enumerate() {
                for s in &rule.points {
                    let (p0, p1) = (mesh.vertices[edge.v[0]], mesh.vertices[edge.v[1]]);
                    let x = [p0[0] + s * (p1[0] - p0[0]), p0[1] + s * (p1[1] - p0[1])];
                    let vp = a.eval(&mesh, edge.plus, x);
                    match edge.minus {
                        Some(m) => assert!((vp - a.eval(&mesh, m, x)).abs() < 1e-12, "d={d} e={e}"),
                        None => assert!(vp.abs() < 1e-12),
                    }
                }
            }
        }
    }

    #[test]
    fn averaging_preserves_conforming_functions() {
        let mesh = Mesh::build(Domain::Square, 1).unwrap();
        let u = |x: Point| x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]);
        let r = PiecewisePoly::project(&mesh, 4, |_, g, xi| u(g.map(xi)));
        let a = average(&mesh, &r);
        for (x, y) in a.coeffs.iter().zip(&r.coeffs) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
