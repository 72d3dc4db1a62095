//! Hybrid high-order discretisation of `-Δu = f`, `u = 0` on the boundary.
//!
//! Unknowns are `P_k` polynomials on every triangle and on every edge; facet
//! values on boundary edges are zero. Local dofs of a triangle are ordered as
//! the cell block followed by the blocks of local edges `0, 1, 2`, each in the
//! orthonormal Legendre basis of the edge parametrised from its lower vertex.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::basis::{dim_p, legendre01, ref_basis};
use crate::error::{Error, Result};
use crate::mesh::{ref_edge_point, Mesh, Point};
use crate::poly::PiecewisePoly;
use crate::quadrature::{edge_rule, triangle_rule};
use crate::source::SourceSamples;

/// Element of `V_h = P_k(T) x P_k(F)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HhoVector {
    pub k: usize,
    /// `dim P_k` coefficients per triangle.
    pub cell: Vec<f64>,
    /// `k + 1` coefficients per edge, zero on boundary edges for members of `V_h`.
    pub facet: Vec<f64>,
}

impl HhoVector {
    pub fn zeros(mesh: &Mesh, k: usize) -> Self {
        HhoVector { k, cell: vec![0.0; mesh.n_triangles() * dim_p(k)], facet: vec![0.0; mesh.n_edges() * (k + 1)] }
    }

    /// Local dof vector of triangle `t`.
    pub fn local(&self, mesh: &Mesh, t: usize) -> DVector<f64> {
        let (nk, nf) = (dim_p(self.k), self.k + 1);
        let mut v = DVector::zeros(nk + 3 * nf);
        v.as_mut_slice()[..nk].copy_from_slice(&self.cell[t * nk..(t + 1) * nk]);
        for i in 0..3 {
            let e = mesh.tri_edges[t][i];
            v.as_mut_slice()[nk + i * nf..nk + (i + 1) * nf].copy_from_slice(&self.facet[e * nf..(e + 1) * nf]);
        }
        v
    }

    /// Zero all boundary facet values.
    pub fn clear_boundary(&mut self, mesh: &Mesh) {
        let nf = self.k + 1;
        for (e, edge) in mesh.edges.iter().enumerate() {
            if edge.is_boundary() {
                self.facet[e * nf..(e + 1) * nf].iter_mut().for_each(|x| *x = 0.0);
            }
        }
    }
}

/// Operators of one triangle.
#[derive(Debug, Clone)]
pub struct LocalOperators {
    pub k: usize,
    /// `R`: local dofs to `P_{k+1}` coefficients.
    pub recon: DMatrix<f64>,
    /// `(grad phi_i, grad phi_j)` in `P_{k+1}`.
    pub stiffness: DMatrix<f64>,
    /// `S_TF`: local dofs to `P_k(F)` coefficients, per local edge.
    pub s_tf: [DMatrix<f64>; 3],
    /// Traces of the `P_{k+1}` basis on each local edge, projected onto `P_k(F)`.
    pub trace: [DMatrix<f64>; 3],
    pub edge_length: [f64; 3],
    /// `a_T(u, v) = (grad R u, grad R v) + sum_F |F|^{-1} (S_TF u, S_TF v)`.
    pub matrix: DMatrix<f64>,
}

impl LocalOperators {
    pub fn n_cell(&self) -> usize {
        dim_p(self.k)
    }

    pub fn n_local(&self) -> usize {
        dim_p(self.k) + 3 * (self.k + 1)
    }

    /// Stabilisation matrix `sum_F |F|^{-1} S_TF^T S_TF`.
    pub fn stabilisation(&self) -> DMatrix<f64> {
        let n = self.n_local();
        let mut s = DMatrix::zeros(n, n);
        for i in 0..3 {
            s += self.s_tf[i].transpose() * &self.s_tf[i] / self.edge_length[i];
        }
        s
    }
}

/// Assemble reconstruction, stabilisation and the local bilinear form on `t`.
pub fn local_operators(mesh: &Mesh, t: usize, k: usize) -> LocalOperators {
    let g = mesh.geom(t);
    let b = ref_basis(k + 1);
    let (nk, nk1, nf) = (dim_p(k), dim_p(k + 1), k + 1);
    let nloc = nk + 3 * nf;
    let scale = 1.0 / g.det.sqrt();

    let (mut dx, mut dy) = (vec![0.0; nk1], vec![0.0; nk1]);
    let mut grads = |xi: Point, out: &mut Vec<Point>| {
        b.grad(xi, &mut dx, &mut dy);
        out.clear();
        for i in 0..nk1 {
            let p = g.grad([dx[i], dy[i]]);
            out.push([scale * p[0], scale * p[1]]);
        }
    };
    let mut gv = Vec::with_capacity(nk1);

    let mut stiff = DMatrix::zeros(nk1, nk1);
    let rule = triangle_rule(k + 1);
    for (xi, w) in rule.points.iter().zip(&rule.weights) {
        grads(*xi, &mut gv);
        let wd = w * g.det;
        for i in 0..nk1 {
            for j in 0..=i {
                let v = wd * (gv[i][0] * gv[j][0] + gv[i][1] * gv[j][1]);
                stiff[(i, j)] += v;
                if i != j {
                    stiff[(j, i)] += v;
                }
            }
        }
    }

    // Right-hand side of the reconstruction problem, rows = test functions in P_{k+1}.
    let mut rhs = DMatrix::zeros(nk1, nloc);
    for j in 0..nk {
        for w in 0..nk1 {
            rhs[(w, j)] = stiff[(w, j)];
        }
    }
    let er = edge_rule(k + 2);
    let mut vals = vec![0.0; nk1];
    let mut psi = vec![0.0; nf];
    let mut trace: [DMatrix<f64>; 3] = std::array::from_fn(|_| DMatrix::zeros(nf, nk1));
    let mut edge_length = [0.0; 3];
    for i in 0..3 {
        let len = g.edge_length(i);
        edge_length[i] = len;
        let n = g.normal(i);
        let fwd = mesh.edge_forward(t, i);
        for (s, w) in er.points.iter().zip(&er.weights) {
            let xi = ref_edge_point(i, *s);
            let tg = if fwd { *s } else { 1.0 - s };
            b.eval(xi, &mut vals);
            grads(xi, &mut gv);
            legendre01(nf, tg, &mut psi);
            let wl = w * len;
            let ps = 1.0 / len.sqrt();
            for wi in 0..nk1 {
                let dn = gv[wi][0] * n[0] + gv[wi][1] * n[1];
                for j in 0..nk {
                    rhs[(wi, j)] -= wl * scale * vals[j] * dn;
                }
                for j in 0..nf {
                    rhs[(wi, nk + i * nf + j)] += wl * ps * psi[j] * dn;
                }
            }
            for j in 0..nf {
                for c in 0..nk1 {
                    trace[i][(j, c)] += wl * ps * psi[j] * scale * vals[c];
                }
            }
        }
    }

    let mut recon = DMatrix::zeros(nk1, nloc);
    recon[(0, 0)] = 1.0;
    let kk = stiff.view((1, 1), (nk1 - 1, nk1 - 1)).into_owned();
    let chol = kk.cholesky().expect("reconstruction stiffness is positive definite");
    let sol = chol.solve(&rhs.rows(1, nk1 - 1).into_owned());
    recon.rows_mut(1, nk1 - 1).copy_from(&sol);

    let s_tf: [DMatrix<f64>; 3] = std::array::from_fn(|i| {
        let mut s = DMatrix::zeros(nf, nloc);
        // Pi_F (v_T + (1 - Pi_T) R v) - v_F
        s.columns_mut(0, nk).copy_from(&trace[i].columns(0, nk));
        if nk1 > nk {
            s += trace[i].columns(nk, nk1 - nk) * recon.rows(nk, nk1 - nk);
        }
        for j in 0..nf {
            s[(j, nk + i * nf + j)] -= 1.0;
        }
        s
    });

    let mut matrix = recon.transpose() * &stiff * &recon;
    for i in 0..3 {
        matrix += s_tf[i].transpose() * &s_tf[i] / edge_length[i];
    }
    // Symmetrise round-off.
    let matrix = 0.5 * (&matrix + matrix.transpose());
    LocalOperators { k, recon, stiffness: stiff, s_tf, trace, edge_length, matrix }
}

/// Cell load `(f, phi_j)_T` for `j < dim P_k`.
pub fn cell_load(samples: &SourceSamples, t: usize, k: usize, det: f64) -> DVector<f64> {
    let c = samples.cell(t);
    let b = ref_basis(k);
    let mut v = vec![0.0; b.dim];
    let mut out = DVector::zeros(b.dim);
    let s = 1.0 / det.sqrt();
    for ((xi, w), f) in c.ref_points.iter().zip(c.weights).zip(c.values) {
        b.eval(*xi, &mut v);
        for j in 0..b.dim {
            out[j] += w * f * s * v[j];
        }
    }
    out
}

/// Discrete solution with its potential reconstruction.
#[derive(Debug, Clone)]
pub struct HhoSolution {
    pub u: HhoVector,
    /// `R u_h` in piecewise `P_{k+1}`.
    pub recon: PiecewisePoly,
    /// Cell unknowns plus interior facet unknowns.
    pub ndof: usize,
}

/// Facet numbering of the global (condensed) system.
fn interior_numbering(mesh: &Mesh) -> (Vec<usize>, usize) {
    let mut id = vec![usize::MAX; mesh.n_edges()];
    let mut n = 0;
    for (e, edge) in mesh.edges.iter().enumerate() {
        if !edge.is_boundary() {
            id[e] = n;
            n += 1;
        }
    }
    (id, n)
}

struct Condensed {
    /// Global facet dof of each local facet dof (`None` on the boundary).
    map: Vec<Option<usize>>,
    schur: DMatrix<f64>,
    rhs: DVector<f64>,
    /// `A_cc^{-1} b_c` and `A_cc^{-1} A_cf` for cell recovery.
    cell_b: DVector<f64>,
    cell_a: DMatrix<f64>,
    recon: DMatrix<f64>,
}

fn solve_spd(n: usize, triplets: &[Triplet<usize, usize, f64>], rhs: &[f64]) -> Result<Vec<f64>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, triplets)
        .map_err(|e| Error::Solver(format!("{e:?}")))?;
    let llt = a.sp_cholesky(Side::Lower).map_err(|e| Error::Solver(format!("{e:?}")))?;
    let b = Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
    let x = llt.solve(&b);
    Ok((0..n).map(|i| x[(i, 0)]).collect())
}

/// Solve the discrete problem by static condensation of the cell unknowns
/// followed by a sparse Cholesky factorisation of the facet system.
pub fn solve(mesh: &Mesh, k: usize, samples: &SourceSamples) -> Result<HhoSolution> {
    let (nk, nf) = (dim_p(k), k + 1);
    let (id, n_int) = interior_numbering(mesh);
    let n = n_int * nf;

    let locals: Vec<Condensed> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let op = local_operators(mesh, t, k);
            let g = mesh.geom(t);
            let load = cell_load(samples, t, k, g.det);
            let mut map = Vec::with_capacity(3 * nf);
            for i in 0..3 {
                let e = mesh.tri_edges[t][i];
                for j in 0..nf {
                    map.push((id[e] != usize::MAX).then(|| id[e] * nf + j));
                }
            }
            let a = &op.matrix;
            let acc = a.view((0, 0), (nk, nk)).into_owned();
            let acf = a.view((0, nk), (nk, 3 * nf)).into_owned();
            let aff = a.view((nk, nk), (3 * nf, 3 * nf)).into_owned();
            let chol = acc.cholesky().expect("cell block is positive definite");
            let cell_a = chol.solve(&acf);
            let cell_b = chol.solve(&load);
            let schur = &aff - acf.transpose() * &cell_a;
            let rhs = -(acf.transpose() * &cell_b);
            Condensed { map, schur, rhs, cell_b, cell_a, recon: op.recon }
        })
        .collect();

    let mut trip = Vec::with_capacity(locals.len() * 9 * nf * nf);
    let mut rhs = vec![0.0; n];
    for c in &locals {
        for (a, ga) in c.map.iter().enumerate() {
            let Some(ga) = *ga else { continue };
            rhs[ga] += c.rhs[a];
            for (b, gb) in c.map.iter().enumerate() {
                if let Some(gb) = *gb {
                    trip.push(Triplet::new(ga, gb, c.schur[(a, b)]));
                }
            }
        }
    }
    let x = solve_spd(n, &trip, &rhs)?;

    let mut u = HhoVector::zeros(mesh, k);
    for (e, &i) in id.iter().enumerate() {
        if i != usize::MAX {
            u.facet[e * nf..(e + 1) * nf].copy_from_slice(&x[i * nf..(i + 1) * nf]);
        }
    }
    let mut recon = PiecewisePoly::zeros(mesh.n_triangles(), k + 1);
    for (t, c) in locals.iter().enumerate() {
        let uf = DVector::from_iterator(3 * nf, c.map.iter().map(|g| g.map(|g| x[g]).unwrap_or(0.0)));
        let uc = &c.cell_b - &c.cell_a * &uf;
        u.cell[t * nk..(t + 1) * nk].copy_from_slice(uc.as_slice());
        let mut loc = DVector::zeros(nk + 3 * nf);
        loc.rows_mut(0, nk).copy_from(&uc);
        loc.rows_mut(nk, 3 * nf).copy_from(&uf);
        recon.cell_mut(t).copy_from_slice((&c.recon * loc).as_slice());
    }
    Ok(HhoSolution { u, recon, ndof: n + mesh.n_triangles() * nk })
}

/// Solve the uncondensed system with cell and facet unknowns together.
///
/// Slower than [`solve`]; used to cross-check the condensation.
pub fn solve_monolithic(mesh: &Mesh, k: usize, samples: &SourceSamples) -> Result<HhoVector> {
    let (nk, nf) = (dim_p(k), k + 1);
    let (id, n_int) = interior_numbering(mesh);
    let nc = mesh.n_triangles() * nk;
    let n = nc + n_int * nf;
    let mut trip = Vec::new();
    let mut rhs = vec![0.0; n];
    for t in 0..mesh.n_triangles() {
        let op = local_operators(mesh, t, k);
        let load = cell_load(samples, t, k, mesh.geom(t).det);
        let mut map: Vec<Option<usize>> = (0..nk).map(|j| Some(t * nk + j)).collect();
        for i in 0..3 {
            let e = mesh.tri_edges[t][i];
            for j in 0..nf {
                map.push((id[e] != usize::MAX).then(|| nc + id[e] * nf + j));
            }
        }
        for j in 0..nk {
            rhs[t * nk + j] += load[j];
        }
        for (a, ga) in map.iter().enumerate() {
            for (b, gb) in map.iter().enumerate() {
                if let (Some(ga), Some(gb)) = (ga, gb) {
                    trip.push(Triplet::new(*ga, *gb, op.matrix[(a, b)]));
                }
            }
        }
    }
    let x = solve_spd(n, &trip, &rhs)?;
    let mut u = HhoVector::zeros(mesh, k);
    u.cell.copy_from_slice(&x[..nc]);
    for (e, &i) in id.iter().enumerate() {
        if i != usize::MAX {
            u.facet[e * nf..(e + 1) * nf].copy_from_slice(&x[nc + i * nf..nc + (i + 1) * nf]);
        }
    }
    Ok(u)
}

/// Canonical interpolation `I v = (Pi_T v, Pi_F v)` on all triangles and edges.
pub fn interpolate(mesh: &Mesh, k: usize, v: &dyn Fn(Point) -> f64) -> HhoVector {
    let (nk, nf) = (dim_p(k), k + 1);
    let p = PiecewisePoly::project(mesh, k, |_, g, xi| v(g.map(xi)));
    let mut out = HhoVector::zeros(mesh, k);
    out.cell.copy_from_slice(&p.coeffs);
    debug_assert_eq!(p.dim, nk);
    let er = edge_rule(k + 4);
    let mut psi = vec![0.0; nf];
    for (e, edge) in mesh.edges.iter().enumerate() {
        let (a, b) = (mesh.vertices[edge.v[0]], mesh.vertices[edge.v[1]]);
        let ps = 1.0 / edge.length.sqrt();
        for (s, w) in er.points.iter().zip(&er.weights) {
            let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
            legendre01(nf, *s, &mut psi);
            let fx = v(x);
            for j in 0..nf {
                out.facet[e * nf + j] += w * edge.length * fx * ps * psi[j];
            }
        }
    }
    out
}

/// `R v` for an arbitrary element of the discrete space.
pub fn reconstruct(mesh: &Mesh, v: &HhoVector) -> PiecewisePoly {
    let k = v.k;
    let mut r = PiecewisePoly::zeros(mesh.n_triangles(), k + 1);
    let cells: Vec<Vec<f64>> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let op = local_operators(mesh, t, k);
            (&op.recon * v.local(mesh, t)).as_slice().to_vec()
        })
        .collect();
    for (t, c) in cells.into_iter().enumerate() {
        r.cell_mut(t).copy_from_slice(&c);
    }
    r
}

/// `S_TF v` on each local edge of each triangle.
pub fn stabilisation_traces(mesh: &Mesh, v: &HhoVector) -> Vec<[DVector<f64>; 3]> {
    (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let op = local_operators(mesh, t, v.k);
            let lv = v.local(mesh, t);
            std::array::from_fn(|i| &op.s_tf[i] * &lv)
        })
        .collect()
}

/// `s_h(u, v) = sum_T sum_F |F|^{-1} (S_TF u, S_TF v)_F`.
pub fn stabilisation(mesh: &Mesh, u: &HhoVector, v: &HhoVector) -> f64 {
    (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let op = local_operators(mesh, t, u.k);
            let (lu, lv) = (u.local(mesh, t), v.local(mesh, t));
            (0..3).map(|i| (&op.s_tf[i] * &lu).dot(&(&op.s_tf[i] * &lv)) / op.edge_length[i]).sum::<f64>()
        })
        .sum()
}

/// The comparison form `h_T^{-2} ||Pi_T (v_T - R v)||^2 + sum_F |F|^{-1} ||Pi_F (v_F - R v)||^2`.
pub fn stabilisation_classical(mesh: &Mesh, v: &HhoVector) -> f64 {
    let nk = dim_p(v.k);
    let nf = v.k + 1;
    (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let op = local_operators(mesh, t, v.k);
            let h = mesh.geom(t).diam;
            let lv = v.local(mesh, t);
            let rv = &op.recon * &lv;
            let cell: f64 = (0..nk).map(|j| (lv[j] - rv[j]).powi(2)).sum();
            let mut s = cell / (h * h);
            for i in 0..3 {
                let tr = &op.trace[i] * &rv;
                let d: f64 = (0..nf).map(|j| (lv[nk + i * nf + j] - tr[j]).powi(2)).sum();
                s += d / op.edge_length[i];
            }
            s
        })
        .sum()
}

/// `a_h(u, v)` assembled triangle by triangle.
pub fn bilinear_form(mesh: &Mesh, u: &HhoVector, v: &HhoVector) -> f64 {
    (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let op = local_operators(mesh, t, u.k);
            u.local(mesh, t).dot(&(&op.matrix * v.local(mesh, t)))
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Domain;

    #[test]
    fn reconstruction_is_exact_on_polynomials() {
        let mesh = Mesh::build(Domain::LShape, 1).unwrap();
        for k in 0..=3 {
            let p = |x: Point| match k {
                0 => 1.0 + 2.0 * x[0] - x[1],
                1 => x[0] * x[0] - 3.0 * x[0] * x[1] + x[1],
                2 => x[0].powi(3) + x[0] * x[1] * x[1] - 2.0,
                _ => x[0].powi(2) * x[1].powi(2) - x[1].powi(4) + x[0],
            };
            let iv = interpolate(&mesh, k, &p);
            let r = reconstruct(&mesh, &iv);
            for t in 0..mesh.n_triangles() {
                let g = mesh.geom(t);
                for xi in [[0.1, 0.2], [0.6, 0.3], [0.25, 0.25]] {
                    assert!((r.value_ref(&g, t, xi) - p(g.map(xi))).abs() < 1e-11, "k={k}");
                }
            }
            // S_TF vanishes on interpolated polynomials of degree k+1.
            for s in stabilisation_traces(&mesh, &iv) {
                for f in s {
                    assert!(f.norm() < 1e-11);
                }
            }
        }
    }

    #[test]
    fn condensation_matches_monolithic_solve() {
        let mesh = Mesh::build(Domain::Square, 1).unwrap();
        let f = |x: Point| (x[0] * 3.0).sin() + x[1];
        for k in 0..=2 {
            let s = SourceSamples::new(&mesh, k, &f);
            let a = solve(&mesh, k, &s).unwrap();
            let b = solve_monolithic(&mesh, k, &s).unwrap();
            for (x, y) in a.u.facet.iter().zip(&b.facet) {
                assert!((x - y).abs() < 1e-12);
            }
            for (x, y) in a.u.cell.iter().zip(&b.cell) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn interpolation_of_solution_polynomial() {
        // u = x(1-x)y(1-y) lies in P_{k+1} for k = 3, so u_h = I u.
        let mesh = Mesh::build(Domain::Square, 1).unwrap();
        let u = |x: Point| x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]);
        let f = |x: Point| 2.0 * (x[0] * (1.0 - x[0]) + x[1] * (1.0 - x[1]));
        let s = SourceSamples::new(&mesh, 3, &f);
        let sol = solve(&mesh, 3, &s).unwrap();
        let iu = interpolate(&mesh, 3, &u);
        for (x, y) in sol.u.facet.iter().zip(&iu.facet) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
