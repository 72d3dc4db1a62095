//! Patchwise flux equilibration in broken Raviart-Thomas spaces.
//!
//! For every vertex `z` a particular solution `sigma~_z` of the local
//! divergence and jump constraints is written down explicitly in the dual
//! basis of [`crate::rt`], the divergence-free patch space `V(z)` is spanned
//! explicitly, and the minimal `L^2(omega(z))` correction is found from the
//! normal equations. The sum over all vertices is `Q_p - grad_pw R u_h`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::basis::{dim_p, exponents, legendre01, monomials, ref_basis, REF_CENTRE};
use crate::error::{Error, Result};
use crate::hho::HhoSolution;
use crate::mesh::{ref_edge_point, Mesh, Patch, Point};
use crate::poly::PiecewisePoly;
use crate::quadrature::{edge_rule, triangle_rule};
use crate::rt::{basis_on, interpolate, n_remainder, RtBasis};
use crate::source::SourceSamples;

/// Data of the local problems: `G = grad_pw R u_h` and the load.
#[derive(Clone, Copy)]
pub struct FluxData<'a> {
    pub mesh: &'a Mesh,
    pub recon: &'a PiecewisePoly,
    pub samples: &'a SourceSamples,
    /// Replace `f` by its piecewise mean (lowest-order case).
    pub mean_load: bool,
    pub q: usize,
}

impl<'a> FluxData<'a> {
    pub fn new(mesh: &'a Mesh, sol: &'a HhoSolution, samples: &'a SourceSamples, p: usize) -> Self {
        let k = sol.u.k;
        FluxData { mesh, recon: &sol.recon, samples, mean_load: k == 0, q: k + p }
    }

    /// Load values at the samples of `t`.
    pub fn load(&self, t: usize) -> Vec<f64> {
        let c = self.samples.cell(t);
        if self.mean_load {
            let area: f64 = c.weights.iter().sum();
            let mean = c.values.iter().zip(c.weights).map(|(f, w)| f * w).sum::<f64>() / area;
            vec![mean; c.len()]
        } else {
            c.values.to_vec()
        }
    }
}

/// Barycentric coordinate of local vertex `j` at reference point `xi`.
#[inline]
fn hat(j: usize, xi: Point) -> f64 {
    match j {
        0 => 1.0 - xi[0] - xi[1],
        1 => xi[0],
        _ => xi[1],
    }
}

fn local_vertex(mesh: &Mesh, t: usize, z: usize) -> usize {
    mesh.triangles[t].v.iter().position(|&v| v == z).unwrap()
}

/// Equilibrated flux on one vertex patch.
#[derive(Debug, Clone)]
pub struct PatchFlux {
    pub vertex: usize,
    pub interior: bool,
    pub triangles: Vec<usize>,
    pub q: usize,
    /// `sigma~_z` per triangle.
    pub particular: Vec<DVector<f64>>,
    /// Basis of `V(z)`: column `i` of `modes[a]` is mode `i` on `T_a`.
    pub modes: Vec<DMatrix<f64>>,
    pub masses: Vec<DMatrix<f64>>,
    /// Coefficients of the correction in the mode basis.
    pub weights: DVector<f64>,
    /// `R_z = sigma~_z + sum_i weights_i v_i` per triangle.
    pub result: Vec<DVector<f64>>,
    /// `|c^0_{T_N,E_N} - J^0(E_0)|` relative to the data, interior vertices only.
    pub compatibility: f64,
}

impl PatchFlux {
    pub fn dim_v(&self) -> usize {
        self.weights.len()
    }

    pub fn gram(&self) -> DMatrix<f64> {
        let n = self.dim_v();
        let mut g = DMatrix::zeros(n, n);
        for (b, m) in self.modes.iter().zip(&self.masses) {
            g += b.transpose() * m * b;
        }
        g
    }

    pub fn norm_sq(&self) -> f64 {
        self.result.iter().zip(&self.masses).map(|(c, m)| (c.transpose() * m * c)[(0, 0)]).sum()
    }
}

/// `D_n(T) = (f + div G, phi_z p_n)_T` for the centred reference monomials of degree `<= q`.
fn cell_data(d: &FluxData, t: usize, j: usize) -> Vec<f64> {
    let g = d.mesh.geom(t);
    let c = d.samples.cell(t);
    let f = d.load(t);
    let ex = exponents(d.q);
    let mut mono = vec![0.0; ex.len()];
    let mut out = vec![0.0; ex.len()];
    for ((xi, w), fv) in c.ref_points.iter().zip(c.weights).zip(&f) {
        let v = (fv + d.recon.laplacian_ref(&g, t, *xi)) * hat(j, *xi) * w;
        monomials(&ex, xi[0] - REF_CENTRE[0], xi[1] - REF_CENTRE[1], &mut mono);
        for (o, m) in out.iter_mut().zip(&mono) {
            *o += v * m;
        }
    }
    out
}

/// `G_T . n_T` on edge `e` of `t` at global edge parameter `s`.
fn flux_sum_on(mesh: &Mesh, recon: &PiecewisePoly, t: usize, e: usize, s: f64) -> f64 {
    let i = mesh.local_edge(t, e).unwrap();
    let g = mesh.geom(t);
    let r = if mesh.edge_forward(t, i) { s } else { 1.0 - s };
    let v = recon.grad_ref(&g, t, ref_edge_point(i, r));
    let n = g.normal(i);
    v[0] * n[0] + v[1] * n[1]
}

/// Sum over the sides of `e` of `G_T . n_T` at global edge parameter `s`.
fn flux_sum(mesh: &Mesh, recon: &PiecewisePoly, e: usize, s: f64) -> f64 {
    let edge = &mesh.edges[e];
    std::iter::once(edge.plus).chain(edge.minus).map(|t| flux_sum_on(mesh, recon, t, e, s)).sum()
}

/// `J^j(E) = ([G] . nu_E, phi_z t^j)_E`, `0 <= j <= q`.
fn edge_data(d: &FluxData, e: usize, z: usize) -> Vec<f64> {
    let edge = &d.mesh.edges[e];
    let rule = edge_rule(d.q + d.recon.degree + 1);
    let mut out = vec![0.0; d.q + 1];
    for (s, w) in rule.points.iter().zip(&rule.weights) {
        let phi = if edge.v[0] == z { 1.0 - s } else { *s };
        let v = w * edge.length * phi * flux_sum(d.mesh, d.recon, e, *s);
        let mut tp = 1.0;
        for o in out.iter_mut() {
            *o += v * tp;
            tp *= s;
        }
    }
    out
}

/// Explicit particular solution and the `V(z)` basis on one patch.
pub fn patch_problem(d: &FluxData, patch: &Patch) -> (Vec<DVector<f64>>, Vec<DMatrix<f64>>, f64) {
    let mesh = d.mesh;
    let q = d.q;
    let z = patch.vertex;
    let n = patch.triangles.len();
    let bases: Vec<&RtBasis> = patch.triangles.iter().map(|&t| basis_on(mesh, t, q)).collect();
    let locals: Vec<usize> = patch.triangles.iter().map(|&t| local_vertex(mesh, t, z)).collect();
    // T_a has incoming edge E_a (local j+2) and outgoing edge E_{a+1} (local j+1).
    let inc = |a: usize| (locals[a] + 2) % 3;
    let out = |a: usize| (locals[a] + 1) % 3;
    let jumps: Vec<Vec<f64>> = patch.edges.iter().map(|&e| edge_data(d, e, z)).collect();
    let cells: Vec<Vec<f64>> = (0..n).map(|a| cell_data(d, patch.triangles[a], locals[a])).collect();

    let mut sigma: Vec<DVector<f64>> = bases.iter().map(|b| DVector::zeros(b.dim)).collect();
    let mut prev_out = 0.0;
    for a in 0..n {
        let b = bases[a];
        let c_in = if a == 0 { 0.0 } else { jumps[a][0] - prev_out };
        let c_out = cells[a][0] - c_in;
        sigma[a][b.edge_dof(inc(a), 0)] = c_in;
        sigma[a][b.edge_dof(out(a), 0)] = c_out;
        for m in 1..dim_p(q) {
            sigma[a][b.div_dof(m)] = cells[a][m];
        }
        for j in 1..=q {
            sigma[a][b.edge_dof(out(a), j)] = jumps[a + 1][j];
        }
        prev_out = c_out;
    }
    let compatibility = if patch.interior {
        let scale = jumps.iter().map(|j| j[0].abs()).sum::<f64>() + cells.iter().map(|c| c[0].abs()).sum::<f64>();
        (prev_out - jumps[0][0]).abs() / scale.max(f64::MIN_POSITIVE)
    } else {
        0.0
    };
    // The loop solves the constraints with the opposite sign.
    sigma.iter_mut().for_each(|s| s.neg_mut());

    let n_edges = if patch.interior { n } else { n + 1 };
    let nr = n_remainder(q);
    let dim_v = 1 + q * n_edges + n * nr;
    let mut modes: Vec<DMatrix<f64>> = bases.iter().map(|b| DMatrix::zeros(b.dim, dim_v)).collect();
    for a in 0..n {
        let b = bases[a];
        modes[a][(b.edge_dof(inc(a), 0), 0)] = 1.0;
        modes[a][(b.edge_dof(out(a), 0), 0)] = -1.0;
    }
    let mut col = 1;
    for e in 0..n_edges {
        // Edge E_e is outgoing for T_{e-1} and incoming for T_e (cyclically inside).
        let before = if e > 0 { Some(e - 1) } else if patch.interior { Some(n - 1) } else { None };
        let after = if e < n { Some(e) } else { None };
        for l in 1..=q {
            if let Some(a) = before {
                modes[a][(bases[a].edge_dof(out(a), l), col)] = -1.0;
            }
            if let Some(a) = after {
                modes[a][(bases[a].edge_dof(inc(a), l), col)] = 1.0;
            }
            col += 1;
        }
    }
    for a in 0..n {
        for r in 0..nr {
            modes[a][(bases[a].rem_dof(r), col)] = 1.0;
            col += 1;
        }
    }
    debug_assert_eq!(col, dim_v);
    (sigma, modes, compatibility)
}

/// Minimise `|| sigma + sum_i w_i v_i ||` over the mode weights.
pub fn minimise(
    sigma: &[DVector<f64>],
    modes: &[DMatrix<f64>],
    masses: &[DMatrix<f64>],
) -> Result<(DVector<f64>, Vec<DVector<f64>>)> {
    let n = modes[0].ncols();
    let mut gram = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    for ((b, m), s) in modes.iter().zip(masses).zip(sigma) {
        let mb = m * b;
        gram += b.transpose() * &mb;
        rhs -= mb.transpose() * s;
    }
    let chol = gram.cholesky().ok_or_else(|| Error::Solver("patch Gram matrix is not positive definite".into()))?;
    let w = chol.solve(&rhs);
    let result = sigma.iter().zip(modes).map(|(s, b)| s + b * &w).collect();
    Ok((w, result))
}

/// Solve the local problem on one patch.
pub fn patch_flux(d: &FluxData, patch: &Patch) -> Result<PatchFlux> {
    let (particular, modes, compatibility) = patch_problem(d, patch);
    let masses: Vec<DMatrix<f64>> =
        patch.triangles.iter().map(|&t| basis_on(d.mesh, t, d.q).mass_on(&d.mesh.geom(t))).collect();
    let (weights, result) = minimise(&particular, &modes, &masses)
        .map_err(|e| Error::Solver(format!("vertex {}: {e}", patch.vertex)))?;
    Ok(PatchFlux {
        vertex: patch.vertex,
        interior: patch.interior,
        triangles: patch.triangles.clone(),
        q: d.q,
        particular,
        modes,
        masses,
        weights,
        result,
        compatibility,
    })
}

/// Accumulated `Q_p - grad_pw R u_h`.
#[derive(Debug, Clone)]
pub struct Equilibration {
    pub q: usize,
    /// Dual-basis coefficients per triangle.
    pub coeffs: Vec<DVector<f64>>,
    /// `|| Q_p - grad_pw R u_h ||^2_T`.
    pub norm_sq: Vec<f64>,
    /// `sum_z || R_z ||^2` for comparison with the accumulated norm.
    pub patch_norm_sq: f64,
    /// Largest interior compatibility defect.
    pub compatibility: f64,
}

impl Equilibration {
    pub fn norm(&self) -> f64 {
        self.norm_sq.iter().sum::<f64>().sqrt()
    }
}

pub fn equilibrate(mesh: &Mesh, sol: &HhoSolution, samples: &SourceSamples, p: usize) -> Result<Equilibration> {
    let d = FluxData::new(mesh, sol, samples, p);
    let patches = mesh.patches()?;
    let local: Vec<(Vec<usize>, Vec<DVector<f64>>, f64, f64)> = patches
        .par_iter()
        .map(|patch| {
            let f = patch_flux(&d, patch)?;
            let n = f.norm_sq();
            Ok((f.triangles, f.result, n, f.compatibility))
        })
        .collect::<Result<_>>()?;
    let q = d.q;
    let mut coeffs: Vec<DVector<f64>> = (0..mesh.n_triangles()).map(|t| DVector::zeros(basis_on(mesh, t, q).dim)).collect();
    let (mut patch_norm_sq, mut compatibility) = (0.0, 0.0f64);
    // Ascending vertex order.
    for (tris, res, n, c) in local {
        for (t, r) in tris.into_iter().zip(res) {
            coeffs[t] += r;
        }
        patch_norm_sq += n;
        compatibility = compatibility.max(c);
    }
    let norm_sq = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let m = basis_on(mesh, t, q).mass_on(&mesh.geom(t));
            (coeffs[t].transpose() * m * &coeffs[t])[(0, 0)]
        })
        .collect();
    Ok(Equilibration { q, coeffs, norm_sq, patch_norm_sq, compatibility })
}

/// Coefficients of the interpolant `I_RT G` on every triangle.
pub fn interpolate_gradient(mesh: &Mesh, recon: &PiecewisePoly, q: usize) -> Vec<DVector<f64>> {
    (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let g = mesh.geom(t);
            DVector::from_vec(interpolate(mesh, t, q, |xi| (recon.grad_ref(&g, t, xi), recon.laplacian_ref(&g, t, xi))))
        })
        .collect()
}

/// Relative equilibrium defects of `Q_p`.
#[derive(Debug, Clone, Copy)]
pub struct EquilibriumAudit {
    /// `|| div Q_p + Pi_r f ||` relative to `|| Pi_r f ||`, `|| Δ_pw R u_h ||` and `|| h^{-1} G ||`.
    pub divergence: f64,
    /// Interior normal jumps of `Q_p` relative to the one-sided normal fluxes.
    pub jump: f64,
}

/// Audit `Q_p = Q^Δ + G` by quadrature. With `interpolated` the gradient is
/// replaced by its Raviart-Thomas interpolant and `Q_p` is evaluated from
/// dual-basis coefficients only.
pub fn audit(
    mesh: &Mesh,
    sol: &HhoSolution,
    samples: &SourceSamples,
    eq: &Equilibration,
    interpolated: bool,
) -> EquilibriumAudit {
    let q = eq.q;
    let d = FluxData::new(mesh, sol, samples, eq.q - sol.u.k);
    let recon = &sol.recon;
    let full: Option<Vec<DVector<f64>>> = interpolated.then(|| {
        interpolate_gradient(mesh, recon, q).into_iter().zip(&eq.coeffs).map(|(a, b)| a + b).collect()
    });
    let value = |t: usize, xi: Point| -> Point {
        let g = mesh.geom(t);
        let b = basis_on(mesh, t, q);
        match &full {
            Some(c) => b.field(&g, c[t].as_slice(), xi),
            None => {
                let a = b.field(&g, eq.coeffs[t].as_slice(), xi);
                let r = recon.grad_ref(&g, t, xi);
                [a[0] + r[0], a[1] + r[1]]
            }
        }
    };
    let pq = ref_basis(q);
    let (res, scale): (f64, f64) = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let g = mesh.geom(t);
            let b = basis_on(mesh, t, q);
            let c = d.samples.cell(t);
            let f = d.load(t);
            let mut v = vec![0.0; pq.dim];
            let (mut rm, mut fm, mut lm) = (vec![0.0; pq.dim], vec![0.0; pq.dim], vec![0.0; pq.dim]);
            let s = 1.0 / g.det.sqrt();
            for ((xi, w), fv) in c.ref_points.iter().zip(c.weights).zip(&f) {
                let lap = recon.laplacian_ref(&g, t, *xi);
                let div = match &full {
                    Some(cf) => b.field_div(&g, cf[t].as_slice(), *xi),
                    None => b.field_div(&g, eq.coeffs[t].as_slice(), *xi) + lap,
                };
                pq.eval(*xi, &mut v);
                for n in 0..pq.dim {
                    rm[n] += w * (div + fv) * v[n] * s;
                    fm[n] += w * fv * v[n] * s;
                    lm[n] += w * lap * v[n] * s;
                }
            }
            let flux = recon.energy_sq_cell(mesh, t) / (g.diam * g.diam);
            (rm.iter().map(|x| x * x).sum::<f64>(), fm.iter().chain(&lm).map(|x| x * x).sum::<f64>() + flux)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let rule = edge_rule(q + 2);
    let (jres, jscale): (f64, f64) = (0..mesh.n_edges())
        .into_par_iter()
        .filter(|&e| !mesh.edges[e].is_boundary())
        .map(|e| {
            let edge = &mesh.edges[e];
            let (tp, tm) = (edge.plus, edge.minus.unwrap());
            let mut acc = (0.0, 0.0);
            for (s, w) in rule.points.iter().zip(&rule.weights) {
                let side = |t: usize| {
                    let i = mesh.local_edge(t, e).unwrap();
                    let r = if mesh.edge_forward(t, i) { *s } else { 1.0 - s };
                    let v = value(t, ref_edge_point(i, r));
                    v[0] * edge.normal[0] + v[1] * edge.normal[1]
                };
                let (a, b) = (side(tp), side(tm));
                acc.0 += w * edge.length * (a - b).powi(2);
                acc.1 += w * edge.length * (a * a + b * b);
            }
            acc
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let rel = |r: f64, s: f64| if s > 0.0 { (r / s).sqrt() } else { r.sqrt() };
    EquilibriumAudit { divergence: rel(res, scale), jump: rel(jres, jscale) }
}

/// Independent quadrature audit of one patch.
#[derive(Debug, Clone, Copy, Default)]
pub struct PatchAudit {
    /// Divergence condition of `sigma~_z`, relative to the patch data.
    pub divergence: f64,
    /// Jump condition of `sigma~_z` on edges inside the patch, weighted by
    /// `|E|^{-1/2}` and relative to the patch data.
    pub jump: f64,
    /// Normal trace of `sigma~_z` on the edges opposite `z`, relative.
    pub opposite: f64,
    /// Worst `V(z)` mode: scaled divergence, interior jump and opposite trace over its norm.
    pub mode_divergence: f64,
    pub mode_jump: f64,
    pub mode_opposite: f64,
    /// `max_i |(R_z, v_i)| / (||sigma~_z|| ||v_i||)`.
    pub optimality: f64,
}

/// Patch field evaluated from coefficients on `T_a`.
struct PatchField<'a> {
    mesh: &'a Mesh,
    patch: &'a Patch,
    q: usize,
}

impl PatchField<'_> {
    fn value(&self, a: usize, c: &[f64], xi: Point) -> Point {
        let t = self.patch.triangles[a];
        basis_on(self.mesh, t, self.q).field(&self.mesh.geom(t), c, xi)
    }

    fn div(&self, a: usize, c: &[f64], xi: Point) -> f64 {
        let t = self.patch.triangles[a];
        basis_on(self.mesh, t, self.q).field_div(&self.mesh.geom(t), c, xi)
    }

    /// Outward normal flux of `T_a` on its local edge `i` at global edge parameter `s`.
    fn flux(&self, a: usize, c: &[f64], i: usize, s: f64) -> f64 {
        let t = self.patch.triangles[a];
        let r = if self.mesh.edge_forward(t, i) { s } else { 1.0 - s };
        let v = self.value(a, c, ref_edge_point(i, r));
        let n = self.mesh.geom(t).normal(i);
        v[0] * n[0] + v[1] * n[1]
    }

    fn inner(&self, x: &[DVector<f64>], y: &[DVector<f64>]) -> f64 {
        let rule = triangle_rule(self.q + 2);
        let mut acc = 0.0;
        for a in 0..self.patch.triangles.len() {
            let det = self.mesh.geom(self.patch.triangles[a]).det;
            for (xi, w) in rule.points.iter().zip(&rule.weights) {
                let (u, v) = (self.value(a, x[a].as_slice(), *xi), self.value(a, y[a].as_slice(), *xi));
                acc += w * det * (u[0] * v[0] + u[1] * v[1]);
            }
        }
        acc
    }
}

pub fn audit_patch(d: &FluxData, patch: &Patch, flux: &PatchFlux) -> PatchAudit {
    let mesh = d.mesh;
    let q = d.q;
    let z = patch.vertex;
    let n = patch.triangles.len();
    let pf = PatchField { mesh, patch, q };
    let locals: Vec<usize> = patch.triangles.iter().map(|&t| local_vertex(mesh, t, z)).collect();
    let h = |a: usize| mesh.geom(patch.triangles[a]).diam;
    let mut out = PatchAudit::default();

    // Divergence: Pi_q (div sigma~ + phi_z (f + div G)) = 0.
    let pq = ref_basis(q);
    let (mut r, mut s) = (0.0, 0.0);
    for a in 0..n {
        let t = patch.triangles[a];
        let g = mesh.geom(t);
        let c = d.samples.cell(t);
        let f = d.load(t);
        let mut v = vec![0.0; pq.dim];
        let (mut rm, mut fm, mut lm) = (vec![0.0; pq.dim], vec![0.0; pq.dim], vec![0.0; pq.dim]);
        for ((xi, w), fv) in c.ref_points.iter().zip(c.weights).zip(&f) {
            let phi = hat(locals[a], *xi);
            let lap = d.recon.laplacian_ref(&g, t, *xi);
            let div = pf.div(a, flux.particular[a].as_slice(), *xi);
            pq.eval(*xi, &mut v);
            for m in 0..pq.dim {
                let b = w * v[m] / g.det.sqrt();
                rm[m] += (div + phi * (fv + lap)) * b;
                fm[m] += phi * fv * b;
                lm[m] += phi * lap * b;
            }
        }
        r += rm.iter().map(|x| x * x).sum::<f64>();
        // Scale by the two data terms separately: f + div G may cancel.
        s += fm.iter().chain(&lm).map(|x| x * x).sum::<f64>();
    }
    let (div_res, div_scale) = (r, s);

    // Interior patch edges E_1..E_{N-1}, plus E_0 for interior vertices.
    let inner_edges: Vec<(usize, usize, usize)> = (0..n)
        .filter_map(|b| {
            if b == 0 && !patch.interior {
                return None;
            }
            let before = if b == 0 { n - 1 } else { b - 1 };
            Some((patch.edges[b], before, b))
        })
        .collect();
    let rule = edge_rule(q + d.recon.degree + 2);
    let mut leg = vec![0.0; q + 1];
    let (mut r, mut s) = (0.0, 0.0);
    for &(e, before, after) in &inner_edges {
        let edge = &mesh.edges[e];
        let ib = mesh.local_edge(patch.triangles[before], e).unwrap();
        let ia = mesh.local_edge(patch.triangles[after], e).unwrap();
        let (mut rm, mut dm) = (vec![0.0; q + 1], vec![0.0; 2 * q + 2]);
        let sides = [patch.triangles[before], patch.triangles[after]];
        for (t, w) in rule.points.iter().zip(&rule.weights) {
            let phi = if edge.v[0] == z { 1.0 - t } else { *t };
            let one_sided = sides.map(|tri| phi * flux_sum_on(mesh, d.recon, tri, e, *t));
            let jump = pf.flux(before, flux.particular[before].as_slice(), ib, *t)
                + pf.flux(after, flux.particular[after].as_slice(), ia, *t);
            legendre01(q + 1, *t, &mut leg);
            for j in 0..=q {
                let b = w * edge.length * leg[j] / edge.length.sqrt();
                rm[j] += (jump + one_sided[0] + one_sided[1]) * b;
                dm[j] += one_sided[0] * b;
                dm[q + 1 + j] += one_sided[1] * b;
            }
        }
        let hinv = 1.0 / edge.length;
        r += hinv * rm.iter().map(|x| x * x).sum::<f64>();
        s += hinv * dm.iter().map(|x| x * x).sum::<f64>();
    }
    // One scale for both conditions: divergence data and h^{-1/2}-weighted flux data.
    out.divergence = ratio(div_res, div_scale + s);
    out.jump = ratio(r, div_scale + s);

    let trace_sq = |a: usize, c: &[f64], i: usize| -> f64 {
        let e = mesh.tri_edges[patch.triangles[a]][i];
        let len = mesh.edges[e].length;
        rule.points.iter().zip(&rule.weights).map(|(t, w)| w * len * pf.flux(a, c, i, *t).powi(2)).sum()
    };
    let (mut r, mut s) = (0.0, 0.0);
    for a in 0..n {
        for i in 0..3 {
            let v = h(a) * trace_sq(a, flux.particular[a].as_slice(), i);
            if i == locals[a] {
                r += v;
            }
            s += v;
        }
    }
    out.opposite = ratio(r, s);

    // Modes.
    let trule = triangle_rule(q + 2);
    let dim_v = flux.dim_v();
    let cols: Vec<Vec<DVector<f64>>> =
        (0..dim_v).map(|i| flux.modes.iter().map(|b| b.column(i).into_owned()).collect()).collect();
    for v in &cols {
        let norm = pf.inner(v, v);
        let mut dv = 0.0;
        for a in 0..n {
            let g = mesh.geom(patch.triangles[a]);
            let hh = h(a) * h(a);
            dv += trule
                .points
                .iter()
                .zip(&trule.weights)
                .map(|(xi, w)| w * g.det * hh * pf.div(a, v[a].as_slice(), *xi).powi(2))
                .sum::<f64>();
        }
        let mut jv = 0.0;
        for &(e, before, after) in &inner_edges {
            let len = mesh.edges[e].length;
            let ib = mesh.local_edge(patch.triangles[before], e).unwrap();
            let ia = mesh.local_edge(patch.triangles[after], e).unwrap();
            jv += h(after)
                * rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(t, w)| {
                        let j = pf.flux(before, v[before].as_slice(), ib, *t) + pf.flux(after, v[after].as_slice(), ia, *t);
                        w * len * j * j
                    })
                    .sum::<f64>();
        }
        let ov: f64 = (0..n).map(|a| h(a) * trace_sq(a, v[a].as_slice(), locals[a])).sum();
        out.mode_divergence = out.mode_divergence.max((dv / norm).sqrt());
        out.mode_jump = out.mode_jump.max((jv / norm).sqrt());
        out.mode_opposite = out.mode_opposite.max((ov / norm).sqrt());
    }

    // Normal-equation residual relative to the data of the minimisation.
    let sn = pf.inner(&flux.particular, &flux.particular).sqrt();
    for v in &cols {
        let vn = pf.inner(v, v).sqrt();
        let ip = pf.inner(&flux.result, v);
        if sn > 0.0 {
            out.optimality = out.optimality.max(ip.abs() / (sn * vn));
        }
    }
    out
}

fn ratio(r: f64, s: f64) -> f64 {
    if s > 0.0 {
        (r / s).sqrt()
    } else {
        r.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hho::solve;
    use crate::mesh::Domain;

    fn setup(domain: Domain, level: usize, k: usize) -> (Mesh, SourceSamples, HhoSolution) {
        let mesh = Mesh::build(domain, level).unwrap();
        let f = |x: Point| 1.0 + (3.0 * x[0]).sin() * x[1];
        let samples = SourceSamples::new(&mesh, k, &f);
        let sol = solve(&mesh, k, &samples).unwrap();
        (mesh, samples, sol)
    }

    #[test]
    fn patch_audits_hold() {
        for k in 0..=2 {
            for p in 0..=1 {
                let (mesh, samples, sol) = setup(Domain::LShape, 1, k);
                let d = FluxData::new(&mesh, &sol, &samples, p);
                for patch in mesh.patches().unwrap() {
                    let f = patch_flux(&d, &patch).unwrap();
                    let a = audit_patch(&d, &patch, &f);
                    assert!(a.divergence < 1e-10 && a.jump < 1e-10 && a.opposite < 1e-12, "k={k} p={p} {a:?}");
                    assert!(a.mode_divergence < 1e-11 && a.mode_jump < 1e-11 && a.mode_opposite < 1e-11, "{a:?}");
                    assert!(a.optimality < 1e-10, "{a:?}");
                    assert!(f.compatibility < 1e-10);
                }
            }
        }
    }

    #[test]
    fn global_equilibrium() {
        for k in 0..=2 {
            for p in 0..=1 {
                let (mesh, samples, sol) = setup(Domain::Square, 2, k);
                let eq = equilibrate(&mesh, &sol, &samples, p).unwrap();
                for interpolated in [false, true] {
                    let a = audit(&mesh, &sol, &samples, &eq, interpolated);
                    assert!(a.divergence < 1e-10 && a.jump < 1e-10, "k={k} p={p} {a:?}");
                }
            }
        }
    }
}
