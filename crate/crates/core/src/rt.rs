//! Raviart-Thomas spaces `RT_q` on triangles with a dual basis.
//!
//! Basis functions are built once on the reference triangle for every degree
//! and every pattern of edge orientations, and mapped by the contravariant
//! Piola transform `sigma = J sigma_hat / det J`. The functionals are
//!
//! * edge moments `int_E sigma . n_T t^j`, `0 <= j <= q`, where `t` in `[0,1]`
//!   runs from the lower to the higher global vertex index of `E`;
//! * divergence moments `int_T div sigma p_n` against the centred reference
//!   monomials `p_n` of degree `1..=q`;
//! * remainder moments `int sigma_hat_2 X^l Y^m` on the reference triangle,
//!   `1 <= l <= q-1`, `0 <= m <= q-1-l`.
//!
//! With this choice the edge and divergence moments of a Piola-mapped field
//! equal the ones of its reference field, and the zero-order divergence
//! moment is the sum of the zero-order edge moments.

use std::sync::OnceLock;

use nalgebra::DMatrix;

use crate::basis::{dim_p, exponents, monomials, REF_CENTRE};
use crate::mesh::{ref_edge_point, Mesh, Point, TriGeom, REF_VERTICES};
use crate::quadrature::{edge_rule, triangle_rule};

/// Dimension `(q+1)(q+3)` of `RT_q` on a triangle.
pub fn dim_rt(q: usize) -> usize {
    (q + 1) * (q + 3)
}

/// Number `q(q-1)/2` of remainder moments.
pub fn n_remainder(q: usize) -> usize {
    q * q.saturating_sub(1) / 2
}

/// Bit `i` set when local edge `i` of `t` runs forward.
pub fn orientation(mesh: &Mesh, t: usize) -> u8 {
    (0..3).filter(|&i| mesh.edge_forward(t, i)).fold(0, |p, i| p | (1 << i))
}

#[derive(Debug, Clone)]
pub struct RtBasis {
    pub q: usize,
    pub dim: usize,
    pub pattern: u8,
    exps: Vec<(usize, usize)>,
    /// Row `i`: monomial coefficients of the components of `phi_hat_i`.
    cx: Vec<f64>,
    cy: Vec<f64>,
    /// Reference blocks `int phi_x phi_x`, `int phi_x phi_y`, `int phi_y phi_y`.
    mass: [DMatrix<f64>; 3],
}

impl RtBasis {
    pub fn new(q: usize, pattern: u8) -> Self {
        let exps = exponents(q + 1);
        let nm = exps.len();
        let dim = dim_rt(q);
        // Spanning set P_q^2 + X P~_q in centred coordinates.
        let mut sx = Vec::with_capacity(dim * nm);
        let mut sy = Vec::with_capacity(dim * nm);
        let unit = |e: (usize, usize)| -> Vec<f64> {
            let mut v = vec![0.0; nm];
            v[exps.iter().position(|&x| x == e).unwrap()] = 1.0;
            v
        };
        let zero = vec![0.0; nm];
        for &e in &exponents(q) {
            sx.extend(unit(e));
            sy.extend(&zero);
        }
        for &e in &exponents(q) {
            sx.extend(&zero);
            sy.extend(unit(e));
        }
        for a in (0..=q).rev() {
            let b = q - a;
            sx.extend(unit((a + 1, b)));
            sy.extend(unit((a, b + 1)));
        }
        let probe =
            RtBasis { q, dim, pattern, exps: exps.clone(), cx: sx.clone(), cy: sy.clone(), mass: Default::default() };
        // F[i][j] = lambda_i(psi_j).
        let mut f = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            let l = probe.functionals_of(j);
            for i in 0..dim {
                f[(i, j)] = l[i];
            }
        }
        let inv = f.lu().try_inverse().expect("Raviart-Thomas functional matrix is singular");
        // phi_i = sum_j inv[j][i] psi_j.
        let mut cx = vec![0.0; dim * nm];
        let mut cy = vec![0.0; dim * nm];
        for i in 0..dim {
            for j in 0..dim {
                let c = inv[(j, i)];
                if c == 0.0 {
                    continue;
                }
                for m in 0..nm {
                    cx[i * nm + m] += c * sx[j * nm + m];
                    cy[i * nm + m] += c * sy[j * nm + m];
                }
            }
        }
        let mut b = RtBasis { q, dim, pattern, exps, cx, cy, mass: Default::default() };
        b.mass = b.reference_mass();
        b
    }

    pub fn edge_dof(&self, i: usize, j: usize) -> usize {
        i * (self.q + 1) + j
    }

    /// Dof of the divergence moment against the `n`-th centred monomial, `n >= 1`.
    pub fn div_dof(&self, n: usize) -> usize {
        debug_assert!(n >= 1);
        3 * (self.q + 1) + n - 1
    }

    pub fn rem_dof(&self, r: usize) -> usize {
        3 * (self.q + 1) + dim_p(self.q) - 1 + r
    }

    /// Reference values of all basis functions.
    pub fn eval(&self, xi: Point, vx: &mut [f64], vy: &mut [f64]) {
        let nm = self.exps.len();
        let mut m = [0.0; 64];
        monomials(&self.exps, xi[0] - REF_CENTRE[0], xi[1] - REF_CENTRE[1], &mut m[..nm]);
        for i in 0..self.dim {
            let (rx, ry) = (&self.cx[i * nm..(i + 1) * nm], &self.cy[i * nm..(i + 1) * nm]);
            vx[i] = rx.iter().zip(&m).map(|(a, b)| a * b).sum();
            vy[i] = ry.iter().zip(&m).map(|(a, b)| a * b).sum();
        }
    }

    /// Reference divergences of all basis functions.
    pub fn div(&self, xi: Point, out: &mut [f64]) {
        let nm = self.exps.len();
        let (x, y) = (xi[0] - REF_CENTRE[0], xi[1] - REF_CENTRE[1]);
        let mut dx = [0.0; 64];
        let mut dy = [0.0; 64];
        for (n, &(a, b)) in self.exps.iter().enumerate() {
            dx[n] = if a > 0 { a as f64 * x.powi(a as i32 - 1) * y.powi(b as i32) } else { 0.0 };
            dy[n] = if b > 0 { b as f64 * x.powi(a as i32) * y.powi(b as i32 - 1) } else { 0.0 };
        }
        for i in 0..self.dim {
            let (rx, ry) = (&self.cx[i * nm..(i + 1) * nm], &self.cy[i * nm..(i + 1) * nm]);
            out[i] = rx.iter().zip(&dx).map(|(a, b)| a * b).sum::<f64>()
                + ry.iter().zip(&dy).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// Value of `sum_i c_i phi_i` on the physical triangle at reference point `xi`.
    pub fn field(&self, g: &TriGeom, c: &[f64], xi: Point) -> Point {
        let (mut vx, mut vy) = ([0.0; 64], [0.0; 64]);
        self.eval(xi, &mut vx, &mut vy);
        let hx: f64 = c.iter().zip(&vx).map(|(a, b)| a * b).sum();
        let hy: f64 = c.iter().zip(&vy).map(|(a, b)| a * b).sum();
        let j = &g.jac;
        [(j[0][0] * hx + j[0][1] * hy) / g.det, (j[1][0] * hx + j[1][1] * hy) / g.det]
    }

    /// Physical divergence of `sum_i c_i phi_i` at reference point `xi`.
    pub fn field_div(&self, g: &TriGeom, c: &[f64], xi: Point) -> f64 {
        let mut d = [0.0; 64];
        self.div(xi, &mut d);
        c.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>() / g.det
    }

    /// `L^2(T)` Gram matrix of the mapped basis.
    pub fn mass_on(&self, g: &TriGeom) -> DMatrix<f64> {
        let j = &g.jac;
        let g11 = j[0][0] * j[0][0] + j[1][0] * j[1][0];
        let g12 = j[0][0] * j[0][1] + j[1][0] * j[1][1];
        let g22 = j[0][1] * j[0][1] + j[1][1] * j[1][1];
        let [m11, m12, m22] = &self.mass;
        (m11 * g11 + (m12 + m12.transpose()) * g12 + m22 * g22) / g.det
    }

    fn reference_mass(&self) -> [DMatrix<f64>; 3] {
        let d = self.dim;
        let mut m = [DMatrix::zeros(d, d), DMatrix::zeros(d, d), DMatrix::zeros(d, d)];
        let rule = triangle_rule(self.q + 2);
        let (mut vx, mut vy) = (vec![0.0; d], vec![0.0; d]);
        for (xi, w) in rule.points.iter().zip(&rule.weights) {
            self.eval(*xi, &mut vx, &mut vy);
            for a in 0..d {
                for b in 0..d {
                    m[0][(a, b)] += w * vx[a] * vx[b];
                    m[1][(a, b)] += w * vx[a] * vy[b];
                    m[2][(a, b)] += w * vy[a] * vy[b];
                }
            }
        }
        m
    }

    fn functionals_of(&self, j: usize) -> Vec<f64> {
        let (mut vx, mut vy, mut dv) = (vec![0.0; self.dim], vec![0.0; self.dim], vec![0.0; self.dim]);
        ref_functionals(
            self.q,
            self.pattern,
            |xi| {
                self.eval(xi, &mut vx, &mut vy);
                [vx[j], vy[j]]
            },
            |xi| {
                self.div(xi, &mut dv);
                dv[j]
            },
        )
    }
}

/// The functionals applied to a reference field and its reference divergence.
pub fn ref_functionals(
    q: usize,
    pattern: u8,
    mut sigma: impl FnMut(Point) -> Point,
    mut div: impl FnMut(Point) -> f64,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(dim_rt(q));
    let reference = TriGeom::new(REF_VERTICES);
    let er = edge_rule(q + 3);
    for i in 0..3 {
        let n = reference.normal(i);
        let len = reference.edge_length(i);
        let forward = pattern & (1 << i) != 0;
        let mut mom = vec![0.0; q + 1];
        for (s, w) in er.points.iter().zip(&er.weights) {
            let v = sigma(ref_edge_point(i, *s));
            let t = if forward { *s } else { 1.0 - s };
            let vn = w * len * (v[0] * n[0] + v[1] * n[1]);
            let mut tp = 1.0;
            for m in mom.iter_mut() {
                *m += vn * tp;
                tp *= t;
            }
        }
        out.extend(mom);
    }
    let rule = triangle_rule(q + 3);
    let ex = exponents(q);
    let nd = ex.len();
    let rem: Vec<(usize, usize)> = (1..q).flat_map(|l| (0..q - l).map(move |m| (l, m))).collect();
    let mut dm = vec![0.0; nd];
    let mut rm = vec![0.0; rem.len()];
    let mut mono = vec![0.0; nd];
    for (xi, w) in rule.points.iter().zip(&rule.weights) {
        let (x, y) = (xi[0] - REF_CENTRE[0], xi[1] - REF_CENTRE[1]);
        monomials(&ex, x, y, &mut mono);
        let d = div(*xi);
        for n in 1..nd {
            dm[n] += w * d * mono[n];
        }
        if !rem.is_empty() {
            let s2 = sigma(*xi)[1];
            for (r, &(l, m)) in rem.iter().enumerate() {
                rm[r] += w * s2 * x.powi(l as i32) * y.powi(m as i32);
            }
        }
    }
    out.extend(&dm[1..]);
    out.extend(rm);
    out
}

/// Shared dual basis for degree `q` and orientation pattern.
pub fn rt_basis(q: usize, pattern: u8) -> &'static RtBasis {
    const NQ: usize = 6;
    static CACHE: [OnceLock<RtBasis>; NQ * 8] = [const { OnceLock::new() }; NQ * 8];
    assert!(q < NQ, "Raviart-Thomas degree {q} not supported");
    CACHE[q * 8 + pattern as usize].get_or_init(|| RtBasis::new(q, pattern))
}

/// Dual basis of triangle `t`.
pub fn basis_on(mesh: &Mesh, t: usize, q: usize) -> &'static RtBasis {
    rt_basis(q, orientation(mesh, t))
}

/// Coefficients of the interpolant of a physical field on triangle `t`.
///
/// `field(xi)` returns the physical value and physical divergence at the
/// reference point `xi`.
pub fn interpolate(mesh: &Mesh, t: usize, q: usize, field: impl Fn(Point) -> (Point, f64)) -> Vec<f64> {
    let g = mesh.geom(t);
    let i = &g.inv;
    let det = g.det;
    // sigma_hat = det J^{-1} sigma and div_hat sigma_hat = det div sigma.
    ref_functionals(
        q,
        orientation(mesh, t),
        |xi| {
            let (s, _) = field(xi);
            [det * (i[0][0] * s[0] + i[0][1] * s[1]), det * (i[1][0] * s[0] + i[1][1] * s[1])]
        },
        |xi| det * field(xi).1,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_basis_is_dual() {
        for q in 0..=4 {
            for pattern in 0..8u8 {
                let b = rt_basis(q, pattern);
                for j in 0..b.dim {
                    let l = b.functionals_of(j);
                    for (i, v) in l.iter().enumerate() {
                        let e = if i == j { 1.0 } else { 0.0 };
                        assert!((v - e).abs() < 1e-10, "q={q} pattern={pattern} ({i},{j}) {v}");
                    }
                }
            }
        }
    }

    #[test]
    fn counts() {
        assert_eq!(dim_rt(0), 3);
        assert_eq!(dim_rt(1), 8);
        assert_eq!(dim_rt(2), 15);
        assert_eq!(n_remainder(2), 1);
        let b = rt_basis(2, 0);
        assert_eq!(b.rem_dof(0), 14);
    }

    #[test]
    fn lowest_order_is_classical() {
        // Unit flux through edge i: phi_i = (x - v_i) / (2|T|).
        let b = rt_basis(0, 7);
        let (mut vx, mut vy) = ([0.0; 3], [0.0; 3]);
        let xi = [0.2, 0.3];
        b.eval(xi, &mut vx, &mut vy);
        for i in 0..3 {
            let v = REF_VERTICES[i];
            assert!((vx[i] - (xi[0] - v[0])).abs() < 1e-12 && (vy[i] - (xi[1] - v[1])).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolation_preserves_rt_fields() {
        let mesh = Mesh::build(crate::mesh::Domain::LShape, 1).unwrap();
        let q = 2;
        for t in 0..mesh.n_triangles() {
            let g = mesh.geom(t);
            let b = basis_on(&mesh, t, q);
            let c: Vec<f64> = (0..b.dim).map(|i| ((i * 7 + t) as f64 * 0.31).sin()).collect();
            let back = interpolate(&mesh, t, q, |xi| (b.field(&g, &c, xi), b.field_div(&g, &c, xi)));
            for (a, b) in c.iter().zip(&back) {
                assert!((a - b).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn physical_mass_matches_quadrature() {
        let mesh = Mesh::build(crate::mesh::Domain::Slit, 1).unwrap();
        let t = 3;
        let g = mesh.geom(t);
        let b = basis_on(&mesh, t, 1);
        let m = b.mass_on(&g);
        let rule = triangle_rule(4);
        let mut e = [0.0; 8];
        for i in 0..b.dim {
            for j in 0..b.dim {
                e.iter_mut().for_each(|x| *x = 0.0);
                e[i] = 1.0;
                let mut f = [0.0; 8];
                f[j] = 1.0;
                let v: f64 = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(xi, w)| {
                        let a = b.field(&g, &e, *xi);
                        let c = b.field(&g, &f, *xi);
                        w * g.det * (a[0] * c[0] + a[1] * c[1])
                    })
                    .sum();
                assert!((v - m[(i, j)]).abs() < 1e-12);
            }
        }
    }
}
