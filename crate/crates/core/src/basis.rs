//! Orthonormal polynomial bases.
//!
//! Cell bases live on the reference triangle and are orthonormalized once per
//! degree by modified Gram-Schmidt against the exact mass matrix of monomials
//! centred at the reference barycentre. On a physical triangle `T` with affine
//! map `F_T` the function `phi_i = phi_hat_i o F_T^{-1} / sqrt(det J_T)` is
//! `L^2(T)`-orthonormal, and the ordering by total degree makes the degree-`k`
//! basis a prefix of the degree-`k+1` basis.

use std::sync::OnceLock;

use crate::quadrature::triangle_rule;

/// Number of monomials of total degree at most `k` in two variables.
pub fn dim_p(k: usize) -> usize {
    (k + 1) * (k + 2) / 2
}

/// Exponents `(a, b)` of `X^a Y^b`, ordered by total degree, then by descending `a`.
pub fn exponents(k: usize) -> Vec<(usize, usize)> {
    let mut e = Vec::with_capacity(dim_p(k));
    for d in 0..=k {
        for a in (0..=d).rev() {
            e.push((a, d - a));
        }
    }
    e
}

/// Centre of the monomials in reference coordinates.
pub const REF_CENTRE: [f64; 2] = [1.0 / 3.0, 1.0 / 3.0];

/// Orthonormal basis of `P_k` on the reference triangle.
#[derive(Debug, Clone)]
pub struct RefBasis {
    pub degree: usize,
    pub dim: usize,
    exps: Vec<(usize, usize)>,
    /// Row `i` holds the monomial coefficients of `phi_hat_i`, lower triangular.
    coef: Vec<f64>,
}

impl RefBasis {
    pub fn new(degree: usize) -> Self {
        let exps = exponents(degree);
        let dim = exps.len();
        let rule = triangle_rule(degree + 1);
        let nq = rule.len();
        // Weighted samples of each monomial; the discrete inner product is exact on P_degree.
        let mut mono = vec![0.0; dim];
        let mut cols = vec![vec![0.0; nq]; dim];
        for (q, (p, w)) in rule.points.iter().zip(&rule.weights).enumerate() {
            monomials(&exps, p[0] - REF_CENTRE[0], p[1] - REF_CENTRE[1], &mut mono);
            for i in 0..dim {
                cols[i][q] = w.sqrt() * mono[i];
            }
        }
        // Modified Gram-Schmidt with one reorthogonalisation pass, tracking
        // the monomial coefficients of every orthonormal function.
        let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
        let mut coef = vec![0.0; dim * dim];
        let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(dim);
        for i in 0..dim {
            let mut v = cols[i].clone();
            let mut c = vec![0.0; dim];
            c[i] = 1.0;
            for _ in 0..2 {
                for j in 0..i {
                    let r = dot(&v, &ortho[j]);
                    for q in 0..nq {
                        v[q] -= r * ortho[j][q];
                    }
                    for l in 0..=j {
                        c[l] -= r * coef[j * dim + l];
                    }
                }
            }
            let n = dot(&v, &v).sqrt();
            v.iter_mut().for_each(|x| *x /= n);
            for l in 0..=i {
                coef[i * dim + l] = c[l] / n;
            }
            ortho.push(v);
        }
        RefBasis { degree, dim, exps, coef }
    }

    /// Values of all basis functions at reference point `p`.
    pub fn eval(&self, p: [f64; 2], out: &mut [f64]) {
        let mut mono = [0.0; 64];
        let mono = &mut mono[..self.dim];
        monomials(&self.exps, p[0] - REF_CENTRE[0], p[1] - REF_CENTRE[1], mono);
        self.combine(mono, out);
    }

    /// Reference gradients `(d/dxi, d/deta)` of all basis functions at `p`.
    pub fn grad(&self, p: [f64; 2], dx: &mut [f64], dy: &mut [f64]) {
        let mut mx = [0.0; 64];
        let mut my = [0.0; 64];
        let (x, y) = (p[0] - REF_CENTRE[0], p[1] - REF_CENTRE[1]);
        for (i, &(a, b)) in self.exps.iter().enumerate() {
            mx[i] = if a > 0 { a as f64 * pw(x, a - 1) * pw(y, b) } else { 0.0 };
            my[i] = if b > 0 { b as f64 * pw(x, a) * pw(y, b - 1) } else { 0.0 };
        }
        self.combine(&mx[..self.dim], dx);
        self.combine(&my[..self.dim], dy);
    }

    /// Reference second derivatives `(xx, xy, yy)` of all basis functions at `p`.
    pub fn hessian(&self, p: [f64; 2], hxx: &mut [f64], hxy: &mut [f64], hyy: &mut [f64]) {
        let mut mxx = [0.0; 64];
        let mut mxy = [0.0; 64];
        let mut myy = [0.0; 64];
        let (x, y) = (p[0] - REF_CENTRE[0], p[1] - REF_CENTRE[1]);
        for (i, &(a, b)) in self.exps.iter().enumerate() {
            let (af, bf) = (a as f64, b as f64);
            mxx[i] = if a > 1 { af * (af - 1.0) * pw(x, a - 2) * pw(y, b) } else { 0.0 };
            myy[i] = if b > 1 { bf * (bf - 1.0) * pw(x, a) * pw(y, b - 2) } else { 0.0 };
            mxy[i] = if a > 0 && b > 0 { af * bf * pw(x, a - 1) * pw(y, b - 1) } else { 0.0 };
        }
        self.combine(&mxx[..self.dim], hxx);
        self.combine(&mxy[..self.dim], hxy);
        self.combine(&myy[..self.dim], hyy);
    }

    fn combine(&self, mono: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for i in 0..out.len().min(d) {
            let row = &self.coef[i * d..i * d + i + 1];
            out[i] = row.iter().zip(mono).map(|(c, m)| c * m).sum();
        }
    }
}

/// Shared reference basis of degree `k`.
pub fn ref_basis(k: usize) -> &'static RefBasis {
    const N: usize = 10;
    static CACHE: [OnceLock<RefBasis>; N] = [const { OnceLock::new() }; N];
    assert!(k < N, "polynomial degree {k} not supported");
    CACHE[k].get_or_init(|| RefBasis::new(k))
}

#[inline]
fn pw(x: f64, n: usize) -> f64 {
    x.powi(n as i32)
}

/// Evaluate the monomials `X^a Y^b` for the given exponent list.
pub fn monomials(exps: &[(usize, usize)], x: f64, y: f64, out: &mut [f64]) {
    for (o, &(a, b)) in out.iter_mut().zip(exps) {
        *o = pw(x, a) * pw(y, b);
    }
}

/// Orthonormal Legendre polynomials on `[0, 1]`: `sqrt(2j + 1) P_j(2t - 1)`.
///
/// Divide by `sqrt(|F|)` for an orthonormal basis on an edge of length `|F|`.
pub fn legendre01(n: usize, t: f64, out: &mut [f64]) {
    let x = 2.0 * t - 1.0;
    let mut p0 = 1.0;
    let mut p1 = x;
    for j in 0..n {
        let v = match j {
            0 => 1.0,
            1 => x,
            _ => {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
                p2
            }
        };
        out[j] = v * ((2 * j + 1) as f64).sqrt();
    }
}

/// Lagrange lattice of degree `d` on the reference triangle, `(i/d, j/d)` with `i + j <= d`.
pub fn lattice(d: usize) -> Vec<[f64; 2]> {
    let mut pts = Vec::with_capacity(dim_p(d));
    for j in 0..=d {
        for i in 0..=(d - j) {
            pts.push([i as f64 / d as f64, j as f64 / d as f64]);
        }
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_basis_is_orthonormal() {
        for k in 0..=6 {
            let b = ref_basis(k);
            let rule = triangle_rule(k + 2);
            let mut v = vec![0.0; b.dim];
            let mut g = vec![0.0; b.dim * b.dim];
            for (p, w) in rule.points.iter().zip(&rule.weights) {
                b.eval(*p, &mut v);
                for i in 0..b.dim {
                    for j in 0..b.dim {
                        g[i * b.dim + j] += w * v[i] * v[j];
                    }
                }
            }
            for i in 0..b.dim {
                for j in 0..b.dim {
                    let e = if i == j { 1.0 } else { 0.0 };
                    assert!((g[i * b.dim + j] - e).abs() < 1e-12, "k={k} ({i},{j}) {}", g[i * b.dim + j] - e);
                }
            }
        }
    }

    #[test]
    fn prefix_property() {
        let (a, b) = (ref_basis(2), ref_basis(3));
        let mut va = vec![0.0; a.dim];
        let mut vb = vec![0.0; b.dim];
        a.eval([0.2, 0.3], &mut va);
        b.eval([0.2, 0.3], &mut vb);
        for i in 0..a.dim {
            assert!((va[i] - vb[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_difference_quotient() {
        let b = ref_basis(4);
        let p = [0.21, 0.37];
        let h = 1e-6;
        let (mut dx, mut dy) = (vec![0.0; b.dim], vec![0.0; b.dim]);
        b.grad(p, &mut dx, &mut dy);
        let (mut vp, mut vm) = (vec![0.0; b.dim], vec![0.0; b.dim]);
        b.eval([p[0] + h, p[1]], &mut vp);
        b.eval([p[0] - h, p[1]], &mut vm);
        for i in 0..b.dim {
            assert!((dx[i] - (vp[i] - vm[i]) / (2.0 * h)).abs() < 1e-6);
        }
        b.eval([p[0], p[1] + h], &mut vp);
        b.eval([p[0], p[1] - h], &mut vm);
        for i in 0..b.dim {
            assert!((dy[i] - (vp[i] - vm[i]) / (2.0 * h)).abs() < 1e-6);
        }
    }

    #[test]
    fn legendre_orthonormal() {
        let r = crate::quadrature::edge_rule(8);
        let mut v = vec![0.0; 6];
        let mut g = [[0.0; 6]; 6];
        for (t, w) in r.points.iter().zip(&r.weights) {
            legendre01(6, *t, &mut v);
            for i in 0..6 {
                for j in 0..6 {
                    g[i][j] += w * v[i] * v[j];
                }
            }
        }
        for i in 0..6 {
            for j in 0..6 {
                assert!((g[i][j] - if i == j { 1.0 } else { 0.0 }).abs() < 1e-13);
            }
        }
    }
}
