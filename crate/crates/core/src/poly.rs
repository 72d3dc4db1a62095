//! Piecewise polynomials in the per-triangle orthonormal bases.

use crate::basis::{dim_p, ref_basis};
use crate::mesh::{Mesh, Point, TriGeom};
use crate::quadrature::triangle_rule;

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewisePoly {
    pub degree: usize,
    pub dim: usize,
    pub coeffs: Vec<f64>,
}

impl PiecewisePoly {
    pub fn zeros(n_triangles: usize, degree: usize) -> Self {
        let dim = dim_p(degree);
        PiecewisePoly { degree, dim, coeffs: vec![0.0; n_triangles * dim] }
    }

    pub fn n_triangles(&self) -> usize {
        self.coeffs.len() / self.dim
    }

    pub fn cell(&self, t: usize) -> &[f64] {
        &self.coeffs[t * self.dim..(t + 1) * self.dim]
    }

    pub fn cell_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.coeffs[t * self.dim..(t + 1) * self.dim]
    }

    /// Value at reference point `xi` of triangle `t` with geometry `g`.
    pub fn value_ref(&self, g: &TriGeom, t: usize, xi: Point) -> f64 {
        let mut v = [0.0; 64];
        ref_basis(self.degree).eval(xi, &mut v[..self.dim]);
        let c = self.cell(t);
        c.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() / g.det.sqrt()
    }

    /// Physical gradient at reference point `xi`.
    pub fn grad_ref(&self, g: &TriGeom, t: usize, xi: Point) -> Point {
        let (mut dx, mut dy) = ([0.0; 64], [0.0; 64]);
        ref_basis(self.degree).grad(xi, &mut dx[..self.dim], &mut dy[..self.dim]);
        let c = self.cell(t);
        let gx: f64 = c.iter().zip(&dx).map(|(a, b)| a * b).sum();
        let gy: f64 = c.iter().zip(&dy).map(|(a, b)| a * b).sum();
        let s = 1.0 / g.det.sqrt();
        let p = g.grad([gx, gy]);
        [s * p[0], s * p[1]]
    }

    /// Physical Laplacian at reference point `xi`.
    pub fn laplacian_ref(&self, g: &TriGeom, t: usize, xi: Point) -> f64 {
        if self.degree < 2 {
            return 0.0;
        }
        let (mut a, mut b, mut c) = ([0.0; 64], [0.0; 64], [0.0; 64]);
        let d = self.dim;
        ref_basis(self.degree).hessian(xi, &mut a[..d], &mut b[..d], &mut c[..d]);
        let co = self.cell(t);
        let dot = |v: &[f64]| -> f64 { co.iter().zip(v).map(|(x, y)| x * y).sum() };
        g.laplacian(dot(&a), dot(&b), dot(&c)) / g.det.sqrt()
    }

    /// Value at a physical point inside triangle `t`.
    pub fn eval(&self, mesh: &Mesh, t: usize, x: Point) -> f64 {
        let g = mesh.geom(t);
        self.value_ref(&g, t, g.pull(x))
    }

    pub fn grad(&self, mesh: &Mesh, t: usize, x: Point) -> Point {
        let g = mesh.geom(t);
        self.grad_ref(&g, t, g.pull(x))
    }

    /// `L^2` projection onto piecewise `P_degree` of a function given on each
    /// triangle in reference coordinates.
    pub fn project(mesh: &Mesh, degree: usize, f: impl Fn(usize, &TriGeom, Point) -> f64) -> Self {
        let mut p = PiecewisePoly::zeros(mesh.n_triangles(), degree);
        let rule = triangle_rule(degree + 4);
        let b = ref_basis(degree);
        let mut v = vec![0.0; p.dim];
        for t in 0..mesh.n_triangles() {
            let g = mesh.geom(t);
            let s = g.det.sqrt();
            let c = p.cell_mut(t);
            for (xi, w) in rule.points.iter().zip(&rule.weights) {
                b.eval(*xi, &mut v);
                let fx = f(t, &g, *xi);
                for i in 0..v.len() {
                    c[i] += w * s * fx * v[i];
                }
            }
        }
        p
    }

    /// Projection onto piecewise `P_degree` for `degree <= self.degree`.
    pub fn truncate(&self, degree: usize) -> Self {
        assert!(degree <= self.degree);
        let dim = dim_p(degree);
        let mut coeffs = Vec::with_capacity(self.n_triangles() * dim);
        for t in 0..self.n_triangles() {
            coeffs.extend_from_slice(&self.cell(t)[..dim]);
        }
        PiecewisePoly { degree, dim, coeffs }
    }

    /// `|| grad p ||^2_{L^2(T)}`.
    pub fn energy_sq_cell(&self, mesh: &Mesh, t: usize) -> f64 {
        if self.degree == 0 {
            return 0.0;
        }
        let g = mesh.geom(t);
        let rule = triangle_rule(self.degree);
        rule.points
            .iter()
            .zip(&rule.weights)
            .map(|(xi, w)| {
                let d = self.grad_ref(&g, t, *xi);
                w * g.det * (d[0] * d[0] + d[1] * d[1])
            })
            .sum()
    }

    pub fn energy_sq(&self, mesh: &Mesh) -> f64 {
        (0..mesh.n_triangles()).map(|t| self.energy_sq_cell(mesh, t)).sum()
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.degree, other.degree);
        PiecewisePoly {
            degree: self.degree,
            dim: self.dim,
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Domain;

    #[test]
    fn projection_reproduces_polynomials() {
        let mesh = Mesh::build(Domain::LShape, 1).unwrap();
        let f = |x: Point| 1.0 + x[0] - 2.0 * x[1] * x[1] + x[0] * x[1] * x[1];
        let p = PiecewisePoly::project(&mesh, 3, |_, g, xi| f(g.map(xi)));
        for t in 0..mesh.n_triangles() {
            let c = mesh.geom(t).centroid();
            assert!((p.eval(&mesh, t, c) - f(c)).abs() < 1e-13);
            let d = p.grad(&mesh, t, c);
            assert!((d[0] - (1.0 + c[1] * c[1])).abs() < 1e-12);
            assert!((d[1] - (-4.0 * c[1] + 2.0 * c[0] * c[1])).abs() < 1e-12);
            let g = mesh.geom(t);
            let lap = p.laplacian_ref(&g, t, [0.2, 0.3]);
            let x = g.map([0.2, 0.3]);
            assert!((lap - (-4.0 + 2.0 * x[0])).abs() < 1e-11);
        }
    }

    #[test]
    fn truncation_is_projection() {
        // Projecting onto P_1 directly or via P_3 must agree.
        let mesh = Mesh::build(Domain::Square, 1).unwrap();
        let f = |x: Point| x[0].powi(5) + x[0] * x[1].powi(4) - 3.0 * x[1].powi(3);
        let p3 = PiecewisePoly::project(&mesh, 3, |_, g, xi| f(g.map(xi)));
        let p1 = PiecewisePoly::project(&mesh, 1, |_, g, xi| f(g.map(xi)));
        for (a, b) in p3.truncate(1).coeffs.iter().zip(&p1.coeffs) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
