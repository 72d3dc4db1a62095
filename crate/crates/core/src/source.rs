//! Right-hand sides and their samples on the mesh.
//!
//! Every integral that involves `f` uses the same per-triangle rule, stored in
//! [`SourceSamples`], so that load vectors, projections, oscillations and the
//! equilibration data are computed from identical values.

use rayon::prelude::*;

use crate::mesh::{Mesh, Point, TriGeom};
use crate::quadrature::{singular_rule, triangle_rule};

pub trait Source: Sync {
    fn value(&self, x: Point) -> f64;

    /// A vertex where `f` may be singular; triangles touching it get a rule
    /// collapsed at that vertex.
    fn singular_point(&self) -> Option<Point> {
        None
    }
}

impl<F: Fn(Point) -> f64 + Sync> Source for F {
    fn value(&self, x: Point) -> f64 {
        self(x)
    }
}

/// Quadrature of `f` on every triangle.
#[derive(Debug, Clone)]
pub struct SourceSamples {
    offsets: Vec<usize>,
    /// Points in the reference coordinates of each triangle's own affine map.
    pub ref_points: Vec<Point>,
    pub points: Vec<Point>,
    /// Physical weights.
    pub weights: Vec<f64>,
    pub values: Vec<f64>,
}

/// Slice of [`SourceSamples`] for one triangle.
#[derive(Debug, Clone, Copy)]
pub struct CellSamples<'a> {
    pub ref_points: &'a [Point],
    pub points: &'a [Point],
    pub weights: &'a [f64],
    pub values: &'a [f64],
}

impl CellSamples<'_> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Points per direction of the regular source rule for degree `k`.
pub fn source_points(k: usize) -> usize {
    k + 6
}

/// Points per direction near a singular vertex.
pub fn singular_points(k: usize) -> usize {
    k + 14
}

/// Rule for integrals against a possibly singular function on triangle `t`:
/// `(ref_point, physical_point, weight)`.
pub fn cell_rule(mesh: &Mesh, t: usize, m: usize, singular: Option<Point>, ms: usize) -> Vec<(Point, Point, f64)> {
    let g = mesh.geom(t);
    let sv = singular.and_then(|s| (0..3).find(|&i| crate::mesh::dist(g.p[i], s) < 1e-14));
    match sv {
        None => {
            let r = triangle_rule(m);
            r.points.iter().zip(&r.weights).map(|(p, w)| (*p, g.map(*p), w * g.det)).collect()
        }
        Some(i) => {
            // Collapse the rule onto vertex i by relabelling it as the third vertex.
            let perm = TriGeom::new([g.p[(i + 1) % 3], g.p[(i + 2) % 3], g.p[i]]);
            let r = singular_rule(ms);
            r.points
                .iter()
                .zip(&r.weights)
                .map(|(p, w)| {
                    let x = perm.map(*p);
                    (g.pull(x), x, w * perm.det)
                })
                .collect()
        }
    }
}

impl SourceSamples {
    pub fn new(mesh: &Mesh, k: usize, f: &dyn Source) -> Self {
        let (m, ms) = (source_points(k), singular_points(k));
        let sing = f.singular_point();
        let per: Vec<Vec<(Point, Point, f64, f64)>> = (0..mesh.n_triangles())
            .into_par_iter()
            .map(|t| cell_rule(mesh, t, m, sing, ms).into_iter().map(|(r, x, w)| (r, x, w, f.value(x))).collect())
            .collect();
        let mut s = SourceSamples {
            offsets: Vec::with_capacity(per.len() + 1),
            ref_points: Vec::new(),
            points: Vec::new(),
            weights: Vec::new(),
            values: Vec::new(),
        };
        s.offsets.push(0);
        for cell in per {
            for (r, x, w, v) in cell {
                s.ref_points.push(r);
                s.points.push(x);
                s.weights.push(w);
                s.values.push(v);
            }
            s.offsets.push(s.weights.len());
        }
        s
    }

    pub fn cell(&self, t: usize) -> CellSamples<'_> {
        let r = self.offsets[t]..self.offsets[t + 1];
        CellSamples {
            ref_points: &self.ref_points[r.clone()],
            points: &self.points[r.clone()],
            weights: &self.weights[r.clone()],
            values: &self.values[r],
        }
    }

    /// A copy with every value replaced by `g(t, ref_point, value)`.
    pub fn map_values(&self, g: impl Fn(usize, Point, f64) -> f64 + Sync) -> Self {
        let mut out = self.clone();
        let n = self.offsets.len() - 1;
        let vals: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|t| {
                let c = self.cell(t);
                c.ref_points.iter().zip(c.values).map(|(p, v)| g(t, *p, *v)).collect()
            })
            .collect();
        out.values = vals.into_iter().flatten().collect();
        out
    }

    pub fn n_triangles(&self) -> usize {
        self.offsets.len() - 1
    }
}
