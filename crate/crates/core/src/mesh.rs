//! Conforming triangulations with newest-vertex bisection.
//!
//! Triangles are stored counterclockwise. Local edge `i` is opposite local
//! vertex `i`, and `refedge` names the local vertex whose opposite edge is the
//! refinement edge (the newest vertex).

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// `(0,1)^2`.
    Square,
    /// `(-1,1)^2 \ [0,1)^2`.
    LShape,
    /// `(-1,1)^2` slit along `[0,1) x {0}`.
    Slit,
    /// Anything built from raw vertex and triangle lists.
    Custom,
}

impl Domain {
    /// Largest interior angle of the boundary.
    pub fn omega_max(self) -> f64 {
        use std::f64::consts::PI;
        match self {
            Domain::Square | Domain::Custom => PI,
            Domain::LShape => 1.5 * PI,
            Domain::Slit => 2.0 * PI,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Domain::Square => "square",
            Domain::LShape => "lshape",
            Domain::Slit => "slit",
            Domain::Custom => "custom",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Domain {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square" => Ok(Domain::Square),
            "lshape" => Ok(Domain::LShape),
            "slit" => Ok(Domain::Slit),
            _ => Err(Error::Input(format!("unknown domain `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triangle {
    pub v: [usize; 3],
    pub refedge: u8,
}

#[derive(Debug, Clone)]
pub struct Edge {
    /// Endpoints with `v[0] < v[1]`; the edge parameter `t` runs from `v[0]` to `v[1]`.
    pub v: [usize; 2],
    /// Triangle in which the edge runs `v[0] -> v[1]` counterclockwise, or the
    /// only triangle for a boundary edge.
    pub plus: usize,
    pub minus: Option<usize>,
    /// Unit normal, outward from `plus`.
    pub normal: Point,
    pub length: f64,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.minus.is_none()
    }
}

/// Affine geometry of one triangle: `x = p0 + J xi`.
#[derive(Debug, Clone, Copy)]
pub struct TriGeom {
    pub p: [Point; 3],
    /// Columns `p1 - p0` and `p2 - p0`.
    pub jac: [[f64; 2]; 2],
    pub inv: [[f64; 2]; 2],
    pub det: f64,
    pub area: f64,
    pub diam: f64,
}

impl TriGeom {
    pub fn new(p: [Point; 3]) -> Self {
        let jac = [[p[1][0] - p[0][0], p[2][0] - p[0][0]], [p[1][1] - p[0][1], p[2][1] - p[0][1]]];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let inv = [[jac[1][1] / det, -jac[0][1] / det], [-jac[1][0] / det, jac[0][0] / det]];
        let diam = (0..3).map(|i| dist(p[(i + 1) % 3], p[(i + 2) % 3])).fold(0.0, f64::max);
        TriGeom { p, jac, inv, det, area: 0.5 * det, diam }
    }

    pub fn map(&self, xi: Point) -> Point {
        [
            self.p[0][0] + self.jac[0][0] * xi[0] + self.jac[0][1] * xi[1],
            self.p[0][1] + self.jac[1][0] * xi[0] + self.jac[1][1] * xi[1],
        ]
    }

    pub fn pull(&self, x: Point) -> Point {
        let d = [x[0] - self.p[0][0], x[1] - self.p[0][1]];
        [
            self.inv[0][0] * d[0] + self.inv[0][1] * d[1],
            self.inv[1][0] * d[0] + self.inv[1][1] * d[1],
        ]
    }

    /// Physical gradient from a reference gradient: `J^{-T} g`.
    #[inline]
    pub fn grad(&self, g: Point) -> Point {
        [
            self.inv[0][0] * g[0] + self.inv[1][0] * g[1],
            self.inv[0][1] * g[0] + self.inv[1][1] * g[1],
        ]
    }

    /// Physical Laplacian from reference second derivatives.
    #[inline]
    pub fn laplacian(&self, hxx: f64, hxy: f64, hyy: f64) -> f64 {
        // tr(J^{-T} H J^{-1}), summed over the columns of J^{-1}.
        let a = &self.inv;
        let mut s = 0.0;
        for c in 0..2 {
            let (u, v) = (a[0][c], a[1][c]);
            s += u * u * hxx + 2.0 * u * v * hxy + v * v * hyy;
        }
        s
    }

    pub fn centroid(&self) -> Point {
        [(self.p[0][0] + self.p[1][0] + self.p[2][0]) / 3.0, (self.p[0][1] + self.p[1][1] + self.p[2][1]) / 3.0]
    }

    pub fn edge_length(&self, i: usize) -> f64 {
        dist(self.p[(i + 1) % 3], self.p[(i + 2) % 3])
    }

    /// Outward unit normal on local edge `i`.
    pub fn normal(&self, i: usize) -> Point {
        let a = self.p[(i + 1) % 3];
        let b = self.p[(i + 2) % 3];
        let l = dist(a, b);
        [(b[1] - a[1]) / l, -(b[0] - a[0]) / l]
    }
}

/// Reference vertices.
pub const REF_VERTICES: [Point; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

/// Reference point at local parameter `s` in `[0,1]` along local edge `i`,
/// running counterclockwise from vertex `i+1` to vertex `i+2`.
#[inline]
pub fn ref_edge_point(i: usize, s: f64) -> Point {
    let a = REF_VERTICES[(i + 1) % 3];
    let b = REF_VERTICES[(i + 2) % 3];
    [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
}

#[inline]
pub fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub domain: Domain,
    pub vertices: Vec<Point>,
    pub triangles: Vec<Triangle>,
    pub edges: Vec<Edge>,
    /// Global edge of local edge `i` of each triangle.
    pub tri_edges: Vec<[usize; 3]>,
}

/// Result of a refinement step.
#[derive(Debug, Clone)]
pub struct Refinement {
    pub mesh: Mesh,
    /// Coarse triangle containing each fine triangle.
    pub parent: Vec<usize>,
}

/// Star of a vertex, ordered counterclockwise.
///
/// `T_a` has edges `E_{a-1}` and `E_a` at the centre; `edges` holds
/// `E_0, ..., E_N` and for interior vertices `E_N == E_0`. Boundary stars
/// start and end on boundary edges.
#[derive(Debug, Clone)]
pub struct Patch {
    pub vertex: usize,
    pub triangles: Vec<usize>,
    pub edges: Vec<usize>,
    pub interior: bool,
}

impl Mesh {
    /// Build a mesh from counterclockwise triangles and rebuild the edge table.
    pub fn from_parts(domain: Domain, vertices: Vec<Point>, triangles: Vec<Triangle>) -> Result<Self> {
        for (t, tri) in triangles.iter().enumerate() {
            if tri.v.iter().any(|&v| v >= vertices.len()) || tri.refedge > 2 {
                return Err(Error::Mesh(format!("triangle {t} has invalid indices")));
            }
            let g = TriGeom::new(tri.v.map(|v| vertices[v]));
            if !(g.det > 0.0) {
                return Err(Error::Mesh(format!("triangle {t} is not counterclockwise")));
            }
        }
        let mut keys: Vec<(usize, usize, usize, usize)> = Vec::with_capacity(3 * triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            for i in 0..3 {
                let a = tri.v[(i + 1) % 3];
                let b = tri.v[(i + 2) % 3];
                keys.push((a.min(b), a.max(b), t, i));
            }
        }
        keys.sort_unstable();
        let mut edges = Vec::new();
        let mut tri_edges = vec![[usize::MAX; 3]; triangles.len()];
        let mut j = 0;
        while j < keys.len() {
            let mut l = j + 1;
            while l < keys.len() && keys[l].0 == keys[j].0 && keys[l].1 == keys[j].1 {
                l += 1;
            }
            if l - j > 2 {
                return Err(Error::Mesh(format!("edge ({}, {}) shared by {} triangles", keys[j].0, keys[j].1, l - j)));
            }
            let id = edges.len();
            let (a, b) = (keys[j].0, keys[j].1);
            let forward = |t: usize, i: usize| triangles[t].v[(i + 1) % 3] == a;
            let (plus, minus) = if l - j == 1 {
                ((keys[j].2, keys[j].3), None)
            } else {
                let (t0, i0) = (keys[j].2, keys[j].3);
                let (t1, i1) = (keys[j + 1].2, keys[j + 1].3);
                if forward(t0, i0) == forward(t1, i1) {
                    return Err(Error::Mesh(format!("edge ({a}, {b}) has inconsistent orientation")));
                }
                if forward(t0, i0) {
                    ((t0, i0), Some((t1, i1)))
                } else {
                    ((t1, i1), Some((t0, i0)))
                }
            };
            tri_edges[plus.0][plus.1] = id;
            if let Some(m) = minus {
                tri_edges[m.0][m.1] = id;
            }
            let g = TriGeom::new(triangles[plus.0].v.map(|v| vertices[v]));
            edges.push(Edge {
                v: [a, b],
                plus: plus.0,
                minus: minus.map(|m| m.0),
                normal: g.normal(plus.1),
                length: dist(vertices[a], vertices[b]),
            });
            j = l;
        }
        Ok(Mesh { domain, vertices, triangles, edges, tri_edges })
    }

    /// Coarsest mesh of a benchmark domain, uniformly refined `level` times.
    ///
    /// One uniform level bisects every triangle twice, so `h` halves per level.
    pub fn build(domain: Domain, level: usize) -> Result<Self> {
        let mut mesh = match domain {
            Domain::Square => square(),
            Domain::LShape => lshape(),
            Domain::Slit => slit(),
            Domain::Custom => return Err(Error::Input("custom meshes have no coarse mesh".into())),
        }?;
        for _ in 0..level {
            mesh = mesh.refine_uniform()?.mesh;
        }
        Ok(mesh)
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_interior_edges(&self) -> usize {
        self.edges.iter().filter(|e| !e.is_boundary()).count()
    }

    pub fn geom(&self, t: usize) -> TriGeom {
        TriGeom::new(self.triangles[t].v.map(|v| self.vertices[v]))
    }

    /// Whether local edge `i` of `t` runs from the lower to the higher vertex
    /// index when traversed counterclockwise.
    #[inline]
    pub fn edge_forward(&self, t: usize, i: usize) -> bool {
        let v = self.triangles[t].v;
        v[(i + 1) % 3] < v[(i + 2) % 3]
    }

    /// `+1` if `t` is the plus side of its local edge `i`, else `-1`.
    #[inline]
    pub fn edge_sign(&self, t: usize, i: usize) -> f64 {
        if self.edges[self.tri_edges[t][i]].plus == t {
            1.0
        } else {
            -1.0
        }
    }

    /// Local index of global edge `e` in triangle `t`.
    pub fn local_edge(&self, t: usize, e: usize) -> Option<usize> {
        self.tri_edges[t].iter().position(|&x| x == e)
    }

    pub fn boundary_vertices(&self) -> Vec<bool> {
        let mut b = vec![false; self.vertices.len()];
        for e in &self.edges {
            if e.is_boundary() {
                b[e.v[0]] = true;
                b[e.v[1]] = true;
            }
        }
        b
    }

    pub fn area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.geom(t).area).sum()
    }

    pub fn max_diam(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.geom(t).diam).fold(0.0, f64::max)
    }

    /// Trace weight `l(F)` of the residual estimator.
    pub fn trace_weight(&self, e: usize) -> f64 {
        let edge = &self.edges[e];
        let gp = self.geom(edge.plus);
        match edge.minus {
            None => 3.0 * gp.diam * gp.diam * edge.length / gp.area,
            Some(m) => {
                let gm = self.geom(m);
                3.0 * edge.length / (gp.area / (gp.diam * gp.diam) + gm.area / (gm.diam * gm.diam))
            }
        }
    }

    /// Triangles incident to each vertex.
    pub fn vertex_triangles(&self) -> Vec<Vec<usize>> {
        let mut vt = vec![Vec::new(); self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in &tri.v {
                vt[v].push(t);
            }
        }
        vt
    }

    /// Counterclockwise stars of all vertices.
    pub fn patches(&self) -> Result<Vec<Patch>> {
        let vt = self.vertex_triangles();
        (0..self.vertices.len()).map(|z| self.patch_with(z, &vt[z])).collect()
    }

    pub fn patch(&self, z: usize) -> Result<Patch> {
        let tris: Vec<usize> = (0..self.n_triangles()).filter(|&t| self.triangles[t].v.contains(&z)).collect();
        self.patch_with(z, &tris)
    }

    fn patch_with(&self, z: usize, tris: &[usize]) -> Result<Patch> {
        // In triangle t with z at local j, the incoming edge (towards v_{j+1})
        // is local edge j+2 and the outgoing edge (towards v_{j+2}) is local j+1.
        let io: Vec<(usize, usize, usize)> = tris
            .iter()
            .map(|&t| {
                let j = self.triangles[t].v.iter().position(|&v| v == z).unwrap();
                (t, self.tri_edges[t][(j + 2) % 3], self.tri_edges[t][(j + 1) % 3])
            })
            .collect();
        if io.is_empty() {
            return Err(Error::Mesh(format!("vertex {z} has no triangles")));
        }
        let start = io.iter().filter(|x| self.edges[x.1].is_boundary()).map(|x| x.1).min();
        let interior = start.is_none();
        let e0 = start.unwrap_or_else(|| io.iter().map(|x| x.1).min().unwrap());
        let mut triangles = Vec::with_capacity(io.len());
        let mut edges = vec![e0];
        let mut cur = e0;
        for _ in 0..io.len() {
            let Some(&(t, _, out)) = io.iter().find(|x| x.1 == cur) else { break };
            triangles.push(t);
            edges.push(out);
            cur = out;
            if interior && cur == e0 {
                break;
            }
        }
        if triangles.len() != io.len() || (interior && cur != e0) || (!interior && !self.edges[cur].is_boundary()) {
            return Err(Error::Mesh(format!("star of vertex {z} is not a simple fan")));
        }
        Ok(Patch { vertex: z, triangles, edges, interior })
    }

    /// Newest-vertex bisection of the marked triangles plus conforming closure.
    pub fn refine(&self, marked: &[usize]) -> Result<Refinement> {
        let nt = self.n_triangles();
        let mut flag = vec![false; self.n_edges()];
        let mut work: Vec<usize> = Vec::new();
        for &t in marked {
            if t >= nt {
                return Err(Error::Input(format!("marked triangle {t} out of range")));
            }
            let e = self.tri_edges[t][self.triangles[t].refedge as usize];
            if !flag[e] {
                flag[e] = true;
                self.push_neighbours(e, &mut work);
            }
        }
        let cap = 10 * nt.max(1);
        let mut events = 0;
        while let Some(t) = work.pop() {
            let r = self.tri_edges[t][self.triangles[t].refedge as usize];
            if !flag[r] && self.tri_edges[t].iter().any(|&e| flag[e]) {
                flag[r] = true;
                self.push_neighbours(r, &mut work);
                events += 1;
                if events > cap {
                    return Err(Error::Mesh("bisection closure did not terminate".into()));
                }
            }
        }
        let mut vertices = self.vertices.clone();
        let mut midpoint = vec![usize::MAX; self.n_edges()];
        for (e, edge) in self.edges.iter().enumerate() {
            if flag[e] {
                let (a, b) = (self.vertices[edge.v[0]], self.vertices[edge.v[1]]);
                midpoint[e] = vertices.len();
                vertices.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
            }
        }
        let mut triangles = Vec::with_capacity(nt + 2 * marked.len());
        let mut parent = Vec::with_capacity(triangles.capacity());
        for t in 0..nt {
            let r = self.triangles[t].refedge as usize;
            let v = self.triangles[t].v;
            self.bisect_rec(t, [v[r], v[(r + 1) % 3], v[(r + 2) % 3]], &flag, &midpoint, &mut triangles);
            parent.resize(triangles.len(), t);
        }
        let mesh = Mesh::from_parts(self.domain, vertices, triangles)?;
        Ok(Refinement { mesh, parent })
    }

    /// Bisect all triangles twice.
    pub fn refine_uniform(&self) -> Result<Refinement> {
        let all: Vec<usize> = (0..self.n_triangles()).collect();
        let r1 = self.refine(&all)?;
        let all: Vec<usize> = (0..r1.mesh.n_triangles()).collect();
        let r2 = r1.mesh.refine(&all)?;
        let parent = r2.parent.iter().map(|&p| r1.parent[p]).collect();
        Ok(Refinement { mesh: r2.mesh, parent })
    }

    fn push_neighbours(&self, e: usize, work: &mut Vec<usize>) {
        work.push(self.edges[e].plus);
        if let Some(m) = self.edges[e].minus {
            work.push(m);
        }
    }

    /// `v = [newest, a, b]` in counterclockwise order with refinement edge `a-b`.
    fn bisect_rec(&self, t: usize, v: [usize; 3], flag: &[bool], mid: &[usize], out: &mut Vec<Triangle>) {
        let e = self.edge_between(t, v[1], v[2]);
        if !flag[e] {
            // Store with the newest vertex at local position 0.
            out.push(Triangle { v, refedge: 0 });
            return;
        }
        let m = mid[e];
        // Children (m, n, a) and (m, b, n): newest vertex m, refinement edges n-a and b-n.
        self.bisect_rec_child(t, [m, v[0], v[1]], flag, mid, out);
        self.bisect_rec_child(t, [m, v[2], v[0]], flag, mid, out);
    }

    fn bisect_rec_child(&self, t: usize, v: [usize; 3], flag: &[bool], mid: &[usize], out: &mut Vec<Triangle>) {
        // The refinement edge of a child is an edge of the coarse triangle `t`.
        let e = self.edge_between(t, v[1], v[2]);
        if !flag[e] {
            out.push(Triangle { v, refedge: 0 });
            return;
        }
        let m = mid[e];
        out.push(Triangle { v: [m, v[0], v[1]], refedge: 0 });
        out.push(Triangle { v: [m, v[2], v[0]], refedge: 0 });
    }

    fn edge_between(&self, t: usize, a: usize, b: usize) -> usize {
        for &e in &self.tri_edges[t] {
            let ev = self.edges[e].v;
            if (ev[0] == a && ev[1] == b) || (ev[0] == b && ev[1] == a) {
                return e;
            }
        }
        unreachable!("vertices {a} and {b} do not span an edge of triangle {t}")
    }

    /// Consistency audit: orientation, areas, edge incidences and Euler characteristic.
    pub fn check(&self) -> Result<()> {
        for t in 0..self.n_triangles() {
            if self.geom(t).det <= 0.0 {
                return Err(Error::Mesh(format!("triangle {t} degenerate or clockwise")));
            }
        }
        let mut count = vec![0usize; self.n_edges()];
        for te in &self.tri_edges {
            for &e in te {
                count[e] += 1;
            }
        }
        for (e, edge) in self.edges.iter().enumerate() {
            let expect = if edge.is_boundary() { 1 } else { 2 };
            if count[e] != expect {
                return Err(Error::Mesh(format!("edge {e} has {} incident triangles", count[e])));
            }
        }
        let used = {
            let mut u = vec![false; self.n_vertices()];
            self.triangles.iter().for_each(|t| t.v.iter().for_each(|&v| u[v] = true));
            u.iter().filter(|&&x| x).count()
        };
        let euler = used as i64 - self.n_edges() as i64 + self.n_triangles() as i64;
        if euler != 1 {
            return Err(Error::Mesh(format!("Euler characteristic {euler}, expected 1")));
        }
        Ok(())
    }

    /// Whether every triangle is right isosceles with the right angle at the newest vertex.
    pub fn is_right_isosceles(&self, tol: f64) -> bool {
        (0..self.n_triangles()).all(|t| {
            let g = self.geom(t);
            let r = self.triangles[t].refedge as usize;
            let a = [g.p[(r + 1) % 3][0] - g.p[r][0], g.p[(r + 1) % 3][1] - g.p[r][1]];
            let b = [g.p[(r + 2) % 3][0] - g.p[r][0], g.p[(r + 2) % 3][1] - g.p[r][1]];
            let la = (a[0] * a[0] + a[1] * a[1]).sqrt();
            let lb = (b[0] * b[0] + b[1] * b[1]).sqrt();
            ((a[0] * b[0] + a[1] * b[1]) / (la * lb)).abs() < tol && ((la - lb) / la).abs() < tol
        })
    }

    /// Write the mesh in the `hho-mesh v1` text format.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "hho-mesh v1 {} {} {}", self.n_vertices(), self.n_triangles(), self.n_edges())?;
        for p in &self.vertices {
            writeln!(w, "{:.16e} {:.16e}", p[0], p[1])?;
        }
        for t in &self.triangles {
            writeln!(w, "{} {} {} {}", t.v[0], t.v[1], t.v[2], t.refedge)?;
        }
        for e in &self.edges {
            let minus = e.minus.map(|m| m as i64).unwrap_or(-1);
            writeln!(w, "{} {} {} {} {}", e.v[0], e.v[1], e.plus, minus, u8::from(e.is_boundary()))?;
        }
        Ok(())
    }

    /// Read a mesh written by [`Mesh::write_to`]. The edge table is rebuilt and
    /// compared with the stored one.
    pub fn read_from<R: BufRead>(r: R, domain: Domain) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, Ok(l))) => Ok((i + 1, l)),
                Some((i, Err(e))) => Err(Error::Parse { line: i + 1, msg: e.to_string() }),
                None => Err(Error::Parse { line: 0, msg: format!("unexpected end of file, expected {what}") }),
            }
        };
        let (ln, header) = next("header")?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 5 || h[0] != "hho-mesh" || h[1] != "v1" {
            return Err(Error::Parse { line: ln, msg: "bad header".into() });
        }
        let num = |s: &str, line: usize| -> Result<usize> {
            s.parse().map_err(|_| Error::Parse { line, msg: format!("bad integer `{s}`") })
        };
        let (nv, nt, ne) = (num(h[2], ln)?, num(h[3], ln)?, num(h[4], ln)?);
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (ln, l) = next("vertex")?;
            let x: Vec<f64> = l
                .split_whitespace()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse { line: ln, msg: e.to_string() })?;
            if x.len() != 2 {
                return Err(Error::Parse { line: ln, msg: "expected two coordinates".into() });
            }
            vertices.push([x[0], x[1]]);
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (ln, l) = next("triangle")?;
            let x: Vec<usize> = l.split_whitespace().map(|s| num(s, ln)).collect::<Result<_>>()?;
            if x.len() != 4 {
                return Err(Error::Parse { line: ln, msg: "expected four integers".into() });
            }
            triangles.push(Triangle { v: [x[0], x[1], x[2]], refedge: x[3] as u8 });
        }
        let mesh = Mesh::from_parts(domain, vertices, triangles)?;
        if mesh.n_edges() != ne {
            return Err(Error::Mesh(format!("file declares {ne} edges, mesh has {}", mesh.n_edges())));
        }
        for e in &mesh.edges {
            let (ln, l) = next("edge")?;
            let x: Vec<i64> = l
                .split_whitespace()
                .map(|s| s.parse::<i64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse { line: ln, msg: e.to_string() })?;
            let minus = e.minus.map(|m| m as i64).unwrap_or(-1);
            let expect = [e.v[0] as i64, e.v[1] as i64, e.plus as i64, minus, i64::from(e.is_boundary())];
            if x != expect {
                return Err(Error::Parse { line: ln, msg: "edge record disagrees with triangles".into() });
            }
        }
        Ok(mesh)
    }
}

/// Two right triangles filling the square `[x0, x0+s] x [y0, y0+s]`, split by
/// the diagonal through `(x0, y0)` when `rising`, otherwise through `(x0, y0+s)`.
/// Corners are given as vertex ids `[ll, lr, ur, ul]`.
fn split_square(c: [usize; 4], rising: bool) -> [Triangle; 2] {
    let [ll, lr, ur, ul] = c;
    if rising {
        [Triangle { v: [lr, ur, ll], refedge: 0 }, Triangle { v: [ul, ll, ur], refedge: 0 }]
    } else {
        [Triangle { v: [ll, lr, ul], refedge: 0 }, Triangle { v: [ur, ul, lr], refedge: 0 }]
    }
}

fn square() -> Result<Mesh> {
    let v = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    Mesh::from_parts(Domain::Square, v, split_square([0, 1, 2, 3], true).to_vec())
}

fn lshape() -> Result<Mesh> {
    // 0:(-1,-1) 1:(0,-1) 2:(1,-1) 3:(-1,0) 4:(0,0) 5:(1,0) 6:(-1,1) 7:(0,1)
    let v = vec![[-1.0, -1.0], [0.0, -1.0], [1.0, -1.0], [-1.0, 0.0], [0.0, 0.0], [1.0, 0.0], [-1.0, 1.0], [0.0, 1.0]];
    let mut t = Vec::new();
    t.extend(split_square([0, 1, 4, 3], true));
    t.extend(split_square([1, 2, 5, 4], false));
    t.extend(split_square([3, 4, 7, 6], false));
    Mesh::from_parts(Domain::LShape, v, t)
}

fn slit() -> Result<Mesh> {
    // The point (1, 0) is duplicated: 5 closes the upper right square, 9 the lower one.
    let v = vec![
        [-1.0, -1.0],
        [0.0, -1.0],
        [1.0, -1.0],
        [-1.0, 0.0],
        [0.0, 0.0],
        [1.0, 0.0],
        [-1.0, 1.0],
        [0.0, 1.0],
        [1.0, 1.0],
        [1.0, 0.0],
    ];
    let mut t = Vec::new();
    t.extend(split_square([0, 1, 4, 3], true));
    t.extend(split_square([1, 2, 9, 4], false));
    t.extend(split_square([3, 4, 7, 6], false));
    t.extend(split_square([4, 5, 8, 7], true));
    Mesh::from_parts(Domain::Slit, v, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coarse_meshes() {
        for (d, nt, nv, area) in [(Domain::Square, 2, 4, 1.0), (Domain::LShape, 6, 8, 3.0), (Domain::Slit, 8, 10, 4.0)] {
            let m = Mesh::build(d, 0).unwrap();
            assert_eq!(m.n_triangles(), nt);
            assert_eq!(m.n_vertices(), nv);
            assert!((m.area() - area).abs() < 1e-14);
            m.check().unwrap();
            assert!(m.is_right_isosceles(1e-12));
        }
    }

    #[test]
    fn slit_edges_are_boundary() {
        let m = Mesh::build(Domain::Slit, 2).unwrap();
        for e in &m.edges {
            let (a, b) = (m.vertices[e.v[0]], m.vertices[e.v[1]]);
            if a[1] == 0.0 && b[1] == 0.0 && a[0].min(b[0]) >= 0.0 {
                assert!(e.is_boundary());
            }
        }
        m.check().unwrap();
    }

    #[test]
    fn uniform_refinement_counts() {
        let m = Mesh::build(Domain::Square, 3).unwrap();
        assert_eq!(m.n_triangles(), 2 * 4usize.pow(3));
        assert_eq!(m.n_vertices(), 81);
        assert!((m.max_diam() - 2f64.sqrt() / 8.0).abs() < 1e-14);
        assert!(m.is_right_isosceles(1e-12));
    }

    #[test]
    fn single_triangle_bisection() {
        let m = Mesh::from_parts(
            Domain::Custom,
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![Triangle { v: [0, 1, 2], refedge: 0 }],
        )
        .unwrap();
        let r = m.refine(&[0]).unwrap();
        assert_eq!(r.mesh.n_triangles(), 2);
        assert_eq!(r.mesh.n_vertices(), 4);
        assert_eq!(r.parent, vec![0, 0]);
        let r2 = r.mesh.refine(&[0]).unwrap();
        // Refining one child forces no closure on the outer boundary edges.
        assert_eq!(r2.mesh.n_triangles(), 3);
    }

    #[test]
    fn closure_keeps_conformity() {
        let m = Mesh::build(Domain::LShape, 1).unwrap();
        let r = m.refine(&[0]).unwrap();
        r.mesh.check().unwrap();
        let mut mesh = r.mesh;
        for step in 0..6 {
            let marked: Vec<usize> = (0..mesh.n_triangles()).filter(|t| (t + step) % 5 == 0).collect();
            mesh = mesh.refine(&marked).unwrap().mesh;
            mesh.check().unwrap();
            assert!(mesh.is_right_isosceles(1e-10));
        }
    }

    #[test]
    fn patches_are_fans() {
        let m = Mesh::build(Domain::LShape, 0).unwrap();
        let p = m.patch(4).unwrap();
        assert!(!p.interior);
        assert_eq!(p.triangles.len(), 6);
        let m = Mesh::build(Domain::Square, 1).unwrap();
        let centre = m.vertices.iter().position(|p| p == &[0.5, 0.5]).unwrap();
        let p = m.patch(centre).unwrap();
        assert!(p.interior);
        assert_eq!(p.edges.first(), p.edges.last());
        for p in m.patches().unwrap() {
            assert_eq!(p.edges.len(), p.triangles.len() + 1);
        }
    }

    #[test]
    fn trace_weights_on_right_isosceles() {
        // Legs and hypotenuses alike: 6 h_F inside, 12 h_F on the boundary.
        let m = Mesh::build(Domain::Square, 2).unwrap();
        for (e, edge) in m.edges.iter().enumerate() {
            let expect = if edge.is_boundary() { 12.0 } else { 6.0 } * edge.length;
            assert!((m.trace_weight(e) - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn io_round_trip() {
        let m = Mesh::build(Domain::Slit, 1).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let r = Mesh::read_from(buf.as_slice(), Domain::Slit).unwrap();
        assert_eq!(r.vertices, m.vertices);
        assert_eq!(r.triangles, m.triangles);
    }
}
