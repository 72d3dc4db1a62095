//! Gauss quadrature on the interval and on triangles.
//!
//! Triangle rules are tensor Gauss rules pulled back by the collapsed (Duffy)
//! map `(X, Y) -> ((1 + X)(1 - Y)/4, (1 + Y)/2)` from `[-1, 1]^2` onto the
//! reference triangle with vertices `(0,0)`, `(1,0)`, `(0,1)`. The Jacobian
//! `(1 - Y)/8` is absorbed by a Gauss-Jacobi rule in `Y`, which makes the
//! `m x m` rule exact for total degree `2m - 1`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights of a one-dimensional rule on `(-1, 1)`.
#[derive(Debug, Clone)]
pub struct LineRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Gauss-Jacobi rule with `m` points for the weight `(1 - x)^alpha` on `(-1, 1)`.
///
/// Exact for polynomials of degree `2m - 1` against that weight. Nodes come from
/// the Golub-Welsch eigenproblem and are polished by Newton steps on the Jacobi
/// polynomial; weights use the closed form in terms of the derivative.
pub fn gauss_jacobi(m: usize, alpha: f64) -> LineRule {
    assert!(m >= 1, "a Gauss rule needs at least one point");
    assert!(alpha > -1.0);
    let beta = 0.0;
    let ab = alpha + beta;
    let mut jac = DMatrix::<f64>::zeros(m, m);
    for n in 0..m {
        let nf = n as f64;
        let a = if n == 0 {
            (beta - alpha) / (ab + 2.0)
        } else {
            (beta * beta - alpha * alpha) / ((2.0 * nf + ab) * (2.0 * nf + ab + 2.0))
        };
        jac[(n, n)] = a;
        if n + 1 < m {
            let k = nf + 1.0;
            let num = 4.0 * k * (k + alpha) * (k + beta) * (k + ab);
            let s = 2.0 * k + ab;
            let den = s * s * (s + 1.0) * (s - 1.0);
            let b = (num / den).sqrt();
            jac[(n, n + 1)] = b;
            jac[(n + 1, n)] = b;
        }
    }
    let eig = SymmetricEigen::new(jac);
    let mut points: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut weights = Vec::with_capacity(m);
    for x in points.iter_mut() {
        for _ in 0..3 {
            let (p, dp, _) = jacobi_eval(m, alpha, beta, *x);
            let dx = p / dp;
            *x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp, _) = jacobi_eval(m, alpha, beta, *x);
        // Standard formula for Gauss-Jacobi weights with beta = 0.
        let mf = m as f64;
        let c = 2f64.powf(ab + 1.0) * gamma_ratio(mf, alpha, beta);
        weights.push(c / ((1.0 - *x * *x) * dp * dp));
    }
    LineRule { points, weights }
}

/// Gauss-Legendre rule with `m` points on `(-1, 1)`.
pub fn gauss_legendre(m: usize) -> LineRule {
    gauss_jacobi(m, 0.0)
}

/// `Gamma(m+a+1) Gamma(m+b+1) / (Gamma(m+a+b+1) m!)` for integer-valued `a`, `b`.
fn gamma_ratio(m: f64, alpha: f64, beta: f64) -> f64 {
    (ln_gamma(m + alpha + 1.0) + ln_gamma(m + beta + 1.0)
        - ln_gamma(m + alpha + beta + 1.0)
        - ln_gamma(m + 1.0))
    .exp()
}

fn ln_gamma(x: f64) -> f64 {
    // Lanczos approximation, g = 7, n = 9.
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x.fract() == 0.0 && x <= 30.0 {
        let mut acc = 0.0;
        let mut i = 2.0;
        while i < x {
            acc += f64::ln(i);
            i += 1.0;
        }
        return acc;
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Value, derivative and previous value of the Jacobi polynomial `P_n^{(a,b)}(x)`.
fn jacobi_eval(n: usize, a: f64, b: f64, x: f64) -> (f64, f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = 0.5 * (a - b + (a + b + 2.0) * x);
    if n == 0 {
        return (1.0, 0.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let c = 2.0 * kf + a + b;
        let a1 = 2.0 * kf * (kf + a + b) * (c - 2.0);
        let a2 = (c - 1.0) * (a * a - b * b);
        let a3 = (c - 2.0) * (c - 1.0) * c;
        let a4 = 2.0 * (kf + a - 1.0) * (kf + b - 1.0) * c;
        let p2 = ((a2 + a3 * x) * p1 - a4 * p0) / a1;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let c = 2.0 * nf + a + b;
    let dp = (nf * (a - b - c * x) * p1 + 2.0 * (nf + a) * (nf + b) * p0) / (c * (1.0 - x * x));
    (p1, dp, p0)
}

/// Quadrature on the reference triangle with barycentric-free coordinates `(xi, eta)`.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub points: Vec<[f64; 2]>,
    /// Weights sum to the reference area `1/2`.
    pub weights: Vec<f64>,
}

impl TriangleRule {
    /// Collapsed Gauss rule with `m x m` points, exact for total degree `2m - 1`.
    pub fn collapsed(m: usize) -> Self {
        let gx = gauss_jacobi(m, 0.0);
        let gy = gauss_jacobi(m, 1.0);
        let mut points = Vec::with_capacity(m * m);
        let mut weights = Vec::with_capacity(m * m);
        for (&y, &wy) in gy.points.iter().zip(&gy.weights) {
            for (&x, &wx) in gx.points.iter().zip(&gx.weights) {
                points.push([(1.0 + x) * (1.0 - y) / 4.0, (1.0 + y) / 2.0]);
                weights.push(wx * wy / 8.0);
            }
        }
        TriangleRule { points, weights }
    }

    /// Collapsed rule with Gauss-Legendre in both directions and the Jacobian
    /// `(1 - Y)` kept explicit.
    ///
    /// The collapsed vertex `(0, 1)` absorbs point singularities like `r^{-1}`
    /// there, so integrands such as `|grad u|^2` with `u ~ r^{1/2}` remain
    /// integrable by a smooth rule.
    pub fn singular_vertex(m: usize) -> Self {
        let g = gauss_legendre(m);
        let mut points = Vec::with_capacity(m * m);
        let mut weights = Vec::with_capacity(m * m);
        for (&y, &wy) in g.points.iter().zip(&g.weights) {
            for (&x, &wx) in g.points.iter().zip(&g.weights) {
                points.push([(1.0 + x) * (1.0 - y) / 4.0, (1.0 + y) / 2.0]);
                weights.push(wx * wy * (1.0 - y) / 8.0);
            }
        }
        TriangleRule { points, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Gauss-Legendre rule on `[0, 1]` (weights sum to one).
#[derive(Debug, Clone)]
pub struct EdgeRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl EdgeRule {
    pub fn new(m: usize) -> Self {
        let g = gauss_legendre(m);
        EdgeRule {
            points: g.points.iter().map(|x| 0.5 * (1.0 + x)).collect(),
            weights: g.weights.iter().map(|w| 0.5 * w).collect(),
        }
    }
}

const CACHE: usize = 40;

/// Shared collapsed triangle rule with `m x m` points.
pub fn triangle_rule(m: usize) -> &'static TriangleRule {
    static RULES: [OnceLock<TriangleRule>; CACHE] = [const { OnceLock::new() }; CACHE];
    assert!(m >= 1 && m < CACHE);
    RULES[m].get_or_init(|| TriangleRule::collapsed(m))
}

/// Shared singular-vertex rule with `m x m` points.
pub fn singular_rule(m: usize) -> &'static TriangleRule {
    static RULES: [OnceLock<TriangleRule>; CACHE] = [const { OnceLock::new() }; CACHE];
    assert!(m >= 1 && m < CACHE);
    RULES[m].get_or_init(|| TriangleRule::singular_vertex(m))
}

/// Shared Gauss-Legendre rule on `[0, 1]` with `m` points.
pub fn edge_rule(m: usize) -> &'static EdgeRule {
    static RULES: [OnceLock<EdgeRule>; CACHE] = [const { OnceLock::new() }; CACHE];
    assert!(m >= 1 && m < CACHE);
    RULES[m].get_or_init(|| EdgeRule::new(m))
}

/// Number of points per direction for a rule exact at total degree `deg`.
pub fn points_for_degree(deg: usize) -> usize {
    deg / 2 + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u64) -> f64 {
        (1..=n).map(|i| i as f64).product()
    }

    #[test]
    fn legendre_two_point() {
        let r = gauss_legendre(2);
        let x = 1.0 / 3f64.sqrt();
        assert!((r.points[0] + x).abs() < 1e-15);
        assert!((r.points[1] - x).abs() < 1e-15);
        assert!((r.weights[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn jacobi_one_point() {
        // Node is the mean of x against (1 - x): -1/3, weight is the mass 2.
        let r = gauss_jacobi(1, 1.0);
        assert!((r.points[0] + 1.0 / 3.0).abs() < 1e-15);
        assert!((r.weights[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn jacobi_moments() {
        // int_{-1}^{1} (1 - x) x^j dx
        let exact = |j: i32| {
            let a = (1.0 - (-1f64).powi(j + 1)) / (j + 1) as f64;
            let b = (1.0 - (-1f64).powi(j + 2)) / (j + 2) as f64;
            a - b
        };
        for m in 1..=12 {
            let r = gauss_jacobi(m, 1.0);
            for j in 0..(2 * m as i32) {
                let q: f64 = r.points.iter().zip(&r.weights).map(|(x, w)| w * x.powi(j)).sum();
                assert!((q - exact(j)).abs() < 1e-14, "m={m} j={j}");
            }
        }
    }

    #[test]
    fn triangle_monomials() {
        // int_T xi^a eta^b = a! b! / (a + b + 2)!
        for m in 1..=8 {
            let r = triangle_rule(m);
            for a in 0..(2 * m) {
                for b in 0..(2 * m - a) {
                    let q: f64 = r
                        .points
                        .iter()
                        .zip(&r.weights)
                        .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                        .sum();
                    let e = factorial(a as u64) * factorial(b as u64) / factorial((a + b + 2) as u64);
                    assert!(((q - e) / e).abs() < 1e-13, "m={m} a={a} b={b}");
                }
            }
        }
    }

    #[test]
    fn singular_rule_integrates_inverse_distance() {
        let f = |p: &[f64; 2]| 1.0 / (p[0] * p[0] + (p[1] - 1.0).powi(2)).sqrt();
        let q = |m: usize| -> f64 {
            let r = singular_rule(m);
            r.points.iter().zip(&r.weights).map(|(p, w)| w * f(p)).sum()
        };
        // Polar coordinates around (0, 1).
        let exact = (1.0 + 2f64.sqrt()).ln();
        assert!((q(12) - exact).abs() < 1e-12);
        assert!((q(30) - exact).abs() < 1e-12);
    }
}
