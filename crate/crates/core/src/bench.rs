//! Benchmark problems with closed-form data.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mesh::{Domain, Point};
use crate::source::Source;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Benchmark {
    /// Smooth solution with a sharp Gaussian peak on the unit square.
    Square,
    /// Slit domain with the `r^{1/2}` singularity at the origin.
    Slit,
    /// L-shaped domain with `f = 1`; the exact solution is unknown.
    LShape,
}

impl Benchmark {
    pub fn domain(self) -> Domain {
        match self {
            Benchmark::Square => Domain::Square,
            Benchmark::Slit => Domain::Slit,
            Benchmark::LShape => Domain::LShape,
        }
    }

    pub fn name(self) -> &'static str {
        self.domain().name()
    }

    pub fn has_exact_solution(self) -> bool {
        !matches!(self, Benchmark::LShape)
    }

    pub fn u(self, x: Point) -> f64 {
        match self {
            Benchmark::Square => {
                let (a, b) = (x[0] * (x[0] - 1.0), x[1] * (x[1] - 1.0));
                a * b * gauss(x)
            }
            Benchmark::Slit => {
                let (s, _) = slit_singular(x);
                s * (x[0] * x[0] - 1.0) * (x[1] * x[1] - 1.0)
            }
            Benchmark::LShape => f64::NAN,
        }
    }

    pub fn grad_u(self, x: Point) -> Point {
        match self {
            Benchmark::Square => {
                let (a, b) = (x[0] * (x[0] - 1.0), x[1] * (x[1] - 1.0));
                let e = gauss(x);
                let (gx, gy) = (-200.0 * (x[0] - 0.5), -200.0 * (x[1] - 0.117));
                [e * ((2.0 * x[0] - 1.0) * b + a * b * gx), e * (a * (2.0 * x[1] - 1.0) + a * b * gy)]
            }
            Benchmark::Slit => {
                let (s, ds) = slit_singular(x);
                let p = (x[0] * x[0] - 1.0) * (x[1] * x[1] - 1.0);
                let dp = [2.0 * x[0] * (x[1] * x[1] - 1.0), 2.0 * x[1] * (x[0] * x[0] - 1.0)];
                [p * ds[0] + s * dp[0], p * ds[1] + s * dp[1]]
            }
            Benchmark::LShape => [f64::NAN; 2],
        }
    }

    /// `f = -Δu`.
    pub fn f(self, x: Point) -> f64 {
        match self {
            Benchmark::Square => {
                let (a, b) = (x[0] * (x[0] - 1.0), x[1] * (x[1] - 1.0));
                let e = gauss(x);
                let (gx, gy) = (-200.0 * (x[0] - 0.5), -200.0 * (x[1] - 0.117));
                let p = a * b;
                let dp = [(2.0 * x[0] - 1.0) * b, a * (2.0 * x[1] - 1.0)];
                let lap_p = 2.0 * (a + b);
                // Δ(p e^g) = e^g (Δp + 2 ∇p·∇g + p Δg + p |∇g|^2) with Δg = -400.
                let lap =
                    e * (lap_p + 2.0 * (dp[0] * gx + dp[1] * gy) + p * (-400.0) + p * (gx * gx + gy * gy));
                -lap
            }
            Benchmark::Slit => {
                // s is harmonic: Δ(s p) = s Δp + 2 ∇s·∇p.
                let (s, ds) = slit_singular(x);
                let dp = [2.0 * x[0] * (x[1] * x[1] - 1.0), 2.0 * x[1] * (x[0] * x[0] - 1.0)];
                let lap_p = 2.0 * (x[1] * x[1] - 1.0) + 2.0 * (x[0] * x[0] - 1.0);
                -(s * lap_p + 2.0 * (ds[0] * dp[0] + ds[1] * dp[1]))
            }
            Benchmark::LShape => 1.0,
        }
    }

    /// Point where the solution gradient or the source is singular.
    pub fn singular_point(self) -> Option<Point> {
        match self {
            Benchmark::Slit => Some([0.0, 0.0]),
            _ => None,
        }
    }
}

impl Source for Benchmark {
    fn value(&self, x: Point) -> f64 {
        self.f(x)
    }

    fn singular_point(&self) -> Option<Point> {
        Benchmark::singular_point(*self)
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Benchmark {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square" => Ok(Benchmark::Square),
            "slit" => Ok(Benchmark::Slit),
            "lshape" => Ok(Benchmark::LShape),
            _ => Err(Error::Input(format!("unknown benchmark `{s}`"))),
        }
    }
}

fn gauss(x: Point) -> f64 {
    (-100.0 * ((x[0] - 0.5).powi(2) + (x[1] - 0.117).powi(2))).exp()
}

/// `r^{1/2} sin(phi/2)` with `phi` in `[0, 2 pi)`, and its gradient.
fn slit_singular(x: Point) -> (f64, Point) {
    let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
    if r == 0.0 {
        return (0.0, [0.0, 0.0]);
    }
    let mut phi = x[1].atan2(x[0]);
    if phi < 0.0 {
        phi += 2.0 * PI;
    }
    let (sh, ch) = (0.5 * phi).sin_cos();
    let c = 0.5 / r.sqrt();
    (r.sqrt() * sh, [-c * sh, c * ch])
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Richardson-extrapolated central difference of a scalar function.
    fn diff(g: &dyn Fn(f64) -> f64, h: f64) -> f64 {
        let d = |h: f64| (g(h) - g(-h)) / (2.0 * h);
        let (d1, d2, d3) = (d(h), d(h / 2.0), d(h / 4.0));
        let r1 = (4.0 * d2 - d1) / 3.0;
        let r2 = (4.0 * d3 - d2) / 3.0;
        (16.0 * r2 - r1) / 15.0
    }

    fn check(b: Benchmark, pts: &[Point]) {
        for &x in pts {
            let gx = diff(&|h| b.u([x[0] + h, x[1]]), 1e-3);
            let gy = diff(&|h| b.u([x[0], x[1] + h]), 1e-3);
            let g = b.grad_u(x);
            let scale = 1.0 + g[0].abs() + g[1].abs();
            assert!((gx - g[0]).abs() < 1e-8 * scale && (gy - g[1]).abs() < 1e-8 * scale, "{b} grad at {x:?}");
            let lap = diff(&|h| b.grad_u([x[0] + h, x[1]])[0], 1e-3) + diff(&|h| b.grad_u([x[0], x[1] + h])[1], 1e-3);
            let f = b.f(x);
            assert!((lap + f).abs() < 1e-8 * (1.0 + f.abs()), "{b} laplacian at {x:?}: {} vs {f}", -lap);
        }
    }

    #[test]
    fn square_data_is_consistent() {
        let pts: Vec<Point> = (0..40).map(|i| [0.05 + 0.9 * ((i * 7 % 40) as f64) / 40.0, 0.05 + 0.9 * (i as f64) / 40.0]).collect();
        check(Benchmark::Square, &pts);
    }

    #[test]
    fn slit_data_is_consistent() {
        let pts: Vec<Point> = (0..40)
            .map(|i| {
                let a = 0.1 + (2.0 * PI - 0.2) * (i as f64 + 0.5) / 40.0;
                let r = 0.1 + 0.8 * ((i * 13 % 40) as f64) / 40.0;
                [r * a.cos(), r * a.sin()]
            })
            .collect();
        check(Benchmark::Slit, &pts);
    }

    #[test]
    fn slit_solution_vanishes_on_the_slit_from_above() {
        assert!(Benchmark::Slit.u([0.5, 1e-300]).abs() < 1e-12);
    }
}
