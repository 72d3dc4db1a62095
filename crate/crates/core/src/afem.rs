//! Solve, estimate, mark and refine.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::bench::Benchmark;
use crate::equilibration::equilibrate;
use crate::error::{Error, Result};
use crate::estimators::{
    averaging_defect, energy_error_sq, eq_estimator, hho_estimator, oscillation, residual, Constants, Estimate,
};
use crate::hho::{solve, HhoSolution};
use crate::mesh::Mesh;
use crate::poly::PiecewisePoly;
use crate::quadrature::triangle_rule;
use crate::source::SourceSamples;

/// Minimal set of triangles carrying the fraction `theta` of the total.
///
/// Indicators are taken in descending order, ties by ascending index. All-zero
/// indicators give the empty set.
pub fn mark(indicators: &[f64], theta: f64) -> Vec<usize> {
    let total: f64 = indicators.iter().sum();
    if total <= 0.0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..indicators.len()).collect();
    order.sort_by(|&a, &b| indicators[b].total_cmp(&indicators[a]).then(a.cmp(&b)));
    let goal = theta * total;
    let mut acc = 0.0;
    let mut out = Vec::new();
    for t in order {
        if acc >= goal || indicators[t] <= 0.0 {
            break;
        }
        acc += indicators[t];
        out.push(t);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Uniform,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Indicator {
    Res,
    Hho,
    /// Equilibration indicators of the configured `p`.
    Eq,
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Mode::Uniform),
            "adaptive" => Ok(Mode::Adaptive),
            _ => Err(Error::Input(format!("unknown mode `{s}`"))),
        }
    }
}

impl FromStr for Indicator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "res" => Ok(Indicator::Res),
            "hho" => Ok(Indicator::Hho),
            "eq0" | "eq" => Ok(Indicator::Eq),
            _ => Err(Error::Input(format!("unknown estimator `{s}`"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Uniform => "uniform",
            Mode::Adaptive => "adaptive",
        })
    }
}

impl fmt::Display for Indicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Indicator::Res => "res",
            Indicator::Hho => "hho",
            Indicator::Eq => "eq0",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Config {
    pub benchmark: Benchmark,
    pub k: usize,
    pub p: usize,
    pub mode: Mode,
    pub indicator: Indicator,
    pub theta: f64,
    pub levels: Option<usize>,
    pub max_ndof: usize,
}

impl Config {
    pub fn new(benchmark: Benchmark, k: usize, mode: Mode) -> Self {
        Config { benchmark, k, p: 0, mode, indicator: Indicator::Res, theta: 0.5, levels: None, max_ndof: 100_000 }
    }

    fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::Input(format!("theta = {} is not in (0, 1]", self.theta)));
        }
        if self.k > 4 || self.p > 1 {
            return Err(Error::Input(format!("unsupported degrees k = {}, p = {}", self.k, self.p)));
        }
        Ok(())
    }
}

/// All estimators on one mesh.
#[derive(Debug, Clone)]
pub struct Estimates {
    pub solution: HhoSolution,
    pub res: Estimate,
    pub hho: Estimate,
    pub eq: [Estimate; 2],
    /// Squared energy error when the exact solution is known.
    pub error_sq: Option<f64>,
}

/// Solve and evaluate every estimator.
pub fn estimate(mesh: &Mesh, benchmark: Benchmark, k: usize) -> Result<Estimates> {
    let c = Constants::new(benchmark.domain().omega_max());
    let samples = SourceSamples::new(mesh, k, &benchmark);
    let sol = solve(mesh, k, &samples)?;
    let (res, _) = residual(mesh, &sol, &samples, &c);
    let (_, avg) = averaging_defect(mesh, &sol.recon);
    let hho = hho_estimator(mesh, &sol, &samples, &c, &avg);
    let mut eq = Vec::with_capacity(2);
    for p in 0..2 {
        let r = if k == 0 { 0 } else { k + p };
        let osc = oscillation(mesh, &samples, r);
        let q = equilibrate(mesh, &sol, &samples, p)?;
        eq.push(eq_estimator(&c, &osc, &q.norm_sq, &avg));
    }
    let error_sq = benchmark.has_exact_solution().then(|| {
        let b = benchmark;
        energy_error_sq(mesh, &sol.recon, &move |x| b.grad_u(x), b.singular_point())
    });
    let eq1 = eq.pop().unwrap();
    let eq0 = eq.pop().unwrap();
    Ok(Estimates { solution: sol, res, hho, eq: [eq0, eq1], error_sq })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelRecord {
    pub level: usize,
    pub ndof: usize,
    pub ntri: usize,
    pub error: Option<f64>,
    pub eta_res: f64,
    pub eta_hho: f64,
    pub eta_eq0: f64,
    pub eta_eq1: f64,
    /// Size of the marked set, absent on the last level.
    pub marked: Option<usize>,
}

impl LevelRecord {
    pub fn etas(&self) -> [f64; 4] {
        [self.eta_res, self.eta_hho, self.eta_eq0, self.eta_eq1]
    }

    /// Efficiency indices `eta / error`.
    pub fn efficiency(&self) -> Option<[f64; 4]> {
        self.error.filter(|e| *e > 0.0).map(|e| self.etas().map(|x| x / e))
    }
}

#[derive(Debug, Clone)]
pub struct History {
    pub config: Config,
    pub records: Vec<LevelRecord>,
    pub mesh: Mesh,
}

/// Level waiting for a reference solution on a mesh with at least twice as many triangles.
struct Pending {
    record: usize,
    mesh: Mesh,
    recon: PiecewisePoly,
    /// Triangle of the pending mesh containing each triangle of the current mesh.
    ancestor: Vec<usize>,
}

/// `|| grad_pw (u_ref - R u_h) ||` with `R u_h` evaluated on the coarse ancestors.
fn reference_error(fine: &Mesh, fine_recon: &PiecewisePoly, p: &Pending) -> f64 {
    let k = p.recon.degree;
    let rule = triangle_rule(k + 4);
    (0..fine.n_triangles())
        .into_par_iter()
        .map(|t| {
            let g = fine.geom(t);
            let a = p.ancestor[t];
            rule.points
                .iter()
                .zip(&rule.weights)
                .map(|(xi, w)| {
                    let d = fine_recon.grad_ref(&g, t, *xi);
                    let c = p.recon.grad(&p.mesh, a, g.map(*xi));
                    w * g.det * ((d[0] - c[0]).powi(2) + (d[1] - c[1]).powi(2))
                })
                .sum::<f64>()
        })
        .sum::<f64>()
        .sqrt()
}

/// Run the adaptive or uniform loop.
///
/// `progress` is called with every finished record. Without an exact
/// solution the error of a level is measured against the discrete solution
/// of the first later level with at least twice as many triangles; the loop
/// continues past the stop rule until every recorded level has one.
pub fn run(config: &Config, mut progress: impl FnMut(&LevelRecord)) -> Result<History> {
    config.validate()?;
    let b = config.benchmark;
    let mut mesh = Mesh::build(b.domain(), 0)?;
    let mut records: Vec<LevelRecord> = Vec::new();
    let mut pending: Vec<Pending> = Vec::new();
    let mut final_mesh = None;
    let mut level = 0;
    loop {
        let est = estimate(&mesh, b, config.k)?;
        let recording = final_mesh.is_none();
        if !b.has_exact_solution() {
            let mut i = 0;
            while i < pending.len() {
                if mesh.n_triangles() >= 2 * pending[i].mesh.n_triangles() {
                    let p = pending.remove(i);
                    records[p.record].error = Some(reference_error(&mesh, &est.solution.recon, &p));
                } else {
                    i += 1;
                }
            }
        }
        if recording {
            let rec = LevelRecord {
                level,
                ndof: est.solution.ndof,
                ntri: mesh.n_triangles(),
                error: est.error_sq.map(f64::sqrt),
                eta_res: est.res.value,
                eta_hho: est.hho.value,
                eta_eq0: est.eq[0].value,
                eta_eq1: est.eq[1].value,
                marked: None,
            };
            if b.has_exact_solution() {
                progress(&rec);
            } else {
                pending.push(Pending {
                    record: records.len(),
                    mesh: mesh.clone(),
                    recon: est.solution.recon.clone(),
                    ancestor: (0..mesh.n_triangles()).collect(),
                });
            }
            records.push(rec);
        }
        let last = records.last().unwrap();
        let stop = config.levels.is_some_and(|l| records.len() >= l) || last.ndof >= config.max_ndof;
        if recording && stop {
            final_mesh = Some(mesh.clone());
        }
        if final_mesh.is_some() && pending.is_empty() {
            break;
        }
        let marked: Vec<usize> = match config.mode {
            Mode::Uniform => (0..mesh.n_triangles()).collect(),
            Mode::Adaptive => {
                let ind = match config.indicator {
                    Indicator::Res => &est.res.indicators,
                    Indicator::Hho => &est.hho.indicators,
                    Indicator::Eq => &est.eq[config.p].indicators,
                };
                mark(ind, config.theta)
            }
        };
        if marked.is_empty() {
            if final_mesh.is_none() {
                final_mesh = Some(mesh.clone());
            }
            // Nothing to refine: no reference is available for the pending levels.
            break;
        }
        if recording {
            records.last_mut().unwrap().marked = Some(marked.len());
        }
        let refinement = match config.mode {
            Mode::Uniform => mesh.refine_uniform()?,
            Mode::Adaptive => mesh.refine(&marked)?,
        };
        for p in &mut pending {
            p.ancestor = refinement.parent.iter().map(|&t| p.ancestor[t]).collect();
        }
        mesh = refinement.mesh;
        level += 1;
    }
    if !b.has_exact_solution() {
        for r in &records {
            progress(r);
        }
    }
    Ok(History { config: config.clone(), records, mesh: final_mesh.unwrap() })
}

/// Least-squares slope of `log y` against `log x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = x.iter().zip(y).map(|(a, b)| (a.ln(), b.ln())).unzip();
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marking_examples() {
        assert_eq!(mark(&[4.0, 1.0, 1.0, 1.0, 1.0], 0.5), vec![0]);
        assert_eq!(mark(&[1.0, 1.0, 1.0, 1.0], 0.5), vec![0, 1]);
        assert_eq!(mark(&[0.0, 2.0, 0.0, 1.0], 1.0), vec![1, 3]);
        assert!(mark(&[0.0, 0.0], 0.5).is_empty());
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 10.0, 100.0];
        let y = x.map(|v: f64| 3.0 * v.powf(-0.75));
        assert!((slope(&x, &y) + 0.75).abs() < 1e-12);
    }

    #[test]
    fn uniform_square_run_is_reliable() {
        let mut c = Config::new(Benchmark::Square, 1, Mode::Uniform);
        c.levels = Some(3);
        let h = run(&c, |_| {}).unwrap();
        assert_eq!(h.records.len(), 3);
        for r in &h.records {
            let e = r.error.unwrap();
            for eta in r.etas() {
                assert!(eta >= e, "{r:?}");
            }
        }
        assert!(h.records.windows(2).all(|w| w[1].ndof > w[0].ndof));
    }

    #[test]
    fn lshape_reference_errors_are_filled() {
        let mut c = Config::new(Benchmark::LShape, 0, Mode::Adaptive);
        c.levels = Some(4);
        let h = run(&c, |_| {}).unwrap();
        assert_eq!(h.records.len(), 4);
        assert!(h.records.iter().all(|r| r.error.is_some_and(|e| e > 0.0)));
    }
}
