//! Command-line front end: benchmark runs to CSV and self-tests.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Parser, ValueEnum};

use crate::afem::{run, slope, Config, History, Indicator, LevelRecord, Mode};
use crate::bench::Benchmark;
use crate::equilibration::{audit, audit_patch, equilibrate, patch_flux, FluxData};
use crate::error::Result;
use crate::estimators::Constants;
use crate::hho::solve;
use crate::mesh::{Domain, Mesh};
use crate::quadrature::triangle_rule;
use crate::source::SourceSamples;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Selftest {
    Constants,
    Quadrature,
    Equilibrium,
}

#[derive(Debug, Parser)]
#[command(name = "hho", version, about = "HHO Poisson solver with guaranteed a posteriori error bounds")]
pub struct Args {
    #[arg(long, default_value = "square")]
    pub benchmark: Benchmark,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(0..=3))]
    pub k: u8,
    /// Extra degree of the equilibrated flux used by the `eq0` indicator.
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=1))]
    pub p: u8,
    #[arg(long, default_value = "adaptive")]
    pub mode: Mode,
    /// Refinement indicator.
    #[arg(long, default_value = "res")]
    pub estimator: Indicator,
    #[arg(long, default_value_t = 0.5)]
    pub theta: f64,
    /// Maximal number of levels.
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long, default_value_t = 100_000)]
    pub max_ndof: usize,
    /// CSV output; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Final mesh in the hho-mesh v1 format.
    #[arg(long)]
    pub mesh_out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub selftest: Option<Selftest>,
}

impl Args {
    pub fn config(&self) -> Config {
        Config {
            benchmark: self.benchmark,
            k: self.k as usize,
            p: self.p as usize,
            mode: self.mode,
            indicator: self.estimator,
            theta: self.theta,
            levels: self.levels,
            max_ndof: self.max_ndof,
        }
    }
}

pub const CSV_HEADER: &str = "level,ndof,ntri,error,eta_res,eta_hho,eta_eq0,eta_eq1,ef_res,ef_hho,ef_eq0,ef_eq1,marked";

fn real(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.16e}")).unwrap_or_default()
}

pub fn csv_row(r: &LevelRecord) -> String {
    let ef = r.efficiency();
    let mut cols = vec![r.level.to_string(), r.ndof.to_string(), r.ntri.to_string(), real(r.error)];
    cols.extend(r.etas().iter().map(|e| real(Some(*e))));
    cols.extend((0..4).map(|i| real(ef.map(|f| f[i]))));
    cols.push(r.marked.map(|m| m.to_string()).unwrap_or_default());
    cols.join(",")
}

pub fn write_csv<W: Write>(mut w: W, h: &History) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in &h.records {
        writeln!(w, "{}", csv_row(r))?;
    }
    w.flush()
}

/// Rows of the constants table: `(omega_max, M_bd, c_apx, C_st, C_1, C_2)`.
pub const CONSTANTS_TABLE: [(f64, f64, f64, f64, f64, f64); 3] = [
    (PI, 4.0, 2.9568, 26.0893, 2.9718, 7.0495),
    (1.5 * PI, 6.0, 6.4642, 55.8498, 6.4710, 15.2341),
    (2.0 * PI, 8.0, 11.3771, 97.5374, 11.3810, 26.7317),
];

pub fn selftest_constants(out: &mut dyn Write) -> io::Result<bool> {
    let mut ok = true;
    writeln!(out, "omega_max     M_bd  c_apx      C_st       C_1        C_2")?;
    for (w, m, ca, cs, c1, c2) in CONSTANTS_TABLE {
        let c = Constants::new(w);
        writeln!(out, "{:<12.6} {:>4} {:>10.4} {:>10.4} {:>10.4} {:>10.4}", w, c.m_bd, c.c_apx, c.c_st, c.c_vol, c.c_edge)?;
        let good = c.m_bd == m
            && (c.c_apx - ca).abs() <= 5e-4
            && (c.c_st - cs).abs() <= 5e-4
            && (c.c_vol - c1).abs() <= 5e-4
            && (c.c_edge - c2).abs() <= 5e-4;
        ok &= good;
    }
    writeln!(out, "constants: {}", if ok { "PASS" } else { "FAIL" })?;
    Ok(ok)
}

/// Largest relative error of the collapsed rules on monomials of degree `2m - 1`.
pub fn quadrature_defect() -> f64 {
    let fact = |n: usize| -> f64 { (1..=n).map(|i| i as f64).product() };
    let mut worst = 0.0f64;
    for m in 1..=8 {
        let r = triangle_rule(m);
        for a in 0..2 * m {
            for b in 0..2 * m - a {
                let q: f64 =
                    r.points.iter().zip(&r.weights).map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32)).sum();
                let e = fact(a) * fact(b) / fact(a + b + 2);
                worst = worst.max(((q - e) / e).abs());
            }
        }
    }
    worst
}

pub fn selftest_quadrature(out: &mut dyn Write) -> io::Result<bool> {
    let d = quadrature_defect();
    let ok = d <= 1e-13;
    writeln!(out, "max relative monomial error {d:.3e}")?;
    writeln!(out, "quadrature: {}", if ok { "PASS" } else { "FAIL" })?;
    Ok(ok)
}

pub fn selftest_equilibrium(out: &mut dyn Write) -> Result<bool> {
    let mut ok = true;
    for (domain, b) in [(Domain::Square, Benchmark::Square), (Domain::LShape, Benchmark::LShape), (Domain::Slit, Benchmark::Slit)] {
        let mesh = Mesh::build(domain, 2)?;
        for k in 0..=2 {
            let samples = SourceSamples::new(&mesh, k, &b);
            let sol = solve(&mesh, k, &samples)?;
            for p in 0..=1 {
                let d = FluxData::new(&mesh, &sol, &samples, p);
                let mut worst = 0.0f64;
                for patch in mesh.patches()? {
                    let f = patch_flux(&d, &patch)?;
                    let a = audit_patch(&d, &patch, &f);
                    worst = worst.max(a.divergence).max(a.jump).max(a.optimality);
                }
                let eq = equilibrate(&mesh, &sol, &samples, p)?;
                let g = audit(&mesh, &sol, &samples, &eq, p == 0);
                let good = worst <= 1e-10 && g.divergence <= 1e-10 && g.jump <= 1e-10;
                ok &= good;
                writeln!(
                    out,
                    "{domain:<7} k={k} p={p}  patch {worst:.2e}  div {:.2e}  jump {:.2e}  {}",
                    g.divergence,
                    g.jump,
                    if good { "ok" } else { "FAIL" }
                )?;
            }
        }
    }
    writeln!(out, "equilibrium: {}", if ok { "PASS" } else { "FAIL" })?;
    Ok(ok)
}

/// Run the command line; returns the process exit code.
pub fn main_with(args: Args) -> Result<i32> {
    let mut stdout = io::stdout().lock();
    if let Some(t) = args.selftest {
        let ok = match t {
            Selftest::Constants => selftest_constants(&mut stdout)?,
            Selftest::Quadrature => selftest_quadrature(&mut stdout)?,
            Selftest::Equilibrium => selftest_equilibrium(&mut stdout)?,
        };
        return Ok(if ok { 0 } else { 1 });
    }
    let config = args.config();
    let h = run(&config, |r| {
        eprintln!(
            "level {:>3}  ndof {:>8}  error {}  eta_res {:.4e}  eta_eq0 {:.4e}",
            r.level,
            r.ndof,
            r.error.map(|e| format!("{e:.4e}")).unwrap_or_else(|| "-".into()),
            r.eta_res,
            r.eta_eq0
        )
    })?;
    match &args.out {
        Some(p) => write_csv(BufWriter::new(File::create(p)?), &h)?,
        None => write_csv(&mut stdout, &h)?,
    }
    if let Some(p) = &args.mesh_out {
        h.mesh.write_to(BufWriter::new(File::create(p)?))?;
    }
    let tail: Vec<&LevelRecord> = h.records.iter().rev().take(4).filter(|r| r.error.is_some()).collect();
    if tail.len() >= 2 {
        let x: Vec<f64> = tail.iter().map(|r| r.ndof as f64).collect();
        let y: Vec<f64> = tail.iter().map(|r| r.error.unwrap()).collect();
        eprintln!("error slope over the last {} levels: {:.3}", tail.len(), slope(&x, &y));
    }
    Ok(0)
}
