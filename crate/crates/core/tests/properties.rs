use hho::afem::{mark, run, Config, Mode};
use hho::bench::Benchmark;
use hho::cli::write_csv;
use hho::equilibration::{minimise, patch_flux, FluxData};
use hho::estimators::average;
use hho::hho::solve;
use hho::mesh::{Domain, Mesh};
use hho::poly::PiecewisePoly;
use hho::rt::{ref_functionals, rt_basis};
use hho::source::SourceSamples;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn domain() -> impl Strategy<Value = Domain> {
    prop_oneof![Just(Domain::Square), Just(Domain::LShape), Just(Domain::Slit)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn refinement_is_conforming_and_nested(d in domain(), picks in prop::collection::vec(prop::collection::vec(any::<prop::sample::Index>(), 1..12), 1..4)) {
        let mut mesh = Mesh::build(d, 1).unwrap();
        for pick in picks {
            let marked: Vec<usize> = pick.iter().map(|i| i.index(mesh.n_triangles())).collect();
            let r = mesh.refine(&marked).unwrap();
            r.mesh.check().unwrap();
            prop_assert!(r.mesh.is_right_isosceles(1e-12));
            prop_assert!((r.mesh.area() - mesh.area()).abs() <= 1e-12 * mesh.area());
            let mut children = vec![0usize; mesh.n_triangles()];
            for (t, &p) in r.parent.iter().enumerate() {
                children[p] += 1;
                let (fine, coarse) = (r.mesh.geom(t), mesh.geom(p));
                for x in fine.p {
                    let xi = coarse.pull(x);
                    prop_assert!(xi[0] >= -1e-12 && xi[1] >= -1e-12 && xi[0] + xi[1] <= 1.0 + 1e-12);
                }
            }
            for &t in &marked {
                prop_assert!(children[t] >= 2);
            }
            mesh = r.mesh;
        }
    }

    #[test]
    fn marking_is_minimal_bulk(ind in prop::collection::vec(0.0f64..10.0, 0..40), theta in 0.05f64..=1.0) {
        let m = mark(&ind, theta);
        let total: f64 = ind.iter().sum();
        let s: f64 = m.iter().map(|&t| ind[t]).sum();
        if total > 0.0 {
            prop_assert!(s >= theta * total);
            // Dropping the smallest marked indicator loses the bulk property.
            let smallest = m.iter().map(|&t| ind[t]).fold(f64::INFINITY, f64::min);
            prop_assert!(s - smallest < theta * total);
            let unmarked_max = (0..ind.len()).filter(|t| !m.contains(t)).map(|t| ind[t]).fold(0.0, f64::max);
            prop_assert!(unmarked_max <= smallest);
        } else {
            prop_assert!(m.is_empty());
        }
    }

    #[test]
    fn averaging_fixes_conforming_fields(d in domain(), seed in prop::collection::vec(-1.0f64..1.0, 64)) {
        let mesh = Mesh::build(d, 1).unwrap();
        let boundary = mesh.boundary_vertices();
        let vals: Vec<f64> =
            (0..mesh.n_vertices()).map(|z| if boundary[z] { 0.0 } else { seed[z % seed.len()] }).collect();
        for degree in 1..=3 {
            let p = PiecewisePoly::project(&mesh, degree, |t, _, xi| {
                let l = [1.0 - xi[0] - xi[1], xi[0], xi[1]];
                (0..3).map(|j| l[j] * vals[mesh.triangles[t].v[j]]).sum()
            });
            let a = average(&mesh, &p);
            let err = a.coeffs.iter().zip(&p.coeffs).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            prop_assert!(err <= 1e-12, "degree {degree}: {err}");
        }
    }

    #[test]
    fn rt_dual_basis(q in 0usize..=4, pattern in 0u8..8, seed in prop::collection::vec(-1.0f64..1.0, 40)) {
        let b = rt_basis(q, pattern);
        let c: Vec<f64> = (0..b.dim).map(|i| seed[i % seed.len()] * (1.0 + i as f64)).collect();
        let mut vx = vec![0.0; b.dim];
        let mut vy = vec![0.0; b.dim];
        let mut dv = vec![0.0; b.dim];
        let mom = ref_functionals(
            q,
            pattern,
            |xi| {
                b.eval(xi, &mut vx, &mut vy);
                [vx.iter().zip(&c).map(|(v, c)| v * c).sum(), vy.iter().zip(&c).map(|(v, c)| v * c).sum()]
            },
            |xi| {
                b.div(xi, &mut dv);
                dv.iter().zip(&c).map(|(v, c)| v * c).sum()
            },
        );
        // Entrywise duality to 1e-10 bounds the defect by 1e-10 |c|_1.
        let l1: f64 = c.iter().map(|x| x.abs()).sum();
        for (m, c) in mom.iter().zip(&c) {
            prop_assert!((m - c).abs() <= 1e-10 * l1);
        }
    }

    #[test]
    fn minimiser_ignores_mode_basis(q in 0usize..=2, z in any::<prop::sample::Index>(), mix in prop::collection::vec(-0.3f64..0.3, 400)) {
        let mesh = Mesh::build(Domain::LShape, 1).unwrap();
        let b = Benchmark::LShape;
        let samples = SourceSamples::new(&mesh, q, &b);
        let sol = solve(&mesh, q, &samples).unwrap();
        let d = FluxData::new(&mesh, &sol, &samples, 0);
        let patch = mesh.patch(z.index(mesh.n_vertices())).unwrap();
        let f = patch_flux(&d, &patch).unwrap();
        let n = f.dim_v();
        let t = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { mix[(i * n + j) % mix.len()] / n as f64 });
        let modes: Vec<DMatrix<f64>> = f.modes.iter().map(|m| m * &t).collect();
        let (_, other) = minimise(&f.particular, &modes, &f.masses).unwrap();
        let scale = f.particular.iter().map(|s| s.norm()).sum::<f64>().max(1e-300);
        for (a, b) in f.result.iter().zip(&other) {
            prop_assert!((a - b).norm() <= 1e-10 * scale);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn csv_is_deterministic(k in 0usize..=1, theta in 0.2f64..0.8, b in prop_oneof![Just(Benchmark::Square), Just(Benchmark::LShape)]) {
        let mut c = Config::new(b, k, Mode::Adaptive);
        c.theta = theta;
        c.max_ndof = 400;
        let csv = || {
            let mut out = Vec::new();
            write_csv(&mut out, &run(&c, |_| ()).unwrap()).unwrap();
            out
        };
        prop_assert_eq!(csv(), csv());
    }
}
