//! Cross-checks between independent solution routes.

use proptest::prelude::*;
use repmut_core::closed_form::{affine_engine, linear_engine};
use repmut_core::metric::{bl_distance_dense, bl_distance_with, CompactifiedMeasure, StarMetric};
use repmut_core::model::{DiffusionModel, FitnessFunction, InitialLaw};
use repmut_core::numerics::kde::GridDensity;
use repmut_core::numerics::quadrature::linspace;
use repmut_core::pde::{solve_rm_pde, PdeScheme};

fn gaussian_pdf(x: f64, m: f64, v: f64) -> f64 {
    (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
}

#[test]
fn ou_affine_engine_matches_pde() {
    let m = DiffusionModel::ou(1.0, 0.0, 1.0).unwrap();
    let g = FitnessFunction::linear(vec![-1.0]).with_sup(2.0);
    let u0 = InitialLaw::gaussian_1d(0.5, 0.5).unwrap();
    let aff = affine_engine(&m, &g, &u0).unwrap();
    let u0_grid = GridDensity::from_fn(linspace(-10.0, 10.0, 4001), |x| gaussian_pdf(x, 0.5, 0.5)).unwrap();
    let times = [0.5, 1.0];
    let pde = solve_rm_pde(&m, &g, &u0_grid, &times, &PdeScheme::full_line(10.0, 2048, 1e-3)).unwrap();
    let nodes = linspace(-6.0, 6.0, 1201);
    for (k, &t) in times.iter().enumerate() {
        let a = aff.density_grid(t, &nodes).unwrap();
        let p = pde.density(k).unwrap();
        let p = GridDensity::new(nodes.clone(), nodes.iter().map(|x| p.eval(*x)).collect()).unwrap();
        let d = a.l1_distance(&p);
        assert!(d < 1e-3, "t={t}: L1 {d:.3e}");
    }
}

#[test]
fn linear_and_affine_engines_agree_on_drifting_bm() {
    let m = DiffusionModel::scalar_bm(0.3, 0.7);
    let g = FitnessFunction::linear(vec![0.5]).with_sup(3.0);
    let u0 = InitialLaw::gaussian_1d(-0.2, 0.4).unwrap();
    let lin = linear_engine(&m, &g, &u0).unwrap();
    let aff = affine_engine(&m, &g, &u0).unwrap();
    for t in [0.1, 0.7, 2.0] {
        for x in linspace(-4.0, 5.0, 91) {
            let (a, b) = (lin.density(t, &[x]).unwrap(), aff.density(t, &[x]).unwrap());
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "t={t} x={x}: {a} vs {b}");
        }
    }
}

fn measure(points: Vec<(f64, f64)>, weights: &[f64], total: f64) -> CompactifiedMeasure {
    let sum: f64 = weights.iter().sum();
    let masses = weights.iter().map(|w| w / sum * total).collect();
    let atoms = points.into_iter().flat_map(|(a, b)| [a, b]).collect();
    CompactifiedMeasure::new(2, atoms, masses).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn network_and_dense_bl_agree_in_two_dimensions(
        p in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..6),
        q in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..6),
        wp in prop::collection::vec(0.05f64..1.0, 6),
        wq in prop::collection::vec(0.05f64..1.0, 6),
        tp in 0.1f64..1.0,
        tq in 0.1f64..1.0,
    ) {
        let (np, nq) = (p.len(), q.len());
        let mu = measure(p, &wp[..np], tp);
        let nu = measure(q, &wq[..nq], tq);
        let metric = StarMetric::origin(2);
        let fast = bl_distance_with(&mu, &nu, &metric).unwrap();
        let dense = bl_distance_dense(&mu, &nu, &metric).unwrap();
        prop_assert!((fast.distance - dense.distance).abs() <= 1e-9 * (1.0 + dense.distance));
        prop_assert!(fast.certificate_violation(&metric) <= 1e-9);
    }
}

