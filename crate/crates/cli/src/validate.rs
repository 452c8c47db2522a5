//! Invariant suite behind `repmut validate`.

use repmut_core::closed_form::{
    affine_eigenpair, affine_engine, eigen_residual, initial_components, linear_engine, solve_riccati, LinearEngineInfo,
};
use repmut_core::metric::{bl_distance, bl_distance_dense, two_dirac_distance, CompactifiedMeasure, StarMetric};
use repmut_core::model::{sample_initial, validate_model, DiffusionModel, FitnessFunction, InitialLaw};
use repmut_core::numerics::kde::{kde, GridDensity, KdeOptions};
use repmut_core::numerics::quadrature::linspace;
use repmut_core::particle::{mass_estimate, normalized_measure, run_particles, tilted_measure};
use repmut_core::pde::{solve_rm_pde, weak_residual, Bump, PdeScheme};
use repmut_core::rng::stream;
use repmut_core::sde::{simulate_cir, TimeGrid};
use repmut_core::spectral::{cir_eigenpair, cir_ground_lambda, kummer_m, schrodinger_ground_state, SchrodingerProblem};
use repmut_core::tolerances::Tolerances;
use repmut_core::Result;
use nalgebra::DMatrix;
use rand::Rng;
use std::f64::consts::PI;

/// Refinement ratio the weak residual must reach when the grid is halved.
pub const WEAK_RESIDUAL_RATIO: f64 = 3.0;
/// Accepted band for the second-order L¹ error ratio under refinement.
pub const REFINEMENT_RATIO: (f64, f64) = (2.4, 5.6);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    AtMost,
    AtLeast,
    Within,
}

#[derive(Debug, Clone)]
pub struct Check {
    pub id: &'static str,
    pub what: &'static str,
    pub value: f64,
    pub limit: (f64, f64),
    pub bound: Bound,
    pub error: Option<String>,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.error.is_none()
            && match self.bound {
                Bound::AtMost => self.value <= self.limit.1,
                Bound::AtLeast => self.value >= self.limit.0,
                Bound::Within => self.value >= self.limit.0 && self.value <= self.limit.1,
            }
    }

    pub fn row(&self) -> String {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        let limit = match self.bound {
            Bound::AtMost => format!("<= {:.3e}", self.limit.1),
            Bound::AtLeast => format!(">= {:.3e}", self.limit.0),
            Bound::Within => format!("in [{:.3e}, {:.3e}]", self.limit.0, self.limit.1),
        };
        match &self.error {
            Some(e) => format!("{:<8} {status}  {:<46} error: {e}", self.id, self.what),
            None => format!("{:<8} {status}  {:<46} {:>11.3e} {limit}", self.id, self.what, self.value),
        }
    }
}

struct Suite {
    checks: Vec<Check>,
}

impl Suite {
    fn add(&mut self, id: &'static str, what: &'static str, bound: Bound, limit: (f64, f64), value: Result<f64>) {
        let (value, error) = match value {
            Ok(v) if v.is_nan() => (v, Some("value is NaN".to_string())),
            Ok(v) => (v, None),
            Err(e) => (f64::NAN, Some(e.to_string())),
        };
        self.checks.push(Check {
            id,
            what,
            value,
            limit,
            bound,
            error,
        });
    }

    fn at_most(&mut self, id: &'static str, what: &'static str, limit: f64, value: Result<f64>) {
        self.add(id, what, Bound::AtMost, (f64::NEG_INFINITY, limit), value);
    }
}

fn gaussian_pdf(x: f64, m: f64, v: f64) -> f64 {
    (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * PI * v).sqrt()
}

fn linear_bm() -> (DiffusionModel, FitnessFunction, InitialLaw) {
    (
        DiffusionModel::scalar_bm(0.0, 2f64.sqrt()),
        FitnessFunction::linear(vec![1.0]).with_sup(2.0),
        InitialLaw::gaussian_1d(0.0, 1.0).expect("valid law"),
    )
}

fn flag(ok: bool) -> f64 {
    if ok {
        0.0
    } else {
        1.0
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn numerics_checks(s: &mut Suite, tol: &Tolerances, seed: u64) {
    let kummer = (|| {
        let mut worst = 0.0f64;
        for (a, z) in [(0.5, 2.0), (1.5, -3.0), (3.0, 10.0)] {
            worst = worst.max((kummer_m(a, a, z)? / z.exp() - 1.0).abs());
        }
        Ok(worst)
    })();
    s.at_most("NUM-01", "Kummer M(a, a, z) = e^z (rel)", tol.density_normalization, kummer);
    let density = (|| {
        let mut rng = stream(seed, 3);
        let pts: Vec<f64> = (0..5000).map(|_| rng.random_range(-1.0..1.0)).collect();
        Ok((kde(&pts, None, &KdeOptions::default())?.integral() - 1.0).abs())
    })();
    s.at_most("NUM-02", "KDE grid density integrates to one", tol.density_normalization, density);
}

fn model_checks(s: &mut Suite) {
    let feller = DiffusionModel::cir(0.2, -1.0, 1.0).and_then(|m| Ok(flag(validate_model(&m).is_err())));
    s.at_most("MOD-01", "Feller violation rejected", 0.0, feller);
}

fn sde_checks(s: &mut Suite, seed: u64) {
    let cir = (|| {
        let m = DiffusionModel::cir(1.0, -1.0, 1.0)?;
        let u0 = InitialLaw::Gamma { shape: 2.0, rate: 2.0 };
        let start = sample_initial(&u0, m.domain(), 4000, seed)?;
        let paths = simulate_cir(&m, &start, &TimeGrid::new(0.0, 1.0, 400)?, seed)?;
        Ok(paths.positions().iter().filter(|x| **x < 0.0).count() as f64)
    })();
    s.at_most("SDE-01", "negative CIR states (count)", 0.0, cir);
    let threads = (|| {
        let (m, g, u0) = linear_bm();
        let grid = TimeGrid::new(0.0, 1.0, 200)?;
        let run = |k: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(k).build().expect("thread pool");
            pool.install(|| run_particles(&m, &g, &u0, 3000, &grid, seed))
        };
        let (a, b) = (run(1)?, run(4)?);
        let last = a.times().len() - 1;
        let same = a.positions_at(last).iter().zip(b.positions_at(last)).all(|(x, y)| x.to_bits() == y.to_bits())
            && a.log_weights_at(last).iter().zip(b.log_weights_at(last)).all(|(x, y)| x.to_bits() == y.to_bits());
        Ok(flag(same))
    })();
    s.at_most("SDE-02", "bit-identical paths for 1 and 4 threads", 0.0, threads);
}

fn closed_form_checks(s: &mut Suite, tol: &Tolerances) {
    let (m, g, _) = linear_bm();
    let (m0, s0) = (0.3, 0.8);
    let gaussian = (|| {
        let sol = linear_engine(&m, &g, &InitialLaw::gaussian_1d(m0, s0 * s0)?)?;
        let mut worst = 0.0f64;
        for t in [0.25, 0.5, 1.0] {
            let (mean, var) = (m0 + s0 * s0 * t + t * t, s0 * s0 + 2.0 * t);
            let peak = gaussian_pdf(mean, mean, var);
            for x in linspace(mean - 6.0 * var.sqrt(), mean + 6.0 * var.sqrt(), 121) {
                worst = worst.max((sol.density(t, &[x])? - gaussian_pdf(x, mean, var)).abs() / peak);
            }
        }
        Ok(worst)
    })();
    s.at_most("CF-01", "linear engine vs Gaussian law (sup rel)", tol.solution_normalization, gaussian);
    let reduction = (|| {
        let u0 = InitialLaw::gaussian_1d(m0, s0 * s0)?;
        let (a, b) = (linear_engine(&m, &g, &u0)?, affine_engine(&m, &g, &u0)?);
        let x = linspace(-8.0, 12.0, 201);
        Ok(max_abs_diff(a.density_grid(1.0, &x)?.values(), b.density_grid(1.0, &x)?.values()))
    })();
    s.at_most("CF-02", "affine reduction matches linear engine", tol.solution_normalization, reduction);
    let identity = (|| {
        let info = LinearEngineInfo::new(&m, &g)?;
        let comps = initial_components(&InitialLaw::gaussian_1d(m0, s0 * s0)?)?;
        let t = 1.0;
        Ok((info.log_kernel_tilt_mass(&comps, t)? - (t * m0 + 0.5 * t * t * s0 * s0)).abs())
    })();
    s.at_most("CF-03", "kernel normalisation identity (log)", tol.density_normalization, identity);
    let riccati = (|| {
        let b = DMatrix::from_row_slice(2, 2, &[-1.0, 0.3, 0.2, -0.5]);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
        let gm = DMatrix::from_row_slice(2, 2, &[0.6, 0.1, 0.1, 0.4]);
        Ok(solve_riccati(&a, &b, &gm)?.residual)
    })();
    s.at_most("CF-04", "Riccati residual", tol.riccati_residual, riccati);
    let affine = (|| {
        let ou = DiffusionModel::ou(1.0, 0.5, 1.0)?;
        let g = FitnessFunction::polynomial(vec![0.0, 0.3, -0.5])?;
        let e = affine_eigenpair(&ou, &g)?;
        Ok(eigen_residual(&ou, &g, &e.pair, &ou.domain().probe_points(64))?.relative)
    })();
    s.at_most("CF-05", "affine eigenpair residual (OU, quadratic g)", tol.eigen_residual, affine);
}

fn spectral_checks(s: &mut Suite, tol: &Tolerances) {
    let cir = (|| {
        let m = DiffusionModel::cir(1.0, -1.0, 1.0)?;
        let g = FitnessFunction::linear(vec![-1.0]);
        let mut worst = 0.0f64;
        for lambda in [cir_ground_lambda(1.0, -1.0, 1.0), 0.5, 0.2] {
            let e = cir_eigenpair(1.0, -1.0, 1.0, lambda)?;
            let probes: Vec<Vec<f64>> = linspace(0.05, 6.0, 96).into_iter().map(|x| vec![x]).collect();
            worst = worst.max(eigen_residual(&m, &g, &e.pair, &probes)?.relative);
        }
        Ok(worst)
    })();
    s.at_most("SP-01", "CIR Kummer eigenpair residual", tol.eigen_residual, cir);
    let harmonic = (|| {
        let g = FitnessFunction::polynomial(vec![0.0, 0.0, -1.0])?;
        let gs = schrodinger_ground_state(&SchrodingerProblem::new(1.0, g, 8.0, 1024)?)?;
        Ok((gs.lambda - 1.0).abs())
    })();
    s.at_most("SP-02", "harmonic ground eigenvalue |lambda - 1|", tol.eigen_residual, harmonic);
}

fn particle_checks(s: &mut Suite, tol: &Tolerances, seed: u64) {
    let (m, g, u0) = linear_bm();
    let grid = TimeGrid::new(0.0, 1.0, 200);
    let ens = grid.and_then(|grid| Ok((run_particles(&m, &g, &u0, 2000, &grid, seed)?, grid)));
    let (shift, identity) = match ens {
        Ok((a, grid)) => {
            let shift = (|| {
                let b = run_particles(&m, &g.offset_by(3.0), &u0, 2000, &grid, seed)?;
                Ok(max_abs_diff(&normalized_measure(&a, 1.0)?.masses, &normalized_measure(&b, 1.0)?.masses))
            })();
            let identity = (|| {
                let h = mass_estimate(&a, 1.0)?.value;
                let p = normalized_measure(&a, 1.0)?;
                let q = tilted_measure(&a, 1.0)?;
                let scaled: Vec<f64> = p.masses.iter().map(|v| v * h).collect();
                Ok(max_abs_diff(&scaled, &q.masses).max((q.total_mass() - h).abs()))
            })();
            (shift, identity)
        }
        Err(e) => (Err(repmut_core::Error::Numeric(e.to_string())), Err(e)),
    };
    s.at_most("PT-01", "shift invariance of normalised weights", tol.algebraic_identity, shift);
    s.at_most("PT-02", "tilted measure = mass x normalised measure", tol.algebraic_identity, identity);
    let mass = (|| {
        let grid = TimeGrid::new(0.0, 1.0, 400)?;
        let ens = run_particles(&m, &g, &InitialLaw::dirac(vec![0.0]), 100_000, &grid, seed)?;
        let est = mass_estimate(&ens, 1.0)?;
        Ok((est.value - (1.0f64 / 3.0 - g.g_max()).exp()).abs() / est.standard_error)
    })();
    s.at_most("PT-03", "mass factor e^(1/3) within MC sigmas", tol.mc_sigmas, mass);
}

fn random_measure(rng: &mut impl Rng, dim: usize) -> Result<CompactifiedMeasure> {
    let k = rng.random_range(1..5);
    let total = rng.random_range(0.2..1.0);
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    let atoms = (0..k * dim).map(|_| rng.random_range(-3.0..3.0)).collect();
    CompactifiedMeasure::new(dim, atoms, raw.iter().map(|v| v / sum * total).collect())
}

fn metric_checks(s: &mut Suite, tol: &Tolerances, seed: u64) {
    let metric = StarMetric::origin(1);
    let mut rng = stream(seed, 7);
    let dirac = (|| {
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let (x, y) = (rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0));
            let r = bl_distance(
                &CompactifiedMeasure::new(1, vec![x], vec![1.0])?,
                &CompactifiedMeasure::new(1, vec![y], vec![1.0])?,
            )?;
            worst = worst.max((r.distance - two_dirac_distance(metric.finite(&[x], &[y]))).abs());
        }
        Ok(worst)
    })();
    s.at_most("MT-01", "two-Dirac formula 2d/(2+d)", tol.metric_slack, dirac);
    let run = (|| -> Result<[f64; 4]> {
        let (mut s_max, mut t_max, mut c_max, mut d_max) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for _ in 0..300 {
            let (a, b, c) = (random_measure(&mut rng, 1)?, random_measure(&mut rng, 1)?, random_measure(&mut rng, 1)?);
            let ab = bl_distance(&a, &b)?;
            let ba = bl_distance(&b, &a)?.distance;
            let ac = bl_distance(&a, &c)?.distance;
            let cb = bl_distance(&c, &b)?.distance;
            s_max = s_max.max((ab.distance - ba).abs());
            t_max = t_max.max(ab.distance - ac - cb);
            c_max = c_max.max(ab.certificate_violation(&metric));
        }
        let metric2 = StarMetric::origin(2);
        for _ in 0..40 {
            let (a, b) = (random_measure(&mut rng, 2)?, random_measure(&mut rng, 2)?);
            let fast = bl_distance(&a, &b)?;
            let slow = bl_distance_dense(&a, &b, &metric2)?;
            d_max = d_max.max((fast.distance - slow.distance).abs());
            c_max = c_max.max(fast.certificate_violation(&metric2));
        }
        Ok([s_max, t_max, c_max, d_max])
    })();
    let pick = |k: usize| -> Result<f64> {
        match &run {
            Ok(v) => Ok(v[k]),
            Err(e) => Err(repmut_core::Error::Numeric(e.to_string())),
        }
    };
    let (sym, tri, cert, dense) = (pick(0), pick(1), pick(2), pick(3));
    s.at_most("MT-02", "BL symmetry", tol.metric_symmetry, sym);
    s.at_most("MT-03", "BL triangle inequality excess", tol.metric_slack, tri);
    s.at_most("MT-04", "BL dual certificate feasibility", tol.metric_slack, cert);
    s.at_most("MT-05", "network flow vs dense LP (2D)", tol.metric_slack, dense);
}

fn pde_checks(s: &mut Suite, tol: &Tolerances) {
    let (m, g, _) = linear_bm();
    let run = |cells: usize, dt: f64| -> Result<_> {
        let u0 = GridDensity::from_fn(linspace(-10.0, 10.0, 2001), |x| gaussian_pdf(x, 0.0, 1.0))?;
        solve_rm_pde(&m, &g, &u0, &[0.5, 1.0], &PdeScheme::full_line(10.0, cells, dt))
    };
    let coarse = run(256, 0.02);
    let norm = coarse.as_ref().map_err(|e| repmut_core::Error::Numeric(e.to_string())).map(|traj| {
        (0..traj.times().len()).map(|k| (traj.mass(k) - 1.0).abs()).fold(0.0, f64::max)
    });
    s.at_most("PDE-01", "mass normalised after each output time", tol.pde_normalization, norm);
    let clipped = coarse
        .as_ref()
        .map_err(|e| repmut_core::Error::Numeric(e.to_string()))
        .map(|traj| traj.summary().clipped_values as f64);
    s.at_most("PDE-02", "negative values clipped (count)", 0.0, clipped);
    let order = (|| {
        let exact = GridDensity::from_fn(linspace(-10.0, 10.0, 4001), |x| gaussian_pdf(x, 2.0, 3.0))?;
        let e1 = run(256, 0.02)?.density(1)?.l1_distance(&exact);
        let e2 = run(512, 0.01)?.density(1)?.l1_distance(&exact);
        Ok(e1 / e2)
    })();
    s.add("PDE-03", "second-order L1 error ratio under refinement", Bound::Within, REFINEMENT_RATIO, order);
    let weak = (|| {
        let ou = DiffusionModel::ou(1.0, 0.0, 1.0)?;
        let g = FitnessFunction::linear(vec![1.0]);
        let u0 = GridDensity::from_fn(linspace(-8.0, 8.0, 2001), |x| gaussian_pdf(x, 0.0, 1.0))?;
        let tests = Bump::family(-3.0, 3.0);
        let scheme = PdeScheme::full_line(8.0, 256, 0.02);
        let r1 = weak_residual(&ou, &g, &u0, 1.0, &scheme, &tests)?;
        let r2 = weak_residual(&ou, &g, &u0, 1.0, &scheme.refined(), &tests)?;
        Ok(r1 / r2)
    })();
    s.add("PDE-04", "weak residual reduction under refinement", Bound::AtLeast, (WEAK_RESIDUAL_RATIO, f64::INFINITY), weak);
}

/// Runs every invariant with the given tolerance table.
pub fn run_suite(tol: &Tolerances, seed: u64) -> Vec<Check> {
    let mut s = Suite { checks: Vec::new() };
    numerics_checks(&mut s, tol, seed);
    model_checks(&mut s);
    sde_checks(&mut s, seed);
    closed_form_checks(&mut s, tol);
    spectral_checks(&mut s, tol);
    particle_checks(&mut s, tol, seed);
    metric_checks(&mut s, tol, seed);
    pde_checks(&mut s, tol);
    s.checks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds() {
        let mk = |bound, limit, value| Check {
            id: "X",
            what: "x",
            value,
            limit,
            bound,
            error: None,
        };
        assert!(mk(Bound::AtMost, (0.0, 1.0), 1.0).passed());
        assert!(!mk(Bound::AtMost, (0.0, 1.0), 1.5).passed());
        assert!(mk(Bound::AtLeast, (3.0, 0.0), 3.5).passed());
        assert!(!mk(Bound::Within, (2.0, 3.0), 3.5).passed());
        let mut failed = mk(Bound::AtMost, (0.0, 1.0), 0.0);
        failed.error = Some("boom".into());
        assert!(!failed.passed());
        assert!(failed.row().contains("FAIL"));
    }
}
