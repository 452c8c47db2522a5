//! Monte Carlo estimate of `d_{q,T}` between the tilted particle measure and a
//! reference flow, and the rate study over `N`.

use super::bl::bl_distance;
use super::compact::{bin_1d, midpoints, trapezoid_cell_masses, uniform_edges, CompactifiedMeasure};
use crate::closed_form::ClosedFormSolution;
use crate::error::{Error, Result};
use crate::model::{DiffusionModel, FitnessFunction, InitialLaw};
use crate::particle::{run_particles, tilted_measure, WeightedParticleEnsemble};
use crate::rng::{derive_indexed, derive_seed, stream};
use crate::sde::TimeGrid;
use rand::Rng;
use rayon::prelude::*;
use std::io::Write;

/// Tilted reference measure discretised on 1D cells.
pub trait TiltedReference: Sync {
    /// Interval holding the reference mass at `t`.
    fn support(&self, t: f64) -> Result<(f64, f64)>;
    /// Mass of each cell; the total is the tilted mass for fitness shift `g_max`.
    fn cell_masses(&self, t: f64, edges: &[f64], g_max: f64) -> Result<Vec<f64>>;
}

/// `u(t, ·) h_t e^{−g_max t}` from a closed-form solution.
pub struct ClosedFormReference<'a>(pub &'a ClosedFormSolution);

impl TiltedReference for ClosedFormReference<'_> {
    fn support(&self, t: f64) -> Result<(f64, f64)> {
        self.0.support_hint(t)
    }

    fn cell_masses(&self, t: f64, edges: &[f64], g_max: f64) -> Result<Vec<f64>> {
        let mass = self.0.shifted_mass_factor(t, g_max)?;
        let grid = self.0.density_grid(t, edges)?;
        trapezoid_cell_masses(edges, |x| grid.eval(x), mass)
    }
}

/// Another ensemble's tilted measure, binned.
pub struct EnsembleReference<'a>(pub &'a WeightedParticleEnsemble);

impl TiltedReference for EnsembleReference<'_> {
    fn support(&self, t: f64) -> Result<(f64, f64)> {
        extent(self.0, t)
    }

    fn cell_masses(&self, t: f64, edges: &[f64], _g_max: f64) -> Result<Vec<f64>> {
        let m = tilted_measure(self.0, t)?;
        Ok(bin_1d(&m.atoms, &m.masses, edges))
    }
}

fn extent(ens: &WeightedParticleEnsemble, t: f64) -> Result<(f64, f64)> {
    let x = ens.positions_at(ens.record_index(t)?);
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}

#[derive(Debug, Clone)]
pub struct DqtOptions {
    /// Common cells shared by both measures at each checkpoint.
    pub cells: usize,
    /// Times over which the sup is taken; `None` uses every stored checkpoint.
    pub times: Option<Vec<f64>>,
    pub bootstrap: usize,
    pub confidence: f64,
}

impl Default for DqtOptions {
    fn default() -> Self {
        Self {
            cells: 512,
            times: None,
            bootstrap: 1000,
            confidence: 0.95,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointSup {
    pub value: f64,
    pub time: f64,
    /// Widest cell used; bounds the binning displacement.
    pub cell_width: f64,
}

/// Max over checkpoints of the BL distance between the binned tilted measures.
pub fn checkpoint_sup_distance(
    ens: &WeightedParticleEnsemble,
    reference: &dyn TiltedReference,
    times: &[f64],
    cells: usize,
) -> Result<CheckpointSup> {
    if ens.dim() != 1 {
        return Err(Error::Unsupported("d_qT estimator is one-dimensional".into()));
    }
    if cells < 2 {
        return Err(Error::Config("at least two cells are required".into()));
    }
    let mut best = CheckpointSup {
        value: 0.0,
        time: times.first().copied().unwrap_or(0.0),
        cell_width: 0.0,
    };
    for &t in times {
        let (a, b) = reference.support(t)?;
        let (c, d) = extent(ens, t)?;
        let (mut lo, mut hi) = (a.min(c), b.max(d));
        if !(hi > lo) {
            lo -= 0.5;
            hi += 0.5;
        }
        let edges = uniform_edges(lo, hi, cells);
        let mids = midpoints(&edges);
        let emp = tilted_measure(ens, t)?;
        let emp_masses = bin_1d(&emp.atoms, &emp.masses, &edges);
        let ref_masses = reference.cell_masses(t, &edges, ens.g_max())?;
        let mu = CompactifiedMeasure::new(1, mids.clone(), emp_masses)?;
        let nu = CompactifiedMeasure::new(1, mids, ref_masses)?;
        let v = bl_distance(&mu, &nu)?.distance;
        let width = (hi - lo) / cells as f64;
        best.cell_width = best.cell_width.max(width);
        if v > best.value {
            best.value = v;
            best.time = t;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone)]
pub struct DqtEstimate {
    pub n: usize,
    pub q: f64,
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub replicate_sups: Vec<f64>,
    pub cell_width: f64,
}

fn power_mean(values: &[f64], q: f64) -> f64 {
    let s: f64 = values.iter().map(|v| v.powf(q)).sum();
    (s / values.len() as f64).powf(1.0 / q)
}

/// Percentile bootstrap interval of the `q`-power mean.
pub fn bootstrap_ci(values: &[f64], q: f64, resamples: usize, confidence: f64, seed: u64) -> (f64, f64) {
    let n = values.len();
    if n == 0 || resamples == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut rng = stream(derive_seed(seed, "bootstrap"), 0);
    let mut stats: Vec<f64> = (0..resamples)
        .map(|_| {
            let draw: Vec<f64> = (0..n).map(|_| values[rng.random_range(0..n)]).collect();
            power_mean(&draw, q)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let alpha = 0.5 * (1.0 - confidence);
    let at = |p: f64| stats[((p * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    (at(alpha), at(1.0 - alpha))
}

#[allow(clippy::too_many_arguments)]
pub fn dqt_estimate(
    model: &DiffusionModel,
    g: &FitnessFunction,
    rho0: &InitialLaw,
    reference: &dyn TiltedReference,
    n: usize,
    q: f64,
    reps: usize,
    grid: &TimeGrid,
    seed: u64,
    opts: &DqtOptions,
) -> Result<DqtEstimate> {
    if q < 1.0 {
        return Err(Error::Config(format!("q = {q} must be at least 1")));
    }
    if reps == 0 {
        return Err(Error::Config("at least one replication is required".into()));
    }
    let sups: Vec<CheckpointSup> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let rep_seed = derive_indexed(seed, "replicate", r as u64);
            let ens = run_particles(model, g, rho0, n, grid, rep_seed)?;
            let times = opts.times.clone().unwrap_or_else(|| ens.times().to_vec());
            checkpoint_sup_distance(&ens, reference, &times, opts.cells)
        })
        .collect::<Result<_>>()?;
    let values: Vec<f64> = sups.iter().map(|s| s.value).collect();
    let (ci_low, ci_high) = bootstrap_ci(&values, q, opts.bootstrap, opts.confidence, derive_indexed(seed, "ci", n as u64));
    Ok(DqtEstimate {
        n,
        q,
        value: power_mean(&values, q),
        ci_low,
        ci_high,
        cell_width: sups.iter().map(|s| s.cell_width).fold(0.0, f64::max),
        replicate_sups: values,
    })
}

#[derive(Debug, Clone)]
pub struct RateStudy {
    pub rows: Vec<DqtEstimate>,
    /// Least-squares slope of `log D` against `log N`.
    pub slope: f64,
}

impl RateStudy {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "N,D,ci_lo,ci_hi")?;
        for r in &self.rows {
            writeln!(w, "{},{:.10e},{:.10e},{:.10e}", r.n, r.value, r.ci_low, r.ci_high)?;
        }
        Ok(())
    }
}

pub fn log_log_slope(ns: &[usize], values: &[f64]) -> f64 {
    let x: Vec<f64> = ns.iter().map(|n| (*n as f64).ln()).collect();
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[allow(clippy::too_many_arguments)]
pub fn rate_study(
    model: &DiffusionModel,
    g: &FitnessFunction,
    rho0: &InitialLaw,
    reference: &dyn TiltedReference,
    ns: &[usize],
    q: f64,
    reps: usize,
    grid: &TimeGrid,
    seed: u64,
    opts: &DqtOptions,
) -> Result<RateStudy> {
    if ns.len() < 2 {
        return Err(Error::Config("rate study needs at least two particle counts".into()));
    }
    let rows = ns
        .iter()
        .map(|&n| dqt_estimate(model, g, rho0, reference, n, q, reps, grid, derive_indexed(seed, "rate", n as u64), opts))
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = rows.iter().map(|r| r.value).collect();
    Ok(RateStudy {
        slope: log_log_slope(ns, &values),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::linear_engine;

    fn scenario() -> (DiffusionModel, FitnessFunction, InitialLaw) {
        (
            DiffusionModel::scalar_bm(0.0, 2f64.sqrt()),
            FitnessFunction::linear(vec![1.0]).with_sup(2.0),
            InitialLaw::gaussian_1d(0.0, 1.0).unwrap(),
        )
    }

    #[test]
    fn self_reference_gives_zero() {
        let (m, g, rho) = scenario();
        let grid = TimeGrid::new(0.0, 1.0, 100).unwrap();
        let ens = run_particles(&m, &g, &rho, 500, &grid, 3).unwrap();
        let sup = checkpoint_sup_distance(&ens, &EnsembleReference(&ens), ens.times(), 512).unwrap();
        assert!(sup.value <= 1e-12);
    }

    #[test]
    fn single_particle_is_bounded() {
        let (m, g, rho) = scenario();
        let sol = linear_engine(&m, &g, &rho).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 100).unwrap();
        let opts = DqtOptions {
            times: Some(vec![0.0, 1.0]),
            bootstrap: 100,
            ..Default::default()
        };
        let e = dqt_estimate(&m, &g, &rho, &ClosedFormReference(&sol), 1, 2.0, 4, &grid, 1, &opts).unwrap();
        assert!(e.value > 0.0 && e.value <= 2.0);
        assert!(e.ci_low <= e.value + 1e-12 && e.value <= e.ci_high + 1e-12);
    }

    #[test]
    fn reference_cells_carry_the_shifted_mass() {
        let (m, g, rho) = scenario();
        let sol = linear_engine(&m, &g, &rho).unwrap();
        let edges = uniform_edges(-10.0, 14.0, 512);
        let masses = ClosedFormReference(&sol).cell_masses(1.0, &edges, 2.0).unwrap();
        let total: f64 = masses.iter().sum();
        // log h_1 = 1/2 + 1/3 for m0 = 0, s0 = 1.
        assert!((total - (0.5 + 1.0 / 3.0 - 2.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn slope_of_exact_power_law() {
        let ns = [100, 400, 1600];
        let v: Vec<f64> = ns.iter().map(|n| 3.0 * (*n as f64).powf(-0.5)).collect();
        assert!((log_log_slope(&ns, &v) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_interval_of_constant_sample() {
        let (lo, hi) = bootstrap_ci(&[0.3; 10], 2.0, 200, 0.95, 9);
        assert!((lo - 0.3).abs() < 1e-15 && (hi - 0.3).abs() < 1e-15);
    }
}
