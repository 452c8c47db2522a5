//! Weighted particle system and its empirical measures.

use crate::error::{Error, Result};
use crate::model::{sample_initial_keyed, DiffusionModel, FitnessFunction, InitialLaw};
use crate::numerics::summation::{log_sum_exp, pairwise_sum};
use crate::rng::derive_seed;
use crate::sde::{simulate_with, LogWeights, PathBundle, Record, SimOptions, TimeGrid};
use std::io::Write;

pub const DEFAULT_CHECKPOINTS: usize = 32;

#[derive(Debug, Clone)]
pub struct ParticleOptions {
    /// Evenly spaced stored nodes (the grid end points always included).
    pub checkpoints: usize,
    /// Stream key per particle; defaults to `0..N`.
    pub stream_keys: Option<Vec<u64>>,
}

impl Default for ParticleOptions {
    fn default() -> Self {
        Self {
            checkpoints: DEFAULT_CHECKPOINTS,
            stream_keys: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WeightedParticleEnsemble {
    paths: PathBundle,
    log_weights: LogWeights,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    Normalized,
    Tilted,
}

/// Atoms (flattened `N × n`) with masses.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    pub dim: usize,
    pub atoms: Vec<f64>,
    pub masses: Vec<f64>,
    pub normalization: Normalization,
}

impl EmpiricalMeasure {
    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.atoms[i * self.dim..(i + 1) * self.dim]
    }

    pub fn total_mass(&self) -> f64 {
        pairwise_sum(&self.masses)
    }

    /// Mass-weighted mean divided by the total mass.
    pub fn mean(&self) -> Vec<f64> {
        let total = self.total_mass();
        (0..self.dim)
            .map(|j| {
                let v: Vec<f64> = (0..self.len()).map(|i| self.masses[i] * self.atom(i)[j]).collect();
                pairwise_sum(&v) / total
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassEstimate {
    /// `(1/N) Σ e^{L_i}`, the shifted mass.
    pub value: f64,
    pub standard_error: f64,
}

/// Runs `N` independent weighted particles with the default options.
pub fn run_particles(
    model: &DiffusionModel,
    g: &FitnessFunction,
    rho0: &InitialLaw,
    n: usize,
    grid: &TimeGrid,
    seed: u64,
) -> Result<WeightedParticleEnsemble> {
    run_particles_with(model, g, rho0, n, grid, seed, &ParticleOptions::default())
}

pub fn run_particles_with(
    model: &DiffusionModel,
    g: &FitnessFunction,
    rho0: &InitialLaw,
    n: usize,
    grid: &TimeGrid,
    seed: u64,
    opts: &ParticleOptions,
) -> Result<WeightedParticleEnsemble> {
    if n == 0 {
        return Err(Error::Config("at least one particle is required".into()));
    }
    let keys: Vec<u64> = match &opts.stream_keys {
        Some(k) if k.len() == n => k.clone(),
        Some(_) => return Err(Error::Config("one stream key per particle required".into())),
        None => (0..n as u64).collect(),
    };
    let initial = sample_initial_keyed(rho0, model.domain(), &keys, seed)?;
    let out = simulate_with(
        model,
        &initial,
        grid,
        derive_seed(seed, "paths"),
        &SimOptions {
            record: Some(Record::Nodes(grid.checkpoint_indices(opts.checkpoints))),
            stream_keys: Some(&keys),
            fitness: Some(g),
        },
    )?;
    Ok(WeightedParticleEnsemble {
        paths: out.paths,
        log_weights: out.log_weights.expect("fitness requested"),
    })
}

impl WeightedParticleEnsemble {
    pub fn n_particles(&self) -> usize {
        self.paths.n_particles()
    }

    pub fn dim(&self) -> usize {
        self.paths.dim()
    }

    pub fn times(&self) -> &[f64] {
        self.paths.times()
    }

    pub fn g_max(&self) -> f64 {
        self.log_weights.shift()
    }

    pub fn paths(&self) -> &PathBundle {
        &self.paths
    }

    pub fn log_weights(&self) -> &LogWeights {
        &self.log_weights
    }

    /// Index of a stored time.
    pub fn record_index(&self, t: f64) -> Result<usize> {
        self.times()
            .iter()
            .position(|s| (s - t).abs() <= 1e-12 * (1.0 + t.abs()))
            .ok_or_else(|| Error::Config(format!("t = {t} is not a stored checkpoint")))
    }

    pub fn positions_at(&self, record: usize) -> Vec<f64> {
        self.paths.snapshot(record)
    }

    pub fn log_weights_at(&self, record: usize) -> Vec<f64> {
        self.log_weights.column(record)
    }

    /// Writes `particle,t,x0..,logw` for the first `limit` particles.
    pub fn write_csv<W: Write>(&self, mut w: W, limit: usize) -> std::io::Result<()> {
        let n = self.dim();
        let cols: Vec<String> = (0..n).map(|j| format!("x{j}")).collect();
        writeln!(w, "particle,t,{},logw", cols.join(","))?;
        for i in 0..self.n_particles().min(limit) {
            for (r, t) in self.times().iter().enumerate() {
                let x: Vec<String> = self
                    .paths
                    .position(i, r)
                    .iter()
                    .map(|v| format!("{v:.17e}"))
                    .collect();
                writeln!(w, "{i},{t:.17e},{},{:.17e}", x.join(","), self.log_weights.value(i, r))?;
            }
        }
        Ok(())
    }
}

/// Masses `e^{L_i}/Σ e^{L_j}`.
pub fn normalized_measure(ens: &WeightedParticleEnsemble, t: f64) -> Result<EmpiricalMeasure> {
    let r = ens.record_index(t)?;
    let l = ens.log_weights_at(r);
    let lse = log_sum_exp(&l);
    if !lse.is_finite() {
        return Err(Error::Horizon(format!(
            "all particle weights vanished at t = {t}; shorten the horizon"
        )));
    }
    Ok(EmpiricalMeasure {
        dim: ens.dim(),
        atoms: ens.positions_at(r),
        masses: l.iter().map(|v| (v - lse).exp()).collect(),
        normalization: Normalization::Normalized,
    })
}

/// Masses `e^{L_i}/N`.
pub fn tilted_measure(ens: &WeightedParticleEnsemble, t: f64) -> Result<EmpiricalMeasure> {
    let r = ens.record_index(t)?;
    let n = ens.n_particles() as f64;
    Ok(EmpiricalMeasure {
        dim: ens.dim(),
        atoms: ens.positions_at(r),
        masses: ens.log_weights_at(r).iter().map(|v| v.exp() / n).collect(),
        normalization: Normalization::Tilted,
    })
}

/// `(1/N) Σ e^{L_i(t)}` with its Monte Carlo standard error.
pub fn mass_estimate(ens: &WeightedParticleEnsemble, t: f64) -> Result<MassEstimate> {
    let r = ens.record_index(t)?;
    let n = ens.n_particles() as f64;
    let w: Vec<f64> = ens.log_weights_at(r).iter().map(|v| v.exp()).collect();
    let mean = pairwise_sum(&w) / n;
    let standard_error = if w.len() > 1 {
        let dev: Vec<f64> = w.iter().map(|v| (v - mean).powi(2)).collect();
        (pairwise_sum(&dev) / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    Ok(MassEstimate {
        value: mean,
        standard_error,
    })
}
