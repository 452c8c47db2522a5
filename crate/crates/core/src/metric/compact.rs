//! Sub-probability measures as probability measures on `D⋆`.

use crate::error::{Error, Result};
use crate::numerics::kde::GridDensity;
use crate::numerics::summation::pairwise_sum;
use crate::particle::EmpiricalMeasure;
use crate::tolerances;

#[derive(Debug, Clone, PartialEq)]
pub struct CompactifiedMeasure {
    dim: usize,
    atoms: Vec<f64>,
    masses: Vec<f64>,
    star_mass: f64,
}

impl CompactifiedMeasure {
    /// Atoms (flattened `K × dim`) with nonnegative masses summing to at most one.
    pub fn new(dim: usize, atoms: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if dim == 0 || atoms.len() != dim * masses.len() {
            return Err(Error::Config("compactify: atoms and masses disagree".into()));
        }
        if masses.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::Config("compactify: masses must be finite and nonnegative".into()));
        }
        if atoms.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("compactify: atoms must be finite".into()));
        }
        let total = pairwise_sum(&masses);
        if total > 1.0 + tolerances::SUBPROBABILITY_EXCESS {
            return Err(Error::Config(format!("compactify: total mass {total} exceeds one")));
        }
        Ok(Self {
            dim,
            atoms,
            masses,
            star_mass: (1.0 - total).max(0.0),
        })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            atoms: Vec::new(),
            masses: Vec::new(),
            star_mass: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.atoms[i * self.dim..(i + 1) * self.dim]
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn star_mass(&self) -> f64 {
        self.star_mass
    }

    pub fn finite_mass(&self) -> f64 {
        pairwise_sum(&self.masses)
    }
}

pub fn compactify(measure: &EmpiricalMeasure) -> Result<CompactifiedMeasure> {
    CompactifiedMeasure::new(measure.dim, measure.atoms.clone(), measure.masses.clone())
}

/// Uniform cell edges on `[lo, hi]`.
pub fn uniform_edges(lo: f64, hi: f64, cells: usize) -> Vec<f64> {
    let w = (hi - lo) / cells as f64;
    (0..=cells).map(|k| if k == cells { hi } else { lo + w * k as f64 }).collect()
}

pub fn midpoints(edges: &[f64]) -> Vec<f64> {
    edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect()
}

/// Trapezoid cell masses of `density`, rescaled to `total_mass`, placed at
/// cell midpoints.
pub fn compactify_grid(density: &GridDensity, total_mass: f64, cells: usize) -> Result<CompactifiedMeasure> {
    let edges = uniform_edges(density.lower(), density.upper(), cells);
    let masses = trapezoid_cell_masses(&edges, |x| density.eval(x), total_mass)?;
    CompactifiedMeasure::new(1, midpoints(&edges), masses)
}

/// `w (f(a) + f(b))/2` per cell, normalised to `total_mass`.
pub fn trapezoid_cell_masses(edges: &[f64], f: impl Fn(f64) -> f64, total_mass: f64) -> Result<Vec<f64>> {
    let values: Vec<f64> = edges.iter().map(|&x| f(x).max(0.0)).collect();
    let raw: Vec<f64> = edges
        .windows(2)
        .zip(values.windows(2))
        .map(|(e, v)| 0.5 * (e[1] - e[0]) * (v[0] + v[1]))
        .collect();
    let sum = pairwise_sum(&raw);
    if !(sum > 0.0 && sum.is_finite()) {
        return Err(Error::Numeric("cell masses vanish on the grid".into()));
    }
    Ok(raw.iter().map(|m| m / sum * total_mass).collect())
}

/// Weight-preserving binning of 1D atoms onto the cells of `edges`; atoms
/// outside are assigned to the end cells.
pub fn bin_1d(points: &[f64], masses: &[f64], edges: &[f64]) -> Vec<f64> {
    let cells = edges.len() - 1;
    let (lo, hi) = (edges[0], edges[cells]);
    let w = (hi - lo) / cells as f64;
    let mut out = vec![0.0; cells];
    for (&x, &m) in points.iter().zip(masses) {
        let k = (((x - lo) / w).floor().max(0.0) as usize).min(cells - 1);
        out[k] += m;
    }
    out
}
