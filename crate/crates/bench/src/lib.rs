//! Shared fixtures for the solver benchmarks.

use repmut_core::metric::CompactifiedMeasure;
use repmut_core::model::{DiffusionModel, FitnessFunction, InitialLaw};
use repmut_core::numerics::kde::GridDensity;
use repmut_core::numerics::quadrature::linspace;

/// Brownian model, linear fitness and standard normal start.
pub fn linear_bm() -> (DiffusionModel, FitnessFunction, InitialLaw) {
    (
        DiffusionModel::scalar_bm(0.0, 2f64.sqrt()),
        FitnessFunction::linear(vec![1.0]).with_sup(2.0),
        InitialLaw::gaussian_1d(0.0, 1.0).expect("valid law"),
    )
}

pub fn standard_normal_grid(half_width: f64, nodes: usize) -> GridDensity {
    GridDensity::from_fn(linspace(-half_width, half_width, nodes), |x| {
        (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
    })
    .expect("finite density")
}

/// Equal-weight measure of total mass `total` on the given atoms.
pub fn uniform_measure(atoms: Vec<f64>, total: f64) -> CompactifiedMeasure {
    let m = total / atoms.len() as f64;
    let masses = vec![m; atoms.len()];
    CompactifiedMeasure::new(1, atoms, masses).expect("valid measure")
}
