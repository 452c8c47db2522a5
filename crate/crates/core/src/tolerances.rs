//! Tolerance table shared by the solvers, the invariant suite and the
//! acceptance tests.
//!
//! Values are grouped by what they guard. Monte Carlo comparisons are stated as
//! multiples of the estimated standard error rather than absolute bounds.

use serde::{Deserialize, Serialize};

/// Relative probe tolerance for the constant-coefficient fitness condition.
pub const CONSTANT_CONDITION: f64 = 1e-8;
/// Eigenpair residual `|(A + g)phi + lambda phi| / max|phi|` on probe points.
pub const EIGEN_RESIDUAL: f64 = 1e-6;
/// Frobenius residual of the algebraic Riccati equation.
pub const RICCATI_RESIDUAL: f64 = 1e-10;
/// Residual of the linear equation for the eigenfunction's linear part.
pub const LINEAR_V_RESIDUAL: f64 = 1e-12;
/// Matrix exponential semigroup / ODE residual.
pub const MATRIX_EXP: f64 = 1e-10;
/// Symmetry defect allowed in computed covariances.
pub const COVARIANCE_SYMMETRY: f64 = 1e-12;
/// Normalisation of grid densities (trapezoid).
pub const DENSITY_NORMALIZATION: f64 = 1e-8;
/// Normalisation of closed-form solutions on their evaluation grid.
pub const SOLUTION_NORMALIZATION: f64 = 1e-6;
/// Metric axioms (symmetry / triangle slack) and LP certificate feasibility.
pub const METRIC_SLACK: f64 = 1e-9;
/// Symmetry of the bounded-Lipschitz distance.
pub const METRIC_SYMMETRY: f64 = 1e-10;
/// Exact algebraic identities on particle measures.
pub const ALGEBRAIC_IDENTITY: f64 = 1e-15;
/// Mass allowed above one before compactification fails.
pub const SUBPROBABILITY_EXCESS: f64 = 1e-9;
/// Total PDE boundary leak before the solver asks for a larger grid.
pub const PDE_MASS_LEAK: f64 = 1e-4;
/// PDE normalisation after every step.
pub const PDE_NORMALIZATION: f64 = 1e-9;
/// Negative values tolerated by the PDE before they count as violations.
pub const PDE_NEGATIVITY: f64 = 1e-14;
/// Monte Carlo agreement band, in standard errors.
pub const MC_SIGMAS: f64 = 3.0;
/// Kummer series stopping criterion (relative term size).
pub const KUMMER_SERIES: f64 = 1e-14;
/// Mass lost when clipping a tilted density where the eigenfunction underflows.
pub const TILT_CLIP_MASS: f64 = 1e-6;

/// Runtime snapshot of the tolerance table.
///
/// The invariant suite reads its thresholds from here so that the whole table
/// can be scaled (a scale of zero forces failures).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub constant_condition: f64,
    pub eigen_residual: f64,
    pub riccati_residual: f64,
    pub linear_v_residual: f64,
    pub matrix_exp: f64,
    pub covariance_symmetry: f64,
    pub density_normalization: f64,
    pub solution_normalization: f64,
    pub metric_slack: f64,
    pub metric_symmetry: f64,
    pub algebraic_identity: f64,
    pub pde_normalization: f64,
    pub mc_sigmas: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            constant_condition: CONSTANT_CONDITION,
            eigen_residual: EIGEN_RESIDUAL,
            riccati_residual: RICCATI_RESIDUAL,
            linear_v_residual: LINEAR_V_RESIDUAL,
            matrix_exp: MATRIX_EXP,
            covariance_symmetry: COVARIANCE_SYMMETRY,
            density_normalization: DENSITY_NORMALIZATION,
            solution_normalization: SOLUTION_NORMALIZATION,
            metric_slack: METRIC_SLACK,
            metric_symmetry: METRIC_SYMMETRY,
            algebraic_identity: ALGEBRAIC_IDENTITY,
            pde_normalization: PDE_NORMALIZATION,
            mc_sigmas: MC_SIGMAS,
        }
    }
}

impl Tolerances {
    /// Every threshold multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            constant_condition: self.constant_condition * factor,
            eigen_residual: self.eigen_residual * factor,
            riccati_residual: self.riccati_residual * factor,
            linear_v_residual: self.linear_v_residual * factor,
            matrix_exp: self.matrix_exp * factor,
            covariance_symmetry: self.covariance_symmetry * factor,
            density_normalization: self.density_normalization * factor,
            solution_normalization: self.solution_normalization * factor,
            metric_slack: self.metric_slack * factor,
            metric_symmetry: self.metric_symmetry * factor,
            algebraic_identity: self.algebraic_identity * factor,
            pde_normalization: self.pde_normalization * factor,
            mc_sigmas: self.mc_sigmas * factor,
        }
    }
}
