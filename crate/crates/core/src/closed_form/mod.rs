//! Closed-form and semi-analytic solution engines.

mod affine;
pub mod gaussian;
mod linear;
mod riccati;
mod solution;
mod tilted;

pub use affine::{affine_eigenpair, affine_engine, AffineEigen, QuadraticFitness};
pub use gaussian::{initial_components, GaussianMixture, WeightedGaussian};
pub use linear::{linear_engine, LinearEngineInfo};
pub use riccati::{solve_linear_v, solve_riccati, RiccatiSolution};
pub use solution::{ClosedFormSolution, EngineTag, TimeSlice, LOG_MASS_LIMIT};
pub use tilted::{tilted_engine, TiltedOptions};

use crate::error::{Error, Result};
use crate::model::{DiffusionModel, FitnessFunction, ScalarField, VectorField};
use crate::tolerances;
use nalgebra::{DMatrix, DVector};
use std::fmt;
use std::sync::Arc;

/// Minimum number of probe points for the probe-based checks.
pub const MIN_PROBES: usize = 32;

/// `𝒜g ≡ C1` and `∇gᵀσ ≡ C2` on the probes.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantCondition {
    pub c1: f64,
    pub c2: Vec<f64>,
}

/// Why the constant condition was rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub reason: String,
    pub at: Vec<f64>,
    pub residual: f64,
}

/// Central-difference Hessian of `f` from its gradient.
fn fd_hessian(x: &[f64], grad: impl Fn(&[f64], &mut [f64])) -> DMatrix<f64> {
    let n = x.len();
    let mut h = DMatrix::zeros(n, n);
    let mut y = x.to_vec();
    let mut gp = vec![0.0; n];
    let mut gm = vec![0.0; n];
    for i in 0..n {
        let step = 1e-5 * (1.0 + x[i].abs());
        y[i] = x[i] + step;
        grad(&y, &mut gp);
        y[i] = x[i] - step;
        grad(&y, &mut gm);
        y[i] = x[i];
        for j in 0..n {
            h[(i, j)] = (gp[j] - gm[j]) / (2.0 * step);
        }
    }
    (&h + h.transpose()) * 0.5
}

/// Probes `𝒜g` and `∇gᵀσ` for constancy.
pub fn detect_constant_condition(
    model: &DiffusionModel,
    g: &FitnessFunction,
    probes: &[Vec<f64>],
) -> std::result::Result<ConstantCondition, Rejection> {
    if probes.len() < MIN_PROBES {
        return Err(Rejection {
            reason: format!("{} probes given, at least {MIN_PROBES} required", probes.len()),
            at: vec![],
            residual: f64::NAN,
        });
    }
    let n = model.dim();
    let mut reference: Option<ConstantCondition> = None;
    for x in probes {
        let mut grad = vec![0.0; n];
        g.gradient(x, &mut grad);
        let hess = fd_hessian(x, |y, out| g.gradient(y, out));
        let ag = model.generator(x, &DVector::from_vec(grad.clone()), &hess);
        let sigma = model.diffusion_matrix(x);
        let c2: Vec<f64> = (DVector::from_vec(grad).transpose() * sigma)
            .iter()
            .copied()
            .collect();
        match &reference {
            None => {
                reference = Some(ConstantCondition { c1: ag, c2 });
            }
            Some(r) => {
                let d1 = (ag - r.c1).abs();
                if !(d1 <= tolerances::CONSTANT_CONDITION * (1.0 + r.c1.abs())) {
                    return Err(Rejection {
                        reason: "generator of g is not constant".into(),
                        at: x.clone(),
                        residual: d1,
                    });
                }
                let norm: f64 = r.c2.iter().map(|v| v * v).sum::<f64>().sqrt();
                let d2: f64 = c2
                    .iter()
                    .zip(&r.c2)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if !(d2 <= tolerances::CONSTANT_CONDITION * (1.0 + norm)) {
                    return Err(Rejection {
                        reason: "gradient of g times sigma is not constant".into(),
                        at: x.clone(),
                        residual: d2,
                    });
                }
            }
        }
    }
    Ok(reference.expect("at least one probe"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenSource {
    AffineAnalytic,
    Kummer,
    SchrodingerGrid,
    /// Constant fitness: `φ ≡ 1`.
    Trivial,
}

impl fmt::Display for EigenSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EigenSource::AffineAnalytic => "affine-analytic",
            EigenSource::Kummer => "kummer",
            EigenSource::SchrodingerGrid => "schrodinger-grid",
            EigenSource::Trivial => "trivial",
        })
    }
}

/// `(𝒜 + g)φ = −λφ` with `φ > 0`, stored through `log φ` and `∇log φ`.
#[derive(Clone)]
pub struct Eigenpair {
    pub lambda: f64,
    pub source: EigenSource,
    dim: usize,
    log_phi: ScalarField,
    grad_log_phi: VectorField,
}

impl fmt::Debug for Eigenpair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Eigenpair")
            .field("lambda", &self.lambda)
            .field("source", &self.source)
            .field("dim", &self.dim)
            .finish()
    }
}

impl Eigenpair {
    pub fn new(
        dim: usize,
        lambda: f64,
        source: EigenSource,
        log_phi: ScalarField,
        grad_log_phi: VectorField,
    ) -> Self {
        Self {
            lambda,
            source,
            dim,
            log_phi,
            grad_log_phi,
        }
    }

    /// `φ ≡ 1`, `λ = −c` for a constant fitness `g ≡ c`.
    pub fn trivial(dim: usize, g: &FitnessFunction) -> Result<Self> {
        if !g.is_constant() {
            return Err(Error::Assumption("trivial eigenpair needs a constant fitness".into()));
        }
        let c = g.eval(&vec![0.0; dim]);
        Ok(Self::new(
            dim,
            -c,
            EigenSource::Trivial,
            Arc::new(|_| 0.0),
            Arc::new(|_, out| out.fill(0.0)),
        ))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn log_phi(&self, x: &[f64]) -> f64 {
        (self.log_phi)(x)
    }

    pub fn phi(&self, x: &[f64]) -> f64 {
        self.log_phi(x).exp()
    }

    pub fn grad_log_phi(&self, x: &[f64], out: &mut [f64]) {
        (self.grad_log_phi)(x, out)
    }

    pub fn grad_phi(&self, x: &[f64], out: &mut [f64]) {
        self.grad_log_phi(x, out);
        let p = self.phi(x);
        for o in out.iter_mut() {
            *o *= p;
        }
    }

    /// Same eigenfunction for `g + c`.
    pub fn shifted(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.lambda -= c;
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenResidual {
    /// `max |(𝒜 + g)φ + λφ|` over the probes.
    pub max_abs: f64,
    /// `max φ` over the probes.
    pub phi_scale: f64,
    pub relative: f64,
    pub worst_point: Vec<f64>,
}

/// Probe residual with `∇φ` analytic and the Hessian by central differences
/// of `∇φ`.
pub fn eigen_residual(
    model: &DiffusionModel,
    g: &FitnessFunction,
    pair: &Eigenpair,
    probes: &[Vec<f64>],
) -> Result<EigenResidual> {
    if probes.is_empty() {
        return Err(Error::Config("no probe points".into()));
    }
    let n = model.dim();
    let mut max_abs: f64 = 0.0;
    let mut phi_scale: f64 = 0.0;
    let mut worst = probes[0].clone();
    for x in probes {
        let phi = pair.phi(x);
        if !(phi > 0.0) || !phi.is_finite() {
            return Err(Error::Assumption(format!(
                "eigenfunction is not positive and finite at {x:?}"
            )));
        }
        let mut grad = vec![0.0; n];
        pair.grad_phi(x, &mut grad);
        let hess = fd_hessian(x, |y, out| pair.grad_phi(y, out));
        let r = model.generator(x, &DVector::from_vec(grad), &hess) + (g.eval(x) + pair.lambda) * phi;
        if !r.is_finite() {
            return Err(Error::Numeric(format!("eigen residual not finite at {x:?}")));
        }
        if r.abs() > max_abs {
            max_abs = r.abs();
            worst = x.clone();
        }
        phi_scale = phi_scale.max(phi);
    }
    Ok(EigenResidual {
        max_abs,
        phi_scale,
        relative: max_abs / phi_scale,
        worst_point: worst,
    })
}
