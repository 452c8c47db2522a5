use super::kummer::{kummer_m, ln_kummer_m};
use crate::closed_form::{EigenSource, Eigenpair};
use crate::error::{Error, Result};
use std::sync::Arc;

/// Constants of the Kummer eigenfunction for CIR with fitness `g(x) = −x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KummerParams {
    /// First Kummer parameter, `(λ0 − λ)/γ ≥ 0`.
    pub alpha: f64,
    /// `2a/σ²`.
    pub beta: f64,
    /// Argument scale `2γ/σ²`.
    pub scale: f64,
    /// Exponential rate `(κ − γ)/σ²`.
    pub rate: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub lambda0: f64,
    pub lambda: f64,
}

impl KummerParams {
    pub fn new(a: f64, b: f64, sigma: f64, lambda: f64) -> Result<Self> {
        if !(a > 0.0 && sigma > 0.0 && b.is_finite() && lambda.is_finite()) {
            return Err(Error::Config("CIR eigenpair needs a > 0 and sigma > 0".into()));
        }
        let s2 = sigma * sigma;
        if 2.0 * a < s2 {
            return Err(Error::Assumption(format!(
                "Feller condition 2a >= sigma^2 fails: {} < {s2}",
                2.0 * a
            )));
        }
        let kappa = -b;
        let gamma = (kappa * kappa + 2.0 * s2).sqrt();
        let lambda0 = cir_ground_lambda(a, b, sigma);
        if lambda > lambda0 * (1.0 + 1e-14) + 1e-14 {
            return Err(Error::Assumption(format!(
                "lambda = {lambda} exceeds lambda0 = {lambda0}"
            )));
        }
        Ok(Self {
            alpha: ((lambda0 - lambda) / gamma).max(0.0),
            beta: 2.0 * a / s2,
            scale: 2.0 * gamma / s2,
            rate: (kappa - gamma) / s2,
            kappa,
            gamma,
            lambda0,
            lambda,
        })
    }

    pub fn log_phi(&self, x: f64) -> Result<f64> {
        let k = if self.alpha == 0.0 {
            0.0
        } else {
            ln_kummer_m(self.alpha, self.beta, self.scale * x)?
        };
        Ok(self.rate * x + k)
    }

    /// `(log φ)′ = rate + scale (α/β) M(α+1, β+1, z)/M(α, β, z)`.
    pub fn grad_log_phi(&self, x: f64) -> Result<f64> {
        if self.alpha == 0.0 {
            return Ok(self.rate);
        }
        let z = self.scale * x;
        let ratio = kummer_m(self.alpha + 1.0, self.beta + 1.0, z)? / kummer_m(self.alpha, self.beta, z)?;
        Ok(self.rate + self.scale * self.alpha / self.beta * ratio)
    }
}

#[derive(Debug, Clone)]
pub struct CirEigen {
    pub params: KummerParams,
    pub pair: Eigenpair,
    a: f64,
}

impl CirEigen {
    /// Drift of the tilted process, `a − γx + (2αγ/β) x M(α+1,β+1,z)/M(α,β,z)`.
    pub fn tilted_drift(&self, x: f64) -> Result<f64> {
        let p = &self.params;
        let extra = if p.alpha == 0.0 {
            0.0
        } else {
            let z = p.scale * x;
            2.0 * p.alpha * p.gamma / p.beta * x * kummer_m(p.alpha + 1.0, p.beta + 1.0, z)?
                / kummer_m(p.alpha, p.beta, z)?
        };
        Ok(self.a - p.gamma * x + extra)
    }
}

/// Principal eigenvalue `λ0 = a(√(b² + 2σ²) + b)/σ²` for fitness `−x`.
pub fn cir_ground_lambda(a: f64, b: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    a * ((b * b + 2.0 * s2).sqrt() + b) / s2
}

/// Eigenpair of the CIR generator with fitness `−x` at eigenvalue `λ ≤ λ0`.
pub fn cir_eigenpair(a: f64, b: f64, sigma: f64, lambda: f64) -> Result<CirEigen> {
    let params = KummerParams::new(a, b, sigma, lambda)?;
    let p1 = params;
    let p2 = params;
    let pair = Eigenpair::new(
        1,
        lambda,
        EigenSource::Kummer,
        Arc::new(move |x: &[f64]| p1.log_phi(x[0]).unwrap_or(f64::NAN)),
        Arc::new(move |x: &[f64], out: &mut [f64]| {
            out[0] = p2.grad_log_phi(x[0]).unwrap_or(f64::NAN);
        }),
    );
    Ok(CirEigen { params, pair, a })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::eigen_residual;
    use crate::model::{DiffusionModel, FitnessFunction};
    use crate::numerics::quadrature::linspace;

    #[test]
    fn ground_eigenvalue_collapses_to_exponential() {
        let e = cir_eigenpair(1.0, -1.0, 1.0, 3f64.sqrt() - 1.0).unwrap();
        assert!((e.params.lambda0 - (3f64.sqrt() - 1.0)).abs() < 1e-15);
        assert_eq!(e.params.alpha, 0.0);
        assert!((e.params.rate - (1.0 - 3f64.sqrt())).abs() < 1e-15);
        for x in [0.1, 1.0, 4.0] {
            assert!((e.pair.log_phi(&[x]) - (1.0 - 3f64.sqrt()) * x).abs() < 1e-14);
            assert!((e.tilted_drift(x).unwrap() - (1.0 - 3f64.sqrt() * x)).abs() < 1e-14);
        }
    }

    #[test]
    fn residual_probe_at_ground_and_below() {
        let model = DiffusionModel::cir(1.0, -1.0, 1.0).unwrap();
        let g = FitnessFunction::linear(vec![-1.0]);
        let probes: Vec<Vec<f64>> = linspace(0.1, 5.0, 64).into_iter().map(|x| vec![x]).collect();
        let lambda0 = 3f64.sqrt() - 1.0;
        for lambda in [lambda0, lambda0 - 0.5, lambda0 - 2.0] {
            let e = cir_eigenpair(1.0, -1.0, 1.0, lambda).unwrap();
            let r = eigen_residual(&model, &g, &e.pair, &probes).unwrap();
            assert!(r.relative <= 1e-6, "lambda {lambda}: {}", r.relative);
        }
    }

    #[test]
    fn eigenfunction_positive() {
        let e = cir_eigenpair(1.0, -1.0, 1.0, -1.0).unwrap();
        for x in linspace(1e-3, 10.0, 500) {
            assert!(e.pair.phi(&[x]) > 0.0);
        }
    }

    #[test]
    fn rejects_lambda_above_ground() {
        assert!(cir_eigenpair(1.0, -1.0, 1.0, 1.0).is_err());
        assert!(cir_eigenpair(0.2, -1.0, 1.0, 0.0).is_err());
    }
}
