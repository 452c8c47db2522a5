use super::gaussian::{initial_components, GaussianMixture, WeightedGaussian};
use super::solution::{ClosedFormSolution, EngineTag, TimeSlice};
use super::{detect_constant_condition, MIN_PROBES};
use crate::error::{Error, Result};
use crate::model::{DiffusionModel, FitnessForm, FitnessFunction, InitialLaw};
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// Constants of the drift-Brownian reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEngineInfo {
    /// `𝒜g`.
    pub c1: f64,
    /// `C2 C2ᵀ = |∇gᵀσ|²`.
    pub c2_sq: f64,
    /// Gradient of `g`.
    pub w: DVector<f64>,
    pub b: DVector<f64>,
    pub a: DMatrix<f64>,
    /// `g(0)`.
    pub g0: f64,
}

impl LinearEngineInfo {
    pub fn new(model: &DiffusionModel, g: &FitnessFunction) -> Result<Self> {
        let form = model
            .affine_form()
            .filter(|f| f.big_b.iter().all(|v| *v == 0.0))
            .ok_or_else(|| {
                Error::Assumption(format!(
                    "linear engine needs constant coefficients, got a {} model",
                    model.kind()
                ))
            })?;
        let w = match g.form() {
            FitnessForm::Linear { coef } => coef.clone(),
            _ => return Err(Error::Assumption("linear engine needs a linear fitness".into())),
        };
        let probes = model.domain().probe_points(2 * MIN_PROBES);
        let cc = detect_constant_condition(model, g, &probes).map_err(|r| {
            Error::Assumption(format!("constant condition rejected: {}", r.reason))
        })?;
        Ok(Self {
            c1: cc.c1,
            c2_sq: cc.c2.iter().map(|v| v * v).sum(),
            a: form.a(),
            b: form.b,
            w,
            g0: g.eval(&vec![0.0; model.dim()]),
        })
    }

    /// Components of `u0 ⋆ p̄(t)`, the law of the drift-shifted Brownian
    /// motion `y + bt − a w t²/2 + σ W_t`.
    pub fn convolved(&self, comps: &[WeightedGaussian], t: f64) -> Vec<WeightedGaussian> {
        let n = self.w.len();
        let shift = &self.b * t - &self.a * &self.w * (0.5 * t * t);
        let cov = &self.a * t;
        let id = DMatrix::identity(n, n);
        comps.iter().map(|c| c.push(&id, &shift, &cov)).collect()
    }

    /// `log ∫ e^{t wᵀz} (u0 ⋆ p̄(t))(z) dz`.
    pub fn log_kernel_tilt_mass(&self, comps: &[WeightedGaussian], t: f64) -> Result<f64> {
        Ok(self.slice(comps, t)?.mixture.log_mass())
    }

    fn slice(&self, comps: &[WeightedGaussian], t: f64) -> Result<TimeSlice> {
        let n = self.w.len();
        let v = &self.w * (-t);
        let zero = DMatrix::zeros(n, n);
        let tilted = self
            .convolved(comps, t)
            .iter()
            .map(|c| c.tilt(&zero, &v))
            .collect::<Result<Vec<_>>>()?;
        let mixture = GaussianMixture::from_weighted(tilted)?;
        let log_h = self.c2_sq * t.powi(3) / 6.0 - self.c1 * t * t / 2.0
            + self.g0 * t
            + mixture.log_mass();
        Ok(TimeSlice { mixture, log_h })
    }
}

/// Exact engine for constant-coefficient models with linear fitness.
pub fn linear_engine(
    model: &DiffusionModel,
    g: &FitnessFunction,
    u0: &InitialLaw,
) -> Result<ClosedFormSolution> {
    u0.check_support(model.domain())?;
    if u0.dim() != model.dim() {
        return Err(Error::Config("initial law and model dimensions differ".into()));
    }
    let info = Arc::new(LinearEngineInfo::new(model, g)?);
    let comps = Arc::new(initial_components(u0)?);
    let slice = Arc::new(move |t: f64| info.slice(&comps, t));
    Ok(ClosedFormSolution::analytic(
        EngineTag::Linear,
        "constant-condition reduction",
        u0.clone(),
        slice,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::quadrature::linspace;
    use std::f64::consts::PI;

    fn scenario() -> (DiffusionModel, FitnessFunction) {
        (
            DiffusionModel::scalar_bm(0.0, 2f64.sqrt()),
            FitnessFunction::linear(vec![1.0]),
        )
    }

    fn npdf(x: f64, m: f64, v: f64) -> f64 {
        (-(x - m).powi(2) / (2.0 * v)).exp() / (2.0 * PI * v).sqrt()
    }

    #[test]
    fn gaussian_start_stays_gaussian() {
        let (model, g) = scenario();
        let (m0, s2) = (0.3, 0.7);
        let sol = linear_engine(&model, &g, &InitialLaw::gaussian_1d(m0, s2).unwrap()).unwrap();
        for &t in &[0.25, 0.5, 1.0] {
            let (m, v) = sol.moments_1d(t).unwrap();
            assert!((m - (m0 + s2 * t + t * t)).abs() < 1e-13);
            assert!((v - (s2 + 2.0 * t)).abs() < 1e-13);
            let h = sol.log_mass_factor(t).unwrap();
            assert!((h - (t * m0 + t * t * s2 / 2.0 + t.powi(3) / 3.0)).abs() < 1e-13);
        }
        assert_eq!(sol.mass_factor(0.0).unwrap(), 1.0);
    }

    #[test]
    fn simplified_heat_kernel_form_agrees() {
        // e^{tx} (4πt)^{-1/2} ∫ exp(−(x−y+t²)²/(4t)) u0(y) dy / ∫ e^{ty} u0(y) dy
        // for a bimodal u0, by direct quadrature.
        let (model, g) = scenario();
        let u0 = InitialLaw::Mixture(vec![
            (0.3, InitialLaw::gaussian_1d(-1.0, 0.2).unwrap()),
            (0.7, InitialLaw::gaussian_1d(1.5, 0.5).unwrap()),
        ]);
        let sol = linear_engine(&model, &g, &u0).unwrap();
        let t = 0.6;
        let ys = linspace(-12.0, 14.0, 20001);
        let dy = ys[1] - ys[0];
        let u0d = |y: f64| 0.3 * npdf(y, -1.0, 0.2) + 0.7 * npdf(y, 1.5, 0.5);
        let norm: f64 = ys.iter().map(|&y| (t * y).exp() * u0d(y)).sum::<f64>() * dy;
        for &x in &[-2.0, 0.0, 1.0, 2.5, 4.0] {
            let conv: f64 = ys
                .iter()
                .map(|&y| (-(x - y + t * t).powi(2) / (4.0 * t)).exp() * u0d(y))
                .sum::<f64>()
                * dy;
            let expected = (t * x).exp() * conv / (4.0 * PI * t).sqrt() / norm;
            let got = sol.density(t, &[x]).unwrap();
            assert!((got - expected).abs() < 1e-10 * expected.max(1e-3), "{x}: {got} {expected}");
        }
    }

    #[test]
    fn short_time_limit_returns_initial_law() {
        let (model, g) = scenario();
        let u0 = InitialLaw::gaussian_1d(0.0, 1.0).unwrap();
        let sol = linear_engine(&model, &g, &u0).unwrap();
        let x = linspace(-8.0, 8.0, 4001);
        let a = sol.density_grid(1e-4, &x).unwrap();
        let b = sol.density_grid(0.0, &x).unwrap();
        assert!(a.l1_distance(&b) <= 1e-3);
    }

    #[test]
    fn shift_invariance_and_mass_scaling() {
        let (model, g) = scenario();
        let u0 = InitialLaw::gaussian_1d(0.2, 0.5).unwrap();
        let s1 = linear_engine(&model, &g, &u0).unwrap();
        let s2 = linear_engine(&model, &g.offset_by(5.0), &u0).unwrap();
        for &x in &[-1.0, 0.0, 2.0] {
            assert_eq!(s1.density(0.5, &[x]).unwrap(), s2.density(0.5, &[x]).unwrap());
        }
        let d = s2.log_mass_factor(0.5).unwrap() - s1.log_mass_factor(0.5).unwrap();
        assert!((d - 2.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_constant_coefficients() {
        let model = DiffusionModel::ou(1.0, 0.0, 1.0).unwrap();
        let u0 = InitialLaw::gaussian_1d(0.0, 1.0).unwrap();
        assert!(linear_engine(&model, &FitnessFunction::linear(vec![1.0]), &u0).is_err());
    }

    #[test]
    fn horizon_is_where_the_mass_overflows() {
        let (model, g) = scenario();
        let sol = linear_engine(&model, &g, &InitialLaw::gaussian_1d(0.0, 1.0).unwrap()).unwrap();
        let t = sol.horizon();
        let f = |t: f64| t * t / 2.0 + t.powi(3) / 3.0;
        assert!((f(t) - 700.0).abs() < 1e-6);
        assert!(sol.mass_factor(t * 1.01).is_err());
    }

    #[test]
    fn zero_fitness_is_plain_brownian_motion() {
        let model = DiffusionModel::scalar_bm(0.5, 1.0);
        let sol = linear_engine(&model, &FitnessFunction::zero(1), &InitialLaw::dirac(vec![0.0])).unwrap();
        let (m, v) = sol.moments_1d(2.0).unwrap();
        assert!((m - 1.0).abs() < 1e-14 && (v - 2.0).abs() < 1e-14);
        assert_eq!(sol.mass_factor(2.0).unwrap(), 1.0);
    }
}
