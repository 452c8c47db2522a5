use super::gaussian::{initial_components, GaussianMixture, WeightedGaussian};
use super::riccati::{solve_linear_v, solve_riccati, RiccatiSolution};
use super::solution::{ClosedFormSolution, EngineTag, TimeSlice};
use super::{eigen_residual, EigenSource, Eigenpair};
use crate::error::{Error, Result};
use crate::model::{AffineForm, DiffusionModel, FitnessForm, FitnessFunction, InitialLaw};
use crate::numerics::linalg::{affine_drift_integral, covariance_integral, matrix_exp};
use crate::tolerances;
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// `g(x) = −(α + δᵀx + xᵀGx)` with any additive offset folded into `α`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticFitness {
    pub alpha: f64,
    pub delta: DVector<f64>,
    pub g: DMatrix<f64>,
}

impl QuadraticFitness {
    pub fn from_fitness(g: &FitnessFunction) -> Result<Self> {
        let n = g.dim();
        let off = g.offset();
        match g.form() {
            FitnessForm::Linear { coef } => Ok(Self {
                alpha: -off,
                delta: -coef,
                g: DMatrix::zeros(n, n),
            }),
            FitnessForm::Quadratic { alpha, delta, g } => Ok(Self {
                alpha: alpha - off,
                delta: delta.clone(),
                g: g.clone(),
            }),
            FitnessForm::Polynomial { coeffs } if coeffs.len() <= 3 => {
                let c = |k: usize| coeffs.get(k).copied().unwrap_or(0.0);
                Ok(Self {
                    alpha: -(c(0) + off),
                    delta: DVector::from_element(1, -c(1)),
                    g: DMatrix::from_element(1, 1, -c(2)),
                })
            }
            _ => Err(Error::Assumption(
                "affine engine needs a fitness of degree at most two".into(),
            )),
        }
    }

    /// `r(x) = α + δᵀx + xᵀGx = −g(x)`.
    pub fn r(&self, x: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        self.alpha + self.delta.dot(&x) + (x.transpose() * &self.g * &x)[(0, 0)]
    }
}

/// Eigenpair `φ = exp(−vᵀx − xᵀHx)` and the tilted linear dynamics.
#[derive(Debug, Clone)]
pub struct AffineEigen {
    pub h: DMatrix<f64>,
    pub v: DVector<f64>,
    pub lambda: f64,
    /// `Γ = B − 2aH`.
    pub gamma: DMatrix<f64>,
    /// `β = b − av`.
    pub beta: DVector<f64>,
    /// `a = σσᵀ`.
    pub a: DMatrix<f64>,
    pub riccati: RiccatiSolution,
    pub pair: Eigenpair,
    pub residual: f64,
}

fn affine_model_form(model: &DiffusionModel) -> Result<AffineForm> {
    model.affine_form().ok_or_else(|| {
        Error::Assumption(format!("affine engine needs an affine model, got {}", model.kind()))
    })
}

/// Solves for the Gaussian-type eigenpair and checks it on probe points.
pub fn affine_eigenpair(model: &DiffusionModel, g: &FitnessFunction) -> Result<AffineEigen> {
    let form = affine_model_form(model)?;
    let q = QuadraticFitness::from_fitness(g)?;
    let a = form.a();
    let riccati = solve_riccati(&a, &form.big_b, &q.g)?;
    let h = riccati.h.clone();
    let v = solve_linear_v(&h, &a, &form.big_b, &form.b, &q.delta)?;
    let lambda = q.alpha + (&a * &h).trace() + v.dot(&form.b) - 0.5 * (v.transpose() * &a * &v)[(0, 0)];
    let gamma = &form.big_b - &a * &h * 2.0;
    let beta = &form.b - &a * &v;
    let n = model.dim();
    let (h1, v1) = (h.clone(), v.clone());
    let (h2, v2) = (h.clone(), v.clone());
    let pair = Eigenpair::new(
        n,
        lambda,
        EigenSource::AffineAnalytic,
        Arc::new(move |x: &[f64]| {
            let x = DVector::from_column_slice(x);
            -v1.dot(&x) - (x.transpose() * &h1 * &x)[(0, 0)]
        }),
        Arc::new(move |x: &[f64], out: &mut [f64]| {
            let x = DVector::from_column_slice(x);
            let gr = -&v2 - &h2 * &x * 2.0;
            out.copy_from_slice(gr.as_slice());
        }),
    );
    let probes = model.domain().probe_points(64);
    let res = eigen_residual(model, g, &pair, &probes)?;
    if !(res.relative <= tolerances::EIGEN_RESIDUAL) {
        return Err(Error::Numeric(format!(
            "affine eigenpair fails the residual probe ({:e} at {:?})",
            res.relative, res.worst_point
        )));
    }
    Ok(AffineEigen {
        h,
        v,
        lambda,
        gamma,
        beta,
        a,
        riccati,
        pair,
        residual: res.relative,
    })
}

fn check_initial(model: &DiffusionModel, u0: &InitialLaw) -> Result<Vec<WeightedGaussian>> {
    if u0.dim() != model.dim() {
        return Err(Error::Config("initial law and model dimensions differ".into()));
    }
    u0.check_support(model.domain())?;
    initial_components(u0)
}

/// Analytic engine for affine models with fitness of degree at most two.
///
/// Uses the Riccati eigenpair when a stabilising solution exists, otherwise
/// the drift-Brownian reduction when `G = 0` and `Bᵀδ = 0`.
pub fn affine_engine(
    model: &DiffusionModel,
    g: &FitnessFunction,
    u0: &InitialLaw,
) -> Result<ClosedFormSolution> {
    let form = affine_model_form(model)?;
    let q = QuadraticFitness::from_fitness(g)?;
    let comps = Arc::new(check_initial(model, u0)?);
    let probes = model.domain().probe_points(64);
    let r_min = probes.iter().map(|p| q.r(p)).fold(f64::INFINITY, f64::min);

    let solution = match affine_eigenpair(model, g) {
        Ok(eig) => eigen_route(eig, comps, u0),
        Err(err) => {
            let reducible = q.g.iter().all(|v| *v == 0.0)
                && (form.big_b.transpose() * &q.delta).amax() <= 1e-14 * (1.0 + q.delta.amax());
            if !reducible {
                return Err(err);
            }
            reduction_route(form, q, comps, u0)
        }
    };
    Ok(if r_min < 0.0 {
        solution.with_diagnostic(format!(
            "r(x) = -g(x) takes negative values on the probes (min {r_min:.3e})"
        ))
    } else {
        solution
    })
}

fn eigen_route(eig: AffineEigen, comps: Arc<Vec<WeightedGaussian>>, u0: &InitialLaw) -> ClosedFormSolution {
    let n = eig.v.len();
    let AffineEigen {
        h,
        v,
        lambda,
        gamma,
        beta,
        a,
        ..
    } = eig;
    let slice = move |t: f64| -> Result<TimeSlice> {
        let m = matrix_exp(&gamma, t);
        let c = affine_drift_integral(&gamma, &beta, &DVector::zeros(n), t);
        let s = covariance_integral(&gamma, &a, t);
        let (neg_h, neg_v) = (-&h, -&v);
        let parts = comps
            .iter()
            .map(|p| p.tilt(&h, &v)?.push(&m, &c, &s).tilt(&neg_h, &neg_v))
            .collect::<Result<Vec<_>>>()?;
        let mixture = GaussianMixture::from_weighted(parts)?;
        Ok(TimeSlice {
            log_h: -lambda * t + mixture.log_mass(),
            mixture,
        })
    };
    ClosedFormSolution::analytic(EngineTag::Affine, "riccati eigenpair", u0.clone(), Arc::new(slice))
}

/// Drift-Brownian reduction: the tilted process has drift `b + Bx + s aδ`
/// and the terminal weight is `e^{−t δᵀx}`.
fn reduction_route(
    form: AffineForm,
    q: QuadraticFitness,
    comps: Arc<Vec<WeightedGaussian>>,
    u0: &InitialLaw,
) -> ClosedFormSolution {
    let a = form.a();
    let n = q.delta.len();
    let ad = &a * &q.delta;
    let c2_sq = q.delta.dot(&ad);
    let c1 = -q.delta.dot(&form.b);
    let slice = move |t: f64| -> Result<TimeSlice> {
        let m = matrix_exp(&form.big_b, t);
        let c = affine_drift_integral(&form.big_b, &form.b, &ad, t);
        let s = covariance_integral(&form.big_b, &a, t);
        let v = &q.delta * t;
        let zero = DMatrix::zeros(n, n);
        let parts = comps
            .iter()
            .map(|p| p.push(&m, &c, &s).tilt(&zero, &v))
            .collect::<Result<Vec<_>>>()?;
        let mixture = GaussianMixture::from_weighted(parts)?;
        Ok(TimeSlice {
            log_h: c2_sq * t.powi(3) / 6.0 - c1 * t * t / 2.0 - q.alpha * t + mixture.log_mass(),
            mixture,
        })
    };
    ClosedFormSolution::analytic(
        EngineTag::Affine,
        "constant-condition reduction",
        u0.clone(),
        Arc::new(slice),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::linear_engine;
    use crate::model::DomainSpec;
    use crate::numerics::quadrature::linspace;

    fn ou_case() -> (DiffusionModel, FitnessFunction, InitialLaw) {
        (
            DiffusionModel::ou(1.0, 0.0, 1.0).unwrap(),
            FitnessFunction::linear(vec![-1.0]),
            InitialLaw::gaussian_1d(0.0, 1.0).unwrap(),
        )
    }

    #[test]
    fn ou_linear_fitness_eigenpair() {
        let (model, g, _) = ou_case();
        let e = affine_eigenpair(&model, &g).unwrap();
        // H = 0, v = 1/κ, λ = vb − ½ v²σ² with b = κθ = 0.
        assert!(e.h.amax() < 1e-14);
        assert!((e.v[0] - 1.0).abs() < 1e-14);
        assert!((e.lambda + 0.5).abs() < 1e-14);
        assert!((e.beta[0] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn ou_tilted_mean_and_mass_match_moment_formula() {
        // Under the OU flow with g = −x the solution stays Gaussian; the
        // law at t follows from E[e^{−∫X} f(X_t)] for the Gaussian pair.
        let (model, g, u0) = ou_case();
        let sol = affine_engine(&model, &g, &u0).unwrap();
        assert_eq!(sol.route(), "riccati eigenpair");
        let t = 1.0f64;
        // Joint Gaussian of (X_t, I_t = ∫X) with X_0 ~ N(0,1), κ=1, σ=1.
        let e = (-t).exp();
        let var_x = e * e + (1.0 - e * e) / 2.0;
        let k = 1.0 - e;
        let var_i_noise = t - 2.0 * k + (1.0 - e * e) / 2.0;
        let var_i = k * k + var_i_noise;
        let cov_noise = 0.5 * k * k;
        let cov_xi = e * k + cov_noise;
        let mean = -cov_xi;
        let var = var_x;
        let log_h = 0.5 * var_i;
        let (m, v) = sol.moments_1d(t).unwrap();
        assert!((m - mean).abs() < 1e-12, "{m} {mean}");
        assert!((v - var).abs() < 1e-12, "{v} {var}");
        assert!((sol.log_mass_factor(t).unwrap() - log_h).abs() < 1e-12);
    }

    #[test]
    fn zero_fitness_gives_plain_ou_marginal() {
        let model = DiffusionModel::ou(2.0, 1.0, 0.5).unwrap();
        let u0 = InitialLaw::gaussian_1d(-1.0, 0.3).unwrap();
        let sol = affine_engine(&model, &FitnessFunction::zero(1), &u0).unwrap();
        let t = 0.7f64;
        let e = (-2.0 * t).exp();
        let mean = 1.0 + (-1.0 - 1.0) * e;
        let var = 0.3 * e * e + 0.25 * (1.0 - e * e) / 4.0;
        let (m, v) = sol.moments_1d(t).unwrap();
        assert!((m - mean).abs() < 1e-13 && (v - var).abs() < 1e-13);
        assert!(sol.log_mass_factor(t).unwrap().abs() < 1e-13);
    }

    #[test]
    fn degenerate_route_matches_linear_engine() {
        let model = DiffusionModel::scalar_bm(0.3, 2f64.sqrt());
        let g = FitnessFunction::linear(vec![1.0]);
        let u0 = InitialLaw::gaussian_1d(0.5, 0.8).unwrap();
        let a = affine_engine(&model, &g, &u0).unwrap();
        assert_eq!(a.route(), "constant-condition reduction");
        let l = linear_engine(&model, &g, &u0).unwrap();
        for &t in &[0.25, 1.0] {
            for x in linspace(-4.0, 6.0, 11) {
                let (p, q) = (a.density(t, &[x]).unwrap(), l.density(t, &[x]).unwrap());
                assert!((p - q).abs() <= 1e-12 * (1.0 + q));
            }
            let d = a.log_mass_factor(t).unwrap() - l.log_mass_factor(t).unwrap();
            assert!(d.abs() < 1e-12);
        }
    }

    #[test]
    fn harmonic_eigenvalue() {
        // BM with diffusion √2 s and g = −x²: H = 1/(2s), λ = s.
        let s = 0.8f64;
        let model = DiffusionModel::scalar_bm(0.0, 2f64.sqrt() * s);
        let g = FitnessFunction::quadratic(0.0, vec![0.0], DMatrix::from_element(1, 1, 1.0)).unwrap();
        let e = affine_eigenpair(&model, &g).unwrap();
        assert!((e.h[(0, 0)] - 1.0 / (2.0 * s)).abs() < 1e-12);
        assert!((e.lambda - s).abs() < 1e-12);
    }

    #[test]
    fn random_two_dim_eigenpair_passes_probe() {
        let b = DMatrix::from_row_slice(2, 2, &[-0.8, 0.3, 0.1, -0.5]);
        let sigma = DMatrix::from_row_slice(2, 2, &[0.9, 0.0, 0.2, 0.7]);
        let model = DiffusionModel::affine(vec![0.2, -0.1], b, sigma).unwrap();
        let gm = DMatrix::from_row_slice(2, 2, &[0.6, 0.1, 0.1, 0.4]);
        let g = FitnessFunction::quadratic(0.3, vec![0.5, -0.2], gm).unwrap();
        let e = affine_eigenpair(&model, &g).unwrap();
        let probes = DomainSpec::full_space(2).unwrap().probe_points(64);
        let r = eigen_residual(&model, &g, &e.pair, &probes).unwrap();
        assert!(r.relative <= 1e-6, "{}", r.relative);
    }

    #[test]
    fn density_grid_normalised_on_a_time_grid() {
        let (model, g, u0) = ou_case();
        let sol = affine_engine(&model, &g, &u0).unwrap();
        for k in 1..=16 {
            let t = k as f64 / 16.0;
            let grid = sol.default_grid(t, 801).unwrap();
            let d = sol.density_grid(t, &grid).unwrap();
            assert!(d.values().iter().all(|v| *v >= 0.0));
            assert!((d.integral() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn shift_invariance_is_exact() {
        let (model, g, u0) = ou_case();
        let s1 = affine_engine(&model, &g, &u0).unwrap();
        let s2 = affine_engine(&model, &g.offset_by(5.0), &u0).unwrap();
        for &x in &[-1.0, 0.3] {
            let (p, q) = (s1.density(0.5, &[x]).unwrap(), s2.density(0.5, &[x]).unwrap());
            assert!((p - q).abs() <= 1e-12 * p);
        }
        let d = s2.log_mass_factor(0.5).unwrap() - s1.log_mass_factor(0.5).unwrap();
        assert!((d - 2.5).abs() < 1e-12);
    }

    #[test]
    fn negative_r_is_flagged_not_fatal() {
        let (model, g, u0) = ou_case();
        let sol = affine_engine(&model, &g, &u0).unwrap();
        assert!(sol.diagnostics().iter().any(|d| d.contains("negative")));
    }
}
