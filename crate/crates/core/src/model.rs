//! Diffusion models, fitness functions and initial laws.

use crate::error::{Error, Result};
use crate::numerics::kde::GridDensity;
use crate::numerics::linalg::GaussianMoments;
use crate::numerics::quadrature::{linspace, GaussHermite};
use crate::numerics::special::ln_gamma;
use crate::rng;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::fmt;
use std::sync::Arc;

/// `out = f(x)` for a vector field.
pub type VectorField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// `f(x)` for a scalar field.
pub type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Debug, Clone, PartialEq)]
pub enum DomainSpec {
    FullSpace { dim: usize },
    /// `[0, ∞)`; states are allowed to touch zero.
    HalfLine,
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

impl DomainSpec {
    pub fn full_space(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("domain dimension must be positive".into()));
        }
        Ok(Self::FullSpace { dim })
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::Config("box bounds must be nonempty and of equal length".into()));
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(l, u)| !l.is_finite() || !u.is_finite() || l >= u)
        {
            return Err(Error::Config("box bounds must be finite with lower < upper".into()));
        }
        Ok(Self::Box { lower, upper })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::FullSpace { dim } => *dim,
            Self::HalfLine => 1,
            Self::Box { lower, .. } => lower.len(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self {
            Self::FullSpace { .. } => true,
            Self::HalfLine => x[0] >= 0.0,
            Self::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (l, u))| v >= l && v <= u),
        }
    }

    /// Deterministic quasi-random interior points (Halton sequence).
    ///
    /// Full space probes `[-3, 3]^n`, the half-line probes `[0.1, 5]`.
    pub fn probe_points(&self, count: usize) -> Vec<Vec<f64>> {
        const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];
        let n = self.dim();
        (1..=count as u64)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let u = radical_inverse(i, PRIMES[j % PRIMES.len()]);
                        match self {
                            Self::FullSpace { .. } => -3.0 + 6.0 * u,
                            Self::HalfLine => 0.1 + 4.9 * u,
                            Self::Box { lower, upper } => {
                                let pad = 0.01 * (upper[j] - lower[j]);
                                lower[j] + pad + (upper[j] - lower[j] - 2.0 * pad) * u
                            }
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    ArithmeticBm,
    Ou,
    Cir,
    Affine,
    Custom,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ArithmeticBm => "arithmetic-BM",
            Self::Ou => "OU",
            Self::Cir => "CIR",
            Self::Affine => "affine",
            Self::Custom => "custom",
        })
    }
}

#[derive(Clone)]
enum Coefficients {
    /// `dX = b dt + σ dW`.
    ArithmeticBm { drift: DVector<f64>, sigma: DMatrix<f64> },
    /// `dX = κ(θ − X) dt + σ dW`.
    Ou { kappa: f64, theta: f64, sigma: f64 },
    /// `dX = (a + bX) dt + σ √X dW`.
    Cir { a: f64, b: f64, sigma: f64 },
    /// `dX = (b + BX) dt + σ dW`.
    Affine {
        b: DVector<f64>,
        big_b: DMatrix<f64>,
        sigma: DMatrix<f64>,
    },
    Custom {
        drift: VectorField,
        diffusion: VectorField,
        lipschitz_declared: bool,
    },
}

/// Linear-drift, constant-diffusion form `b + Bx`, `σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineForm {
    pub b: DVector<f64>,
    pub big_b: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
}

impl AffineForm {
    pub fn a(&self) -> DMatrix<f64> {
        &self.sigma * self.sigma.transpose()
    }
}

/// A diffusion `dX = b(X) dt + σ(X) dW` on a domain.
#[derive(Clone)]
pub struct DiffusionModel {
    domain: DomainSpec,
    noise_dim: usize,
    coeffs: Coefficients,
}

impl fmt::Debug for DiffusionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionModel")
            .field("kind", &self.kind())
            .field("domain", &self.domain)
            .field("noise_dim", &self.noise_dim)
            .finish()
    }
}

impl DiffusionModel {
    /// Arithmetic Brownian motion with constant drift and an `n×m` diffusion.
    pub fn arithmetic_bm(drift: Vec<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let n = drift.len();
        if n == 0 || sigma.nrows() != n || sigma.ncols() == 0 {
            return Err(Error::Config("drift and diffusion dimensions disagree".into()));
        }
        Ok(Self {
            domain: DomainSpec::full_space(n)?,
            noise_dim: sigma.ncols(),
            coeffs: Coefficients::ArithmeticBm {
                drift: DVector::from_vec(drift),
                sigma,
            },
        })
    }

    /// Scalar Brownian motion `dX = b dt + s dW`.
    pub fn scalar_bm(b: f64, s: f64) -> Self {
        Self::arithmetic_bm(vec![b], DMatrix::from_element(1, 1, s)).expect("scalar dims")
    }

    pub fn ou(kappa: f64, theta: f64, sigma: f64) -> Result<Self> {
        if !(kappa.is_finite() && theta.is_finite() && sigma.is_finite()) {
            return Err(Error::Config("OU parameters must be finite".into()));
        }
        Ok(Self {
            domain: DomainSpec::FullSpace { dim: 1 },
            noise_dim: 1,
            coeffs: Coefficients::Ou { kappa, theta, sigma },
        })
    }

    /// CIR process on the half-line. The Feller condition is checked by
    /// [`validate_model`] and by the CIR simulator, not here.
    pub fn cir(a: f64, b: f64, sigma: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && sigma.is_finite()) || a < 0.0 || sigma < 0.0 {
            return Err(Error::Config("CIR needs finite a >= 0 and sigma >= 0".into()));
        }
        Ok(Self {
            domain: DomainSpec::HalfLine,
            noise_dim: 1,
            coeffs: Coefficients::Cir { a, b, sigma },
        })
    }

    pub fn affine(b: Vec<f64>, big_b: DMatrix<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let n = b.len();
        if n == 0 || big_b.shape() != (n, n) || sigma.nrows() != n || sigma.ncols() == 0 {
            return Err(Error::Config("affine coefficient dimensions disagree".into()));
        }
        Ok(Self {
            domain: DomainSpec::full_space(n)?,
            noise_dim: sigma.ncols(),
            coeffs: Coefficients::Affine {
                b: DVector::from_vec(b),
                big_b,
                sigma,
            },
        })
    }

    /// Custom coefficients; `diffusion` writes an `n×m` row-major matrix.
    pub fn custom(
        domain: DomainSpec,
        noise_dim: usize,
        drift: VectorField,
        diffusion: VectorField,
        lipschitz_declared: bool,
    ) -> Result<Self> {
        if noise_dim == 0 {
            return Err(Error::Config("noise dimension must be positive".into()));
        }
        Ok(Self {
            domain,
            noise_dim,
            coeffs: Coefficients::Custom {
                drift,
                diffusion,
                lipschitz_declared,
            },
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self.coeffs {
            Coefficients::ArithmeticBm { .. } => ModelKind::ArithmeticBm,
            Coefficients::Ou { .. } => ModelKind::Ou,
            Coefficients::Cir { .. } => ModelKind::Cir,
            Coefficients::Affine { .. } => ModelKind::Affine,
            Coefficients::Custom { .. } => ModelKind::Custom,
        }
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    /// CIR parameters `(a, b, σ)`.
    pub fn cir_params(&self) -> Option<(f64, f64, f64)> {
        match self.coeffs {
            Coefficients::Cir { a, b, sigma } => Some((a, b, sigma)),
            _ => None,
        }
    }

    /// OU parameters `(κ, θ, σ)`.
    pub fn ou_params(&self) -> Option<(f64, f64, f64)> {
        match self.coeffs {
            Coefficients::Ou { kappa, theta, sigma } => Some((kappa, theta, sigma)),
            _ => None,
        }
    }

    /// The `b + Bx`, constant `σ` form of BM, OU and affine models.
    pub fn affine_form(&self) -> Option<AffineForm> {
        match &self.coeffs {
            Coefficients::ArithmeticBm { drift, sigma } => Some(AffineForm {
                b: drift.clone(),
                big_b: DMatrix::zeros(drift.len(), drift.len()),
                sigma: sigma.clone(),
            }),
            Coefficients::Ou { kappa, theta, sigma } => Some(AffineForm {
                b: DVector::from_element(1, kappa * theta),
                big_b: DMatrix::from_element(1, 1, -kappa),
                sigma: DMatrix::from_element(1, 1, *sigma),
            }),
            Coefficients::Affine { b, big_b, sigma } => Some(AffineForm {
                b: b.clone(),
                big_b: big_b.clone(),
                sigma: sigma.clone(),
            }),
            _ => None,
        }
    }

    pub fn drift(&self, x: &[f64], out: &mut [f64]) {
        match &self.coeffs {
            Coefficients::ArithmeticBm { drift, .. } => out.copy_from_slice(drift.as_slice()),
            Coefficients::Ou { kappa, theta, .. } => out[0] = kappa * (theta - x[0]),
            Coefficients::Cir { a, b, .. } => out[0] = a + b * x[0],
            Coefficients::Affine { b, big_b, .. } => {
                let n = b.len();
                for i in 0..n {
                    let mut s = b[i];
                    for j in 0..n {
                        s += big_b[(i, j)] * x[j];
                    }
                    out[i] = s;
                }
            }
            Coefficients::Custom { drift, .. } => drift(x, out),
        }
    }

    /// Writes `σ(x)` as an `n×m` row-major matrix.
    pub fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        match &self.coeffs {
            Coefficients::ArithmeticBm { sigma, .. } | Coefficients::Affine { sigma, .. } => {
                let (n, m) = sigma.shape();
                for i in 0..n {
                    for j in 0..m {
                        out[i * m + j] = sigma[(i, j)];
                    }
                }
            }
            Coefficients::Ou { sigma, .. } => out[0] = *sigma,
            Coefficients::Cir { sigma, .. } => out[0] = sigma * x[0].max(0.0).sqrt(),
            Coefficients::Custom { diffusion, .. } => diffusion(x, out),
        }
    }

    pub fn diffusion_matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let (n, m) = (self.dim(), self.noise_dim);
        let mut buf = vec![0.0; n * m];
        self.diffusion(x, &mut buf);
        DMatrix::from_row_slice(n, m, &buf)
    }

    /// `a(x) = σ(x)σ(x)ᵀ`.
    pub fn a_matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let s = self.diffusion_matrix(x);
        &s * s.transpose()
    }

    pub fn drift_vector(&self, x: &[f64]) -> DVector<f64> {
        let mut out = vec![0.0; self.dim()];
        self.drift(x, &mut out);
        DVector::from_vec(out)
    }

    /// Generator applied through derivatives: `bᵀ∇f + ½ tr(a ∇²f)`.
    pub fn generator(&self, x: &[f64], grad: &DVector<f64>, hess: &DMatrix<f64>) -> f64 {
        let b = self.drift_vector(x);
        let a = self.a_matrix(x);
        b.dot(grad) + 0.5 * (a.component_mul(hess)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FellerCheck {
    /// `2a`
    pub lhs: f64,
    /// `σ²`
    pub rhs: f64,
}

/// Probe results from [`validate_model`]. Flags never prove anything.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelReport {
    pub kind: ModelKind,
    pub pairs_probed: usize,
    pub drift_lipschitz_max: f64,
    pub diffusion_lipschitz_max: f64,
    pub feller: Option<FellerCheck>,
    pub min_eigen_a: Option<f64>,
    pub lipschitz_declared: Option<bool>,
    pub flags: Vec<String>,
}

/// Probes the standing assumptions on a model.
pub fn validate_model(model: &DiffusionModel) -> Result<ModelReport> {
    let mut flags = Vec::new();
    let mut feller = None;
    let mut min_eigen_a = None;
    let mut lipschitz_declared = None;
    match &model.coeffs {
        Coefficients::Cir { a, sigma, .. } => {
            let check = FellerCheck {
                lhs: 2.0 * a,
                rhs: sigma * sigma,
            };
            if check.lhs < check.rhs {
                return Err(Error::Assumption(format!(
                    "Feller condition 2a >= sigma^2 fails: 2a = {} < sigma^2 = {}",
                    check.lhs, check.rhs
                )));
            }
            feller = Some(check);
            flags.push("sqrt diffusion is only locally Lipschitz near 0".into());
        }
        Coefficients::Affine { sigma, .. } | Coefficients::ArithmeticBm { sigma, .. } => {
            let a = sigma * sigma.transpose();
            let min = a.symmetric_eigenvalues().min();
            if model.kind() == ModelKind::Affine && !(min > 0.0) {
                return Err(Error::Assumption(format!(
                    "affine model needs sigma sigma^T positive definite (min eigenvalue {min:e})"
                )));
            }
            min_eigen_a = Some(min);
        }
        Coefficients::Ou { sigma, .. } => min_eigen_a = Some(sigma * sigma),
        Coefficients::Custom {
            lipschitz_declared: l,
            ..
        } => {
            lipschitz_declared = Some(*l);
            if !l {
                flags.push("custom coefficients without a declared Lipschitz bound".into());
            }
        }
    }

    let probes = model.domain.probe_points(65);
    let n = model.dim();
    let nm = n * model.noise_dim;
    let (mut bx, mut by) = (vec![0.0; n], vec![0.0; n]);
    let (mut sx, mut sy) = (vec![0.0; nm], vec![0.0; nm]);
    let mut drift_lip: f64 = 0.0;
    let mut diff_lip: f64 = 0.0;
    for w in probes.windows(2) {
        let (x, y) = (&w[0], &w[1]);
        let dist = euclid(x, y);
        if dist == 0.0 {
            continue;
        }
        model.drift(x, &mut bx);
        model.drift(y, &mut by);
        model.diffusion(x, &mut sx);
        model.diffusion(y, &mut sy);
        drift_lip = drift_lip.max(euclid(&bx, &by) / dist);
        diff_lip = diff_lip.max(euclid(&sx, &sy) / dist);
    }
    if !drift_lip.is_finite() || !diff_lip.is_finite() {
        flags.push("non-finite coefficient on a probe point".into());
    }
    Ok(ModelReport {
        kind: model.kind(),
        pairs_probed: probes.len() - 1,
        drift_lipschitz_max: drift_lip,
        diffusion_lipschitz_max: diff_lip,
        feller,
        min_eigen_a,
        lipschitz_declared,
        flags,
    })
}

fn euclid(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

/// Polynomial `Σ c_k r^k` on `r ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulusPolynomial(pub Vec<f64>);

impl ModulusPolynomial {
    pub fn eval(&self, r: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * r + c)
    }

    pub fn degree(&self) -> usize {
        self.0.iter().rposition(|c| *c != 0.0).unwrap_or(0)
    }
}

#[derive(Clone)]
pub enum FitnessForm {
    /// `cᵀx`
    Linear { coef: DVector<f64> },
    /// `−(α + δᵀx + xᵀGx)`
    Quadratic {
        alpha: f64,
        delta: DVector<f64>,
        g: DMatrix<f64>,
    },
    /// `Σ c_k x^k` in one dimension.
    Polynomial { coeffs: Vec<f64> },
    Custom {
        value: ScalarField,
        gradient: Option<VectorField>,
    },
}

/// Fitness `g = form + offset` with a declared upper bound `g_max`.
///
/// Weight computations use `form − base_shift`, which equals `g − g_max`.
/// Adding a constant only moves `offset`, so shifted values are unchanged
/// bit for bit.
#[derive(Clone)]
pub struct FitnessFunction {
    dim: usize,
    form: FitnessForm,
    offset: f64,
    base_shift: f64,
    bounded_above: bool,
    modulus: ModulusPolynomial,
}

impl fmt::Debug for FitnessFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FitnessFunction")
            .field("dim", &self.dim)
            .field("offset", &self.offset)
            .field("g_max", &self.g_max())
            .field("bounded_above", &self.bounded_above)
            .finish()
    }
}

impl FitnessFunction {
    pub fn zero(dim: usize) -> Self {
        Self::constant(dim, 0.0)
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self {
            dim,
            form: FitnessForm::Linear {
                coef: DVector::zeros(dim),
            },
            offset: c,
            base_shift: 0.0,
            bounded_above: true,
            modulus: ModulusPolynomial(vec![0.0]),
        }
    }

    /// `g(x) = cᵀx`. Unbounded above unless the coefficient vanishes; pick the
    /// declared shift with [`with_sup`](Self::with_sup).
    pub fn linear(coef: Vec<f64>) -> Self {
        let c = DVector::from_vec(coef);
        let norm = c.norm();
        Self {
            dim: c.len(),
            form: FitnessForm::Linear { coef: c },
            offset: 0.0,
            base_shift: 0.0,
            bounded_above: norm == 0.0,
            modulus: ModulusPolynomial(vec![norm]),
        }
    }

    /// `g(x) = −(α + δᵀx + xᵀGx)` with `G` symmetric.
    pub fn quadratic(alpha: f64, delta: Vec<f64>, g: DMatrix<f64>) -> Result<Self> {
        let n = delta.len();
        if g.shape() != (n, n) {
            return Err(Error::Config("quadratic fitness: G must be n x n".into()));
        }
        if (&g - g.transpose()).amax() > 1e-14 * (1.0 + g.amax()) {
            return Err(Error::Config("quadratic fitness: G must be symmetric".into()));
        }
        let delta = DVector::from_vec(delta);
        let eig = g.clone().symmetric_eigen();
        let min_eig = eig.eigenvalues.min();
        let gnorm = eig.eigenvalues.amax();
        let (bounded, sup) = if min_eig > 0.0 {
            let w = g.clone().lu().solve(&delta).expect("positive definite");
            (true, -alpha + 0.25 * delta.dot(&w))
        } else if delta.norm() == 0.0 && min_eig >= 0.0 {
            (true, -alpha)
        } else {
            (false, 0.0)
        };
        Ok(Self {
            dim: n,
            modulus: ModulusPolynomial(vec![delta.norm(), gnorm]),
            form: FitnessForm::Quadratic { alpha, delta, g },
            offset: 0.0,
            base_shift: sup,
            bounded_above: bounded,
        })
    }

    /// One-dimensional polynomial `Σ c_k x^k`.
    pub fn polynomial(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("polynomial fitness needs finite coefficients".into()));
        }
        let deg = coeffs.iter().rposition(|c| *c != 0.0).unwrap_or(0);
        let lead = coeffs[deg];
        let bounded = deg == 0 || (deg % 2 == 0 && lead < 0.0);
        let modulus = ModulusPolynomial(
            (1..coeffs.len().max(2))
                .map(|k| k as f64 * coeffs.get(k).map_or(0.0, |c| c.abs()))
                .collect(),
        );
        let sup = if bounded { polynomial_sup(&coeffs, deg) } else { 0.0 };
        Ok(Self {
            dim: 1,
            form: FitnessForm::Polynomial { coeffs },
            offset: 0.0,
            base_shift: sup,
            bounded_above: bounded,
            modulus,
        })
    }

    /// User-supplied fitness with a declared upper bound and modulus.
    pub fn custom(
        dim: usize,
        value: ScalarField,
        gradient: Option<VectorField>,
        g_max: f64,
        modulus: Vec<f64>,
    ) -> Self {
        Self {
            dim,
            form: FitnessForm::Custom { value, gradient },
            offset: 0.0,
            base_shift: g_max,
            bounded_above: true,
            modulus: ModulusPolynomial(modulus),
        }
    }

    /// Declares `g_max`, the shift used by every weight computation.
    pub fn with_sup(mut self, g_max: f64) -> Self {
        self.base_shift = g_max - self.offset;
        self
    }

    pub fn with_modulus(mut self, coeffs: Vec<f64>) -> Self {
        self.modulus = ModulusPolynomial(coeffs);
        self
    }

    /// `g + c`; the declared bound moves with it.
    pub fn offset_by(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.offset += c;
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn form(&self) -> &FitnessForm {
        &self.form
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn g_max(&self) -> f64 {
        self.base_shift + self.offset
    }

    pub fn is_bounded_above(&self) -> bool {
        self.bounded_above
    }

    pub fn modulus(&self) -> &ModulusPolynomial {
        &self.modulus
    }

    /// True when the form is the zero function (constant fitness).
    pub fn is_constant(&self) -> bool {
        match &self.form {
            FitnessForm::Linear { coef } => coef.iter().all(|c| *c == 0.0),
            FitnessForm::Quadratic { delta, g, .. } => {
                delta.iter().all(|c| *c == 0.0) && g.iter().all(|c| *c == 0.0)
            }
            FitnessForm::Polynomial { coeffs } => coeffs.iter().skip(1).all(|c| *c == 0.0),
            FitnessForm::Custom { .. } => false,
        }
    }

    fn form_value(&self, x: &[f64]) -> f64 {
        match &self.form {
            FitnessForm::Linear { coef } => coef.iter().zip(x).map(|(c, v)| c * v).sum(),
            FitnessForm::Quadratic { alpha, delta, g } => {
                let n = delta.len();
                let mut q = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        q += x[i] * g[(i, j)] * x[j];
                    }
                }
                let lin: f64 = delta.iter().zip(x).map(|(d, v)| d * v).sum();
                -(alpha + lin + q)
            }
            FitnessForm::Polynomial { coeffs } => {
                coeffs.iter().rev().fold(0.0, |acc, c| acc * x[0] + c)
            }
            FitnessForm::Custom { value, .. } => value(x),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.form_value(x) + self.offset
    }

    /// `g(x) − g_max`.
    pub fn eval_shifted(&self, x: &[f64]) -> f64 {
        self.form_value(x) - self.base_shift
    }

    /// Analytic gradient where the form has one, central differences
    /// otherwise.
    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        match &self.form {
            FitnessForm::Linear { coef } => out.copy_from_slice(coef.as_slice()),
            FitnessForm::Quadratic { delta, g, .. } => {
                let n = delta.len();
                for i in 0..n {
                    let mut s = delta[i];
                    for j in 0..n {
                        s += (g[(i, j)] + g[(j, i)]) * x[j];
                    }
                    out[i] = -s;
                }
            }
            FitnessForm::Polynomial { coeffs } => {
                let mut d = 0.0;
                for (k, c) in coeffs.iter().enumerate().skip(1).rev() {
                    d = d * x[0] + k as f64 * c;
                }
                out[0] = d;
            }
            FitnessForm::Custom {
                gradient: Some(grad),
                ..
            } => grad(x, out),
            FitnessForm::Custom { value, .. } => {
                let mut y = x.to_vec();
                for i in 0..x.len() {
                    let h = 1e-5 * (1.0 + x[i].abs());
                    y[i] = x[i] + h;
                    let fp = value(&y);
                    y[i] = x[i] - h;
                    let fm = value(&y);
                    y[i] = x[i];
                    out[i] = (fp - fm) / (2.0 * h);
                }
            }
        }
    }

    /// Largest `g − g_max` over probe points; positive means the declared
    /// bound is violated somewhere.
    pub fn sup_violation(&self, probes: &[Vec<f64>]) -> f64 {
        probes
            .iter()
            .map(|p| self.eval_shifted(p))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Rigorous upper bound for the maximum of an even-degree polynomial with
/// negative leading coefficient: grid maximum plus a Lipschitz margin over an
/// interval that contains every critical point.
fn polynomial_sup(coeffs: &[f64], deg: usize) -> f64 {
    if deg == 0 {
        return coeffs[0];
    }
    let lead = coeffs[deg];
    // Cauchy bound for the roots of p'.
    let r = 1.0
        + (1..deg)
            .map(|k| (k as f64 * coeffs[k]).abs() / (deg as f64 * lead.abs()))
            .fold(0.0, f64::max);
    let xs = linspace(-r, r, 20_001);
    let p = |x: f64| coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c);
    let dp = |x: f64| {
        coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| k as f64 * c.abs() * x.abs().powi(k as i32 - 1))
            .sum::<f64>()
    };
    let max = xs.iter().map(|&x| p(x)).fold(f64::NEG_INFINITY, f64::max);
    let lip = dp(r);
    max + lip * (xs[1] - xs[0]) * 0.5
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModulusViolation {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModulusReport {
    pub checked: usize,
    pub violations: Vec<ModulusViolation>,
}

/// Checks `|g(x) − g(y)| ≤ Q_g(|x|+|y|)|x−y|` on the given pairs.
pub fn check_fitness_modulus(g: &FitnessFunction, pairs: &[(Vec<f64>, Vec<f64>)]) -> ModulusReport {
    let mut violations = Vec::new();
    for (x, y) in pairs {
        let lhs = (g.eval(x) - g.eval(y)).abs();
        let r = norm(x) + norm(y);
        let rhs = g.modulus.eval(r) * euclid(x, y);
        if lhs > rhs * (1.0 + 1e-12) + f64::MIN_POSITIVE {
            violations.push(ModulusViolation {
                x: x.clone(),
                y: y.clone(),
                lhs,
                rhs,
            });
        }
    }
    ModulusReport {
        checked: pairs.len(),
        violations,
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Law of the initial positions.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialLaw {
    Gaussian(GaussianMoments),
    /// Weighted components; weights are normalised on use.
    Mixture(Vec<(f64, InitialLaw)>),
    PointCloud(Vec<Vec<f64>>),
    Grid(GridDensity),
    /// Gamma law with the given shape and rate (half-line).
    Gamma { shape: f64, rate: f64 },
}

impl InitialLaw {
    pub fn gaussian_1d(mean: f64, var: f64) -> Result<Self> {
        Ok(Self::Gaussian(GaussianMoments::new(
            DVector::from_element(1, mean),
            DMatrix::from_element(1, 1, var),
        )?))
    }

    pub fn dirac(point: Vec<f64>) -> Self {
        Self::PointCloud(vec![point])
    }

    pub fn grid(density: GridDensity) -> Result<Self> {
        Ok(Self::Grid(density.normalize()?))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Gaussian(g) => g.dim(),
            Self::Mixture(c) => c.first().map_or(0, |(_, l)| l.dim()),
            Self::PointCloud(p) => p.first().map_or(0, Vec::len),
            Self::Grid(_) | Self::Gamma { .. } => 1,
        }
    }

    /// Rejects laws whose support is not contained in the domain.
    pub fn check_support(&self, domain: &DomainSpec) -> Result<()> {
        if self.dim() != domain.dim() {
            return Err(Error::Config(format!(
                "initial law has dimension {} but the domain has {}",
                self.dim(),
                domain.dim()
            )));
        }
        let ok = match self {
            Self::Gaussian(g) => match domain {
                DomainSpec::FullSpace { .. } => true,
                _ => g.covariance.iter().all(|v| *v == 0.0) && domain.contains(g.mean.as_slice()),
            },
            Self::Mixture(c) => {
                if c.is_empty() || c.iter().any(|(w, _)| !(*w >= 0.0)) {
                    return Err(Error::Config("mixture needs nonnegative weights".into()));
                }
                return c.iter().try_for_each(|(_, l)| l.check_support(domain));
            }
            Self::PointCloud(p) => !p.is_empty() && p.iter().all(|x| domain.contains(x)),
            Self::Grid(d) => domain.contains(&[d.lower()]) && domain.contains(&[d.upper()]),
            Self::Gamma { shape, rate } => {
                *shape > 0.0 && *rate > 0.0 && matches!(domain, DomainSpec::HalfLine | DomainSpec::FullSpace { .. })
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config("initial law puts mass outside the domain".into()))
        }
    }

    /// Density at `x` where the law has one.
    pub fn density(&self, x: &[f64]) -> Option<f64> {
        match self {
            Self::Gaussian(g) => gaussian_pdf(g, x),
            Self::Mixture(c) => {
                let total: f64 = c.iter().map(|(w, _)| w).sum();
                let mut s = 0.0;
                for (w, l) in c {
                    s += w / total * l.density(x)?;
                }
                Some(s)
            }
            Self::PointCloud(_) => None,
            Self::Grid(d) => Some(d.eval(x[0])),
            Self::Gamma { shape, rate } => {
                let v = x[0];
                Some(if v <= 0.0 {
                    0.0
                } else {
                    (shape * rate.ln() + (shape - 1.0) * v.ln() - rate * v - ln_gamma(*shape)).exp()
                })
            }
        }
    }

    /// `E|X|^p`.
    pub fn abs_moment(&self, p: f64) -> Result<f64> {
        match self {
            Self::Gaussian(g) => match g.dim() {
                1 => {
                    let gh = GaussHermite::standard_normal(64)?;
                    let (m, s) = (g.mean[0], g.covariance[(0, 0)].sqrt());
                    gh.expect(|z| (m + s * z).abs().powf(p))
                }
                2 => {
                    let gh = GaussHermite::standard_normal(48)?;
                    let l = sqrt_psd(&g.covariance);
                    let mut s = 0.0;
                    for (z1, w1) in gh.nodes.iter().zip(&gh.weights) {
                        for (z2, w2) in gh.nodes.iter().zip(&gh.weights) {
                            let x = &g.mean + &l * DVector::from_vec(vec![*z1, *z2]);
                            s += w1 * w2 * x.norm().powf(p);
                        }
                    }
                    Ok(s)
                }
                n => Err(Error::Unsupported(format!(
                    "Gaussian moments in dimension {n}"
                ))),
            },
            Self::Mixture(c) => {
                let total: f64 = c.iter().map(|(w, _)| w).sum();
                let mut s = 0.0;
                for (w, l) in c {
                    s += w / total * l.abs_moment(p)?;
                }
                Ok(s)
            }
            Self::PointCloud(pts) => {
                Ok(pts.iter().map(|x| norm(x).powf(p)).sum::<f64>() / pts.len() as f64)
            }
            Self::Grid(d) => Ok(d.abs_moment(p)),
            Self::Gamma { shape, rate } => {
                Ok((ln_gamma(shape + p) - ln_gamma(*shape) - p * rate.ln()).exp())
            }
        }
    }

    /// Mean vector.
    pub fn mean(&self) -> Vec<f64> {
        match self {
            Self::Gaussian(g) => g.mean.as_slice().to_vec(),
            Self::Mixture(c) => {
                let total: f64 = c.iter().map(|(w, _)| w).sum();
                let mut m = vec![0.0; self.dim()];
                for (w, l) in c {
                    for (acc, v) in m.iter_mut().zip(l.mean()) {
                        *acc += w / total * v;
                    }
                }
                m
            }
            Self::PointCloud(p) => {
                let mut m = vec![0.0; self.dim()];
                for x in p {
                    for (acc, v) in m.iter_mut().zip(x) {
                        *acc += v / p.len() as f64;
                    }
                }
                m
            }
            Self::Grid(d) => vec![d.moment(1) / d.integral()],
            Self::Gamma { shape, rate } => vec![shape / rate],
        }
    }

    fn sample_one(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        match self {
            Self::Gaussian(g) => {
                let l = sqrt_psd(&g.covariance);
                let z = DVector::from_fn(g.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
                let x = &g.mean + l * z;
                out.copy_from_slice(x.as_slice());
            }
            Self::Mixture(c) => {
                let total: f64 = c.iter().map(|(w, _)| w).sum();
                let u: f64 = rng.random::<f64>() * total;
                let mut acc = 0.0;
                for (w, l) in c {
                    acc += w;
                    if u < acc {
                        return l.sample_one(rng, out);
                    }
                }
                c[c.len() - 1].1.sample_one(rng, out)
            }
            Self::PointCloud(p) => {
                let k = rng.random_range(0..p.len());
                out.copy_from_slice(&p[k]);
            }
            Self::Grid(d) => out[0] = sample_grid(d, rng),
            Self::Gamma { shape, rate } => {
                let g = rand_distr::Gamma::new(*shape, 1.0 / rate).expect("validated gamma law");
                out[0] = g.sample(rng);
            }
        }
    }
}

fn gaussian_pdf(g: &GaussianMoments, x: &[f64]) -> Option<f64> {
    let n = g.dim();
    let chol = g.covariance.clone().cholesky()?;
    let d = DVector::from_column_slice(x) - &g.mean;
    let z = chol.solve(&d);
    let logdet: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    let q = d.dot(&z);
    Some((-0.5 * (q + logdet + n as f64 * (2.0 * std::f64::consts::PI).ln())).exp())
}

/// Symmetric square root factor `L` with `L Lᵀ = C` for PSD `C`.
pub(crate) fn sqrt_psd(c: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(ch) = c.clone().cholesky() {
        return ch.l();
    }
    let eig = c.clone().symmetric_eigen();
    let s = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    &eig.eigenvectors * s
}

fn sample_grid(d: &GridDensity, rng: &mut ChaCha8Rng) -> f64 {
    let x = d.nodes();
    let f = d.values();
    let masses: Vec<f64> = (1..x.len())
        .map(|k| 0.5 * (x[k] - x[k - 1]) * (f[k] + f[k - 1]))
        .collect();
    let total: f64 = masses.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut k = 0;
    while k + 1 < masses.len() && u >= masses[k] {
        u -= masses[k];
        k += 1;
    }
    let h = x[k + 1] - x[k];
    let (f0, f1) = (f[k], f[k + 1]);
    let v = u.min(masses[k]);
    let disc = (f0 * f0 + 2.0 * (f1 - f0) * v / h).max(0.0);
    let denom = f0 + disc.sqrt();
    let s = if denom > 0.0 { 2.0 * v / denom } else { 0.5 * h };
    x[k] + s.clamp(0.0, h)
}

/// Draws `count` points (flattened, `count × n`).
///
/// Point `i` is read from stream `i` of the derived "initial" seed, so the
/// first `k` points do not depend on `count`. A point cloud with exactly
/// `count` atoms is returned verbatim.
pub fn sample_initial(
    law: &InitialLaw,
    domain: &DomainSpec,
    count: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let keys: Vec<u64> = (0..count as u64).collect();
    sample_initial_keyed(law, domain, &keys, seed)
}

/// As [`sample_initial`] with explicit stream keys (one per point).
pub fn sample_initial_keyed(
    law: &InitialLaw,
    domain: &DomainSpec,
    keys: &[u64],
    seed: u64,
) -> Result<Vec<f64>> {
    if keys.is_empty() {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    law.check_support(domain)?;
    let n = law.dim();
    if let InitialLaw::PointCloud(p) = law {
        if p.len() == keys.len() {
            return Ok(keys.iter().flat_map(|&k| p[k as usize % p.len()].clone()).collect());
        }
    }
    let s = rng::derive_seed(seed, "initial");
    let mut out = vec![0.0; keys.len() * n];
    for (chunk, &k) in out.chunks_mut(n).zip(keys) {
        let mut r = rng::stream(s, k);
        law.sample_one(&mut r, chunk);
    }
    if let Some(bad) = out.chunks(n).position(|x| !domain.contains(x)) {
        return Err(Error::Config(format!("sample {bad} fell outside the domain")));
    }
    Ok(out)
}
