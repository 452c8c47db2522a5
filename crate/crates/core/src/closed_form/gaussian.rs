//! Unnormalised Gaussian algebra used by the analytic engines.

use crate::error::{Error, Result};
use crate::model::InitialLaw;
use crate::numerics::kde::GridDensity;
use crate::numerics::quadrature::linspace;
use crate::numerics::summation::log_sum_exp;
use nalgebra::{DMatrix, DVector};

/// `exp(log_weight) · N(mean, cov)`; a zero covariance is a Dirac atom.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGaussian {
    pub log_weight: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl WeightedGaussian {
    fn is_atom(&self) -> bool {
        self.cov.iter().all(|v| *v == 0.0)
    }

    /// Multiplies by `exp(−vᵀx − xᵀHx)`.
    pub fn tilt(&self, h: &DMatrix<f64>, v: &DVector<f64>) -> Result<Self> {
        if self.is_atom() {
            let x = &self.mean;
            let q = -v.dot(x) - (x.transpose() * h * x)[(0, 0)];
            return Ok(Self {
                log_weight: self.log_weight + q,
                mean: x.clone(),
                cov: self.cov.clone(),
            });
        }
        let chol = self
            .cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numeric("tilt of a degenerate Gaussian".into()))?;
        let p = chol.inverse();
        let p_new = &p + h * 2.0;
        let p_new = (&p_new + p_new.transpose()) * 0.5;
        let chol_new = p_new.clone().cholesky().ok_or_else(|| {
            Error::Horizon("tilted Gaussian is not normalisable (precision lost definiteness)".into())
        })?;
        let pm = &p * &self.mean;
        let rhs = &pm - v;
        let m_new = chol_new.solve(&rhs);
        let logdet_c: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let logdet_p: f64 = chol_new.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let log_z = -0.5 * logdet_c - 0.5 * logdet_p + 0.5 * m_new.dot(&rhs) - 0.5 * self.mean.dot(&pm);
        let cov = chol_new.inverse();
        Ok(Self {
            log_weight: self.log_weight + log_z,
            mean: m_new,
            cov: (&cov + cov.transpose()) * 0.5,
        })
    }

    /// Law of `M X + c + noise`, noise `~ N(0, sigma)`.
    pub fn push(&self, m: &DMatrix<f64>, c: &DVector<f64>, sigma: &DMatrix<f64>) -> Self {
        let cov = m * &self.cov * m.transpose() + sigma;
        Self {
            log_weight: self.log_weight,
            mean: m * &self.mean + c,
            cov: (&cov + cov.transpose()) * 0.5,
        }
    }
}

/// Normalised Gaussian mixture plus the log of its pre-normalisation mass.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    comps: Vec<Component>,
    log_mass: f64,
    dim: usize,
}

#[derive(Debug, Clone)]
struct Component {
    weight: f64,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol_l: DMatrix<f64>,
    log_norm: f64,
}

impl GaussianMixture {
    pub fn from_weighted(parts: Vec<WeightedGaussian>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Numeric("empty mixture".into()));
        }
        let dim = parts[0].mean.len();
        let lws: Vec<f64> = parts.iter().map(|p| p.log_weight).collect();
        let log_mass = log_sum_exp(&lws);
        if !log_mass.is_finite() {
            return Err(Error::Horizon(format!("mixture mass is not finite (log mass {log_mass})")));
        }
        let mut comps = Vec::with_capacity(parts.len());
        for p in parts {
            let weight = (p.log_weight - log_mass).exp();
            if weight == 0.0 {
                continue;
            }
            let chol = p.cov.clone().cholesky().ok_or_else(|| {
                Error::Numeric("mixture component with singular covariance".into())
            })?;
            let logdet: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
            comps.push(Component {
                weight,
                log_norm: -0.5 * (logdet + dim as f64 * (2.0 * std::f64::consts::PI).ln()),
                chol_l: chol.l(),
                mean: p.mean,
                cov: p.cov,
            });
        }
        Ok(Self {
            comps,
            log_mass,
            dim,
        })
    }

    /// Log of the total mass before normalisation.
    pub fn log_mass(&self) -> f64 {
        self.log_mass
    }

    pub fn len(&self) -> usize {
        self.comps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comps.is_empty()
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for c in &self.comps {
            if self.dim == 1 {
                let sd = c.chol_l[(0, 0)];
                let z = (x[0] - c.mean[0]) / sd;
                s += c.weight * (c.log_norm - 0.5 * z * z).exp();
            } else {
                let d = DVector::from_column_slice(x) - &c.mean;
                let z = c
                    .chol_l
                    .solve_lower_triangular(&d)
                    .expect("Cholesky factor is nonsingular");
                s += c.weight * (c.log_norm - 0.5 * z.dot(&z)).exp();
            }
        }
        s
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim);
        for c in &self.comps {
            m += &c.mean * c.weight;
        }
        m
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let mu = self.mean();
        let mut s = DMatrix::zeros(self.dim, self.dim);
        for c in &self.comps {
            let d = &c.mean - &mu;
            s += (&c.cov + &d * d.transpose()) * c.weight;
        }
        s
    }

    /// A single Gaussian component's moments, if the mixture has one.
    pub fn as_single(&self) -> Option<(DVector<f64>, DMatrix<f64>)> {
        match self.comps.as_slice() {
            [c] => Some((c.mean.clone(), c.cov.clone())),
            _ => None,
        }
    }
}

/// Decomposes an initial law into weighted Gaussians and atoms.
///
/// Grid densities become trapezoid-weighted atoms at the nodes; gamma laws
/// are first tabulated on a grid covering their mass.
pub fn initial_components(law: &InitialLaw) -> Result<Vec<WeightedGaussian>> {
    let n = law.dim();
    match law {
        InitialLaw::Gaussian(g) => Ok(vec![WeightedGaussian {
            log_weight: 0.0,
            mean: g.mean.clone(),
            cov: g.covariance.clone(),
        }]),
        InitialLaw::Mixture(parts) => {
            let total: f64 = parts.iter().map(|(w, _)| w).sum();
            let mut out = Vec::new();
            for (w, l) in parts {
                for mut c in initial_components(l)? {
                    c.log_weight += (w / total).ln();
                    out.push(c);
                }
            }
            Ok(out)
        }
        InitialLaw::PointCloud(pts) => {
            let lw = -(pts.len() as f64).ln();
            Ok(pts
                .iter()
                .map(|p| WeightedGaussian {
                    log_weight: lw,
                    mean: DVector::from_column_slice(p),
                    cov: DMatrix::zeros(n, n),
                })
                .collect())
        }
        InitialLaw::Grid(d) => Ok(grid_atoms(d)),
        InitialLaw::Gamma { shape, rate } => {
            let mean = shape / rate;
            let sd = shape.sqrt() / rate;
            let x = linspace(0.0, mean + 14.0 * sd + 1.0, 4001);
            let d = GridDensity::from_fn(x, |v| law.density(&[v]).unwrap_or(0.0))?.normalize()?;
            Ok(grid_atoms(&d))
        }
    }
}

fn grid_atoms(d: &GridDensity) -> Vec<WeightedGaussian> {
    let x = d.nodes();
    let f = d.values();
    let k = x.len();
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let left = if i > 0 { x[i] - x[i - 1] } else { 0.0 };
        let right = if i + 1 < k { x[i + 1] - x[i] } else { 0.0 };
        let w = 0.5 * (left + right) * f[i];
        if w > 0.0 {
            out.push(WeightedGaussian {
                log_weight: w.ln(),
                mean: DVector::from_element(1, x[i]),
                cov: DMatrix::zeros(1, 1),
            });
        }
    }
    out
}
