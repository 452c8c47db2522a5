use crate::error::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};

/// Trapezoid rule on arbitrary strictly increasing nodes.
pub fn trapezoid(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Numeric(format!(
            "trapezoid: {} nodes but {} values",
            x.len(),
            y.len()
        )));
    }
    check_finite(y)?;
    let mut s = 0.0;
    for k in 1..x.len() {
        s += 0.5 * (x[k] - x[k - 1]) * (y[k] + y[k - 1]);
    }
    Ok(s)
}

/// Trapezoid rule on a uniform grid with spacing `dx`.
pub fn trapezoid_uniform(dx: f64, y: &[f64]) -> Result<f64> {
    check_finite(y)?;
    if y.len() < 2 {
        return Ok(0.0);
    }
    let inner: f64 = y[1..y.len() - 1].iter().sum();
    Ok(dx * (inner + 0.5 * (y[0] + y[y.len() - 1])))
}

fn check_finite(y: &[f64]) -> Result<()> {
    match y.iter().position(|v| !v.is_finite()) {
        Some(k) => Err(Error::Numeric(format!("non-finite integrand at node {k}"))),
        None => Ok(()),
    }
}

/// Gauss–Hermite rule for expectations under the standard normal law.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Golub–Welsch on the probabilists' Hermite Jacobi matrix.
    ///
    /// Weights sum to one, so `expect(f)` approximates `E f(Z)`, `Z ~ N(0,1)`.
    pub fn standard_normal(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::Config("Gauss-Hermite order must be positive".into()));
        }
        let mut j = DMatrix::<f64>::zeros(order, order);
        for k in 1..order {
            let off = (k as f64).sqrt();
            j[(k, k - 1)] = off;
            j[(k - 1, k)] = off;
        }
        let eig = SymmetricEigen::new(j);
        let mut pairs: Vec<(f64, f64)> = (0..order)
            .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        // Symmetrize to remove the eigensolver's tiny asymmetry.
        let n = pairs.len();
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for k in 0..n {
            nodes[k] = 0.5 * (pairs[k].0 - pairs[n - 1 - k].0);
            weights[k] = 0.5 * (pairs[k].1 + pairs[n - 1 - k].1);
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        Ok(Self { nodes, weights })
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> Result<f64> {
        let vals: Vec<f64> = self.nodes.iter().map(|&x| f(x)).collect();
        check_finite(&vals)?;
        Ok(vals.iter().zip(&self.weights).map(|(v, w)| v * w).sum())
    }
}

/// Quadrature rule selector for [`integrate`].
pub enum Rule<'a> {
    /// Trapezoid on the given nodes.
    Grid(&'a [f64]),
    /// Expectation under `N(mean, sd²)`.
    Gaussian {
        rule: &'a GaussHermite,
        mean: f64,
        sd: f64,
    },
}

/// Integrates `f` with the selected rule.
pub fn integrate(f: impl Fn(f64) -> f64, rule: Rule<'_>) -> Result<f64> {
    match rule {
        Rule::Grid(x) => {
            let y: Vec<f64> = x.iter().map(|&v| f(v)).collect();
            trapezoid(x, &y)
        }
        Rule::Gaussian { rule, mean, sd } => rule.expect(|z| f(mean + sd * z)),
    }
}

/// `n` uniformly spaced nodes on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let h = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|k| if k == n - 1 { hi } else { lo + h * k as f64 })
        .collect()
}
