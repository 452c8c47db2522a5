use super::quadrature::{linspace, trapezoid};
use crate::error::{Error, Result};
use std::io::Write;

/// A nonnegative density sampled on strictly increasing 1D nodes and
/// interpolated linearly between them (zero outside).
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    x: Vec<f64>,
    values: Vec<f64>,
    normalized: bool,
}

impl GridDensity {
    pub fn new(x: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if x.len() != values.len() || x.len() < 2 {
            return Err(Error::Config(
                "grid density needs at least two nodes and one value per node".into(),
            ));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("grid nodes must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Numeric("grid density values must be finite and >= 0".into()));
        }
        Ok(Self {
            x,
            values,
            normalized: false,
        })
    }

    /// Samples `f` on `x`; negative values are rejected.
    pub fn from_fn(x: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = x.iter().map(|&v| f(v)).collect();
        Self::new(x, values)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn lower(&self) -> f64 {
        self.x[0]
    }

    pub fn upper(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    pub fn integral(&self) -> f64 {
        trapezoid(&self.x, &self.values).expect("values are finite by construction")
    }

    /// Rescales to unit trapezoid mass.
    pub fn normalize(mut self) -> Result<Self> {
        let m = self.integral();
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::Numeric(format!("cannot normalize density of mass {m}")));
        }
        for v in &mut self.values {
            *v /= m;
        }
        self.normalized = true;
        Ok(self)
    }

    /// Linear interpolation, zero outside the grid.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.x.len();
        if !(x >= self.x[0] && x <= self.x[n - 1]) {
            return 0.0;
        }
        let k = match self.x.partition_point(|&v| v <= x) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        };
        let (x0, x1) = (self.x[k], self.x[k + 1]);
        let w = (x - x0) / (x1 - x0);
        self.values[k] * (1.0 - w) + self.values[k + 1] * w
    }

    /// `∫ x^p u(x) dx` by trapezoid.
    pub fn moment(&self, p: i32) -> f64 {
        let y: Vec<f64> = self
            .x
            .iter()
            .zip(&self.values)
            .map(|(x, v)| x.powi(p) * v)
            .collect();
        trapezoid(&self.x, &y).unwrap_or(f64::NAN)
    }

    /// `∫ |x|^p u(x) dx` by trapezoid.
    pub fn abs_moment(&self, p: f64) -> f64 {
        let y: Vec<f64> = self
            .x
            .iter()
            .zip(&self.values)
            .map(|(x, v)| x.abs().powf(p) * v)
            .collect();
        trapezoid(&self.x, &y).unwrap_or(f64::NAN)
    }

    /// L¹ distance between the two interpolants.
    ///
    /// Integrates on the merged node set refined by midpoints; both functions
    /// are linear between merged nodes, so only sign changes contribute error.
    pub fn l1_distance(&self, other: &GridDensity) -> f64 {
        let mut nodes: Vec<f64> = self.x.iter().chain(&other.x).copied().collect();
        nodes.sort_by(f64::total_cmp);
        nodes.dedup();
        let mut fine = Vec::with_capacity(2 * nodes.len());
        for w in nodes.windows(2) {
            fine.push(w[0]);
            fine.push(0.5 * (w[0] + w[1]));
        }
        fine.push(nodes[nodes.len() - 1]);
        let diff: Vec<f64> = fine
            .iter()
            .map(|&x| (self.eval(x) - other.eval(x)).abs())
            .collect();
        trapezoid(&fine, &diff).unwrap_or(f64::NAN)
    }

    /// Mass of the interpolant inside each cell `[edges[k], edges[k+1]]`.
    pub fn cell_masses(&self, edges: &[f64]) -> Vec<f64> {
        edges
            .windows(2)
            .map(|e| self.integrate_between(e[0], e[1]))
            .collect()
    }

    fn integrate_between(&self, a: f64, b: f64) -> f64 {
        let lo = a.max(self.lower());
        let hi = b.min(self.upper());
        if !(hi > lo) {
            return 0.0;
        }
        let start = self.x.partition_point(|&v| v <= lo);
        let end = self.x.partition_point(|&v| v < hi);
        let mut pts = Vec::with_capacity(end.saturating_sub(start) + 2);
        pts.push(lo);
        pts.extend_from_slice(&self.x[start..end]);
        pts.push(hi);
        let mut s = 0.0;
        for w in pts.windows(2) {
            s += 0.5 * (w[1] - w[0]) * (self.eval(w[0]) + self.eval(w[1]));
        }
        s
    }

    /// Writes `x,value` rows with a header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,value")?;
        for (x, v) in self.x.iter().zip(&self.values) {
            writeln!(w, "{x},{v}")?;
        }
        Ok(())
    }
}

/// Bandwidth policy for [`kde`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// `0.9 min(sd, IQR/1.34) N_eff^{-1/5}` with `N_eff = (Σw)²/Σw²`.
    Silverman,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdeOptions {
    pub bandwidth: Bandwidth,
    pub nodes: usize,
    /// Reflect kernels at this lower boundary (half-line supports).
    pub reflect_at: Option<f64>,
    /// Explicit grid range; default `[min − 4h, max + 4h]`.
    pub range: Option<(f64, f64)>,
}

impl Default for KdeOptions {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::Silverman,
            nodes: 1024,
            reflect_at: None,
            range: None,
        }
    }
}

/// Weighted Gaussian kernel density estimate, normalised on its grid.
pub fn kde(points: &[f64], weights: Option<&[f64]>, opts: &KdeOptions) -> Result<GridDensity> {
    if points.is_empty() {
        return Err(Error::Numeric("kde of an empty sample".into()));
    }
    let ones;
    let weights = match weights {
        Some(w) => {
            if w.len() != points.len() {
                return Err(Error::Config("kde: weights and points differ in length".into()));
            }
            w
        }
        None => {
            ones = vec![1.0; points.len()];
            &ones
        }
    };
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::Numeric("kde weights must be finite and nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Numeric("kde: zero total weight".into()));
    }
    let mut pairs: Vec<(f64, f64)> = points
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(x, w)| (*x, *w / total))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let h = match opts.bandwidth {
        Bandwidth::Fixed(h) if h > 0.0 => h,
        Bandwidth::Fixed(h) => return Err(Error::Config(format!("bandwidth {h} must be positive"))),
        Bandwidth::Silverman => silverman(&pairs),
    };
    let xmin = pairs[0].0;
    let xmax = pairs[pairs.len() - 1].0;
    let (mut lo, hi) = opts.range.unwrap_or((xmin - 4.0 * h, xmax + 4.0 * h));
    if let Some(c) = opts.reflect_at {
        lo = lo.max(c);
        // Reflected copies live below the boundary.
        let mut mirrored: Vec<(f64, f64)> = pairs.iter().map(|&(x, w)| (2.0 * c - x, w)).collect();
        mirrored.extend_from_slice(&pairs);
        mirrored.sort_by(|a, b| a.0.total_cmp(&b.0));
        pairs = mirrored;
    }
    let grid = linspace(lo, hi, opts.nodes.max(2));
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let norm = 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt());
    let reach = 8.5 * h;
    let values: Vec<f64> = grid
        .iter()
        .map(|&g| {
            let a = xs.partition_point(|&x| x < g - reach);
            let b = xs.partition_point(|&x| x <= g + reach);
            let mut s = 0.0;
            for &(x, w) in &pairs[a..b] {
                let z = (g - x) / h;
                s += w * (-0.5 * z * z).exp();
            }
            s * norm
        })
        .collect();
    GridDensity::new(grid, values)?.normalize()
}

fn silverman(sorted: &[(f64, f64)]) -> f64 {
    let sw: f64 = sorted.iter().map(|p| p.1).sum();
    let sw2: f64 = sorted.iter().map(|p| p.1 * p.1).sum();
    let n_eff = sw * sw / sw2;
    let mean: f64 = sorted.iter().map(|(x, w)| x * w).sum::<f64>() / sw;
    let var: f64 = sorted.iter().map(|(x, w)| w * (x - mean).powi(2)).sum::<f64>() / sw;
    let sd = var.sqrt();
    let iqr = weighted_quantile(sorted, 0.75) - weighted_quantile(sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * n_eff.powf(-0.2);
    if h > 0.0 {
        h
    } else {
        // Degenerate sample (all atoms equal).
        1e-3 * (1.0 + mean.abs())
    }
}

fn weighted_quantile(sorted: &[(f64, f64)], p: f64) -> f64 {
    let total: f64 = sorted.iter().map(|q| q.1).sum();
    let target = p * total;
    let mut acc = 0.0;
    for &(x, w) in sorted {
        acc += w;
        if acc >= target {
            return x;
        }
    }
    sorted[sorted.len() - 1].0
}
