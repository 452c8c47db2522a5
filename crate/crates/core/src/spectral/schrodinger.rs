use crate::closed_form::{EigenSource, Eigenpair};
use crate::error::{Error, Result};
use crate::model::{DiffusionModel, FitnessFunction};
use std::io::Write;
use std::sync::Arc;

const BOUNDARY_RATIO: f64 = 1e-10;
/// Nodes with `φ` below this fraction of the maximum are extrapolated.
const RELIABLE_RATIO: f64 = 1e-8;
const MAX_ITERATIONS: usize = 5000;

/// Ground state of `−σ²φ″ − gφ = λφ` on `[−L, L]` with Dirichlet ends.
#[derive(Debug, Clone)]
pub struct SchrodingerProblem {
    pub sigma: f64,
    pub fitness: FitnessFunction,
    pub half_width: f64,
    pub nodes: usize,
}

impl SchrodingerProblem {
    pub fn new(sigma: f64, fitness: FitnessFunction, half_width: f64, nodes: usize) -> Result<Self> {
        if !(sigma > 0.0) || !(half_width > 0.0) {
            return Err(Error::Config("sigma and L must be positive".into()));
        }
        if nodes < 256 {
            return Err(Error::Config(format!("at least 256 nodes required, got {nodes}")));
        }
        if fitness.dim() != 1 || !fitness.is_bounded_above() {
            return Err(Error::Config("fitness must be one-dimensional and bounded above".into()));
        }
        let p = Self {
            sigma,
            fitness,
            half_width,
            nodes,
        };
        let x = p.grid();
        let central = x
            .iter()
            .filter(|v| v.abs() <= 0.5 * half_width)
            .map(|v| p.fitness.eval(&[*v]))
            .fold(f64::INFINITY, f64::min);
        let ends = p.fitness.eval(&[-half_width]).max(p.fitness.eval(&[half_width]));
        if !(ends < central) {
            return Err(Error::Config("fitness is not confining on the grid".into()));
        }
        Ok(p)
    }

    pub fn step(&self) -> f64 {
        2.0 * self.half_width / (self.nodes - 1) as f64
    }

    pub fn grid(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.nodes)
            .map(|j| {
                if j + 1 == self.nodes {
                    self.half_width
                } else {
                    -self.half_width + j as f64 * h
                }
            })
            .collect()
    }

    /// Same interval with the step halved.
    pub fn refined(&self) -> Self {
        Self {
            nodes: 2 * self.nodes - 1,
            ..self.clone()
        }
    }

    /// Brownian model whose generator is `σ² d²/dx²`.
    pub fn model(&self) -> DiffusionModel {
        DiffusionModel::scalar_bm(0.0, 2f64.sqrt() * self.sigma)
    }
}

#[derive(Debug, Clone)]
pub struct DiscreteGroundState {
    pub x: Vec<f64>,
    /// Positive, `Σ φ² h = 1`, zero at both ends.
    pub phi: Vec<f64>,
    pub lambda: f64,
    pub iterations: usize,
    /// `φ` at the first interior nodes relative to its maximum.
    pub boundary_ratio: f64,
}

fn thomas(lower: f64, diag: &[f64], rhs: &[f64]) -> Vec<f64> {
    // Symmetric tridiagonal with constant off-diagonal.
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = lower / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower * c[i - 1];
        c[i] = lower / m;
        d[i] = (rhs[i] - lower * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// Second-order finite differences and shifted inverse iteration.
pub fn discrete_ground_state(p: &SchrodingerProblem) -> Result<DiscreteGroundState> {
    let x = p.grid();
    let h = p.step();
    let m = p.nodes;
    let kin = p.sigma * p.sigma / (h * h);
    let pot: Vec<f64> = x[1..m - 1]
        .iter()
        .map(|v| -p.fitness.eval_shifted(&[*v]))
        .collect();
    let shift = pot.iter().copied().fold(f64::INFINITY, f64::min);
    let diag: Vec<f64> = pot.iter().map(|v| 2.0 * kin + v - shift).collect();
    let n = diag.len();
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut y = thomas(-kin, &diag, &v);
        let norm = y.iter().map(|a| a * a).sum::<f64>().sqrt();
        y.iter_mut().for_each(|a| *a /= norm);
        let change = y.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = y;
        if change < 1e-14 {
            break;
        }
        if iterations >= MAX_ITERATIONS {
            return Err(Error::NoConvergence {
                what: "inverse iteration",
                iterations,
                residual: change,
            });
        }
    }
    // Rayleigh quotient of the unshifted operator.
    let mut num = 0.0;
    for i in 0..n {
        let left = if i > 0 { v[i - 1] } else { 0.0 };
        let right = if i + 1 < n { v[i + 1] } else { 0.0 };
        num += v[i] * (kin * (2.0 * v[i] - left - right) + pot[i] * v[i]);
    }
    let lambda_shifted = num / v.iter().map(|a| a * a).sum::<f64>();
    let sign = if v.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    let scale = sign / h.sqrt();
    let mut phi = vec![0.0; m];
    for i in 0..n {
        phi[i + 1] = v[i] * scale;
    }
    let max = phi.iter().copied().fold(0.0, f64::max);
    let boundary_ratio = phi[1].abs().max(phi[m - 2].abs()) / max;
    Ok(DiscreteGroundState {
        x,
        phi,
        lambda: lambda_shifted - p.fitness.g_max(),
        iterations,
        boundary_ratio,
    })
}

/// Piecewise-cubic Hermite model of `w = (log φ)′` with `w′` supplied at the
/// nodes; `log φ` is its exact running integral.
#[derive(Debug, Clone)]
struct LogHermite {
    x0: f64,
    h: f64,
    w: Vec<f64>,
    dw: Vec<f64>,
    l: Vec<f64>,
}

impl LogHermite {
    fn new(x0: f64, h: f64, w: Vec<f64>, dw: Vec<f64>, anchor: usize, l_anchor: f64) -> Self {
        let n = w.len();
        let mut l = vec![0.0; n];
        l[anchor] = l_anchor;
        let seg = |i: usize| h * (w[i] + w[i + 1]) / 2.0 + h * h * (dw[i] - dw[i + 1]) / 12.0;
        for i in anchor..n - 1 {
            l[i + 1] = l[i] + seg(i);
        }
        for i in (0..anchor).rev() {
            l[i] = l[i + 1] - seg(i);
        }
        Self { x0, h, w, dw, l }
    }

    fn eval(&self, x: f64) -> (f64, f64) {
        let n = self.w.len();
        let last = self.x0 + (n - 1) as f64 * self.h;
        let tail = |i: usize, d: f64| {
            (
                self.l[i] + self.w[i] * d + 0.5 * self.dw[i] * d * d,
                self.w[i] + self.dw[i] * d,
            )
        };
        if x <= self.x0 {
            return tail(0, x - self.x0);
        }
        if x >= last {
            return tail(n - 1, x - last);
        }
        let i = (((x - self.x0) / self.h).floor() as usize).min(n - 2);
        let h = self.h;
        let s = (x - (self.x0 + i as f64 * h)) / h;
        let (s2, s3, s4) = (s * s, s * s * s, s * s * s * s);
        let (w0, w1, d0, d1) = (self.w[i], self.w[i + 1], self.dw[i] * h, self.dw[i + 1] * h);
        let w = (2.0 * s3 - 3.0 * s2 + 1.0) * w0
            + (s3 - 2.0 * s2 + s) * d0
            + (-2.0 * s3 + 3.0 * s2) * w1
            + (s3 - s2) * d1;
        let integral = h
            * ((s4 / 2.0 - s3 + s) * w0
                + (s4 / 4.0 - 2.0 * s3 / 3.0 + s2 / 2.0) * d0
                + (-s4 / 2.0 + s3) * w1
                + (s4 / 4.0 - s3 / 3.0) * d1);
        (self.l[i] + integral, w)
    }
}

#[derive(Debug, Clone)]
pub struct GroundState {
    pub pair: Eigenpair,
    /// Extrapolated eigenvalue.
    pub lambda: f64,
    pub lambda_coarse: f64,
    pub lambda_fine: f64,
    pub x: Vec<f64>,
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
    pub boundary_ratio: f64,
}

impl GroundState {
    /// Writes `x,phi,dphi` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,phi,dphi")?;
        for ((x, p), d) in self.x.iter().zip(&self.phi).zip(&self.dphi) {
            writeln!(w, "{x:.17e},{p:.17e},{d:.17e}")?;
        }
        Ok(())
    }
}

/// Ground state with Richardson extrapolation over `h` and `h/2`.
pub fn schrodinger_ground_state(p: &SchrodingerProblem) -> Result<GroundState> {
    let coarse = discrete_ground_state(p)?;
    if coarse.boundary_ratio >= BOUNDARY_RATIO {
        return Err(Error::GridTooSmall {
            mass: coarse.boundary_ratio,
            limit: BOUNDARY_RATIO,
            suggested: 2.0 * p.half_width,
        });
    }
    let fine = discrete_ground_state(&p.refined())?;
    let m = p.nodes;
    let h = p.step();
    let lambda = (4.0 * fine.lambda - coarse.lambda) / 3.0;
    let phi: Vec<f64> = (0..m)
        .map(|i| ((4.0 * fine.phi[2 * i] - coarse.phi[i]) / 3.0).max(0.0))
        .collect();
    let max = phi.iter().copied().fold(0.0, f64::max);
    let imax = phi.iter().position(|v| *v == max).unwrap();
    let mut lo = imax;
    while lo > 0 && phi[lo - 1] >= RELIABLE_RATIO * max {
        lo -= 1;
    }
    let mut hi = imax;
    while hi + 1 < m && phi[hi + 1] >= RELIABLE_RATIO * max {
        hi += 1;
    }
    let (lo, hi) = (lo + 2, hi - 2);
    if hi <= lo + 4 {
        return Err(Error::Numeric("ground state resolved on too few nodes".into()));
    }
    let x = coarse.x.clone();
    let lp: Vec<f64> = phi.iter().map(|v| v.ln()).collect();
    let s2 = p.sigma * p.sigma;
    let w: Vec<f64> = (lo..=hi)
        .map(|i| (-lp[i + 2] + 8.0 * lp[i + 1] - 8.0 * lp[i - 1] + lp[i - 2]) / (12.0 * h))
        .collect();
    let dw: Vec<f64> = (lo..=hi)
        .zip(&w)
        .map(|(i, wi)| -(p.fitness.eval(&[x[i]]) + lambda) / s2 - wi * wi)
        .collect();
    let anchor = imax.clamp(lo, hi) - lo;
    let model = LogHermite::new(x[lo], h, w, dw, anchor, lp[anchor + lo]);
    let dphi: Vec<f64> = x.iter().zip(&phi).map(|(xi, pi)| pi * model.eval(*xi).1).collect();
    let m1 = Arc::new(model);
    let m2 = m1.clone();
    let pair = Eigenpair::new(
        1,
        lambda,
        EigenSource::SchrodingerGrid,
        Arc::new(move |x: &[f64]| m1.eval(x[0]).0),
        Arc::new(move |x: &[f64], out: &mut [f64]| out[0] = m2.eval(x[0]).1),
    );
    Ok(GroundState {
        pair,
        lambda,
        lambda_coarse: coarse.lambda,
        lambda_fine: fine.lambda,
        x,
        phi,
        dphi,
        boundary_ratio: coarse.boundary_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::eigen_residual;
    use crate::model::DomainSpec;
    use nalgebra::DMatrix;

    fn harmonic(sigma: f64, l: f64, m: usize) -> SchrodingerProblem {
        let g = FitnessFunction::quadratic(0.0, vec![0.0], DMatrix::from_element(1, 1, 1.0)).unwrap();
        SchrodingerProblem::new(sigma, g, l, m).unwrap()
    }

    #[test]
    fn harmonic_oscillator_ground_state() {
        let p = harmonic(1.0, 8.0, 2048);
        let gs = schrodinger_ground_state(&p).unwrap();
        assert!((gs.lambda_coarse - 1.0).abs() < 1e-4);
        assert!((gs.lambda - 1.0).abs() < 1e-8);
        // φ0 = π^{-1/4} e^{−x²/2}.
        let h = p.step();
        let l2: f64 = gs
            .x
            .iter()
            .zip(&gs.phi)
            .map(|(x, v)| (v - std::f64::consts::PI.powf(-0.25) * (-x * x / 2.0).exp()).powi(2))
            .sum::<f64>()
            * h;
        assert!(l2.sqrt() <= 1e-3);
        assert!(gs.phi[1..p.nodes - 1].iter().all(|v| *v > 0.0));
    }

    #[test]
    fn eigenvalue_scales_with_sigma() {
        let gs = schrodinger_ground_state(&harmonic(2.0, 12.0, 3072)).unwrap();
        assert!((gs.lambda - 2.0).abs() < 1e-3);
    }

    #[test]
    fn second_order_convergence() {
        let l: Vec<f64> = [257, 513, 1025]
            .iter()
            .map(|&m| discrete_ground_state(&harmonic(1.0, 8.0, m)).unwrap().lambda)
            .collect();
        let ratio = (l[0] - l[1]).abs() / (l[1] - l[2]).abs();
        assert!((ratio - 4.0).abs() <= 1.2, "{ratio}");
    }

    #[test]
    fn narrow_grid_is_reported() {
        let g = FitnessFunction::quadratic(0.0, vec![0.0], DMatrix::from_element(1, 1, 1.0)).unwrap();
        let p = SchrodingerProblem::new(1.0, g, 3.0, 512).unwrap();
        match schrodinger_ground_state(&p) {
            Err(Error::GridTooSmall { suggested, .. }) => assert_eq!(suggested, 6.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn eigenpair_passes_residual_probe() {
        let p = harmonic(1.0, 8.0, 2048);
        let gs = schrodinger_ground_state(&p).unwrap();
        let probes = DomainSpec::full_space(1).unwrap().probe_points(64);
        let r = eigen_residual(&p.model(), &p.fitness, &gs.pair, &probes).unwrap();
        assert!(r.relative <= 1e-6, "{}", r.relative);
        // Quartic with a linear term.
        let g = FitnessFunction::polynomial(vec![0.0, 0.5, 0.0, 0.0, -1.0]).unwrap();
        let p = SchrodingerProblem::new(1.0, g, 6.0, 2048).unwrap();
        let gs = schrodinger_ground_state(&p).unwrap();
        let r = eigen_residual(&p.model(), &p.fitness, &gs.pair, &probes).unwrap();
        assert!(r.relative <= 1e-6, "{}", r.relative);
    }

    #[test]
    fn csv_export_has_one_row_per_node() {
        let gs = schrodinger_ground_state(&harmonic(1.0, 8.0, 256)).unwrap();
        let mut buf = Vec::new();
        gs.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 257);
        assert!(text.starts_with("x,phi,dphi"));
    }
}
