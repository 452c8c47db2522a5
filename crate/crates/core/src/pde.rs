//! Finite-volume solver for the one-dimensional replicator-mutator equation.
//!
//! Each step applies the reaction `u ← u e^{τ g} / ∫ u e^{τ g}` and a
//! conservative Crank–Nicolson step for `∂_x(∂_x(D u) − b u)`, `D = σ²/2`,
//! either as `R(dt) L(dt)` (Lie) or `R(dt/2) L(dt) R(dt/2)` (Strang).

use crate::error::{Error, Result};
use crate::model::{DiffusionModel, DomainSpec, FitnessFunction};
use crate::numerics::kde::GridDensity;
use crate::numerics::summation::pairwise_sum;
use crate::tolerances;
use serde::Serialize;
use std::io::Write;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Splitting {
    Lie,
    Strang,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Boundary {
    /// `u = 0` just outside both ends; mass crossing them is recorded as leak.
    Dirichlet,
    /// Zero flux at `0` and Dirichlet at the right end.
    HalfLine,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PdeScheme {
    pub lower: f64,
    pub upper: f64,
    /// Number of cells.
    pub cells: usize,
    /// Target step; each interval between output times is split evenly.
    pub dt: f64,
    pub splitting: Splitting,
    pub boundary: Boundary,
}

impl PdeScheme {
    /// `[−L, L]` with Dirichlet ends and Strang splitting.
    pub fn full_line(half_width: f64, cells: usize, dt: f64) -> Self {
        Self {
            lower: -half_width,
            upper: half_width,
            cells,
            dt,
            splitting: Splitting::Strang,
            boundary: Boundary::Dirichlet,
        }
    }

    /// `(0, L)` with a zero-flux wall at the origin.
    pub fn half_line(length: f64, cells: usize, dt: f64) -> Self {
        Self {
            lower: 0.0,
            upper: length,
            cells,
            dt,
            splitting: Splitting::Strang,
            boundary: Boundary::HalfLine,
        }
    }

    /// Halves both the cell width and the time step.
    pub fn refined(&self) -> Self {
        Self {
            cells: 2 * self.cells,
            dt: 0.5 * self.dt,
            ..self.clone()
        }
    }

    pub fn width(&self) -> f64 {
        (self.upper - self.lower) / self.cells as f64
    }

    /// Cell centres.
    pub fn centres(&self) -> Vec<f64> {
        let h = self.width();
        (0..self.cells).map(|i| self.lower + (i as f64 + 0.5) * h).collect()
    }

    fn validate(&self, model: &DiffusionModel) -> Result<()> {
        if model.dim() != 1 {
            return Err(Error::Unsupported("the PDE oracle is one-dimensional".into()));
        }
        if !(self.upper > self.lower) || self.cells < 8 || !(self.dt > 0.0) {
            return Err(Error::Config("PDE scheme needs lower < upper, at least 8 cells and dt > 0".into()));
        }
        match (self.boundary, model.domain()) {
            (Boundary::HalfLine, DomainSpec::HalfLine) if self.lower == 0.0 => Ok(()),
            (Boundary::Dirichlet, DomainSpec::FullSpace { .. }) => Ok(()),
            _ => Err(Error::Config("PDE boundary does not match the model domain".into())),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PdeSummary {
    pub mass_leak: f64,
    pub max_step_leak: f64,
    pub steps: usize,
    pub clipped_values: usize,
    pub runtime_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct PdeTrajectory {
    scheme: PdeScheme,
    x: Vec<f64>,
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    summary: PdeSummary,
}

impl PdeTrajectory {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn centres(&self) -> &[f64] {
        &self.x
    }

    /// Cell values at output `k`.
    pub fn values(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    pub fn summary(&self) -> &PdeSummary {
        &self.summary
    }

    pub fn scheme(&self) -> &PdeScheme {
        &self.scheme
    }

    pub fn index_of(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|s| (s - t).abs() <= 1e-12 * (1.0 + t.abs()))
            .ok_or_else(|| Error::Config(format!("t = {t} is not an output time")))
    }

    /// Midpoint mass at output `k`.
    pub fn mass(&self, k: usize) -> f64 {
        pairwise_sum(&self.values[k]) * self.scheme.width()
    }

    /// Density on the cell centres, with the outer walls appended.
    pub fn density(&self, k: usize) -> Result<GridDensity> {
        let u = &self.values[k];
        let n = u.len();
        let mut x = Vec::with_capacity(n + 2);
        let mut v = Vec::with_capacity(n + 2);
        x.push(self.scheme.lower);
        v.push(match self.scheme.boundary {
            Boundary::Dirichlet => 0.0,
            Boundary::HalfLine => (1.5 * u[0] - 0.5 * u[1]).max(0.0),
        });
        x.extend_from_slice(&self.x);
        v.extend_from_slice(u);
        x.push(self.scheme.upper);
        v.push(0.0);
        GridDensity::new(x, v)
    }

    pub fn density_at(&self, t: f64) -> Result<GridDensity> {
        self.density(self.index_of(t)?)
    }

    /// `t,x,u` rows for every output time.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,x,u")?;
        for (t, u) in self.times.iter().zip(&self.values) {
            for (x, v) in self.x.iter().zip(u) {
                writeln!(w, "{t:.10e},{x:.10e},{v:.10e}")?;
            }
        }
        Ok(())
    }
}

/// Tridiagonal discretisation of the adjoint generator on the cells.
struct Operator {
    sub: Vec<f64>,
    diag: Vec<f64>,
    sup: Vec<f64>,
}

impl Operator {
    fn new(model: &DiffusionModel, scheme: &PdeScheme) -> Self {
        let n = scheme.cells;
        let h = scheme.width();
        let coef = |x: f64| -> (f64, f64) {
            let mut b = [0.0];
            model.drift(&[x], &mut b);
            (b[0], 0.5 * model.a_matrix(&[x])[(0, 0)])
        };
        let centres = scheme.centres();
        let d: Vec<f64> = centres.iter().map(|&x| coef(x).1).collect();
        // Drift at the n + 1 interfaces.
        let b: Vec<f64> = (0..=n).map(|k| coef(scheme.lower + k as f64 * h).0).collect();
        let mut sub = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut sup = vec![0.0; n];
        // F_{k} between cells k−1 and k: b_k (u_{k−1} + u_k)/2 − (D_k u_k − D_{k−1} u_{k−1})/h.
        // (A u)_i = (F_i − F_{i+1})/h.
        for i in 0..n {
            // Left interface i.
            let left_open = !(i == 0 && scheme.boundary == Boundary::HalfLine);
            if left_open {
                diag[i] += (0.5 * b[i] - d[i] / h) / h;
                if i > 0 {
                    sub[i] += (0.5 * b[i] + d[i - 1] / h) / h;
                }
            }
            // Right interface i + 1.
            diag[i] -= (0.5 * b[i + 1] + d[i] / h) / h;
            if i + 1 < n {
                sup[i] -= (0.5 * b[i + 1] - d[i + 1] / h) / h;
            }
        }
        Self { sub, diag, sup }
    }

    fn apply(&self, u: &[f64], out: &mut [f64]) {
        let n = u.len();
        for i in 0..n {
            let mut v = self.diag[i] * u[i];
            if i > 0 {
                v += self.sub[i] * u[i - 1];
            }
            if i + 1 < n {
                v += self.sup[i] * u[i + 1];
            }
            out[i] = v;
        }
    }
}

/// Solves `(I − τ A) x = r` by the Thomas algorithm.
fn solve_shifted(op: &Operator, tau: f64, rhs: &[f64], out: &mut [f64], work: &mut [f64]) {
    let n = rhs.len();
    let a = |i: usize| -tau * op.sub[i];
    let bdiag = |i: usize| 1.0 - tau * op.diag[i];
    let c = |i: usize| -tau * op.sup[i];
    work[0] = c(0) / bdiag(0);
    out[0] = rhs[0] / bdiag(0);
    for i in 1..n {
        let m = bdiag(i) - a(i) * work[i - 1];
        work[i] = c(i) / m;
        out[i] = (rhs[i] - a(i) * out[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        out[i] -= work[i] * out[i + 1];
    }
}

/// Initial steps that replace CN by two backward Euler half steps.
const RANNACHER_STEPS: usize = 2;

struct Stepper {
    op: Operator,
    g: Vec<f64>,
    h: f64,
    splitting: Splitting,
    buf: Vec<f64>,
    rhs: Vec<f64>,
    work: Vec<f64>,
    clipped: usize,
    leak: f64,
    max_step_leak: f64,
    steps: usize,
}

impl Stepper {
    fn react(&self, u: &mut [f64], tau: f64) -> Result<()> {
        for (v, g) in u.iter_mut().zip(&self.g) {
            *v *= (tau * g).exp();
        }
        let m = pairwise_sum(u) * self.h;
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::Numeric(format!("PDE mass became {m}")));
        }
        for v in u.iter_mut() {
            *v /= m;
        }
        Ok(())
    }

    fn diffuse(&mut self, u: &mut [f64], dt: f64) {
        let before = pairwise_sum(u) * self.h;
        if self.steps < RANNACHER_STEPS {
            // Backward Euler half steps damp the high modes CN leaves undamped.
            for _ in 0..2 {
                self.rhs.copy_from_slice(u);
                solve_shifted(&self.op, 0.5 * dt, &self.rhs, u, &mut self.work);
            }
        } else {
            self.op.apply(u, &mut self.buf);
            for i in 0..u.len() {
                self.rhs[i] = u[i] + 0.5 * dt * self.buf[i];
            }
            solve_shifted(&self.op, 0.5 * dt, &self.rhs, u, &mut self.work);
        }
        for v in u.iter_mut() {
            if *v < 0.0 {
                if *v < -tolerances::PDE_NEGATIVITY {
                    self.clipped += 1;
                }
                *v = 0.0;
            }
        }
        let lost = (before - pairwise_sum(u) * self.h).max(0.0);
        self.leak += lost;
        self.max_step_leak = self.max_step_leak.max(lost);
    }

    fn step(&mut self, u: &mut [f64], dt: f64) -> Result<()> {
        match self.splitting {
            Splitting::Lie => {
                self.react(u, dt)?;
                self.diffuse(u, dt);
            }
            Splitting::Strang => {
                self.react(u, 0.5 * dt)?;
                self.diffuse(u, dt);
                self.react(u, 0.5 * dt)?;
            }
        }
        self.steps += 1;
        Ok(())
    }
}

fn initial_values(u0: &GridDensity, scheme: &PdeScheme) -> Result<Vec<f64>> {
    let h = scheme.width();
    let mut u: Vec<f64> = scheme.centres().iter().map(|&x| u0.eval(x)).collect();
    let m = pairwise_sum(&u) * h;
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::Config("initial density has no mass on the PDE grid".into()));
    }
    for v in &mut u {
        *v /= m;
    }
    Ok(u)
}

fn make_stepper(model: &DiffusionModel, g: &FitnessFunction, scheme: &PdeScheme) -> Result<Stepper> {
    scheme.validate(model)?;
    let x = scheme.centres();
    let mut gv: Vec<f64> = x.iter().map(|&x| g.eval(&[x])).collect();
    if gv.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("fitness is not finite on the PDE grid".into()));
    }
    // The renormalised reaction is invariant under constant shifts.
    let top = gv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for v in &mut gv {
        *v -= top;
    }
    let n = scheme.cells;
    Ok(Stepper {
        op: Operator::new(model, scheme),
        g: gv,
        h: scheme.width(),
        splitting: scheme.splitting,
        buf: vec![0.0; n],
        rhs: vec![0.0; n],
        work: vec![0.0; n],
        clipped: 0,
        leak: 0.0,
        max_step_leak: 0.0,
        steps: 0,
    })
}

/// Step sizes that land exactly on every output time.
fn step_plan(times: &[f64], dt: f64) -> Result<Vec<(usize, f64)>> {
    let mut prev = 0.0;
    let mut plan = Vec::with_capacity(times.len());
    for &t in times {
        if !(t >= prev) || !t.is_finite() {
            return Err(Error::Config("output times must be finite, nonnegative and increasing".into()));
        }
        let span = t - prev;
        let k = if span == 0.0 { 0 } else { (span / dt - 1e-9).ceil().max(1.0) as usize };
        plan.push((k, if k == 0 { 0.0 } else { span / k as f64 }));
        prev = t;
    }
    Ok(plan)
}

/// Solves up to the last of `times` and stores `u` at each of them.
pub fn solve_rm_pde(
    model: &DiffusionModel,
    g: &FitnessFunction,
    u0: &GridDensity,
    times: &[f64],
    scheme: &PdeScheme,
) -> Result<PdeTrajectory> {
    let start = Instant::now();
    let mut st = make_stepper(model, g, scheme)?;
    let mut u = initial_values(u0, scheme)?;
    let mut values = Vec::with_capacity(times.len());
    for (k, dt) in step_plan(times, scheme.dt)? {
        for _ in 0..k {
            st.step(&mut u, dt)?;
        }
        values.push(u.clone());
    }
    if st.leak > tolerances::PDE_MASS_LEAK {
        let width = scheme.upper - scheme.lower;
        return Err(Error::GridTooSmall {
            mass: st.leak,
            limit: tolerances::PDE_MASS_LEAK,
            suggested: match scheme.boundary {
                Boundary::Dirichlet => width,
                Boundary::HalfLine => 2.0 * width,
            },
        });
    }
    Ok(PdeTrajectory {
        scheme: scheme.clone(),
        x: scheme.centres(),
        times: times.to_vec(),
        values,
        summary: PdeSummary {
            mass_leak: st.leak,
            max_step_leak: st.max_step_leak,
            steps: st.steps,
            clipped_values: st.clipped,
            runtime_seconds: start.elapsed().as_secs_f64(),
        },
    })
}

/// `⟨u(t), g⟩` at every output time.
pub fn fitness_mean_trace(traj: &PdeTrajectory, g: &FitnessFunction) -> Vec<(f64, f64)> {
    let h = traj.scheme.width();
    let gv: Vec<f64> = traj.x.iter().map(|&x| g.eval(&[x])).collect();
    traj.times
        .iter()
        .zip(&traj.values)
        .map(|(t, u)| {
            let prod: Vec<f64> = u.iter().zip(&gv).map(|(a, b)| a * b).collect();
            (*t, pairwise_sum(&prod) * h)
        })
        .collect()
}

/// Smooth compactly supported test function `exp(1 − 1/(1 − r²))`,
/// `r = (x − c)/w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub centre: f64,
    pub radius: f64,
}

impl Bump {
    /// Value, first and second derivative.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let w = self.radius;
        let r = (x - self.centre) / w;
        let q = 1.0 - r * r;
        if q <= 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let f = (1.0 - 1.0 / q).exp();
        // d/dr of −1/q is −2r/q².
        let p1 = -2.0 * r / (q * q);
        let p2 = -2.0 / (q * q) - 8.0 * r * r / (q * q * q);
        (f, f * p1 / w, f * (p1 * p1 + p2) / (w * w))
    }

    /// Eight bumps spread over `[lo, hi]`.
    pub fn family(lo: f64, hi: f64) -> Vec<Bump> {
        let radius = 0.25 * (hi - lo);
        (0..8)
            .map(|k| Bump {
                centre: lo + radius + (hi - lo - 2.0 * radius) * k as f64 / 7.0,
                radius,
            })
            .collect()
    }
}

/// Max over the test functions of the discrete weak-form defect at `t`:
/// `⟨u_t, f⟩ − ⟨u_0, f⟩ − ∫_0^t (⟨u, (A + g) f⟩ − ⟨u, g⟩⟨u, f⟩) ds`, with the
/// time integral by the trapezoid rule over the steps.
pub fn weak_residual(
    model: &DiffusionModel,
    g: &FitnessFunction,
    u0: &GridDensity,
    t: f64,
    scheme: &PdeScheme,
    tests: &[Bump],
) -> Result<f64> {
    let mut st = make_stepper(model, g, scheme)?;
    let mut u = initial_values(u0, scheme)?;
    let x = scheme.centres();
    let h = scheme.width();
    let gv: Vec<f64> = x.iter().map(|&x| g.eval(&[x])).collect();
    let mut f = Vec::with_capacity(tests.len());
    let mut af = Vec::with_capacity(tests.len());
    for bump in tests {
        let (fv, gen): (Vec<f64>, Vec<f64>) = x
            .iter()
            .map(|&xi| {
                let (v, d1, d2) = bump.eval(xi);
                let mut b = [0.0];
                model.drift(&[xi], &mut b);
                let dd = 0.5 * model.a_matrix(&[xi])[(0, 0)];
                (v, b[0] * d1 + dd * d2 + g.eval(&[xi]) * v)
            })
            .unzip();
        f.push(fv);
        af.push(gen);
    }
    let dot = |u: &[f64], w: &[f64]| -> f64 {
        let p: Vec<f64> = u.iter().zip(w).map(|(a, b)| a * b).collect();
        pairwise_sum(&p) * h
    };
    let integrand = |u: &[f64]| -> Vec<f64> {
        let ug = dot(u, &gv);
        (0..tests.len()).map(|j| dot(u, &af[j]) - ug * dot(u, &f[j])).collect()
    };
    let start: Vec<f64> = (0..tests.len()).map(|j| dot(&u, &f[j])).collect();
    let mut integral = vec![0.0; tests.len()];
    let mut prev = integrand(&u);
    for (k, dt) in step_plan(&[t], scheme.dt)? {
        for _ in 0..k {
            st.step(&mut u, dt)?;
            let cur = integrand(&u);
            for j in 0..tests.len() {
                integral[j] += 0.5 * dt * (prev[j] + cur[j]);
            }
            prev = cur;
        }
    }
    Ok((0..tests.len())
        .map(|j| (dot(&u, &f[j]) - start[j] - integral[j]).abs())
        .fold(0.0, f64::max))
}
