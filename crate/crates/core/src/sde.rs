//! Path simulation for the base and tilted diffusions.

use crate::error::{Error, Result};
use crate::model::{DiffusionModel, DomainSpec, FitnessFunction, ModelKind};
use crate::numerics::linalg::{affine_drift_integral, covariance_integral, matrix_exp};
use crate::rng;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::sync::Arc;

/// Default resolution of the time grid.
pub const DEFAULT_STEPS_PER_UNIT: usize = 400;

/// Uniform partition of `[t0, t1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    t1: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, steps: usize) -> Result<Self> {
        if !(t0.is_finite() && t1.is_finite() && t0 < t1) || steps == 0 {
            return Err(Error::Config(format!(
                "time grid needs t0 < T and steps >= 1 (got [{t0}, {t1}], {steps})"
            )));
        }
        Ok(Self { t0, t1, steps })
    }

    /// `DEFAULT_STEPS_PER_UNIT` steps per unit of time, at least one.
    pub fn with_default_steps(t0: f64, t1: f64) -> Result<Self> {
        let steps = ((t1 - t0) * DEFAULT_STEPS_PER_UNIT as f64).ceil().max(1.0) as usize;
        Self::new(t0, t1, steps)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        (self.t1 - self.t0) / self.steps as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        if k == self.steps {
            self.t1
        } else {
            self.t0 + self.dt() * k as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.node(k)).collect()
    }

    /// Node indices closest to `count` equally spaced times (endpoints kept).
    pub fn checkpoint_indices(&self, count: usize) -> Vec<usize> {
        if count <= 1 {
            return vec![self.steps];
        }
        let mut idx: Vec<usize> = (0..count)
            .map(|c| ((c as f64) * self.steps as f64 / (count - 1) as f64).round() as usize)
            .collect();
        idx.dedup();
        idx
    }
}

/// Time stepping scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    EulerMaruyama,
    /// Exact Gaussian transition of a linear SDE.
    ExactGaussian,
    /// Euler with coefficients evaluated at `max(x, 0)`; recorded states are
    /// clamped to be nonnegative.
    FullTruncation,
}

/// Coefficients of an SDE, possibly time dependent.
pub trait Dynamics: Sync {
    fn dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    fn domain(&self) -> &DomainSpec;
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]);
    /// Writes `σ(t, x)` as an `n×m` row-major matrix.
    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]);
    fn scheme(&self) -> Scheme {
        Scheme::EulerMaruyama
    }
    /// `(M, c, L)` such that `X_{t+dt} = M X_t + c + L Z`, for exact schemes.
    fn exact_transition(&self, _dt: f64) -> Option<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
        None
    }
}

impl Dynamics for DiffusionModel {
    fn dim(&self) -> usize {
        DiffusionModel::dim(self)
    }

    fn noise_dim(&self) -> usize {
        DiffusionModel::noise_dim(self)
    }

    fn domain(&self) -> &DomainSpec {
        DiffusionModel::domain(self)
    }

    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        DiffusionModel::drift(self, x, out)
    }

    fn diffusion(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        DiffusionModel::diffusion(self, x, out)
    }

    fn scheme(&self) -> Scheme {
        match self.kind() {
            ModelKind::Ou | ModelKind::Affine => Scheme::ExactGaussian,
            ModelKind::Cir => Scheme::FullTruncation,
            ModelKind::ArithmeticBm | ModelKind::Custom => Scheme::EulerMaruyama,
        }
    }

    fn exact_transition(&self, dt: f64) -> Option<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
        let f = self.affine_form()?;
        let n = f.b.len();
        let m = matrix_exp(&f.big_b, dt);
        let c = affine_drift_integral(&f.big_b, &f.b, &DVector::zeros(n), dt);
        let cov = covariance_integral(&f.big_b, &f.a(), dt);
        Some((m, c, crate::model::sqrt_psd(&cov)))
    }
}

/// `out = extra(t, x)`.
pub type TimeVectorField = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;

/// Base model with an additional time-dependent drift.
#[derive(Clone)]
pub struct TiltedDrift {
    base: DiffusionModel,
    extra: TimeVectorField,
}

impl TiltedDrift {
    pub fn new(base: DiffusionModel, extra: TimeVectorField) -> Self {
        Self { base, extra }
    }

    pub fn base(&self) -> &DiffusionModel {
        &self.base
    }
}

impl Dynamics for TiltedDrift {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn noise_dim(&self) -> usize {
        self.base.noise_dim()
    }

    fn domain(&self) -> &DomainSpec {
        self.base.domain()
    }

    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        self.base.drift(x, out);
        let mut extra = vec![0.0; out.len()];
        (self.extra)(t, x, &mut extra);
        for (o, e) in out.iter_mut().zip(extra) {
            *o += e;
        }
    }

    fn diffusion(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        self.base.diffusion(x, out)
    }

    fn scheme(&self) -> Scheme {
        if self.base.kind() == ModelKind::Cir {
            Scheme::FullTruncation
        } else {
            Scheme::EulerMaruyama
        }
    }
}

/// Which grid nodes a simulation keeps.
#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    All,
    /// Sorted node indices; node 0 is always added.
    Nodes(Vec<usize>),
}

/// Simulated positions at the recorded nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    n_particles: usize,
    dim: usize,
    nodes: Vec<usize>,
    times: Vec<f64>,
    positions: Vec<f64>,
    seed: u64,
    scheme: Scheme,
    grid: TimeGrid,
}

impl PathBundle {
    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Recorded node indices.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Raw storage, particle-major: `[(i · C + c) · n + j]`.
    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn position(&self, particle: usize, record: usize) -> &[f64] {
        let c = self.nodes.len();
        let start = (particle * c + record) * self.dim;
        &self.positions[start..start + self.dim]
    }

    pub fn terminal(&self, particle: usize) -> &[f64] {
        self.position(particle, self.nodes.len() - 1)
    }

    /// All particles at one recorded node, flattened `N × n`.
    pub fn snapshot(&self, record: usize) -> Vec<f64> {
        (0..self.n_particles)
            .flat_map(|i| self.position(i, record).to_vec())
            .collect()
    }

    fn is_full(&self) -> bool {
        self.nodes.len() == self.grid.steps() + 1
    }
}

/// Log-weights `L_i(t) = ∫ (g − g_max)(X_s^i) ds` at the recorded nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct LogWeights {
    n_particles: usize,
    times: Vec<f64>,
    values: Vec<f64>,
    shift: f64,
}

impl LogWeights {
    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// The recorded shift `g_max`.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn value(&self, particle: usize, record: usize) -> f64 {
        self.values[particle * self.times.len() + record]
    }

    /// `∫ g(X_s^i) ds` without the shift.
    pub fn unshifted(&self, particle: usize, record: usize) -> f64 {
        self.value(particle, record) + self.shift * (self.times[record] - self.times[0])
    }

    /// All particles at one recorded node.
    pub fn column(&self, record: usize) -> Vec<f64> {
        (0..self.n_particles).map(|i| self.value(i, record)).collect()
    }
}

/// Options for [`simulate_with`].
#[derive(Clone, Default)]
pub struct SimOptions<'a> {
    pub record: Option<Record>,
    /// Stream key per particle; defaults to the particle index.
    pub stream_keys: Option<&'a [u64]>,
    /// Accumulate log-weights for this fitness along the fine grid.
    pub fitness: Option<&'a FitnessFunction>,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub paths: PathBundle,
    pub log_weights: Option<LogWeights>,
}

/// Simulates every particle on the full grid.
pub fn simulate<D: Dynamics + ?Sized>(
    dynamics: &D,
    initial: &[f64],
    grid: &TimeGrid,
    seed: u64,
) -> Result<PathBundle> {
    Ok(simulate_with(dynamics, initial, grid, seed, &SimOptions::default())?.paths)
}

/// CIR simulation with full truncation; checks the Feller condition first.
pub fn simulate_cir(
    model: &DiffusionModel,
    initial: &[f64],
    grid: &TimeGrid,
    seed: u64,
) -> Result<PathBundle> {
    let (a, _, sigma) = model
        .cir_params()
        .ok_or_else(|| Error::Config("simulate_cir needs a CIR model".into()))?;
    if 2.0 * a < sigma * sigma {
        return Err(Error::Assumption(format!(
            "Feller condition 2a >= sigma^2 fails: 2a = {} < sigma^2 = {}",
            2.0 * a,
            sigma * sigma
        )));
    }
    simulate(model, initial, grid, seed)
}

enum Stepper {
    Euler { truncate: bool },
    Exact {
        m: DMatrix<f64>,
        c: DVector<f64>,
        l: DMatrix<f64>,
    },
}

/// General simulation entry point.
///
/// Particle `i` reads keystream `stream_keys[i]` (default `i`) of `seed`, so
/// every path is independent of the particle count and of the thread pool.
pub fn simulate_with<D: Dynamics + ?Sized>(
    dynamics: &D,
    initial: &[f64],
    grid: &TimeGrid,
    seed: u64,
    opts: &SimOptions<'_>,
) -> Result<SimOutput> {
    let n = dynamics.dim();
    let m = dynamics.noise_dim();
    if n == 0 || initial.len() % n != 0 || initial.is_empty() {
        return Err(Error::Config(format!(
            "initial points ({} values) do not match dimension {n}",
            initial.len()
        )));
    }
    let count = initial.len() / n;
    if let Some(keys) = opts.stream_keys {
        if keys.len() != count {
            return Err(Error::Config("one stream key per particle required".into()));
        }
    }
    let domain = dynamics.domain();
    if let Some(bad) = initial.chunks(n).position(|x| !domain.contains(x)) {
        return Err(Error::DomainExit {
            particle: bad,
            step: 0,
            state: initial[bad * n..(bad + 1) * n].to_vec(),
        });
    }
    if let Some(g) = opts.fitness {
        if g.dim() != n {
            return Err(Error::Config("fitness and model dimensions differ".into()));
        }
    }

    let nodes: Vec<usize> = match &opts.record {
        None | Some(Record::All) => (0..=grid.steps()).collect(),
        Some(Record::Nodes(v)) => {
            let mut v: Vec<usize> = v.iter().copied().filter(|&k| k <= grid.steps()).collect();
            v.push(0);
            v.sort_unstable();
            v.dedup();
            v
        }
    };
    let c = nodes.len();
    let scheme = dynamics.scheme();
    let dt = grid.dt();
    let stepper = match scheme {
        Scheme::ExactGaussian => match dynamics.exact_transition(dt) {
            Some((m, c, l)) => Stepper::Exact { m, c, l },
            None => Stepper::Euler { truncate: false },
        },
        Scheme::EulerMaruyama => Stepper::Euler { truncate: false },
        Scheme::FullTruncation => Stepper::Euler { truncate: true },
    };
    let truncate = scheme == Scheme::FullTruncation;

    let mut positions = vec![0.0; count * c * n];
    let wlen = if opts.fitness.is_some() { c } else { 1 };
    let mut weights = vec![0.0; count * wlen];

    positions
        .par_chunks_mut(c * n)
        .zip(weights.par_chunks_mut(wlen))
        .enumerate()
        .try_for_each(|(i, (pos, wts))| -> Result<()> {
            let key = opts.stream_keys.map_or(i as u64, |k| k[i]);
            let mut r = rng::stream(seed, key);
            let mut x = initial[i * n..(i + 1) * n].to_vec();
            let mut xr = x.clone();
            let mut b = vec![0.0; n];
            let mut s = vec![0.0; n * m];
            let mut z = vec![0.0; m.max(n)];
            let mut l_acc = 0.0;
            let mut g_prev = opts.fitness.map_or(0.0, |g| g.eval_shifted(&x));
            let mut rec = 0;
            if nodes[0] == 0 {
                pos[..n].copy_from_slice(&x);
                rec = 1;
            }
            for k in 0..grid.steps() {
                let t = grid.node(k);
                match &stepper {
                    Stepper::Euler { truncate } => {
                        if *truncate {
                            for (a, v) in xr.iter_mut().zip(&x) {
                                *a = v.max(0.0);
                            }
                        } else {
                            xr.copy_from_slice(&x);
                        }
                        dynamics.drift(t, &xr, &mut b);
                        dynamics.diffusion(t, &xr, &mut s);
                        for zj in z.iter_mut().take(m) {
                            *zj = r.sample(StandardNormal);
                        }
                        let sq = dt.sqrt();
                        for a in 0..n {
                            let mut noise = 0.0;
                            for j in 0..m {
                                noise += s[a * m + j] * z[j];
                            }
                            x[a] += b[a] * dt + noise * sq;
                        }
                    }
                    Stepper::Exact { m: mm, c: cc, l } => {
                        for zj in z.iter_mut().take(n) {
                            *zj = r.sample(StandardNormal);
                        }
                        xr.copy_from_slice(&x);
                        for a in 0..n {
                            let mut v = cc[a];
                            for j in 0..n {
                                v += mm[(a, j)] * xr[j] + l[(a, j)] * z[j];
                            }
                            x[a] = v;
                        }
                    }
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite {
                        particle: i,
                        step: k + 1,
                    });
                }
                if truncate {
                    for (a, v) in xr.iter_mut().zip(&x) {
                        *a = v.max(0.0);
                    }
                } else {
                    if !domain.contains(&x) {
                        return Err(Error::DomainExit {
                            particle: i,
                            step: k + 1,
                            state: x.clone(),
                        });
                    }
                    xr.copy_from_slice(&x);
                }
                if let Some(g) = opts.fitness {
                    let g_next = g.eval_shifted(&xr);
                    l_acc += 0.5 * dt * (g_prev + g_next);
                    g_prev = g_next;
                }
                if rec < c && nodes[rec] == k + 1 {
                    pos[rec * n..(rec + 1) * n].copy_from_slice(&xr);
                    if opts.fitness.is_some() {
                        wts[rec] = l_acc;
                    }
                    rec += 1;
                }
            }
            Ok(())
        })?;

    let times: Vec<f64> = nodes.iter().map(|&k| grid.node(k)).collect();
    let log_weights = opts.fitness.map(|g| LogWeights {
        n_particles: count,
        times: times.clone(),
        values: weights,
        shift: g.g_max(),
    });
    Ok(SimOutput {
        paths: PathBundle {
            n_particles: count,
            dim: n,
            nodes,
            times,
            positions,
            seed,
            scheme,
            grid: *grid,
        },
        log_weights,
    })
}

/// Trapezoid accumulation of `g − g_max` along fully recorded paths.
pub fn accumulate_log_weight(paths: &PathBundle, g: &FitnessFunction) -> Result<LogWeights> {
    if !paths.is_full() {
        return Err(Error::Config(
            "log-weights need every grid node; simulate with Record::All".into(),
        ));
    }
    if g.dim() != paths.dim {
        return Err(Error::Config("fitness and path dimensions differ".into()));
    }
    let c = paths.nodes.len();
    let dt = paths.grid.dt();
    let mut values = vec![0.0; paths.n_particles * c];
    values
        .par_chunks_mut(c)
        .enumerate()
        .for_each(|(i, out)| {
            let mut acc = 0.0;
            let mut prev = g.eval_shifted(paths.position(i, 0));
            for k in 1..c {
                let next = g.eval_shifted(paths.position(i, k));
                acc += 0.5 * dt * (prev + next);
                out[k] = acc;
                prev = next;
            }
        });
    Ok(LogWeights {
        n_particles: paths.n_particles,
        times: paths.times.clone(),
        values,
        shift: g.g_max(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn deterministic_model(b: f64) -> DiffusionModel {
        DiffusionModel::scalar_bm(b, 0.0)
    }

    #[test]
    fn zero_noise_ode_is_exact() {
        for steps in [1, 3, 400] {
            let g = TimeGrid::new(0.0, 1.0, steps).unwrap();
            let p = simulate(&deterministic_model(1.0), &[0.0], &g, 1).unwrap();
            assert!((p.terminal(0)[0] - 1.0).abs() < 1e-12);
            assert_eq!(p.position(0, 0), &[0.0]);
        }
    }

    #[test]
    fn cir_zero_noise_ode() {
        let m = DiffusionModel::cir(1.0, 0.0, 0.0).unwrap();
        let g = TimeGrid::new(0.0, 1.0, 64).unwrap();
        let p = simulate_cir(&m, &[1.0], &g, 0).unwrap();
        assert!((p.terminal(0)[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cir_feller_violation_is_an_error() {
        let m = DiffusionModel::cir(0.3, -1.0, 1.0).unwrap();
        let g = TimeGrid::new(0.0, 1.0, 8).unwrap();
        assert!(simulate_cir(&m, &[1.0], &g, 0).is_err());
    }

    #[test]
    fn constant_fitness_weights_vanish() {
        let g = FitnessFunction::constant(1, 2.5);
        let grid = TimeGrid::new(0.0, 1.0, 16).unwrap();
        let p = simulate(&DiffusionModel::scalar_bm(0.0, 1.0), &[0.0, 1.0], &grid, 3).unwrap();
        let w = accumulate_log_weight(&p, &g).unwrap();
        for i in 0..2 {
            for k in 0..=16 {
                assert_eq!(w.value(i, k), 0.0);
                assert!((w.unshifted(i, k) - 2.5 * grid.node(k)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn deterministic_linear_path_integral() {
        let grid = TimeGrid::new(0.0, 1.0, 1 << 10).unwrap();
        let p = simulate(&deterministic_model(1.0), &[0.0], &grid, 0).unwrap();
        let w = accumulate_log_weight(&p, &FitnessFunction::linear(vec![1.0])).unwrap();
        assert!((w.unshifted(0, 1 << 10) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn trapezoid_refinement_is_second_order() {
        // X_s = s exactly; ∫_0^1 s² ds = 1/3.
        let g = FitnessFunction::polynomial(vec![0.0, 0.0, 1.0]).unwrap();
        let err = |steps: usize| {
            let grid = TimeGrid::new(0.0, 1.0, steps).unwrap();
            let p = simulate(&deterministic_model(1.0), &[0.0], &grid, 0).unwrap();
            let w = accumulate_log_weight(&p, &g).unwrap();
            (w.unshifted(0, steps) - 1.0 / 3.0).abs()
        };
        let ratio = err(64) / err(128);
        assert!((ratio - 4.0).abs() < 0.1, "{ratio}");
    }

    #[test]
    fn inline_weights_match_post_hoc() {
        let model = DiffusionModel::scalar_bm(0.1, 1.3);
        let g = FitnessFunction::polynomial(vec![0.2, 0.5, -1.0]).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 50).unwrap();
        let init = [0.0, 0.5, -0.3];
        let full = simulate_with(
            &model,
            &init,
            &grid,
            9,
            &SimOptions {
                fitness: Some(&g),
                ..Default::default()
            },
        )
        .unwrap();
        let post = accumulate_log_weight(&full.paths, &g).unwrap();
        assert_eq!(full.log_weights.unwrap(), post);
    }

    #[test]
    fn checkpoints_match_full_record() {
        let model = DiffusionModel::ou(1.0, 0.0, 1.0).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 40).unwrap();
        let init = [0.3, -1.0];
        let full = simulate(&model, &init, &grid, 5).unwrap();
        let idx = grid.checkpoint_indices(5);
        let part = simulate_with(
            &model,
            &init,
            &grid,
            5,
            &SimOptions {
                record: Some(Record::Nodes(idx.clone())),
                ..Default::default()
            },
        )
        .unwrap()
        .paths;
        for i in 0..2 {
            for (r, &k) in idx.iter().enumerate() {
                assert_eq!(part.position(i, r), full.position(i, k));
            }
        }
    }

    #[test]
    fn removing_a_particle_keeps_the_others() {
        let model = DiffusionModel::scalar_bm(0.0, 1.0);
        let grid = TimeGrid::new(0.0, 1.0, 20).unwrap();
        let all = simulate(&model, &[0.0, 1.0, 2.0], &grid, 17).unwrap();
        let keys = [0u64, 2];
        let some = simulate_with(
            &model,
            &[0.0, 2.0],
            &grid,
            17,
            &SimOptions {
                stream_keys: Some(&keys),
                ..Default::default()
            },
        )
        .unwrap()
        .paths;
        assert_eq!(some.terminal(0), all.terminal(0));
        assert_eq!(some.terminal(1), all.terminal(2));
    }

    #[test]
    fn non_finite_state_aborts() {
        let model = DiffusionModel::custom(
            DomainSpec::FullSpace { dim: 1 },
            1,
            Arc::new(|x: &[f64], out: &mut [f64]| out[0] = x[0] * x[0] * 1e300),
            Arc::new(|_: &[f64], out: &mut [f64]| out[0] = 0.0),
            false,
        )
        .unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let err = simulate(&model, &[10.0], &grid, 0).unwrap_err();
        assert!(matches!(err, Error::NonFinite { particle: 0, .. }));
    }

    #[test]
    fn cir_states_are_nonnegative() {
        // Strong noise near zero forces truncation.
        let m = DiffusionModel::cir(0.5, -1.0, 1.0).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 50).unwrap();
        let init = vec![0.01; 2000];
        let p = simulate_cir(&m, &init, &grid, 4).unwrap();
        assert!(p.positions().iter().all(|v| *v >= 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn trapezoid_is_additive(seed in 0u64..1000, split in 1usize..39) {
            let model = DiffusionModel::scalar_bm(0.2, 0.8);
            let g = FitnessFunction::polynomial(vec![0.0, 1.0, -0.5]).unwrap();
            let grid = TimeGrid::new(0.0, 1.0, 40).unwrap();
            let p = simulate(&model, &[0.1], &grid, seed).unwrap();
            let w = accumulate_log_weight(&p, &g).unwrap();
            // Sum of the pieces computed independently.
            let piece = |a: usize, b: usize| -> f64 {
                (a..b).map(|k| 0.5 * (p.times()[k + 1] - p.times()[k])
                    * (g.eval_shifted(p.position(0, k)) + g.eval_shifted(p.position(0, k + 1)))).sum()
            };
            let total = w.value(0, 40);
            let parts = piece(0, split) + piece(split, 40);
            prop_assert!((total - parts).abs() <= 1e-13 * (1.0 + total.abs()));
        }
    }
}
