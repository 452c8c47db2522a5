use super::gaussian::GaussianMixture;
use crate::error::{Error, Result};
use crate::model::InitialLaw;
use crate::numerics::kde::GridDensity;
use crate::numerics::quadrature::linspace;
use std::fmt;
use std::sync::Arc;

/// Largest `|log h_t|` accepted before `h_t` is considered out of range.
pub const LOG_MASS_LIMIT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineTag {
    Linear,
    Affine,
    Tilted,
}

impl fmt::Display for EngineTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EngineTag::Linear => "linear",
            EngineTag::Affine => "affine",
            EngineTag::Tilted => "tilted",
        })
    }
}

/// Normalised law at one time plus `log h_t` (unshifted fitness).
#[derive(Debug, Clone)]
pub struct TimeSlice {
    pub mixture: GaussianMixture,
    pub log_h: f64,
}

pub(crate) type SliceFn = Arc<dyn Fn(f64) -> Result<TimeSlice> + Send + Sync>;

#[derive(Clone)]
enum Repr {
    Analytic(SliceFn),
    Tabulated {
        times: Vec<f64>,
        densities: Vec<GridDensity>,
        log_h: Vec<f64>,
        log_h_se: Vec<f64>,
        clipped_mass: Vec<f64>,
    },
}

/// Density and mass-factor evaluator produced by an engine.
#[derive(Clone)]
pub struct ClosedFormSolution {
    engine: EngineTag,
    route: &'static str,
    horizon: f64,
    initial: InitialLaw,
    repr: Repr,
    diagnostics: Vec<String>,
}

impl fmt::Debug for ClosedFormSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClosedFormSolution")
            .field("engine", &self.engine)
            .field("route", &self.route)
            .field("horizon", &self.horizon)
            .finish()
    }
}

impl ClosedFormSolution {
    pub(crate) fn analytic(
        engine: EngineTag,
        route: &'static str,
        initial: InitialLaw,
        slice: SliceFn,
    ) -> Self {
        let horizon = find_horizon(|t| slice(t).map(|s| s.log_h));
        Self {
            engine,
            route,
            horizon,
            initial,
            repr: Repr::Analytic(slice),
            diagnostics: Vec::new(),
        }
    }

    pub(crate) fn tabulated(
        initial: InitialLaw,
        times: Vec<f64>,
        densities: Vec<GridDensity>,
        log_h: Vec<f64>,
        log_h_se: Vec<f64>,
        clipped_mass: Vec<f64>,
    ) -> Self {
        let horizon = times.iter().copied().fold(0.0, f64::max);
        Self {
            engine: EngineTag::Tilted,
            route: "tilted-monte-carlo",
            horizon,
            initial,
            repr: Repr::Tabulated {
                times,
                densities,
                log_h,
                log_h_se,
                clipped_mass,
            },
            diagnostics: Vec::new(),
        }
    }

    pub(crate) fn with_diagnostic(mut self, note: String) -> Self {
        self.diagnostics.push(note);
        self
    }

    /// Non-fatal findings recorded while building the solution.
    pub fn diagnostics(&self) -> &[String] {
        &self.diagnostics
    }

    pub fn engine(&self) -> EngineTag {
        self.engine
    }

    /// Which construction the engine used.
    pub fn route(&self) -> &'static str {
        self.route
    }

    /// Largest time at which `h_t` stays within floating range.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn initial(&self) -> &InitialLaw {
        &self.initial
    }

    /// Times at which a tabulated solution is available; empty for analytic ones.
    pub fn tabulated_times(&self) -> &[f64] {
        match &self.repr {
            Repr::Analytic(_) => &[],
            Repr::Tabulated { times, .. } => times,
        }
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= 0.0) {
            return Err(Error::Config(format!("time must be >= 0, got {t}")));
        }
        if t > self.horizon {
            return Err(Error::Horizon(format!(
                "t = {t} exceeds the validity horizon {}",
                self.horizon
            )));
        }
        Ok(())
    }

    fn table_index(&self, t: f64) -> Result<usize> {
        match &self.repr {
            Repr::Tabulated { times, .. } => times
                .iter()
                .position(|s| (s - t).abs() <= 1e-12 * (1.0 + t))
                .ok_or_else(|| Error::Config(format!("no tabulated density at t = {t}"))),
            Repr::Analytic(_) => unreachable!(),
        }
    }

    /// Analytic slice at `t > 0`.
    pub fn slice(&self, t: f64) -> Result<TimeSlice> {
        self.check_time(t)?;
        match &self.repr {
            Repr::Analytic(f) => f(t),
            Repr::Tabulated { .. } => Err(Error::Unsupported(
                "tabulated solutions have no Gaussian representation".into(),
            )),
        }
    }

    pub fn density(&self, t: f64, x: &[f64]) -> Result<f64> {
        self.check_time(t)?;
        if t == 0.0 {
            return self.initial.density(x).ok_or_else(|| {
                Error::Unsupported("initial law has no density".into())
            });
        }
        match &self.repr {
            Repr::Analytic(f) => Ok(f(t)?.mixture.density(x)),
            Repr::Tabulated { densities, .. } => Ok(densities[self.table_index(t)?].eval(x[0])),
        }
    }

    /// One-dimensional density on `nodes`, renormalised by the trapezoid rule.
    pub fn density_grid(&self, t: f64, nodes: &[f64]) -> Result<GridDensity> {
        self.check_time(t)?;
        if t > 0.0 {
            if let Repr::Analytic(f) = &self.repr {
                let m = f(t)?.mixture;
                return GridDensity::from_fn(nodes.to_vec(), |x| m.density(&[x]))?.normalize();
            }
        }
        GridDensity::from_fn(nodes.to_vec(), |x| self.density(t, &[x]).unwrap_or(0.0))?
            .normalize()
    }

    /// The engine's own grid for tabulated solutions.
    pub fn native_grid(&self, t: f64) -> Option<&GridDensity> {
        match &self.repr {
            Repr::Tabulated { densities, .. } => {
                self.table_index(t).ok().map(|i| &densities[i])
            }
            Repr::Analytic(_) => None,
        }
    }

    /// `h_t` for the unshifted fitness; `h_0 = 1`.
    pub fn mass_factor(&self, t: f64) -> Result<f64> {
        Ok(self.log_mass_factor(t)?.exp())
    }

    pub fn log_mass_factor(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        if t == 0.0 {
            return Ok(0.0);
        }
        match &self.repr {
            Repr::Analytic(f) => Ok(f(t)?.log_h),
            Repr::Tabulated { log_h, .. } => Ok(log_h[self.table_index(t)?]),
        }
    }

    /// `h_t e^{−g_max t}`, the mass of the sub-probability flow.
    pub fn shifted_mass_factor(&self, t: f64, g_max: f64) -> Result<f64> {
        Ok((self.log_mass_factor(t)? - g_max * t).exp())
    }

    /// Standard error of `log h_t` (zero for analytic engines).
    pub fn log_mass_standard_error(&self, t: f64) -> Result<f64> {
        match &self.repr {
            Repr::Analytic(_) => Ok(0.0),
            Repr::Tabulated { log_h_se, .. } => Ok(log_h_se[self.table_index(t)?]),
        }
    }

    /// Mass removed where the tilt underflowed (tabulated solutions).
    pub fn clipped_mass(&self, t: f64) -> Result<f64> {
        match &self.repr {
            Repr::Analytic(_) => Ok(0.0),
            Repr::Tabulated { clipped_mass, .. } => Ok(clipped_mass[self.table_index(t)?]),
        }
    }

    /// Mean and variance in one dimension.
    pub fn moments_1d(&self, t: f64) -> Result<(f64, f64)> {
        self.check_time(t)?;
        if t == 0.0 {
            if let InitialLaw::Gaussian(g) = &self.initial {
                return Ok((g.mean[0], g.covariance[(0, 0)]));
            }
        }
        match &self.repr {
            Repr::Analytic(f) if t > 0.0 => {
                let m = f(t)?.mixture;
                Ok((m.mean()[0], m.covariance()[(0, 0)]))
            }
            Repr::Tabulated { densities, .. } if t > 0.0 => {
                let d = &densities[self.table_index(t)?];
                let mean = d.moment(1);
                Ok((mean, (d.moment(2) - mean * mean).max(0.0)))
            }
            _ => {
                let mean = self.initial.mean()[0];
                let v = self.initial.abs_moment(2.0)? - mean * mean;
                Ok((mean, v.max(0.0)))
            }
        }
    }

    /// Interval holding essentially all mass at `t` (1D): mean ± 8 sd, or
    /// the tabulated grid.
    pub fn support_hint(&self, t: f64) -> Result<(f64, f64)> {
        if let Some(d) = self.native_grid(t) {
            return Ok((d.lower(), d.upper()));
        }
        let (m, v) = self.moments_1d(t)?;
        let sd = v.sqrt().max(1e-6);
        Ok((m - 8.0 * sd, m + 8.0 * sd))
    }

    /// Uniform grid over [`support_hint`](Self::support_hint).
    pub fn default_grid(&self, t: f64, nodes: usize) -> Result<Vec<f64>> {
        let (lo, hi) = self.support_hint(t)?;
        Ok(linspace(lo, hi, nodes))
    }
}

/// Largest `t ≤ 2^20` with a finite slice and `|log h_t| ≤ LOG_MASS_LIMIT`.
fn find_horizon(log_h: impl Fn(f64) -> Result<f64>) -> f64 {
    let ok = |t: f64| matches!(log_h(t), Ok(v) if v.is_finite() && v.abs() <= LOG_MASS_LIMIT);
    let cap = 1048576.0;
    let mut lo = 0.0;
    let mut hi = 1.0 / 64.0;
    while ok(hi) {
        lo = hi;
        if hi >= cap {
            return cap;
        }
        hi *= 2.0;
    }
    for _ in 0..48 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}
