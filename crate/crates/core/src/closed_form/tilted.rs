use super::solution::ClosedFormSolution;
use super::{eigen_residual, Eigenpair};
use crate::error::{Error, Result};
use crate::model::{sample_initial, DiffusionModel, DomainSpec, FitnessFunction, InitialLaw};
use crate::numerics::kde::{kde, GridDensity, KdeOptions};
use crate::numerics::summation::log_sum_exp;
use crate::rng::derive_seed;
use crate::sde::{simulate_with, Record, SimOptions, TiltedDrift, TimeGrid, DEFAULT_STEPS_PER_UNIT};
use crate::tolerances;
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct TiltedOptions {
    pub n_paths: usize,
    pub steps_per_unit: usize,
    /// Output times, each a multiple of the step size.
    pub times: Vec<f64>,
    pub seed: u64,
    pub kde: KdeOptions,
    pub residual_tol: f64,
}

impl Default for TiltedOptions {
    fn default() -> Self {
        Self {
            n_paths: 100_000,
            steps_per_unit: DEFAULT_STEPS_PER_UNIT,
            times: vec![1.0],
            seed: 0,
            kde: KdeOptions::default(),
            residual_tol: tolerances::EIGEN_RESIDUAL,
        }
    }
}

/// Monte Carlo engine built on an eigenpair: simulates the `φ`-tilted
/// process from the `φ`-reweighted initial law, estimates its density by
/// weighted KDE and divides by `φ`.
pub fn tilted_engine(
    model: &DiffusionModel,
    g: &FitnessFunction,
    pair: &Eigenpair,
    u0: &InitialLaw,
    opts: &TiltedOptions,
) -> Result<ClosedFormSolution> {
    if model.dim() != 1 || pair.dim() != 1 || u0.dim() != 1 {
        return Err(Error::Unsupported("tilted engine is one-dimensional".into()));
    }
    if opts.n_paths < 2 {
        return Err(Error::Config("tilted engine needs at least two paths".into()));
    }
    let probes = model.domain().probe_points(64);
    let res = eigen_residual(model, g, pair, &probes)?;
    if !(res.relative <= opts.residual_tol) {
        return Err(Error::Assumption(format!(
            "eigenpair residual {:e} exceeds {:e}",
            res.relative, opts.residual_tol
        )));
    }

    let mut times = opts.times.clone();
    if times.is_empty() || times.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::Config("tilted engine needs positive output times".into()));
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    let t_max = *times.last().unwrap();
    let steps = (t_max * opts.steps_per_unit as f64).ceil().max(1.0) as usize;
    let grid = TimeGrid::new(0.0, t_max, steps)?;
    let mut nodes = Vec::with_capacity(times.len());
    for &t in &times {
        let k = (t / grid.dt()).round() as usize;
        if (grid.node(k) - t).abs() > 1e-9 * t_max {
            return Err(Error::Config(format!("time {t} is not on the step grid")));
        }
        nodes.push(k);
    }

    let y = sample_initial(u0, model.domain(), opts.n_paths, opts.seed)?;
    let log_w0: Vec<f64> = y.iter().map(|&v| pair.log_phi(&[v])).collect();
    if log_w0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("eigenfunction vanishes on the initial sample".into()));
    }

    let grad = pair.clone();
    let base = model.clone();
    let extra = Arc::new(move |_t: f64, x: &[f64], out: &mut [f64]| {
        let mut s = [0.0];
        base.diffusion(x, &mut s);
        let mut d = [0.0];
        grad.grad_log_phi(x, &mut d);
        out[0] = s[0] * s[0] * d[0];
    });
    let dynamics = TiltedDrift::new(model.clone(), extra);
    let sim = simulate_with(
        &dynamics,
        &y,
        &grid,
        derive_seed(opts.seed, "paths"),
        &SimOptions {
            record: Some(Record::Nodes(nodes.clone())),
            ..Default::default()
        },
    )?;
    let paths = sim.paths;

    let w_max = log_w0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_w0.iter().map(|l| (l - w_max).exp()).collect();
    let mut kde_opts = opts.kde.clone();
    if matches!(model.domain(), DomainSpec::HalfLine) && kde_opts.reflect_at.is_none() {
        kde_opts.reflect_at = Some(0.0);
    }
    let n = opts.n_paths as f64;
    let mut densities = Vec::with_capacity(times.len());
    let mut log_h = Vec::with_capacity(times.len());
    let mut log_h_se = Vec::with_capacity(times.len());
    let mut clipped = Vec::with_capacity(times.len());
    for (&t, &k) in times.iter().zip(&nodes) {
        let rec = paths
            .nodes()
            .iter()
            .position(|&j| j == k)
            .expect("recorded node");
        let x = paths.snapshot(rec);
        let ratio: Vec<f64> = x
            .iter()
            .zip(&log_w0)
            .map(|(&xi, &l0)| l0 - pair.log_phi(&[xi]))
            .collect();
        let lse = log_sum_exp(&ratio);
        log_h.push(-pair.lambda * t + lse - n.ln());
        let rel: Vec<f64> = ratio.iter().map(|r| (r - lse).exp() * n).collect();
        let var = rel.iter().map(|r| (r - 1.0).powi(2)).sum::<f64>() / (n - 1.0);
        log_h_se.push((var / n).sqrt());

        let pbar = kde(&x, Some(&weights), &kde_opts)?;
        let (u, lost) = divide_by_phi(&pbar, pair)?;
        if lost > tolerances::TILT_CLIP_MASS {
            return Err(Error::Numeric(format!(
                "eigenfunction underflow clips {lost:e} of the mass at t = {t}"
            )));
        }
        densities.push(u);
        clipped.push(lost);
    }
    Ok(ClosedFormSolution::tabulated(
        u0.clone(),
        times,
        densities,
        log_h,
        log_h_se,
        clipped,
    ))
}

/// `p̄/φ` renormalised; nodes where `1/φ` overflows are zeroed and their
/// share of `p̄` is returned.
fn divide_by_phi(pbar: &GridDensity, pair: &Eigenpair) -> Result<(GridDensity, f64)> {
    let x = pbar.nodes();
    let logs: Vec<f64> = x
        .iter()
        .zip(pbar.values())
        .map(|(&xi, &p)| {
            let lp = pair.log_phi(&[xi]);
            if p > 0.0 && lp.is_finite() && lp > -700.0 {
                p.ln() - lp
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let lost_vals: Vec<f64> = x
        .iter()
        .zip(pbar.values())
        .zip(&logs)
        .map(|((_, &p), l)| if l.is_finite() { 0.0 } else { p })
        .collect();
    let lost = GridDensity::new(x.to_vec(), lost_vals)?.integral();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::Numeric("tilted density vanished on the grid".into()));
    }
    let values = logs.iter().map(|l| (l - top).exp()).collect();
    Ok((GridDensity::new(x.to_vec(), values)?.normalize()?, lost))
}
