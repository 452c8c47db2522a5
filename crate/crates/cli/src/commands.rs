//! `solve`, `particles`, `chaos` and `manifest` subcommands.

use crate::config::{EngineKind, ScenarioConfig};
use crate::engines::{run_engine, EngineRun, Scenario};
use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::output::{csv, num, write_atomic};
use crate::svg::RatePlot;
use repmut_core::closed_form::{affine_engine, linear_engine, ClosedFormSolution};
use repmut_core::metric::{log_log_slope, rate_study, ClosedFormReference, DqtOptions, RateStudy};
use repmut_core::particle::{mass_estimate, run_particles};
use repmut_core::rng::{derive_seed, stream};
use repmut_core::sde::TimeGrid;
use rand::Rng;
use serde::Serialize;
use std::path::PathBuf;
use std::time::Instant;

/// Leading decay exponent of the chaos distance for `q > n/2`.
pub const REFERENCE_SLOPE: f64 = -0.5;
/// Replicates below which the bootstrap interval is flagged.
pub const MIN_RELIABLE_REPS: usize = 2;
pub const MIN_RATE_POINTS: usize = 3;
/// Particles written to `particles.csv`.
const PARTICLE_DUMP: usize = 1000;

pub struct Outcome {
    pub out_dir: PathBuf,
    pub lines: Vec<String>,
}

fn begin(command: &str, cfg: &ScenarioConfig) -> Result<(RunManifest, PathBuf), CliError> {
    let dir = cfg.output.clone();
    std::fs::create_dir_all(&dir)?;
    let manifest = RunManifest::new(command, cfg);
    manifest.write(&dir)?;
    Ok((manifest, dir))
}

fn density_csv(times: &[f64], run: &EngineRun) -> String {
    let rows = times.iter().zip(&run.densities).flat_map(|(t, d)| {
        d.nodes()
            .iter()
            .zip(d.values())
            .map(move |(x, u)| format!("{},{},{}", num(*t), num(*x), num(*u)))
    });
    csv("t,x,u", rows)
}

fn grid_steps(cfg: &ScenarioConfig) -> Result<TimeGrid, CliError> {
    let steps = (cfg.particles.steps_per_unit as f64 * cfg.horizon).round().max(1.0) as usize;
    Ok(TimeGrid::new(0.0, cfg.horizon, steps)?)
}

pub fn solve(cfg: ScenarioConfig) -> Result<Outcome, CliError> {
    let sc = Scenario::build(cfg)?;
    let (mut manifest, dir) = begin("solve", &sc.cfg)?;
    let mut lines = Vec::new();
    let mut runs = Vec::new();
    for &kind in &sc.cfg.engines {
        let start = Instant::now();
        let seed = manifest.seed("tilted");
        match run_engine(kind, &sc, seed) {
            Ok(run) => {
                write_atomic(&dir.join(format!("densities_{}.csv", kind.name())), density_csv(&sc.cfg.times, &run).as_bytes())?;
                manifest.record(&format!("solve:{}", kind.name()), start.elapsed().as_secs_f64(), "ok");
                for n in &run.notes {
                    lines.push(format!("{}: {n}", kind.name()));
                }
                runs.push(run);
            }
            Err(e) => {
                manifest.record(&format!("solve:{}", kind.name()), start.elapsed().as_secs_f64(), format!("failed: {e}"));
                lines.push(format!("{}: precondition failed: {e}", kind.name()));
            }
        }
    }
    if runs.is_empty() {
        manifest.finalize(&dir)?;
        return Err(CliError::Numeric("every engine failed".into()));
    }
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for (k, t) in sc.cfg.times.iter().enumerate() {
        for i in 0..runs.len() {
            for j in i + 1..runs.len() {
                let d = runs[i].densities[k].l1_distance(&runs[j].densities[k]);
                worst = worst.max(d);
                rows.push(format!("{},{},{},{}", num(*t), runs[i].kind.name(), runs[j].kind.name(), num(d)));
                lines.push(format!("t = {t}: L1({}, {}) = {d:.3e}", runs[i].kind.name(), runs[j].kind.name()));
            }
        }
    }
    write_atomic(&dir.join("l1.csv"), csv("t,engine_a,engine_b,l1", rows).as_bytes())?;
    manifest.finalize(&dir)?;
    if let Some(limit) = sc.cfg.l1_limit {
        if worst > limit {
            return Err(CliError::Invariant(format!("pairwise L1 {worst:.3e} exceeds the limit {limit:.3e}")));
        }
    }
    Ok(Outcome { out_dir: dir, lines })
}

/// Closed-form reference for mass and chaos studies: the first configured
/// linear or affine engine that succeeds.
fn analytic_reference(sc: &Scenario) -> Option<(EngineKind, ClosedFormSolution)> {
    sc.cfg.engines.iter().find_map(|k| {
        let sol = match k {
            EngineKind::Linear => linear_engine(&sc.model, &sc.fitness, &sc.initial).ok(),
            EngineKind::Affine => affine_engine(&sc.model, &sc.fitness, &sc.initial).ok(),
            _ => None,
        };
        sol.map(|s| (*k, s))
    })
}

pub fn particles(cfg: ScenarioConfig) -> Result<Outcome, CliError> {
    let sc = Scenario::build(cfg)?;
    let (mut manifest, dir) = begin("particles", &sc.cfg)?;
    let start = Instant::now();
    let grid = grid_steps(&sc.cfg)?;
    let ens = run_particles(&sc.model, &sc.fitness, &sc.initial, sc.cfg.particles.n_mass, &grid, manifest.seed("particles"))?;
    let reference = analytic_reference(&sc);
    let g_max = sc.fitness.g_max();
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for &t in ens.times() {
        let est = mass_estimate(&ens, t)?;
        let exact = match &reference {
            Some((_, sol)) => sol.shifted_mass_factor(t, g_max)?,
            None => f64::NAN,
        };
        rows.push(format!("{},{},{},{}", num(t), num(exact), num(est.value), num(est.standard_error)));
        if sc.cfg.times.iter().any(|s| (s - t).abs() <= 1e-12 * (1.0 + t)) {
            lines.push(format!(
                "t = {t}: h_t = {exact:.6e}, particle estimate {:.6e} +- {:.2e}",
                est.value, est.standard_error
            ));
        }
    }
    write_atomic(&dir.join("masses.csv"), csv("t,h_t,h_t_mc,se", rows).as_bytes())?;
    let mut dump = Vec::new();
    ens.write_csv(&mut dump, PARTICLE_DUMP)?;
    write_atomic(&dir.join("particles.csv"), &dump)?;
    manifest.record("particles", start.elapsed().as_secs_f64(), "ok");
    manifest.finalize(&dir)?;
    if let Some((k, _)) = reference {
        lines.push(format!("h_t from the {} engine, shifted by g_max = {g_max}", k.name()));
    }
    Ok(Outcome { out_dir: dir, lines })
}

#[derive(Debug, Serialize)]
pub struct ChaosSummary {
    pub reference_engine: String,
    pub q: f64,
    pub reps: usize,
    pub n: Vec<usize>,
    pub d: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub slope_ci: (f64, f64),
    pub ci_status: String,
    pub reference_slope: f64,
    pub inversions: Vec<usize>,
}

/// Percentile bootstrap of the fitted slope, resampling replicates per `N`.
fn slope_ci(study: &RateStudy, q: f64, resamples: usize, confidence: f64, seed: u64) -> (f64, f64) {
    if resamples == 0 {
        return (f64::NAN, f64::NAN);
    }
    let ns: Vec<usize> = study.rows.iter().map(|r| r.n).collect();
    let mut rng = stream(seed, 0);
    let mut slopes: Vec<f64> = (0..resamples)
        .map(|_| {
            let d: Vec<f64> = study
                .rows
                .iter()
                .map(|r| {
                    let m = r.replicate_sups.len();
                    let s: f64 = (0..m).map(|_| r.replicate_sups[rng.random_range(0..m)].powf(q)).sum();
                    (s / m as f64).powf(1.0 / q)
                })
                .collect();
            log_log_slope(&ns, &d)
        })
        .collect();
    slopes.sort_by(f64::total_cmp);
    let alpha = 0.5 * (1.0 - confidence);
    let at = |p: f64| slopes[((p * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    (at(alpha), at(1.0 - alpha))
}

pub fn chaos(cfg: ScenarioConfig) -> Result<Outcome, CliError> {
    let plan = cfg.particles.clone();
    if plan.n.len() < MIN_RATE_POINTS {
        return Err(CliError::Config(format!(
            "chaos needs at least {MIN_RATE_POINTS} particle counts, got {}",
            plan.n.len()
        )));
    }
    if plan.n.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Config("particle counts must be strictly increasing".into()));
    }
    let sc = Scenario::build(cfg)?;
    let (kind, sol) = analytic_reference(&sc)
        .ok_or_else(|| CliError::Config("chaos needs a linear or affine reference engine".into()))?;
    let (mut manifest, dir) = begin("chaos", &sc.cfg)?;
    let start = Instant::now();
    let grid = grid_steps(&sc.cfg)?;
    let opts = DqtOptions {
        cells: sc.cfg.metric.cells,
        times: None,
        bootstrap: sc.cfg.metric.bootstrap,
        confidence: sc.cfg.metric.confidence,
    };
    let seed = manifest.seed("chaos");
    let study = rate_study(
        &sc.model,
        &sc.fitness,
        &sc.initial,
        &ClosedFormReference(&sol),
        &plan.n,
        plan.q,
        plan.reps,
        &grid,
        seed,
        &opts,
    )?;
    let mut buf = Vec::new();
    study.write_csv(&mut buf)?;
    write_atomic(&dir.join("rates.csv"), &buf)?;

    let d: Vec<f64> = study.rows.iter().map(|r| r.value).collect();
    let logn: Vec<f64> = plan.n.iter().map(|n| (*n as f64).ln()).collect();
    let k = logn.len() as f64;
    let intercept = d.iter().map(|v| v.ln()).sum::<f64>() / k - study.slope * logn.iter().sum::<f64>() / k;
    let reliable = plan.reps >= MIN_RELIABLE_REPS;
    let ci = slope_ci(&study, plan.q, opts.bootstrap, opts.confidence, derive_seed(seed, "slope"));
    let inversions: Vec<usize> = (1..d.len()).filter(|&i| d[i] > d[i - 1]).map(|i| plan.n[i]).collect();
    let summary = ChaosSummary {
        reference_engine: kind.name().into(),
        q: plan.q,
        reps: plan.reps,
        n: plan.n.clone(),
        d: d.clone(),
        slope: study.slope,
        intercept,
        slope_ci: ci,
        ci_status: if reliable { "ok" } else { "unreliable" }.into(),
        reference_slope: REFERENCE_SLOPE,
        inversions: inversions.clone(),
    };
    write_atomic(
        &dir.join("chaos_summary.json"),
        serde_json::to_string_pretty(&summary).expect("summary serialises").as_bytes(),
    )?;
    let cis: Vec<(f64, f64)> = study.rows.iter().map(|r| (r.ci_low, r.ci_high)).collect();
    let title = format!("{}: chaos distance, q = {}", sc.cfg.name, plan.q);
    let svg = RatePlot {
        title: &title,
        n: &plan.n,
        d: &d,
        ci: &cis,
        slope: study.slope,
        intercept,
        reference_slope: REFERENCE_SLOPE,
    }
    .render();
    write_atomic(&dir.join("rates.svg"), svg.as_bytes())?;
    manifest.record("chaos", start.elapsed().as_secs_f64(), "ok");
    manifest.finalize(&dir)?;

    let mut lines: Vec<String> = study
        .rows
        .iter()
        .map(|r| format!("N = {:>6}: D = {:.4e}  CI [{:.4e}, {:.4e}]", r.n, r.value, r.ci_low, r.ci_high))
        .collect();
    let flag = if reliable { "" } else { " (unreliable: fewer than 2 replicates)" };
    lines.push(format!(
        "slope {:.3}, bootstrap CI [{:.3}, {:.3}]{flag}; reference slope {REFERENCE_SLOPE}",
        study.slope, ci.0, ci.1
    ));
    match inversions.len() {
        0 => {}
        1 => lines.push(format!("warning: D(N) increases at N = {} (one inversion allowed)", inversions[0])),
        _ => {
            return Err(CliError::Invariant(format!(
                "D(N) is not monotone: increases at N = {inversions:?}"
            )))
        }
    }
    Ok(Outcome { out_dir: dir, lines })
}

pub fn manifest(cfg: ScenarioConfig) -> Result<Outcome, CliError> {
    Scenario::build(cfg.clone())?;
    let dir = cfg.output.clone();
    let mut m = RunManifest::new("manifest", &cfg);
    m.finalize(&dir)?;
    let text = serde_json::to_string_pretty(&m).expect("manifest serialises");
    Ok(Outcome {
        out_dir: dir,
        lines: text.lines().map(String::from).collect(),
    })
}
