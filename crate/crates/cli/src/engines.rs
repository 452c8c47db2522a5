//! Builds each configured engine's solution on the common output grid.

use crate::config::{EngineKind, FitnessSpec, ModelSpec, ScenarioConfig};
use crate::error::CliError;
use repmut_core::closed_form::{affine_eigenpair, affine_engine, linear_engine, tilted_engine, ClosedFormSolution, Eigenpair, TiltedOptions};
use repmut_core::model::{validate_model, DiffusionModel, DomainSpec, FitnessFunction, InitialLaw, ModelReport};
use repmut_core::numerics::kde::GridDensity;
use repmut_core::numerics::quadrature::linspace;
use repmut_core::pde::{solve_rm_pde, PdeScheme, PdeSummary};
use repmut_core::spectral::{cir_eigenpair, cir_ground_lambda, schrodinger_ground_state, SchrodingerProblem};

/// Node count of the initial density handed to the PDE.
const PDE_INITIAL_NODES: usize = 4001;

/// Built model, fitness and initial law of a scenario.
pub struct Scenario {
    pub cfg: ScenarioConfig,
    pub model: DiffusionModel,
    pub fitness: FitnessFunction,
    pub initial: InitialLaw,
    pub report: ModelReport,
}

impl Scenario {
    /// Fails with a config error when the model violates its standing
    /// assumptions (for CIR, the Feller inequality).
    pub fn build(cfg: ScenarioConfig) -> Result<Self, CliError> {
        let model = cfg.build_model()?;
        let report = validate_model(&model)?;
        let fitness = cfg.build_fitness()?;
        let initial = cfg.build_initial()?;
        if matches!(model.domain(), DomainSpec::HalfLine) && cfg.grid.lower < 0.0 {
            return Err(CliError::Config("half-line model needs grid.lower >= 0".into()));
        }
        Ok(Self {
            cfg,
            model,
            fitness,
            initial,
            report,
        })
    }

    pub fn is_half_line(&self) -> bool {
        matches!(self.model.domain(), DomainSpec::HalfLine)
    }
}

/// Densities of one engine at the configured times on the common grid.
pub struct EngineRun {
    pub kind: EngineKind,
    pub densities: Vec<GridDensity>,
    pub solution: Option<ClosedFormSolution>,
    pub pde: Option<PdeSummary>,
    pub notes: Vec<String>,
}

fn on_grid(sol: &ClosedFormSolution, sc: &Scenario) -> Result<Vec<GridDensity>, CliError> {
    let nodes = sc.cfg.grid_nodes();
    sc.cfg
        .times
        .iter()
        .map(|&t| Ok(sol.density_grid(t, &nodes)?))
        .collect()
}

fn closed_form_run(kind: EngineKind, sol: ClosedFormSolution, sc: &Scenario) -> Result<EngineRun, CliError> {
    Ok(EngineRun {
        kind,
        densities: on_grid(&sol, sc)?,
        notes: sol.diagnostics().to_vec(),
        solution: Some(sol),
        pde: None,
    })
}

/// Eigenpair for the tilted engine: Kummer functions for CIR with `g = −x`,
/// the Riccati pair for affine models with quadratic fitness, and a
/// finite-difference ground state for confining polynomial fitness on
/// driftless Brownian motion.
pub fn tilted_eigenpair(sc: &Scenario) -> Result<(Eigenpair, String), CliError> {
    let unsupported = |m: &str| CliError::Numeric(format!("tilted engine unavailable: {m}"));
    match (&sc.cfg.model, &sc.cfg.fitness) {
        (ModelSpec::Cir { a, b, sigma }, FitnessSpec::Linear { coef, .. }) => {
            if *coef != -1.0 {
                return Err(unsupported("the CIR eigenpair needs fitness -x"));
            }
            let lambda0 = cir_ground_lambda(*a, *b, *sigma);
            let eig = cir_eigenpair(*a, *b, *sigma, lambda0)?;
            Ok((eig.pair, format!("kummer eigenpair, lambda0 = {lambda0:.12}")))
        }
        (ModelSpec::Cir { .. }, _) => Err(unsupported("the CIR eigenpair needs linear fitness")),
        (ModelSpec::Bm { drift, sigma }, FitnessSpec::Polynomial { .. }) if *drift == 0.0 => {
            let problem = SchrodingerProblem::new(
                sigma / 2f64.sqrt(),
                sc.fitness.clone(),
                sc.cfg.tilted.half_width,
                sc.cfg.tilted.nodes,
            )?;
            let gs = schrodinger_ground_state(&problem)?;
            Ok((gs.pair, format!("finite-difference ground state, lambda0 = {:.12}", gs.lambda)))
        }
        _ => {
            let eig = affine_eigenpair(&sc.model, &sc.fitness)?;
            Ok((eig.pair, format!("riccati eigenpair, lambda0 = {:.12}", eig.lambda)))
        }
    }
}

fn pde_run(sc: &Scenario) -> Result<EngineRun, CliError> {
    let spec = &sc.cfg.pde;
    let (scheme, lo, hi) = if sc.is_half_line() {
        (PdeScheme::half_line(spec.extent, spec.cells, spec.dt), 0.0, spec.extent)
    } else {
        (PdeScheme::full_line(spec.extent, spec.cells, spec.dt), -spec.extent, spec.extent)
    };
    let x = linspace(lo, hi, PDE_INITIAL_NODES);
    let mut values = Vec::with_capacity(x.len());
    for v in &x {
        values.push(
            sc.initial
                .density(&[*v])
                .ok_or_else(|| CliError::Numeric("pde needs an initial law with a density".into()))?,
        );
    }
    let u0 = GridDensity::new(x, values)?;
    let traj = solve_rm_pde(&sc.model, &sc.fitness, &u0, &sc.cfg.times, &scheme)?;
    let nodes = sc.cfg.grid_nodes();
    let densities = (0..sc.cfg.times.len())
        .map(|k| {
            let d = traj.density(k)?;
            Ok(GridDensity::new(nodes.clone(), nodes.iter().map(|x| d.eval(*x)).collect())?)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let summary = traj.summary().clone();
    Ok(EngineRun {
        kind: EngineKind::Pde,
        densities,
        solution: None,
        notes: vec![format!(
            "mass leak {:.3e}, clipped values {}",
            summary.mass_leak, summary.clipped_values
        )],
        pde: Some(summary),
    })
}

pub fn run_engine(kind: EngineKind, sc: &Scenario, tilted_seed: u64) -> Result<EngineRun, CliError> {
    match kind {
        EngineKind::Linear => closed_form_run(kind, linear_engine(&sc.model, &sc.fitness, &sc.initial)?, sc),
        EngineKind::Affine => closed_form_run(kind, affine_engine(&sc.model, &sc.fitness, &sc.initial)?, sc),
        EngineKind::Tilted => {
            let (pair, note) = tilted_eigenpair(sc)?;
            let opts = TiltedOptions {
                n_paths: sc.cfg.tilted.paths,
                times: sc.cfg.times.clone(),
                seed: tilted_seed,
                ..Default::default()
            };
            let sol = tilted_engine(&sc.model, &sc.fitness, &pair, &sc.initial, &opts)?;
            let mut run = closed_form_run(kind, sol, sc)?;
            run.notes.insert(0, note);
            Ok(run)
        }
        EngineKind::Pde => pde_run(sc),
    }
}
