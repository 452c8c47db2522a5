//! Scenario configuration: JSON schema, loading and canonical hashing.

use crate::error::CliError;
use repmut_core::model::{DiffusionModel, FitnessFunction, InitialLaw};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// `dX = drift dt + sigma dW`.
    Bm { drift: f64, sigma: f64 },
    /// `dX = kappa (theta − X) dt + sigma dW`.
    Ou { kappa: f64, theta: f64, sigma: f64 },
    /// `dX = (a + bX) dt + sigma √X dW`.
    Cir { a: f64, b: f64, sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FitnessSpec {
    /// `g(x) = coef · x`, optionally with a declared supremum.
    Linear {
        coef: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sup: Option<f64>,
    },
    /// `g(x) = Σ coeffs[k] x^k`.
    Polynomial { coeffs: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Gaussian { mean: f64, var: f64 },
    Gamma { shape: f64, rate: f64 },
    Dirac { x: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Linear,
    Affine,
    Tilted,
    Pde,
}

impl EngineKind {
    pub fn name(self) -> &'static str {
        match self {
            EngineKind::Linear => "linear",
            EngineKind::Affine => "affine",
            EngineKind::Tilted => "tilted",
            EngineKind::Pde => "pde",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lower: f64,
    pub upper: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdeSpec {
    /// Half-width of the full-line box, or the length of the half-line box.
    pub extent: f64,
    pub cells: usize,
    pub dt: f64,
}

impl Default for PdeSpec {
    fn default() -> Self {
        Self {
            extent: 12.0,
            cells: 2048,
            dt: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TiltedSpec {
    pub paths: usize,
    /// Half-width of the finite-difference box for confining fitness.
    pub half_width: f64,
    pub nodes: usize,
}

impl Default for TiltedSpec {
    fn default() -> Self {
        Self {
            paths: 100_000,
            half_width: 8.0,
            nodes: 2048,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParticlePlan {
    /// Particle counts of the rate study.
    pub n: Vec<usize>,
    pub reps: usize,
    pub q: f64,
    /// Particle count of the `particles` subcommand.
    pub n_mass: usize,
    pub steps_per_unit: usize,
}

impl Default for ParticlePlan {
    fn default() -> Self {
        Self {
            n: vec![250, 500, 1000, 2000, 4000],
            reps: 20,
            q: 2.0,
            n_mass: 100_000,
            steps_per_unit: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricSpec {
    pub cells: usize,
    pub bootstrap: usize,
    pub confidence: f64,
}

impl Default for MetricSpec {
    fn default() -> Self {
        Self {
            cells: 512,
            bootstrap: 1000,
            confidence: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub model: ModelSpec,
    pub fitness: FitnessSpec,
    pub initial: InitialSpec,
    pub horizon: f64,
    /// Output times in `(0, horizon]`.
    pub times: Vec<f64>,
    pub engines: Vec<EngineKind>,
    pub grid: GridSpec,
    #[serde(default)]
    pub pde: PdeSpec,
    #[serde(default)]
    pub tilted: TiltedSpec,
    #[serde(default)]
    pub particles: ParticlePlan,
    #[serde(default)]
    pub metric: MetricSpec,
    /// Largest pairwise L¹ distance accepted by `solve`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l1_limit: Option<f64>,
    pub output: PathBuf,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(format!("cannot parse config: {e}")))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// SHA-256 of the canonical form: sorted keys, no whitespace, defaults
    /// filled in, output directory excluded.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serialises");
        if let Some(map) = value.as_object_mut() {
            map.remove("output");
        }
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }

    fn check(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if self.times.is_empty() {
            return bad("at least one output time is required".into());
        }
        if let Some(t) = self.times.iter().find(|t| !(**t > 0.0 && **t <= self.horizon)) {
            return bad(format!("time {t} lies outside (0, {}]", self.horizon));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return bad("times must be strictly increasing".into());
        }
        if self.engines.is_empty() {
            return bad("at least one engine is required".into());
        }
        if !(self.grid.upper > self.grid.lower) || self.grid.nodes < 2 {
            return bad("grid needs lower < upper and at least two nodes".into());
        }
        if self.particles.reps == 0 || self.particles.n.iter().any(|n| *n == 0) {
            return bad("particle counts and replications must be positive".into());
        }
        if self.particles.steps_per_unit == 0 || self.particles.n_mass == 0 {
            return bad("steps_per_unit and n_mass must be positive".into());
        }
        if !(self.metric.confidence > 0.0 && self.metric.confidence < 1.0) {
            return bad(format!("confidence {} must lie in (0, 1)", self.metric.confidence));
        }
        Ok(())
    }

    pub fn build_model(&self) -> Result<DiffusionModel, CliError> {
        Ok(match self.model {
            ModelSpec::Bm { drift, sigma } => DiffusionModel::scalar_bm(drift, sigma),
            ModelSpec::Ou { kappa, theta, sigma } => DiffusionModel::ou(kappa, theta, sigma)?,
            ModelSpec::Cir { a, b, sigma } => DiffusionModel::cir(a, b, sigma)?,
        })
    }

    pub fn build_fitness(&self) -> Result<FitnessFunction, CliError> {
        Ok(match &self.fitness {
            FitnessSpec::Linear { coef, sup } => {
                let g = FitnessFunction::linear(vec![*coef]);
                match sup {
                    Some(s) => g.with_sup(*s),
                    None => g,
                }
            }
            FitnessSpec::Polynomial { coeffs } => FitnessFunction::polynomial(coeffs.clone())?,
        })
    }

    pub fn build_initial(&self) -> Result<InitialLaw, CliError> {
        Ok(match self.initial {
            InitialSpec::Gaussian { mean, var } => InitialLaw::gaussian_1d(mean, var)?,
            InitialSpec::Gamma { shape, rate } => {
                if !(shape > 0.0 && rate > 0.0) {
                    return Err(CliError::Config("gamma law needs positive shape and rate".into()));
                }
                InitialLaw::Gamma { shape, rate }
            }
            InitialSpec::Dirac { x } => InitialLaw::dirac(vec![x]),
        })
    }

    pub fn grid_nodes(&self) -> Vec<f64> {
        repmut_core::numerics::quadrature::linspace(self.grid.lower, self.grid.upper, self.grid.nodes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "name": "t",
        "model": {"kind": "bm", "drift": 0.0, "sigma": 1.4142135623730951},
        "fitness": {"kind": "linear", "coef": 1.0, "sup": 2.0},
        "initial": {"kind": "gaussian", "mean": 0.0, "var": 1.0},
        "horizon": 1.0,
        "times": [0.5, 1.0],
        "engines": ["linear", "pde"],
        "grid": {"lower": -8.0, "upper": 12.0, "nodes": 201},
        "output": "out",
        "seed": 7
    }"#;

    #[test]
    fn round_trip_is_identity() {
        let a = ScenarioConfig::from_json(SAMPLE).unwrap();
        let b = ScenarioConfig::from_json(&a.to_json()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn hash_ignores_whitespace_and_key_order() {
        let a = ScenarioConfig::from_json(SAMPLE).unwrap();
        let squashed: String = SAMPLE.split_whitespace().collect();
        let b = ScenarioConfig::from_json(&squashed).unwrap();
        assert_eq!(a.hash(), b.hash());
        let reordered = SAMPLE.replace(r#""seed": 7"#, r#""seed": 7, "metric": {"cells": 512}"#);
        assert_eq!(ScenarioConfig::from_json(&reordered).unwrap().hash(), a.hash());
    }

    #[test]
    fn hash_tracks_semantic_fields() {
        let a = ScenarioConfig::from_json(SAMPLE).unwrap();
        let mut b = a.clone();
        b.seed = 8;
        assert_ne!(a.hash(), b.hash());
        let mut c = a.clone();
        c.grid.nodes = 202;
        assert_ne!(a.hash(), c.hash());
        let mut d = a.clone();
        d.output = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), d.hash());
    }

    #[test]
    fn rejects_bad_fields() {
        assert!(ScenarioConfig::from_json(&SAMPLE.replace("\"seed\"", "\"sead\"")).is_err());
        assert!(ScenarioConfig::from_json(&SAMPLE.replace("[0.5, 1.0]", "[0.5, 2.0]")).is_err());
        assert!(ScenarioConfig::from_json(&SAMPLE.replace("\"pde\"", "\"spline\"")).is_err());
    }
}
