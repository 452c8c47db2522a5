//! Reproducibility manifest written next to every run's outputs.

use crate::config::ScenarioConfig;
use crate::output::write_atomic;
use repmut_core::rng::derive_seed;
use repmut_core::tolerances::Tolerances;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";
pub const STAGES: [&str; 3] = ["tilted", "particles", "chaos"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub seconds: f64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub scenario: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub stage_seeds: BTreeMap<String, u64>,
    pub version: String,
    pub threads: usize,
    pub stages: Vec<StageRecord>,
    pub tolerances: Tolerances,
    pub finalized: bool,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &ScenarioConfig) -> Self {
        Self {
            command: command.into(),
            scenario: cfg.name.clone(),
            config_hash: cfg.hash(),
            master_seed: cfg.seed,
            stage_seeds: stage_seeds(cfg.seed),
            version: VERSION.into(),
            threads: rayon::current_num_threads(),
            stages: Vec::new(),
            tolerances: Tolerances::default(),
            finalized: false,
        }
    }

    pub fn seed(&self, stage: &str) -> u64 {
        self.stage_seeds[stage]
    }

    pub fn record(&mut self, name: &str, seconds: f64, status: impl Into<String>) {
        self.stages.push(StageRecord {
            name: name.into(),
            seconds,
            status: status.into(),
        });
    }

    pub fn path(dir: &Path) -> PathBuf {
        dir.join(MANIFEST_FILE)
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serialises");
        write_atomic(&Self::path(dir), text.as_bytes())
    }

    pub fn finalize(&mut self, dir: &Path) -> std::io::Result<()> {
        self.finalized = true;
        self.write(dir)
    }
}

pub fn stage_seeds(master: u64) -> BTreeMap<String, u64> {
    STAGES.iter().map(|s| (s.to_string(), derive_seed(master, s))).collect()
}
