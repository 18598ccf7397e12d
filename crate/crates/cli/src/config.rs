use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use temp_core::bench::{BenchConfig, PlannerKind};
use temp_core::pipeline::{HarvestConfig, TrainConfig};
use temp_core::sbmp::PlannerConfig;
use temp_core::temp::TempConfig;

/// Error that maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchSection {
    /// Held-out scenes generated for the suite.
    pub workspaces: usize,
    pub pairs_per_workspace: usize,
    pub planners: Vec<PlannerKind>,
    pub seeds: Vec<u64>,
    pub tau: f64,
}

impl Default for BenchSection {
    fn default() -> Self {
        let b = BenchConfig::default();
        BenchSection {
            workspaces: 5,
            pairs_per_workspace: 4,
            planners: b.planners,
            seeds: b.seeds,
            tau: b.tau,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CliConfig {
    pub seed: u64,
    pub train_workspaces: usize,
    pub val_workspaces: usize,
    pub harvest: HarvestConfig,
    pub train: TrainConfig,
    pub temp: TempConfig,
    pub baseline: PlannerConfig,
    pub bench: BenchSection,
}

impl Default for CliConfig {
    fn default() -> Self {
        let step = PlannerConfig {
            step_size: 0.5,
            ..Default::default()
        };
        CliConfig {
            seed: 0,
            train_workspaces: 10,
            val_workspaces: 2,
            harvest: HarvestConfig::default(),
            train: TrainConfig {
                max_epochs: 40,
                ..Default::default()
            },
            temp: TempConfig {
                planner: PlannerConfig {
                    max_iters: 3000,
                    ..step.clone()
                },
                ..Default::default()
            },
            baseline: PlannerConfig {
                max_iters: 20_000,
                ..step
            },
            bench: BenchSection::default(),
        }
    }
}

impl CliConfig {
    /// Reads TOML or JSON (by extension; TOML otherwise).
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let cfg = if is_json {
            serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?
        };
        Ok(cfg)
    }

    pub fn apply_overrides(&mut self, seed: Option<u64>, dim: Option<usize>) {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(d) = dim {
            self.harvest.scene.dim = d;
            self.train.model.dim = d;
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let checks = [
            self.harvest.scene.validate(),
            self.harvest.expert.validate(),
            self.train.validate(),
            self.temp.validate(),
            self.baseline.validate(),
        ];
        for c in checks {
            c.map_err(|e| config_err(e.to_string()))?;
        }
        if self.train_workspaces == 0 || self.val_workspaces == 0 {
            return Err(config_err("train_workspaces and val_workspaces must be positive"));
        }
        if self.harvest.scene.obstacles.1 > self.train.model.max_obstacles {
            return Err(config_err(format!(
                "scenes may hold {} obstacles but the model encodes at most {}",
                self.harvest.scene.obstacles.1, self.train.model.max_obstacles
            )));
        }
        if self.harvest.scene.dim != self.train.model.dim {
            return Err(config_err("scene and model dimensions differ"));
        }
        Ok(())
    }

    pub fn bench_config(&self, planners: Option<Vec<PlannerKind>>) -> BenchConfig {
        BenchConfig {
            planners: planners.unwrap_or_else(|| self.bench.planners.clone()),
            seeds: self.bench.seeds.clone(),
            tau: self.bench.tau,
            temp: self.temp.clone(),
            baseline: self.baseline.clone(),
        }
    }
}
