use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sbmp::{plan_with, PlannerConfig, StopRule, UniformSampler};
use crate::scalar::{distance, Real};
use crate::world::{BoxObstacle, PlanningTask, Workspace};

/// Random axis-aligned box scenes in a cube.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub dim: usize,
    pub low: f64,
    pub high: f64,
    /// Inclusive obstacle-count range.
    pub obstacles: (usize, usize),
    /// Inclusive half-extent range, per axis.
    pub half_extent: (f64, f64),
    pub goal_radius: f64,
    /// Minimum start-to-goal distance for generated tasks.
    pub min_task_distance: f64,
    /// RRT* iterations for the connectivity probe.
    pub probe_iters: usize,
    pub step_size: f64,
    /// Rejection budget per scene and per task.
    pub max_attempts: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            dim: 2,
            low: 0.0,
            high: 10.0,
            obstacles: (4, 8),
            half_extent: (0.5, 1.5),
            goal_radius: 0.5,
            min_task_distance: 5.0,
            probe_iters: 5000,
            step_size: 0.5,
            max_attempts: 200,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let span = self.high - self.low;
        if self.dim == 0 || !(span > 0.0) {
            return Err(Error::Config("scene needs a positive dimension and span".into()));
        }
        if self.obstacles.0 > self.obstacles.1 {
            return Err(Error::Config("obstacle count range is empty".into()));
        }
        let (hlo, hhi) = self.half_extent;
        if !(hlo > 0.0 && hlo <= hhi && 2.0 * hhi < span) {
            return Err(Error::Config("half_extent range must be positive and fit inside the bounds".into()));
        }
        if !(self.goal_radius > 0.0) || !(self.step_size > 0.0) || self.max_attempts == 0 {
            return Err(Error::Config("goal_radius, step_size and max_attempts must be positive".into()));
        }
        if self.min_task_distance >= span * (self.dim as f64).sqrt() {
            return Err(Error::Config("min_task_distance exceeds the workspace diagonal".into()));
        }
        Ok(())
    }

    fn probe_config(&self, seed: u64) -> PlannerConfig {
        PlannerConfig {
            step_size: self.step_size,
            max_iters: self.probe_iters,
            rng_seed: seed,
            ..Default::default()
        }
    }
}

fn random_scene<T: Real, R: Rng + ?Sized>(cfg: &SceneConfig, rng: &mut R) -> Result<Workspace<T>> {
    let n = rng.gen_range(cfg.obstacles.0..=cfg.obstacles.1);
    let mut obstacles = Vec::with_capacity(n);
    for _ in 0..n {
        let half: Vec<f64> = (0..cfg.dim).map(|_| rng.gen_range(cfg.half_extent.0..=cfg.half_extent.1)).collect();
        let center: Vec<f64> = half.iter().map(|&h| rng.gen_range(cfg.low + h..=cfg.high - h)).collect();
        obstacles.push(BoxObstacle::new(
            center.into_iter().map(T::lit).collect(),
            half.into_iter().map(T::lit).collect(),
        )?);
    }
    Workspace::new(vec![(T::lit(cfg.low), T::lit(cfg.high)); cfg.dim], obstacles)
}

/// Random task with free endpoints at least `min_task_distance` apart.
pub fn generate_task<T: Real, R: Rng + ?Sized>(
    ws: &Arc<Workspace<T>>,
    cfg: &SceneConfig,
    id: impl Into<String>,
    rng: &mut R,
) -> Result<PlanningTask<T>> {
    let id = id.into();
    let min_d = T::lit(cfg.min_task_distance.max(cfg.goal_radius * 1.01));
    for _ in 0..cfg.max_attempts {
        let a = ws.sample_uniform(rng);
        let b = ws.sample_uniform(rng);
        if ws.point_collides(&a) || ws.point_collides(&b) || distance(&a, &b) < min_d {
            continue;
        }
        return PlanningTask::new(id, ws.clone(), a, b, T::lit(cfg.goal_radius));
    }
    Err(Error::Generation(format!("no valid start/goal pair for task {id}")))
}

fn connected<T: Real>(ws: &Arc<Workspace<T>>, cfg: &SceneConfig, rng: &mut ChaCha8Rng) -> Result<bool> {
    let task = match generate_task(ws, cfg, "probe", rng) {
        Ok(t) => t,
        Err(Error::Generation(_)) => return Ok(false),
        Err(e) => return Err(e),
    };
    let pcfg = cfg.probe_config(rng.gen());
    let mut sampler = UniformSampler {
        goal_bias: pcfg.goal_bias,
    };
    let stop = StopRule {
        at_first_solution: true,
        ..Default::default()
    };
    Ok(plan_with(&task, &pcfg, &mut sampler, &stop, "probe")?.path.is_some())
}

/// `count` scenes; each must pass a connectivity probe between two random
/// free states.
pub fn generate_workspaces<T: Real>(cfg: &SceneConfig, count: usize, seed: u64) -> Result<Vec<Workspace<T>>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let mut accepted = None;
        for _ in 0..cfg.max_attempts {
            let ws = Arc::new(random_scene::<T, _>(cfg, &mut rng)?);
            if connected(&ws, cfg, &mut rng)? {
                accepted = Some(ws);
                break;
            }
        }
        let ws = accepted.ok_or_else(|| Error::Generation(format!("scene {i}: rejection budget exhausted")))?;
        out.push(Arc::try_unwrap(ws).unwrap_or_else(|a| (*a).clone()));
    }
    Ok(out)
}
