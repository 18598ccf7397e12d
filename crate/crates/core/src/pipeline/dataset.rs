use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::derive_seed;
use super::scenes::{generate_task, SceneConfig};
use crate::eise::EnvVector;
use crate::error::{Error, Result};
use crate::sbmp::{plan_with, Path, PlannerConfig, StopRule, UniformSampler};
use crate::scalar::Real;
use crate::world::{PlanningTask, Workspace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
}

/// Generation record written as the first line of a dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub train_workspaces: Vec<String>,
    pub validation_workspaces: Vec<String>,
    pub pairs_per_workspace: usize,
    pub expert: PlannerConfig,
    pub refine_iters: usize,
    pub scene: SceneConfig,
    pub max_obstacles: usize,
    pub seed: u64,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if let Some(id) = self.train_workspaces.iter().find(|id| self.validation_workspaces.contains(id)) {
            return Err(Error::Config(format!("workspace {id} is in both the train and validation sets")));
        }
        Ok(())
    }

    pub fn split_of(&self, workspace_id: &str) -> Option<Split> {
        if self.train_workspaces.iter().any(|w| w == workspace_id) {
            Some(Split::Train)
        } else if self.validation_workspaces.iter().any(|w| w == workspace_id) {
            Some(Split::Validation)
        } else {
            None
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarvestConfig {
    pub pairs_per_workspace: usize,
    pub expert: PlannerConfig,
    /// Iterations run after the expert's first solution.
    pub refine_iters: usize,
    pub scene: SceneConfig,
    pub seed: u64,
}

impl Default for HarvestConfig {
    fn default() -> Self {
        HarvestConfig {
            pairs_per_workspace: 20,
            expert: PlannerConfig {
                step_size: 0.5,
                max_iters: 6000,
                ..Default::default()
            },
            refine_iters: 2000,
            scene: SceneConfig::default(),
            seed: 0,
        }
    }
}

/// Best expert path for one generated task.
#[derive(Clone, Debug)]
pub struct ExpertPath<T> {
    pub workspace_id: String,
    pub split: Split,
    pub task: PlanningTask<T>,
    pub path: Path<T>,
    pub cost: T,
}

#[derive(Clone, Debug)]
pub struct HarvestReport<T> {
    pub paths: Vec<ExpertPath<T>>,
    /// Ids of tasks the expert did not solve.
    pub dropped: Vec<String>,
    /// Workspaces whose solve rate fell below one half.
    pub low_solve_rate: Vec<String>,
}

/// Workspace with its identifier and split.
#[derive(Clone, Debug)]
pub struct SceneEntry<T> {
    pub id: String,
    pub split: Split,
    pub workspace: Arc<Workspace<T>>,
}

/// Runs the expert RRT* on `pairs_per_workspace` random tasks per scene, in
/// parallel. Results are ordered by (scene, pair) and independent of the
/// thread count.
pub fn harvest_expert_paths<T: Real>(scenes: &[SceneEntry<T>], cfg: &HarvestConfig) -> Result<HarvestReport<T>> {
    cfg.expert.validate()?;
    cfg.scene.validate()?;
    let jobs: Vec<(usize, usize)> = (0..scenes.len())
        .flat_map(|w| (0..cfg.pairs_per_workspace).map(move |p| (w, p)))
        .collect();
    let results: Vec<Result<(usize, String, Option<ExpertPath<T>>)>> = jobs
        .par_iter()
        .map(|&(w, p)| {
            let scene = &scenes[w];
            let seed = derive_seed(cfg.seed, &[w as u64, p as u64]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let id = format!("{}-p{p:03}", scene.id);
            let task = generate_task(&scene.workspace, &cfg.scene, id.clone(), &mut rng)?;
            let pcfg = cfg.expert.with_seed(seed);
            let mut sampler = UniformSampler {
                goal_bias: pcfg.goal_bias,
            };
            let stop = StopRule {
                iters_after_solution: Some(cfg.refine_iters),
                ..Default::default()
            };
            let res = plan_with(&task, &pcfg, &mut sampler, &stop, "expert")?;
            Ok((
                w,
                id,
                res.path.map(|path| ExpertPath {
                    workspace_id: scene.id.clone(),
                    split: scene.split,
                    cost: path.cost(),
                    path,
                    task,
                }),
            ))
        })
        .collect();

    let mut report = HarvestReport {
        paths: Vec::new(),
        dropped: Vec::new(),
        low_solve_rate: Vec::new(),
    };
    let mut solved = vec![0usize; scenes.len()];
    for r in results {
        let (w, id, path) = r?;
        match path {
            Some(p) => {
                solved[w] += 1;
                report.paths.push(p);
            }
            None => {
                log::info!("expert did not solve {id}; dropped");
                report.dropped.push(id);
            }
        }
    }
    for (scene, &n) in scenes.iter().zip(&solved) {
        if cfg.pairs_per_workspace > 0 && 2 * n < cfg.pairs_per_workspace {
            log::warn!("workspace {}: expert solved {n}/{} tasks", scene.id, cfg.pairs_per_workspace);
            report.low_solve_rate.push(scene.id.clone());
        }
    }
    Ok(report)
}

/// One supervised step: given the environment, goal and the expert prefix
/// `x_0..x_k`, predict `x_{k+1}`. All coordinates are normalized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TrainingExample<T> {
    pub workspace_id: String,
    pub split: Split,
    pub env: Vec<T>,
    pub goal: Vec<T>,
    pub prefix: Vec<Vec<T>>,
    pub target: Vec<T>,
}

/// Teacher-forcing examples: a path of `n + 1` states gives `n` examples.
pub fn explode_examples<T: Real>(paths: &[ExpertPath<T>], max_obstacles: usize) -> Result<Vec<TrainingExample<T>>> {
    if paths.is_empty() {
        return Err(Error::invalid("no expert paths to build examples from"));
    }
    let mut envs: BTreeMap<&str, Vec<T>> = BTreeMap::new();
    let mut out = Vec::new();
    for e in paths {
        let ws = &e.task.workspace;
        if !envs.contains_key(e.workspace_id.as_str()) {
            envs.insert(&e.workspace_id, EnvVector::from_workspace(ws, max_obstacles)?.values);
        }
        let env = &envs[e.workspace_id.as_str()];
        let goal = ws.normalize(&e.task.goal_center);
        let states: Vec<Vec<T>> = e.path.states.iter().map(|s| ws.normalize(s)).collect();
        for k in 0..states.len() - 1 {
            out.push(TrainingExample {
                workspace_id: e.workspace_id.clone(),
                split: e.split,
                env: env.clone(),
                goal: goal.clone(),
                prefix: states[..=k].to_vec(),
                target: states[k + 1].clone(),
            });
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "")]
struct HeaderLine {
    manifest: DatasetManifest,
}

/// Newline-delimited JSON: a manifest line, then one example per line.
pub fn write_dataset<T: Real, W: Write>(mut w: W, manifest: &DatasetManifest, examples: &[TrainingExample<T>]) -> Result<()> {
    let io = |e| Error::io("<dataset>", e);
    serde_json::to_writer(&mut w, &HeaderLine {
        manifest: manifest.clone(),
    })?;
    w.write_all(b"\n").map_err(io)?;
    for ex in examples {
        serde_json::to_writer(&mut w, ex)?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_dataset<T: Real, R: BufRead>(r: R) -> Result<(DatasetManifest, Vec<TrainingExample<T>>)> {
    let mut manifest = None;
    let mut examples = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<dataset>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |e: serde_json::Error| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        };
        if manifest.is_none() {
            let h: HeaderLine = serde_json::from_str(&line).map_err(parse_err)?;
            h.manifest.validate()?;
            manifest = Some(h.manifest);
        } else {
            examples.push(serde_json::from_str(&line).map_err(parse_err)?);
        }
    }
    let manifest = manifest.ok_or_else(|| Error::Parse {
        line: 1,
        message: "missing manifest line".into(),
    })?;
    Ok((manifest, examples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::scenes::generate_workspaces;
    use crate::world::State;

    fn scenes(n: usize) -> Vec<SceneEntry<f64>> {
        let cfg = SceneConfig::default();
        generate_workspaces::<f64>(&cfg, n, 11)
            .unwrap()
            .into_iter()
            .enumerate()
            .map(|(i, ws)| SceneEntry {
                id: format!("ws{i:03}"),
                split: if i == 0 { Split::Validation } else { Split::Train },
                workspace: Arc::new(ws),
            })
            .collect()
    }

    fn quick() -> HarvestConfig {
        HarvestConfig {
            pairs_per_workspace: 3,
            refine_iters: 200,
            ..Default::default()
        }
    }

    #[test]
    fn harvested_paths_are_feasible_and_costed() {
        let report = harvest_expert_paths(&scenes(2), &quick()).unwrap();
        assert_eq!(report.paths.len() + report.dropped.len(), 6);
        for e in &report.paths {
            let ws = &e.task.workspace;
            assert_eq!(e.path.first(), &e.task.x_init);
            assert!(e.task.in_goal(e.path.last()));
            assert!(e.path.states.windows(2).all(|w| !ws.segment_collides(&w[0], &w[1])));
            assert!((e.cost - e.path.cost()).abs() < 1e-12);
        }
        let again = harvest_expert_paths(&scenes(2), &quick()).unwrap();
        let costs = |r: &HarvestReport<f64>| r.paths.iter().map(|p| p.cost).collect::<Vec<_>>();
        assert_eq!(costs(&report), costs(&again));
    }

    #[test]
    fn explode_counts_and_targets() {
        let ws = Arc::new(Workspace::empty_cube(2, 0.0, 10.0).unwrap());
        let task = PlanningTask::new("t", ws, State(vec![1.0, 1.0]), State(vec![5.0, 1.0]), 0.5).unwrap();
        let path = Path::new((0..4).map(|i| State(vec![1.0 + i as f64 * 1.2, 1.0])).collect());
        let e = ExpertPath {
            workspace_id: "w".into(),
            split: Split::Train,
            cost: path.cost(),
            path,
            task,
        };
        let ex = explode_examples(&[e.clone(), e], 4).unwrap();
        assert_eq!(ex.len(), 6);
        assert_eq!(ex[0].prefix, vec![vec![-0.8, -0.8]]);
        assert_eq!(ex[0].target, ex[1].prefix[1]);
        for x in &ex {
            assert_eq!(x.env.len(), 16);
        }
        assert!(explode_examples::<f64>(&[], 4).is_err());
    }

    #[test]
    fn dataset_roundtrip_and_bad_lines() {
        let report = harvest_expert_paths(&scenes(2), &quick()).unwrap();
        let ex = explode_examples(&report.paths, 8).unwrap();
        let manifest = DatasetManifest {
            train_workspaces: vec!["ws001".into()],
            validation_workspaces: vec!["ws000".into()],
            pairs_per_workspace: 3,
            expert: quick().expert,
            refine_iters: 200,
            scene: SceneConfig::default(),
            max_obstacles: 8,
            seed: 0,
        };
        let mut buf = Vec::new();
        write_dataset(&mut buf, &manifest, &ex).unwrap();
        let (m, back): (_, Vec<TrainingExample<f64>>) = read_dataset(&buf[..]).unwrap();
        assert_eq!(m, manifest);
        assert_eq!(back, ex);
        let mut text = String::from_utf8(buf).unwrap();
        text.push_str("{not json}\n");
        let lines = text.lines().count();
        match read_dataset::<f64, _>(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, lines),
            other => panic!("{other:?}"),
        }
        let overlap = DatasetManifest {
            validation_workspaces: vec!["ws001".into()],
            ..manifest
        };
        assert!(overlap.validate().is_err());
    }
}
