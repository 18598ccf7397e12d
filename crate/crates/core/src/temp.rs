//! The learned planner: a transformer-guided RRT* growth phase that stops at
//! the first goal-reaching node, optionally followed by random-sampling
//! refinement.

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{MetricsRecord, TracePoint};
use crate::model::ModelBundle;
use crate::mpt::{extract_attention, AttentionEntry, AttentionOptions, MptSession};
use crate::sbmp::{
    Extension, InformedSampler, Path, PlannerConfig, PlannerRng, PlanningTree, SampleContext, Sampler, Search, StopRule,
    UniformSampler,
};
use crate::scalar::Real;
use crate::world::{PlanningTask, State};

pub const PLANNER_LABEL: &str = "TEMP";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TempConfig {
    /// Step size, iteration budget (guided phase), near-radius constant and seed.
    pub planner: PlannerConfig,
    /// Refinement iterations after the first solution; 0 disables refinement.
    pub cp_iters: usize,
    /// Optional wall-clock cap on refinement, in seconds.
    pub cp_time_s: Option<f64>,
    /// Restrict refinement samples to the informed set.
    pub cp_informed: bool,
    /// Standard deviation of the Gaussian added to each prediction, as a
    /// fraction of each axis span. 0 disables it.
    pub noise_frac: f64,
    /// Upper bound on uniform resamples within one iteration when the guided
    /// extension collides.
    pub max_fallback_retries: usize,
    pub attention: AttentionOptions,
}

impl Default for TempConfig {
    fn default() -> Self {
        TempConfig {
            planner: PlannerConfig::default(),
            cp_iters: 0,
            cp_time_s: None,
            cp_informed: false,
            noise_frac: 0.02,
            max_fallback_retries: 10_000,
            attention: AttentionOptions::default(),
        }
    }
}

impl TempConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        TempConfig {
            planner: self.planner.with_seed(seed),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.planner.validate()?;
        if !(self.noise_frac >= 0.0 && self.noise_frac.is_finite()) {
            return Err(Error::Config("noise_frac must be a nonnegative number".into()));
        }
        if self.max_fallback_retries == 0 {
            return Err(Error::Config("max_fallback_retries must be positive".into()));
        }
        if let Some(t) = self.cp_time_s {
            if !(t > 0.0) {
                return Err(Error::Config("cp_time_s must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    ApFailed,
    ApSolved,
    CpRefined,
}

/// Proposal source for the guided phase.
pub trait Guide<T: Real> {
    /// Next sample given the search state and the current root-to-tip
    /// path, plus the attention entry of the call when the guide has one.
    fn propose(
        &mut self,
        ctx: &SampleContext<'_, T>,
        sigma_prime: &Path<T>,
        rng: &mut PlannerRng,
    ) -> Result<(State<T>, Option<AttentionEntry>)>;
}

/// Transformer guide with seeded exploration noise.
pub struct MptGuide<'m, T: Real> {
    session: MptSession<'m, T>,
    noise_frac: f64,
    options: AttentionOptions,
}

impl<'m, T: Real> MptGuide<'m, T> {
    pub fn new(model: &'m ModelBundle<T>, task: &PlanningTask<T>, cfg: &TempConfig) -> Result<Self> {
        Ok(MptGuide {
            session: MptSession::new(model, task)?,
            noise_frac: cfg.noise_frac,
            options: cfg.attention,
        })
    }
}

impl<T: Real> Guide<T> for MptGuide<'_, T> {
    fn propose(
        &mut self,
        ctx: &SampleContext<'_, T>,
        sigma_prime: &Path<T>,
        rng: &mut PlannerRng,
    ) -> Result<(State<T>, Option<AttentionEntry>)> {
        let task = ctx.task;
        let pred = self.session.predict(task, sigma_prime)?;
        let entry = extract_attention(&pred.attention, &pred.roles, self.options)?;
        let mut x = pred.state;
        if self.noise_frac > 0.0 {
            let ws = &task.workspace;
            for (i, v) in x.0.iter_mut().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                *v = *v + T::lit(z * self.noise_frac) * ws.span(i);
            }
            ws.clamp(&mut x.0);
        }
        Ok((x, Some(entry)))
    }
}

/// Root-to-node path through the current parent links.
pub fn sigma_prime_update<T: Real>(tree: &PlanningTree<T>, new_index: usize) -> Path<T> {
    tree.path_to(new_index)
}

#[derive(Clone, Debug)]
pub struct PlanOutcome<T> {
    pub path: Option<Path<T>>,
    pub tree: PlanningTree<T>,
    pub metrics: MetricsRecord,
    /// Guided-phase metrics (equal to `metrics` when refinement did not run).
    pub ap_metrics: MetricsRecord,
    pub attention: Vec<AttentionEntry>,
    pub phase_reached: Phase,
    /// Best cost, infinite when unsolved.
    pub j_best: f64,
    pub trace: Vec<TracePoint>,
}

/// Serialized form of a [`PlanOutcome`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub task_id: String,
    pub phase_reached: Phase,
    pub cost: Option<f64>,
    pub time_s: f64,
    pub nodes: usize,
    pub sampling_failures: usize,
    pub path: Option<Vec<Vec<f64>>>,
    pub attention_csv_ref: Option<String>,
}

impl<T: Real> PlanOutcome<T> {
    pub fn summary(&self, attention_csv_ref: Option<String>) -> PlanSummary {
        PlanSummary {
            task_id: self.metrics.task_id.clone(),
            phase_reached: self.phase_reached,
            cost: self.metrics.cost,
            time_s: self.metrics.time_s,
            nodes: self.metrics.nodes,
            sampling_failures: self.metrics.sampling_failures,
            path: self.path.as_ref().map(|p| p.states.iter().map(|s| s.to_f64()).collect()),
            attention_csv_ref,
        }
    }
}

/// Per-iteration view handed to observers of the guided phase.
pub struct ApStep<'a, 's, T: Real> {
    pub search: &'a Search<'s, T>,
    pub sigma_prime: &'a Path<T>,
    /// Colliding probes during this iteration (guided one included).
    pub failures: usize,
}

struct ApRun<'t, T: Real> {
    search: Search<'t, T>,
    rng: PlannerRng,
    attention: Vec<AttentionEntry>,
    solved: bool,
}

fn run_ap<'t, T: Real, G: Guide<T> + ?Sized>(
    task: &'t PlanningTask<T>,
    cfg: &TempConfig,
    guide: &mut G,
    mut observe: impl FnMut(&ApStep<'_, 't, T>),
) -> Result<ApRun<'t, T>> {
    cfg.validate()?;
    let mut rng = PlannerRng::seed_from_u64(cfg.planner.rng_seed);
    let mut search = Search::new(task, &cfg.planner);
    let mut sigma_prime = sigma_prime_update(search.tree(), 0);
    let mut attention = Vec::new();
    let mut solved = false;
    let mut uniform = UniformSampler { goal_bias: 0.0 };
    while search.iterations() < cfg.planner.max_iters
        && cfg.planner.time_budget.is_none_or(|b| search.elapsed() < b)
    {
        search.tick();
        let (x_sample, entry) = guide.propose(&search.context(), &sigma_prime, &mut rng)?;
        if let Some(e) = entry {
            attention.push(e);
        }
        let mut probe = search.probe(&x_sample);
        let mut failures = 0;
        while probe.collides && failures < cfg.max_fallback_retries {
            search.record_failure();
            failures += 1;
            let x = uniform.sample(&search.context(), &mut rng);
            probe = search.probe(&x);
        }
        if probe.collides {
            search.record_failure();
            failures += 1;
        } else if let Extension::Added { index, reached_goal, .. } = search.insert(probe) {
            sigma_prime = sigma_prime_update(search.tree(), index);
            if reached_goal {
                solved = true;
            }
        }
        observe(&ApStep {
            search: &search,
            sigma_prime: &sigma_prime,
            failures,
        });
        if solved {
            break;
        }
    }
    Ok(ApRun {
        search,
        rng,
        attention,
        solved,
    })
}

fn finish<T: Real>(
    search: Search<'_, T>,
    attention: Vec<AttentionEntry>,
    phase: Phase,
    ap_metrics: Option<MetricsRecord>,
    seed: u64,
) -> PlanOutcome<T> {
    let metrics = search.metrics(PLANNER_LABEL, seed);
    let path = match phase {
        Phase::ApFailed => None,
        _ => search.best_path(),
    };
    let j_best = metrics.cost.unwrap_or(f64::INFINITY);
    let trace = search.trace().to_vec();
    PlanOutcome {
        path,
        ap_metrics: ap_metrics.unwrap_or_else(|| metrics.clone()),
        metrics,
        attention,
        phase_reached: phase,
        j_best,
        trace,
        tree: search.into_tree(),
    }
}

/// Guided phase with an arbitrary proposal source. Each iteration takes one
/// proposal, steers from the nearest node, and while that edge collides
/// draws uniform samples (each colliding probe is one sampling failure).
/// Returns at the first node inside the goal region.
pub fn temp_ap_with<T: Real, G: Guide<T> + ?Sized>(
    task: &PlanningTask<T>,
    cfg: &TempConfig,
    guide: &mut G,
    observe: impl FnMut(&ApStep<'_, '_, T>),
) -> Result<PlanOutcome<T>> {
    let run = run_ap(task, cfg, guide, observe)?;
    let phase = if run.solved { Phase::ApSolved } else { Phase::ApFailed };
    Ok(finish(run.search, run.attention, phase, None, cfg.planner.rng_seed))
}

pub fn temp_ap<T: Real>(task: &PlanningTask<T>, cfg: &TempConfig, model: &ModelBundle<T>) -> Result<PlanOutcome<T>> {
    let mut guide = MptGuide::new(model, task, cfg)?;
    temp_ap_with(task, cfg, &mut guide, |_| {})
}

/// Guided phase followed by `cp_iters` iterations of random-sampling RRT*
/// on the same tree.
pub fn temp_full_with<T: Real, G: Guide<T> + ?Sized>(
    task: &PlanningTask<T>,
    cfg: &TempConfig,
    guide: &mut G,
) -> Result<PlanOutcome<T>> {
    let run = run_ap(task, cfg, guide, |_| {})?;
    let seed = cfg.planner.rng_seed;
    if !run.solved {
        return Ok(finish(run.search, run.attention, Phase::ApFailed, None, seed));
    }
    if cfg.cp_iters == 0 {
        return Ok(finish(run.search, run.attention, Phase::ApSolved, None, seed));
    }
    let ApRun {
        mut search,
        mut rng,
        attention,
        ..
    } = run;
    let ap_metrics = search.metrics(PLANNER_LABEL, seed);
    let cp_cfg = PlannerConfig {
        max_iters: search.iterations() + cfg.cp_iters,
        time_budget: cfg.cp_time_s.map(|t| search.elapsed() + t),
        ..cfg.planner.clone()
    };
    let stop = StopRule::default();
    if cfg.cp_informed {
        let mut s = InformedSampler::new(cfg.planner.goal_bias);
        search.run(&cp_cfg, &stop, &mut s, &mut rng, |_, _| {});
    } else {
        let mut s = UniformSampler {
            goal_bias: cfg.planner.goal_bias,
        };
        search.run(&cp_cfg, &stop, &mut s, &mut rng, |_, _| {});
    }
    Ok(finish(search, attention, Phase::CpRefined, Some(ap_metrics), seed))
}

pub fn temp_full<T: Real>(task: &PlanningTask<T>, cfg: &TempConfig, model: &ModelBundle<T>) -> Result<PlanOutcome<T>> {
    let mut guide = MptGuide::new(model, task, cfg)?;
    temp_full_with(task, cfg, &mut guide)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::nn::AttentionConfig;
    use crate::world::{BoxObstacle, Workspace};
    use std::sync::Arc;

    fn small_model() -> ModelBundle<f64> {
        let cfg = ModelConfig {
            attention: AttentionConfig {
                d_model: 8,
                n_heads: 2,
                n_layers: 1,
                d_ffn: 8,
            },
            d_hidden: 8,
            max_obstacles: 4,
            max_seq_len: 16,
            ..Default::default()
        };
        ModelBundle::init(cfg, 1).unwrap()
    }

    fn open_task(start: [f64; 2], goal: [f64; 2]) -> PlanningTask<f64> {
        let ws = Arc::new(Workspace::empty_cube(2, 0.0, 10.0).unwrap());
        PlanningTask::new("open", ws, State(start.to_vec()), State(goal.to_vec()), 0.5).unwrap()
    }

    struct Fixed(Vec<f64>);

    impl Guide<f64> for Fixed {
        fn propose(&mut self, _: &SampleContext<'_, f64>, _: &Path<f64>, _: &mut PlannerRng) -> Result<(State<f64>, Option<AttentionEntry>)> {
            Ok((State(self.0.clone()), None))
        }
    }

    #[test]
    fn goal_one_step_away() {
        let task = open_task([1.0, 1.0], [2.0, 1.0]);
        let cfg = TempConfig::default();
        let out = temp_ap_with(&task, &cfg, &mut Fixed(vec![2.0, 1.0]), |_| {}).unwrap();
        assert_eq!(out.phase_reached, Phase::ApSolved);
        assert!(out.metrics.iterations <= 3);
        let path = out.path.unwrap();
        assert_eq!(path.first(), &task.x_init);
        assert!(task.in_goal(path.last()));
        assert!((out.j_best - path.cost()).abs() < 1e-12);
    }

    #[test]
    fn untrained_model_terminates_with_feasible_paths() {
        let model = small_model();
        let cfg = TempConfig {
            planner: PlannerConfig {
                max_iters: 300,
                ..Default::default()
            },
            noise_frac: 0.2,
            ..Default::default()
        };
        for seed in 0..5 {
            let task = open_task([1.0, 1.0 + seed as f64], [3.0, 2.0 + seed as f64]);
            let out = temp_ap(&task, &cfg.with_seed(seed), &model).unwrap();
            assert_eq!(out.attention.len(), out.metrics.iterations);
            assert!(out.metrics.iterations <= 300);
            if let Some(p) = out.path {
                assert!(task.in_goal(p.last()));
                assert!(p.states.windows(2).all(|w| !task.workspace.segment_collides(&w[0], &w[1])));
            }
        }
    }

    #[test]
    fn cp_zero_matches_ap() {
        let task = open_task([1.0, 1.0], [9.0, 9.0]);
        let cfg = TempConfig::default();
        let goal = vec![9.0, 9.0];
        let a = temp_ap_with(&task, &cfg, &mut Fixed(goal.clone()), |_| {}).unwrap();
        let b = temp_full_with(&task, &cfg, &mut Fixed(goal.clone())).unwrap();
        assert_eq!(a.phase_reached, Phase::ApSolved);
        assert_eq!(a.metrics.without_timing(), b.metrics.without_timing());
        assert_eq!(a.path, b.path);
        let refined = temp_full_with(&task, &TempConfig { cp_iters: 300, ..cfg }, &mut Fixed(goal)).unwrap();
        assert_eq!(refined.phase_reached, Phase::CpRefined);
        assert!(refined.j_best <= a.j_best);
        assert_eq!(refined.ap_metrics.without_timing(), a.metrics.without_timing());
    }

    #[test]
    fn failure_count_matches_trace() {
        let ws = Workspace::new(
            vec![(0.0, 10.0), (0.0, 10.0)],
            vec![BoxObstacle::new(vec![5.0, 5.0], vec![1.0, 4.0]).unwrap()],
        )
        .unwrap();
        let task = PlanningTask::new("wall", Arc::new(ws), State(vec![2.0, 5.0]), State(vec![8.0, 5.0]), 0.5).unwrap();
        let cfg = TempConfig {
            planner: PlannerConfig {
                max_iters: 2000,
                ..Default::default()
            },
            ..Default::default()
        };
        let mut seen = 0;
        let mut sigma_ok = true;
        let out = temp_ap_with(&task, &cfg, &mut Fixed(vec![8.0, 5.0]), |step| {
            seen += step.failures;
            let tip = step.search.tip().unwrap_or(0);
            sigma_ok &= *step.sigma_prime == step.search.tree().path_to(tip);
        })
        .unwrap();
        assert!(out.metrics.sampling_failures > 0);
        assert_eq!(out.metrics.sampling_failures, seen);
        assert!(sigma_ok);
        assert_eq!(out.phase_reached, Phase::ApSolved);
    }

    #[test]
    fn retry_cap_ends_iteration() {
        let ws = Workspace::new(
            vec![(0.0, 10.0), (0.0, 10.0)],
            vec![BoxObstacle::new(vec![5.0, 5.0], vec![1.0, 5.0]).unwrap()],
        )
        .unwrap();
        let task = PlanningTask::new("cut", Arc::new(ws), State(vec![2.0, 5.0]), State(vec![8.0, 5.0]), 0.5).unwrap();
        let cfg = TempConfig {
            planner: PlannerConfig {
                max_iters: 30,
                ..Default::default()
            },
            max_fallback_retries: 3,
            ..Default::default()
        };
        let out = temp_ap_with(&task, &cfg, &mut Fixed(vec![8.0, 5.0]), |_| {}).unwrap();
        assert_eq!(out.phase_reached, Phase::ApFailed);
        assert!(out.path.is_none());
        assert!(out.j_best.is_infinite());
        assert_eq!(out.metrics.iterations, 30);
    }

    #[test]
    fn sigma_prime_follows_parent_links() {
        let mut tree = PlanningTree::new(State(vec![0.0, 0.0]));
        let a = tree.push(State(vec![1.0, 0.0]), 0, 1.0);
        assert_eq!(sigma_prime_update(&tree, a).states.len(), 2);
        let b = tree.push(State(vec![2.0, 0.0]), a, 2.0);
        let c = tree.push(State(vec![2.0, 1.0]), b, 3.0);
        let d = tree.push(State(vec![1.0, 1.0]), 0, 2.0f64.sqrt());
        let e = tree.push(State(vec![3.0, 1.0]), c, 4.0);
        tree.reparent(c, d, 2.0f64.sqrt() + 1.0);
        let p = sigma_prime_update(&tree, e);
        let want: Vec<State<f64>> = [0, d, c, e].iter().map(|&i| tree.state(i).clone()).collect();
        assert_eq!(p.states, want);
        assert_eq!(p.states[0], State(vec![0.0, 0.0]));
    }

    #[test]
    fn summary_json_fields() {
        let task = open_task([1.0, 1.0], [2.0, 1.0]);
        let out = temp_ap_with(&task, &TempConfig::default(), &mut Fixed(vec![2.0, 1.0]), |_| {}).unwrap();
        let v = serde_json::to_value(out.summary(Some("attn.csv".into()))).unwrap();
        for k in ["task_id", "phase_reached", "cost", "time_s", "nodes", "sampling_failures", "path", "attention_csv_ref"] {
            assert!(v.get(k).is_some(), "{k}");
        }
        assert_eq!(v["phase_reached"], "AP_SOLVED");
    }
}
