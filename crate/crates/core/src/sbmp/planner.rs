//! RRT* / Informed-RRT* driven by a pluggable sampler.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::informed::{sample_in_frame, InformedFrame};
use super::primitives::{choose_parent, near_set, rewire, steer};
use super::tree::{Path, PlanningTree};
use crate::error::{Error, Result};
use crate::metrics::{MetricsRecord, TracePoint};
use crate::scalar::{distance, Real};
use crate::world::{PlanningTask, State};

pub type PlannerRng = ChaCha8Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub step_size: f64,
    pub max_iters: usize,
    pub near_gamma: f64,
    /// Probability of sampling the goal center; uniform sampling only.
    pub goal_bias: f64,
    pub rng_seed: u64,
    pub time_budget: Option<f64>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            step_size: 1.0,
            max_iters: 5000,
            near_gamma: 20.0,
            goal_bias: 0.05,
            rng_seed: 0,
            time_budget: None,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::Config("step_size must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be positive".into()));
        }
        if !(self.near_gamma > 0.0) {
            return Err(Error::Config("near_gamma must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.goal_bias) {
            return Err(Error::Config("goal_bias must lie in [0, 1)".into()));
        }
        if let Some(t) = self.time_budget {
            if !(t > 0.0) {
                return Err(Error::Config("time_budget must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        PlannerConfig {
            rng_seed: seed,
            ..self.clone()
        }
    }
}

/// Early-termination conditions layered on top of the iteration and time
/// budgets.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StopRule {
    pub at_first_solution: bool,
    /// Stop as soon as the best cost is at or below this value.
    pub cost_at_most: Option<f64>,
    /// Stop this many iterations after the first solution.
    pub iters_after_solution: Option<usize>,
}

/// Everything a sampler may look at when proposing the next state.
pub struct SampleContext<'a, T: Real> {
    pub task: &'a PlanningTask<T>,
    pub tree: &'a PlanningTree<T>,
    /// Most recently added node; its root path is the current tip path.
    pub tip: Option<usize>,
    pub best_cost: Option<T>,
}

impl<T: Real> SampleContext<'_, T> {
    /// Root-to-tip path (just the root before anything was added).
    pub fn tip_path(&self) -> Path<T> {
        self.tree.path_to(self.tip.unwrap_or(0))
    }
}

/// Source of candidate states. Implementations must return states of the
/// task dimension that lie inside the workspace bounds.
pub trait Sampler<T: Real> {
    fn sample(&mut self, ctx: &SampleContext<'_, T>, rng: &mut PlannerRng) -> State<T>;
}

/// Uniform over the bounds, with goal biasing.
#[derive(Clone, Debug)]
pub struct UniformSampler {
    pub goal_bias: f64,
}

impl<T: Real> Sampler<T> for UniformSampler {
    fn sample(&mut self, ctx: &SampleContext<'_, T>, rng: &mut PlannerRng) -> State<T> {
        if self.goal_bias > 0.0 && rng.gen::<f64>() < self.goal_bias {
            return ctx.task.goal_center.clone();
        }
        ctx.task.workspace.sample_uniform(rng)
    }
}

/// Uniform until a solution exists, then restricted to the informed set.
///
/// The ellipsoid's foci are the start and the goal *center*; a path of cost
/// `J` into the goal ball bounds any improving state by a focal sum of
/// `J + goal_radius`, which is the diameter used.
#[derive(Clone, Debug)]
pub struct InformedSampler<T> {
    uniform: UniformSampler,
    frame: Option<InformedFrame<T>>,
}

impl<T: Real> InformedSampler<T> {
    pub fn new(goal_bias: f64) -> Self {
        InformedSampler {
            uniform: UniformSampler { goal_bias },
            frame: None,
        }
    }

    pub fn diameter_for(task: &PlanningTask<T>, best_cost: T) -> T {
        best_cost + task.goal_radius
    }
}

impl<T: Real> Sampler<T> for InformedSampler<T> {
    fn sample(&mut self, ctx: &SampleContext<'_, T>, rng: &mut PlannerRng) -> State<T> {
        match ctx.best_cost {
            None => self.uniform.sample(ctx, rng),
            Some(best) => {
                let frame = self.frame.get_or_insert_with(|| InformedFrame::for_task(ctx.task));
                let c = Self::diameter_for(ctx.task, best).max(frame.c_min());
                sample_in_frame(frame, ctx.task, c, rng).expect("informed set contains the start")
            }
        }
    }
}

/// Result of the nearest + steer + collision-check step.
#[derive(Clone, Debug)]
pub struct Probe<T> {
    pub nearest: usize,
    pub x_new: State<T>,
    pub collides: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Extension {
    /// Steered edge hit an obstacle (one sampling failure).
    Collided,
    /// Sample coincided with an existing node; nothing added.
    Degenerate,
    Added { index: usize, reached_goal: bool, rewired: usize },
}

/// Growing RRT* tree plus solution bookkeeping. Shared by the classical
/// planners and the learned planner.
pub struct Search<'t, T: Real> {
    task: &'t PlanningTask<T>,
    step: T,
    gamma: T,
    tree: PlanningTree<T>,
    goal_nodes: Vec<usize>,
    best: Option<(usize, T)>,
    tip: Option<usize>,
    failures: usize,
    iterations: usize,
    trace: Vec<TracePoint>,
    started: Instant,
    first_solution_time: Option<f64>,
    first_solution_iter: Option<usize>,
}

impl<'t, T: Real> Search<'t, T> {
    pub fn new(task: &'t PlanningTask<T>, cfg: &PlannerConfig) -> Self {
        Search {
            task,
            step: T::lit(cfg.step_size),
            gamma: T::lit(cfg.near_gamma),
            tree: PlanningTree::new(task.x_init.clone()),
            goal_nodes: Vec::new(),
            best: None,
            tip: None,
            failures: 0,
            iterations: 0,
            trace: Vec::new(),
            started: Instant::now(),
            first_solution_time: None,
            first_solution_iter: None,
        }
    }

    pub fn task(&self) -> &PlanningTask<T> {
        self.task
    }

    pub fn tree(&self) -> &PlanningTree<T> {
        &self.tree
    }

    pub fn into_tree(self) -> PlanningTree<T> {
        self.tree
    }

    pub fn context(&self) -> SampleContext<'_, T> {
        SampleContext {
            task: self.task,
            tree: &self.tree,
            tip: self.tip,
            best_cost: self.best_cost(),
        }
    }

    pub fn best_cost(&self) -> Option<T> {
        self.best.map(|(_, c)| c)
    }

    pub fn best_index(&self) -> Option<usize> {
        self.best.map(|(i, _)| i)
    }

    pub fn best_path(&self) -> Option<Path<T>> {
        self.best.map(|(i, _)| self.tree.path_to(i))
    }

    pub fn tip(&self) -> Option<usize> {
        self.tip
    }

    pub fn failures(&self) -> usize {
        self.failures
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn trace(&self) -> &[TracePoint] {
        &self.trace
    }

    pub fn elapsed(&self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }

    pub fn first_solution_iter(&self) -> Option<usize> {
        self.first_solution_iter
    }

    /// Counts one planner iteration.
    pub fn tick(&mut self) {
        self.iterations += 1;
    }

    pub fn record_failure(&mut self) {
        self.failures += 1;
    }

    /// Nearest node, steered state and collision verdict for a sample.
    pub fn probe(&self, sample: &[T]) -> Probe<T> {
        let nearest = self.tree.nearest(sample);
        let x_new = steer(self.tree.state(nearest), sample, self.step);
        let collides = self.task.workspace.segment_collides(self.tree.state(nearest), &x_new);
        Probe {
            nearest,
            x_new,
            collides,
        }
    }

    /// Adds a collision-free probe result: near set, best parent, rewire.
    pub fn insert(&mut self, probe: Probe<T>) -> Extension {
        debug_assert!(!probe.collides);
        if distance(self.tree.state(probe.nearest), &probe.x_new) == T::zero() {
            return Extension::Degenerate;
        }
        let near = near_set(&self.tree, &probe.x_new, self.gamma, self.step);
        let ws = &self.task.workspace;
        let (parent, cost) = match choose_parent(&self.tree, &near, &probe.x_new, ws) {
            Some(p) => p,
            None => return Extension::Collided,
        };
        let reached_goal = self.task.in_goal(&probe.x_new);
        let index = self.tree.push(probe.x_new, parent, cost);
        let rewired = rewire(&mut self.tree, index, &near, ws);
        self.tip = Some(index);
        if reached_goal {
            self.goal_nodes.push(index);
        }
        self.refresh_best();
        Extension::Added {
            index,
            reached_goal,
            rewired,
        }
    }

    /// Probe, count a failure on collision, otherwise insert.
    pub fn extend(&mut self, sample: &[T]) -> Extension {
        let probe = self.probe(sample);
        if probe.collides {
            self.failures += 1;
            return Extension::Collided;
        }
        self.insert(probe)
    }

    fn refresh_best(&mut self) {
        let mut best: Option<(usize, T)> = None;
        for &g in &self.goal_nodes {
            let c = self.tree.cost(g);
            if best.is_none_or(|(_, b)| c < b) {
                best = Some((g, c));
            }
        }
        let improved = match (self.best, best) {
            (None, Some(_)) => true,
            (Some((_, old)), Some((_, new))) => new < old,
            _ => false,
        };
        self.best = best;
        if improved {
            if self.first_solution_time.is_none() {
                self.first_solution_time = Some(self.elapsed());
                self.first_solution_iter = Some(self.iterations);
            }
            self.trace.push(TracePoint {
                nodes: self.tree.len(),
                cost: best.expect("improved implies solution").1.as_f64(),
            });
        }
    }

    pub fn should_stop(&self, cfg: &PlannerConfig, stop: &StopRule) -> bool {
        if self.iterations >= cfg.max_iters {
            return true;
        }
        if let Some(budget) = cfg.time_budget {
            if self.elapsed() >= budget {
                return true;
            }
        }
        if let Some(best) = self.best_cost() {
            if stop.at_first_solution {
                return true;
            }
            if let Some(limit) = stop.cost_at_most {
                if best.as_f64() <= limit {
                    return true;
                }
            }
            if let (Some(n), Some(first)) = (stop.iters_after_solution, self.first_solution_iter) {
                if self.iterations >= first + n {
                    return true;
                }
            }
        }
        false
    }

    pub fn metrics(&self, planner: &str, seed: u64) -> MetricsRecord {
        let mut m = MetricsRecord::new(self.task.id.clone(), planner, seed);
        m.success = self.best.is_some();
        m.time_s = self.elapsed();
        m.nodes = self.tree.len();
        m.sampling_failures = self.failures;
        m.cost = self.best_cost().map(|c| c.as_f64());
        m.first_solution_time = self.first_solution_time;
        m.iterations = self.iterations;
        m
    }

    /// Runs the standard sample-extend loop until a budget or stop rule ends it.
    pub fn run<S: Sampler<T> + ?Sized>(
        &mut self,
        cfg: &PlannerConfig,
        stop: &StopRule,
        sampler: &mut S,
        rng: &mut PlannerRng,
        mut observe: impl FnMut(&Self, &Extension),
    ) {
        while !self.should_stop(cfg, stop) {
            let x = sampler.sample(&self.context(), rng);
            self.tick();
            let ext = self.extend(&x);
            observe(self, &ext);
        }
    }
}

/// Output of a planner run.
#[derive(Clone, Debug)]
pub struct PlanResult<T> {
    pub path: Option<Path<T>>,
    pub tree: PlanningTree<T>,
    pub metrics: MetricsRecord,
    pub trace: Vec<TracePoint>,
}

pub fn plan_with<T: Real, S: Sampler<T> + ?Sized>(
    task: &PlanningTask<T>,
    cfg: &PlannerConfig,
    sampler: &mut S,
    stop: &StopRule,
    label: &str,
) -> Result<PlanResult<T>> {
    cfg.validate()?;
    let mut rng = PlannerRng::seed_from_u64(cfg.rng_seed);
    let mut search = Search::new(task, cfg);
    search.run(cfg, stop, sampler, &mut rng, |_, _| {});
    let metrics = search.metrics(label, cfg.rng_seed);
    let trace = search.trace().to_vec();
    let path = search.best_path();
    Ok(PlanResult {
        path,
        tree: search.into_tree(),
        metrics,
        trace,
    })
}

/// RRT* with the given sampler, running the whole iteration budget.
pub fn rrt_star<T: Real, S: Sampler<T> + ?Sized>(
    task: &PlanningTask<T>,
    cfg: &PlannerConfig,
    sampler: &mut S,
) -> Result<PlanResult<T>> {
    plan_with(task, cfg, sampler, &StopRule::default(), "RRT*")
}

/// Informed-RRT*: uniform (goal-biased) sampling until the first solution,
/// then the prolate hyperspheroid of the current best cost.
pub fn irrt_star<T: Real>(task: &PlanningTask<T>, cfg: &PlannerConfig) -> Result<PlanResult<T>> {
    let mut sampler = InformedSampler::new(cfg.goal_bias);
    plan_with(task, cfg, &mut sampler, &StopRule::default(), "IRRT*")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{BoxObstacle, Workspace};
    use std::sync::Arc;

    fn open_task(start: &[f64], goal: &[f64], radius: f64) -> PlanningTask<f64> {
        let ws = Arc::new(Workspace::empty_cube(start.len(), 0.0, 10.0).unwrap());
        PlanningTask::new("open", ws, State::from_f64(start), State::from_f64(goal), radius).unwrap()
    }

    #[test]
    fn one_step_goal_is_solved_quickly() {
        let task = open_task(&[5.0, 5.0], &[5.8, 5.0], 0.1);
        let cfg = PlannerConfig {
            max_iters: 200,
            ..Default::default()
        };
        let stop = StopRule {
            at_first_solution: true,
            ..Default::default()
        };
        let res = plan_with(&task, &cfg, &mut UniformSampler { goal_bias: 0.05 }, &stop, "RRT*").unwrap();
        let path = res.path.unwrap();
        let dist = task.c_min() - task.goal_radius;
        assert!(path.cost() >= dist - 1e-12 && path.cost() <= task.c_min() + cfg.step_size);
        assert!(res.metrics.iterations < 200);
    }

    #[test]
    fn enclosed_goal_fails_at_budget() {
        let walls = vec![
            BoxObstacle::new(vec![8.0, 6.5], vec![1.5, 0.25]).unwrap(),
            BoxObstacle::new(vec![8.0, 9.5], vec![1.5, 0.25]).unwrap(),
            BoxObstacle::new(vec![6.5, 8.0], vec![0.25, 1.5]).unwrap(),
            BoxObstacle::new(vec![9.5, 8.0], vec![0.25, 1.5]).unwrap(),
        ];
        let ws = Arc::new(Workspace::new(vec![(0.0, 10.0); 2], walls).unwrap());
        let task = PlanningTask::new("boxed", ws, State::from_f64(&[1.0, 1.0]), State::from_f64(&[8.0, 8.0]), 0.3)
            .unwrap();
        let cfg = PlannerConfig {
            max_iters: 1500,
            ..Default::default()
        };
        let res = rrt_star(&task, &cfg, &mut UniformSampler { goal_bias: 0.05 }).unwrap();
        assert!(res.path.is_none());
        assert!(!res.metrics.success);
        assert_eq!(res.metrics.iterations, 1500);
        assert!(res.metrics.cost.is_none());
        assert!(res.metrics.sampling_failures > 0);
    }

    #[test]
    fn failures_count_collided_extensions() {
        let wall = BoxObstacle::new(vec![5.0, 5.0], vec![0.5, 4.0]).unwrap();
        let ws = Arc::new(Workspace::new(vec![(0.0, 10.0); 2], vec![wall]).unwrap());
        let task =
            PlanningTask::new("w", ws, State::from_f64(&[1.0, 5.0]), State::from_f64(&[9.0, 5.0]), 0.5).unwrap();
        let cfg = PlannerConfig {
            max_iters: 800,
            ..Default::default()
        };
        let mut rng = PlannerRng::seed_from_u64(9);
        let mut search = Search::new(&task, &cfg);
        let mut collided = 0;
        let mut sampler = UniformSampler { goal_bias: 0.05 };
        search.run(&cfg, &StopRule::default(), &mut sampler, &mut rng, |_, e| {
            if *e == Extension::Collided {
                collided += 1;
            }
        });
        assert_eq!(search.failures(), collided);
        assert!(collided > 0);
    }

    #[test]
    fn best_cost_is_monotone_and_tree_consistent() {
        let task = open_task(&[1.0, 1.0], &[9.0, 9.0], 0.5);
        let cfg = PlannerConfig {
            max_iters: 1500,
            rng_seed: 4,
            ..Default::default()
        };
        let mut rng = PlannerRng::seed_from_u64(cfg.rng_seed);
        let mut search = Search::new(&task, &cfg);
        let mut last = f64::INFINITY;
        let mut sampler = UniformSampler { goal_bias: 0.05 };
        search.run(&cfg, &StopRule::default(), &mut sampler, &mut rng, |s, _| {
            if let Some(c) = s.best_cost() {
                assert!(c <= last);
                last = c;
            }
        });
        search.tree().check_invariants(1e-9).unwrap();
        let path = search.best_path().unwrap();
        assert!((path.cost() - search.best_cost().unwrap()).abs() < 1e-9);
    }

    #[test]
    fn determinism() {
        let task = open_task(&[1.0, 1.0], &[9.0, 9.0], 0.5);
        let cfg = PlannerConfig {
            max_iters: 600,
            rng_seed: 12,
            ..Default::default()
        };
        let a = irrt_star(&task, &cfg).unwrap();
        let b = irrt_star(&task, &cfg).unwrap();
        assert_eq!(a.path, b.path);
        assert_eq!(a.metrics.without_timing(), b.metrics.without_timing());
        assert_eq!(a.tree.len(), b.tree.len());
        for i in 0..a.tree.len() {
            assert_eq!(a.tree.state(i), b.tree.state(i));
            assert_eq!(a.tree.node(i).parent, b.tree.node(i).parent);
        }
    }

    #[test]
    fn informed_prefix_matches_rrt_star() {
        let task = open_task(&[1.0, 1.0], &[9.0, 9.0], 0.5);
        let cfg = PlannerConfig {
            max_iters: 3000,
            rng_seed: 5,
            ..Default::default()
        };
        let stop = StopRule {
            at_first_solution: true,
            ..Default::default()
        };
        let a = plan_with(&task, &cfg, &mut UniformSampler { goal_bias: cfg.goal_bias }, &stop, "RRT*").unwrap();
        let b = plan_with(&task, &cfg, &mut InformedSampler::new(cfg.goal_bias), &stop, "IRRT*").unwrap();
        assert_eq!(a.path, b.path);
        assert_eq!(a.tree.len(), b.tree.len());
    }

    #[test]
    fn config_validation() {
        assert!(PlannerConfig { step_size: 0.0, ..Default::default() }.validate().is_err());
        assert!(PlannerConfig { goal_bias: 1.0, ..Default::default() }.validate().is_err());
        assert!(PlannerConfig::default().validate().is_ok());
    }
}
