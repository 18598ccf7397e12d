//! Benchmark harness: matched-cost comparison of the learned planner against
//! RRT* and Informed-RRT*, success-rate and cost-vs-nodes curves, summary
//! tables and plots.

pub mod svg;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path as FsPath, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{MetricsRecord, TracePoint};
use crate::model::ModelBundle;
use crate::mpt::{AttentionRow, TokenRole};
use crate::pipeline::dataset::{harvest_expert_paths, HarvestConfig, SceneEntry, Split};
use crate::sbmp::{plan_with, InformedSampler, Path, PlannerConfig, StopRule, UniformSampler};
use crate::scalar::distance;
use crate::temp::{temp_ap, TempConfig};
use crate::world::PlanningTask;

/// Expert-cost to straight-line ratio at or above which a task is challenging.
pub const CHALLENGING_RATIO: f64 = 1.3;
/// Multiplier on a task's largest observed cost charged to runs that have
/// not solved it yet.
pub const UNSOLVED_PENALTY: f64 = 1.5;
pub const FLAG_TEMP_FAILED: &str = "temp_failed";
pub const FLAG_ABOVE_TOLERANCE: &str = "cost_above_tolerance";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Easy,
    Challenging,
}

impl Difficulty {
    pub fn label(ratio: f64) -> Self {
        if ratio >= CHALLENGING_RATIO {
            Difficulty::Challenging
        } else {
            Difficulty::Easy
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Challenging => "challenging",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PlannerKind {
    #[serde(rename = "TEMP", alias = "temp")]
    Temp,
    #[serde(rename = "RRT*", alias = "rrt_star", alias = "rrt*")]
    RrtStar,
    #[serde(rename = "IRRT*", alias = "irrt_star", alias = "irrt*")]
    IrrtStar,
}

impl PlannerKind {
    pub fn label(self) -> &'static str {
        match self {
            PlannerKind::Temp => "TEMP",
            PlannerKind::RrtStar => "RRT*",
            PlannerKind::IrrtStar => "IRRT*",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "temp" => Some(PlannerKind::Temp),
            "rrt*" | "rrt_star" | "rrtstar" | "rrt-star" => Some(PlannerKind::RrtStar),
            "irrt*" | "irrt_star" | "irrtstar" | "irrt-star" | "informed" => Some(PlannerKind::IrrtStar),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchTask {
    pub task: PlanningTask<f64>,
    pub difficulty: Difficulty,
    pub expert_cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub planners: Vec<PlannerKind>,
    pub seeds: Vec<u64>,
    /// Cost tolerance of the matched-cost comparison.
    pub tau: f64,
    pub temp: TempConfig,
    /// Baseline budget; the seed is replaced per run.
    pub baseline: PlannerConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            planners: vec![PlannerKind::Temp, PlannerKind::RrtStar, PlannerKind::IrrtStar],
            seeds: vec![0],
            tau: 0.05,
            temp: TempConfig::default(),
            baseline: PlannerConfig {
                max_iters: 20_000,
                ..Default::default()
            },
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::Config("tau must be a nonnegative number".into()));
        }
        if self.planners.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("benchmark needs at least one planner and one seed".into()));
        }
        self.temp.validate()?;
        self.baseline.validate()
    }
}

/// Matched-cost acceptance: `cost <= (1 + tau) * temp_cost`, boundary included.
pub fn conforms(cost: f64, temp_cost: f64, tau: f64) -> bool {
    cost <= (1.0 + tau) * temp_cost
}

/// Held-out tasks labelled by the expert-cost to straight-line ratio.
pub fn build_suite(scenes: &[SceneEntry<f64>], harvest: &HarvestConfig) -> Result<Vec<BenchTask>> {
    let report = harvest_expert_paths(scenes, harvest)?;
    Ok(report
        .paths
        .into_iter()
        .map(|e| {
            let straight = distance(&e.task.x_init, &e.task.goal_center);
            BenchTask {
                difficulty: Difficulty::label(e.cost / straight),
                expert_cost: e.cost,
                task: e.task,
            }
        })
        .collect())
}

/// Scenes for a suite, all in the validation split.
pub fn scene_entries(workspaces: Vec<crate::world::Workspace<f64>>, prefix: &str) -> Vec<SceneEntry<f64>> {
    workspaces
        .into_iter()
        .enumerate()
        .map(|(i, ws)| SceneEntry {
            id: format!("{prefix}{i:03}"),
            split: Split::Validation,
            workspace: std::sync::Arc::new(ws),
        })
        .collect()
}

/// One planner run with its path and improvement trace.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub metrics: MetricsRecord,
    pub path: Option<Vec<Vec<f64>>>,
    pub trace: Vec<TracePoint>,
}

fn to_rows(p: &Path<f64>) -> Vec<Vec<f64>> {
    p.states.iter().map(|s| s.0.clone()).collect()
}

fn baseline(
    kind: PlannerKind,
    task: &PlanningTask<f64>,
    cfg: &PlannerConfig,
    stop: &StopRule,
) -> Result<(MetricsRecord, Option<Path<f64>>, Vec<TracePoint>)> {
    let r = match kind {
        PlannerKind::RrtStar => plan_with(task, cfg, &mut UniformSampler { goal_bias: cfg.goal_bias }, stop, kind.label())?,
        PlannerKind::IrrtStar => plan_with(task, cfg, &mut InformedSampler::new(cfg.goal_bias), stop, kind.label())?,
        PlannerKind::Temp => unreachable!("baselines only"),
    };
    Ok((r.metrics, r.path, r.trace))
}

fn run_one(bt: &BenchTask, seed: u64, cfg: &BenchConfig, model: Option<&ModelBundle<f64>>) -> Result<Vec<RunRecord>> {
    let diff = Some(bt.difficulty.name().to_string());
    let mut out = Vec::new();
    let mut temp_cost = None;
    if cfg.planners.contains(&PlannerKind::Temp) {
        let model = model.ok_or_else(|| Error::Config("TEMP requested without a model".into()))?;
        let o = temp_ap(&bt.task, &cfg.temp.with_seed(seed), model)?;
        let mut m = o.metrics.clone();
        m.difficulty = diff.clone();
        m.tau = Some(cfg.tau);
        temp_cost = m.cost;
        out.push(RunRecord {
            metrics: m,
            path: o.path.as_ref().map(to_rows),
            trace: o.trace,
        });
    }
    for &kind in cfg.planners.iter().filter(|k| **k != PlannerKind::Temp) {
        let pcfg = cfg.baseline.with_seed(seed);
        let stop = match temp_cost {
            Some(c) => StopRule {
                cost_at_most: Some((1.0 + cfg.tau) * c),
                ..Default::default()
            },
            None => StopRule {
                at_first_solution: true,
                ..Default::default()
            },
        };
        let (mut m, path, trace) = baseline(kind, &bt.task, &pcfg, &stop)?;
        m.difficulty = diff.clone();
        m.tau = Some(cfg.tau);
        match (temp_cost, m.cost) {
            (None, _) if cfg.planners.contains(&PlannerKind::Temp) => m.flags.push(FLAG_TEMP_FAILED.into()),
            (Some(t), Some(c)) if !conforms(c, t, cfg.tau) => m.flags.push(FLAG_ABOVE_TOLERANCE.into()),
            _ => {}
        }
        out.push(RunRecord {
            metrics: m,
            path: path.as_ref().map(to_rows),
            trace,
        });
    }
    Ok(out)
}

/// Runs every (task, seed) pair in parallel; output order is task-major,
/// then seed, then planner as listed.
pub fn run_suite(tasks: &[BenchTask], cfg: &BenchConfig, model: Option<&ModelBundle<f64>>) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let jobs: Vec<(usize, u64)> = (0..tasks.len())
        .flat_map(|t| cfg.seeds.iter().map(move |&s| (t, s)))
        .collect();
    let parts: Vec<Result<Vec<RunRecord>>> = jobs.par_iter().map(|&(t, s)| run_one(&tasks[t], s, cfg, model)).collect();
    let mut out = Vec::new();
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Fraction of each planner's runs whose first solution came at or before
/// each grid time.
pub fn success_curve(records: &[MetricsRecord], time_grid: &[f64]) -> BTreeMap<String, Vec<f64>> {
    let mut by: BTreeMap<String, Vec<&MetricsRecord>> = BTreeMap::new();
    for r in records {
        by.entry(r.planner.clone()).or_default().push(r);
    }
    by.into_iter()
        .map(|(planner, rs)| {
            let n = rs.len() as f64;
            let curve = time_grid
                .iter()
                .map(|&t| {
                    rs.iter()
                        .filter(|r| r.success && r.first_solution_time.unwrap_or(r.time_s) <= t)
                        .count() as f64
                        / n
                })
                .collect();
            (planner, curve)
        })
        .collect()
}

/// Improvement trace of one run, keyed for cost-vs-nodes aggregation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRun {
    pub task_id: String,
    pub planner: String,
    pub trace: Vec<TracePoint>,
}

/// Mean best cost per planner at each node count. A run that has not solved
/// its task by `n` nodes is charged the largest cost observed on that task
/// (over all planners) times `penalty`. Tasks nobody solved are skipped.
pub fn cost_vs_nodes(runs: &[TraceRun], node_grid: &[usize], penalty: f64) -> BTreeMap<String, Vec<f64>> {
    let mut task_max: BTreeMap<&str, f64> = BTreeMap::new();
    for r in runs {
        for p in &r.trace {
            let e = task_max.entry(&r.task_id).or_insert(f64::NEG_INFINITY);
            *e = e.max(p.cost);
        }
    }
    let mut by: BTreeMap<String, Vec<&TraceRun>> = BTreeMap::new();
    for r in runs.iter().filter(|r| task_max.contains_key(r.task_id.as_str())) {
        by.entry(r.planner.clone()).or_default().push(r);
    }
    by.into_iter()
        .map(|(planner, rs)| {
            let curve = node_grid
                .iter()
                .map(|&n| {
                    let sum: f64 = rs
                        .iter()
                        .map(|r| {
                            r.trace
                                .iter()
                                .filter(|p| p.nodes <= n)
                                .map(|p| p.cost)
                                .fold(None, |acc: Option<f64>, c| Some(acc.map_or(c, |a| a.min(c))))
                                .unwrap_or(task_max[r.task_id.as_str()] * penalty)
                        })
                        .sum();
                    sum / rs.len() as f64
                })
                .collect();
            (planner, curve)
        })
        .collect()
}

/// Row of the summary table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub planner: String,
    pub difficulty: String,
    pub count: usize,
    pub success_rate: f64,
    pub time_mean: f64,
    pub nodes_mean: f64,
    pub sampling_failures_mean: f64,
}

/// Means per (planner, difficulty), in sorted key order.
pub fn summarize(records: &[MetricsRecord]) -> Vec<SummaryRow> {
    let mut by: BTreeMap<(String, String), Vec<&MetricsRecord>> = BTreeMap::new();
    for r in records {
        let d = r.difficulty.clone().unwrap_or_else(|| "all".into());
        by.entry((r.planner.clone(), d)).or_default().push(r);
    }
    by.into_iter()
        .map(|((planner, difficulty), rs)| {
            let n = rs.len() as f64;
            let mean = |f: &dyn Fn(&MetricsRecord) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
            SummaryRow {
                planner,
                difficulty,
                count: rs.len(),
                success_rate: mean(&|r| if r.success { 1.0 } else { 0.0 }),
                time_mean: mean(&|r| r.time_s),
                nodes_mean: mean(&|r| r.nodes as f64),
                sampling_failures_mean: mean(&|r| r.sampling_failures as f64),
            }
        })
        .collect()
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from("planner,difficulty,count,success_rate,time_mean,nodes_mean,sampling_failures_mean\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.planner, r.difficulty, r.count, r.success_rate, r.time_mean, r.nodes_mean, r.sampling_failures_mean
        ));
    }
    s
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Everything `emit_outputs` writes.
#[derive(Clone, Debug, Default)]
pub struct BenchOutputs {
    pub runs: Vec<RunRecord>,
    pub time_grid: Vec<f64>,
    pub success: BTreeMap<String, Vec<f64>>,
    pub node_grid: Vec<usize>,
    pub cost_curves: BTreeMap<String, Vec<f64>>,
    pub attention: Vec<AttentionRow>,
}

impl BenchOutputs {
    /// Curves computed from the runs with default grids.
    pub fn from_runs(runs: Vec<RunRecord>) -> Self {
        let records: Vec<MetricsRecord> = runs.iter().map(|r| r.metrics.clone()).collect();
        let t_max = records.iter().map(|r| r.time_s).fold(0.0, f64::max).max(1e-6);
        let time_grid: Vec<f64> = (0..=50).map(|i| t_max * i as f64 / 50.0).collect();
        let n_max = records.iter().map(|r| r.nodes).max().unwrap_or(1).max(1);
        let node_grid: Vec<usize> = (1..=50).map(|i| (n_max * i).div_ceil(50)).collect();
        let traces: Vec<TraceRun> = runs
            .iter()
            .map(|r| TraceRun {
                task_id: r.metrics.task_id.clone(),
                planner: r.metrics.planner.clone(),
                trace: r.trace.clone(),
            })
            .collect();
        BenchOutputs {
            success: success_curve(&records, &time_grid),
            cost_curves: cost_vs_nodes(&traces, &node_grid, UNSOLVED_PENALTY),
            time_grid,
            node_grid,
            runs,
            attention: Vec::new(),
        }
    }
}

fn write(dir: &FsPath, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes `summary.csv`, `records.json`, the chart SVGs and, when attention
/// rows are present, `attention.csv` and `attention.svg`. Returns the paths.
pub fn emit_outputs(dir: &FsPath, out: &BenchOutputs) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let records: Vec<MetricsRecord> = out.runs.iter().map(|r| r.metrics.clone()).collect();
    let rows = summarize(&records);
    let mut files = vec![
        write(dir, "summary.csv", &summary_csv(&rows))?,
        write(dir, "records.json", &serde_json::to_string_pretty(&out.runs)?)?,
    ];
    let series = |curves: &BTreeMap<String, Vec<f64>>, grid: &[f64]| -> Vec<(String, Vec<(f64, f64)>)> {
        curves
            .iter()
            .map(|(k, v)| (k.clone(), grid.iter().copied().zip(v.iter().copied()).collect()))
            .collect()
    };
    files.push(write(
        dir,
        "success_rate.svg",
        &svg::line_chart("Success rate vs time", "time (s)", "fraction solved", &series(&out.success, &out.time_grid)),
    )?);
    let node_grid: Vec<f64> = out.node_grid.iter().map(|&n| n as f64).collect();
    files.push(write(
        dir,
        "cost_vs_nodes.svg",
        &svg::line_chart("Average cost vs nodes", "nodes", "average cost", &series(&out.cost_curves, &node_grid)),
    )?);
    let cats: Vec<String> = {
        let mut c: Vec<String> = rows.iter().map(|r| r.difficulty.clone()).collect();
        c.dedup();
        c.sort();
        c.dedup();
        c
    };
    let planners: Vec<String> = {
        let mut p: Vec<String> = rows.iter().map(|r| r.planner.clone()).collect();
        p.sort();
        p.dedup();
        p
    };
    let bars = |f: &dyn Fn(&SummaryRow) -> f64| -> Vec<(String, Vec<f64>)> {
        planners
            .iter()
            .map(|p| {
                let vals = cats
                    .iter()
                    .map(|c| rows.iter().find(|r| &r.planner == p && &r.difficulty == c).map_or(0.0, f))
                    .collect();
                (p.clone(), vals)
            })
            .collect()
    };
    files.push(write(
        dir,
        "sampling_failures.svg",
        &svg::bar_chart("Mean sampling failures", "failures", &cats, &bars(&|r| r.sampling_failures_mean)),
    )?);
    files.push(write(
        dir,
        "nodes.svg",
        &svg::bar_chart("Mean node count", "nodes", &cats, &bars(&|r| r.nodes_mean)),
    )?);
    if !out.attention.is_empty() {
        let mut csv = Vec::new();
        crate::mpt::write_attention_csv(&mut csv, &out.attention).map_err(|e| Error::io(dir.join("attention.csv"), e))?;
        files.push(write(dir, "attention.csv", &String::from_utf8_lossy(&csv))?);
        files.push(write(dir, "attention.svg", &attention_svg(&out.attention))?);
    }
    Ok(files)
}

/// Normalized attention per category across sampling nodes, as grouped bars.
pub fn attention_svg(rows: &[AttentionRow]) -> String {
    let n = rows.iter().map(|r| r.node_index + 1).max().unwrap_or(0);
    let cats: Vec<String> = (0..n).map(|j| j.to_string()).collect();
    let series: Vec<(String, Vec<f64>)> = TokenRole::ALL
        .iter()
        .filter(|role| rows.iter().any(|r| r.category == **role))
        .map(|role| {
            let mut v = vec![0.0; n];
            for r in rows.iter().filter(|r| r.category == *role) {
                v[r.node_index] = r.omega_norm;
            }
            (role.name().to_string(), v)
        })
        .collect();
    svg::bar_chart("Normalized attention per sampling node", "normalized weight", &cats, &series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpt::{normalize_attention, AttentionEntry};

    fn rec(planner: &str, task: &str, success: bool, t: f64, nodes: usize, diff: &str) -> MetricsRecord {
        let mut m = MetricsRecord::new(task, planner, 0);
        m.success = success;
        m.time_s = t;
        m.first_solution_time = success.then_some(t);
        m.nodes = nodes;
        m.cost = success.then_some(10.0);
        m.difficulty = Some(diff.into());
        m
    }

    #[test]
    fn tolerance_boundary_is_inclusive() {
        assert!(conforms(1.05 * 10.0, 10.0, 0.05));
        assert!(!conforms(1.05 * 10.0 + 1e-9, 10.0, 0.05));
        assert!(conforms(9.0, 10.0, 0.05));
        assert!(conforms(10.0, 10.0, 0.0));
    }

    #[test]
    fn success_curves() {
        let grid = [0.0, 0.5, 1.0, f64::INFINITY];
        let all = vec![rec("A", "t1", true, 0.0, 1, "easy"), rec("A", "t2", true, 0.0, 1, "easy")];
        assert_eq!(success_curve(&all, &grid)["A"], vec![1.0; 4]);
        let none = vec![rec("B", "t1", false, 0.3, 1, "easy")];
        assert_eq!(success_curve(&none, &grid)["B"], vec![0.0; 4]);
        let mixed = vec![
            rec("C", "t1", true, 0.2, 1, "easy"),
            rec("C", "t2", true, 0.7, 1, "easy"),
            rec("C", "t3", false, 0.1, 1, "easy"),
        ];
        let c = &success_curve(&mixed, &grid)["C"];
        assert_eq!(c, &vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0]);
        assert!(c.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn penalty_for_unsolved_task() {
        let tp = |nodes, cost| TracePoint { nodes, cost };
        let runs = vec![
            TraceRun {
                task_id: "t".into(),
                planner: "A".into(),
                trace: vec![tp(5, 20.0), tp(50, 12.0)],
            },
            TraceRun {
                task_id: "t".into(),
                planner: "B".into(),
                trace: vec![],
            },
        ];
        let c = cost_vs_nodes(&runs, &[1, 5, 49, 50, 100], 1.5);
        assert_eq!(c["B"], vec![30.0; 5]);
        assert_eq!(c["A"], vec![30.0, 20.0, 20.0, 12.0, 12.0]);
        let solved = vec![TraceRun {
            task_id: "u".into(),
            planner: "A".into(),
            trace: vec![tp(1, 7.0)],
        }];
        assert_eq!(cost_vs_nodes(&solved, &[1, 10], 1.5)["A"], vec![7.0, 7.0]);
    }

    #[test]
    fn summary_rows_and_schema() {
        let rs = vec![
            rec("TEMP", "t1", true, 0.154, 117, "easy"),
            rec("TEMP", "t2", true, 0.2, 100, "challenging"),
            rec("RRT*", "t1", true, 1.0, 900, "easy"),
        ];
        let rows = summarize(&rs);
        assert_eq!(rows.len(), 3);
        let t = rows.iter().find(|r| r.planner == "TEMP" && r.difficulty == "easy").unwrap();
        assert_eq!((t.time_mean, t.nodes_mean), (0.154, 117.0));
        let csv = summary_csv(&rows);
        assert!(csv.starts_with("planner,difficulty,count,success_rate,time_mean,nodes_mean,sampling_failures_mean\n"));
        assert!(csv.contains("TEMP,easy,1,1,0.154,117,0\n"));
    }

    #[test]
    fn emitted_files_are_well_formed() {
        let tp = |nodes, cost| TracePoint { nodes, cost };
        let run = |planner: &str, task: &str, ok: bool, nodes| RunRecord {
            metrics: rec(planner, task, ok, 0.1 * nodes as f64, nodes, "easy"),
            path: ok.then(|| vec![vec![0.0, 0.0], vec![1.0, 1.0]]),
            trace: if ok { vec![tp(nodes / 2, 12.0), tp(nodes, 10.0)] } else { vec![] },
        };
        let mut out = BenchOutputs::from_runs(vec![
            run("TEMP", "t1", true, 20),
            run("RRT*", "t1", true, 90),
            run("TEMP", "t2 <&>", false, 40),
            run("RRT*", "t2 <&>", true, 120),
        ]);
        out.attention = normalize_attention(&[
            AttentionEntry { sei: 0.1, goal: 0.5, start: 0.4, hpd: None },
            AttentionEntry { sei: 0.3, goal: 0.2, start: 0.3, hpd: Some(0.2) },
        ]);
        let dir = tempfile::tempdir().unwrap();
        let files = emit_outputs(dir.path(), &out).unwrap();
        let names: Vec<String> = files.iter().map(|f| f.file_name().unwrap().to_string_lossy().into_owned()).collect();
        for want in ["summary.csv", "records.json", "success_rate.svg", "cost_vs_nodes.svg", "attention.csv", "attention.svg"] {
            assert!(names.iter().any(|n| n == want), "{want} missing from {names:?}");
        }
        for f in files.iter().filter(|f| f.extension().is_some_and(|e| e == "svg")) {
            let text = std::fs::read_to_string(f).unwrap();
            let doc = roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", f.display()));
            assert_eq!(doc.root_element().tag_name().name(), "svg");
        }
        let back: Vec<RunRecord> = serde_json::from_str(&std::fs::read_to_string(dir.path().join("records.json")).unwrap()).unwrap();
        assert_eq!(back.len(), 4);
        assert_eq!(back[2].metrics.task_id, "t2 <&>");
    }

    #[test]
    fn medians() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }

    #[test]
    fn planner_names() {
        assert_eq!(PlannerKind::parse("rrt_star"), Some(PlannerKind::RrtStar));
        assert_eq!(PlannerKind::parse("IRRT*"), Some(PlannerKind::IrrtStar));
        assert_eq!(serde_json::to_string(&PlannerKind::RrtStar).unwrap(), "\"RRT*\"");
        assert_eq!(PlannerKind::parse("x"), None);
    }
}
