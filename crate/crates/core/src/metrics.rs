use serde::{Deserialize, Serialize};

/// Outcome of one planner run on one task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub task_id: String,
    pub planner: String,
    pub seed: u64,
    pub success: bool,
    pub time_s: f64,
    pub nodes: usize,
    pub sampling_failures: usize,
    /// Finite exactly when `success` holds.
    pub cost: Option<f64>,
    pub first_solution_time: Option<f64>,
    pub iterations: usize,
    /// Cost tolerance used when the record came from a matched-cost comparison.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl MetricsRecord {
    pub fn new(task_id: impl Into<String>, planner: impl Into<String>, seed: u64) -> Self {
        MetricsRecord {
            task_id: task_id.into(),
            planner: planner.into(),
            seed,
            success: false,
            time_s: 0.0,
            nodes: 1,
            sampling_failures: 0,
            cost: None,
            first_solution_time: None,
            iterations: 0,
            tau: None,
            difficulty: None,
            flags: Vec::new(),
        }
    }

    /// Same record with wall-clock fields zeroed, for determinism comparisons.
    pub fn without_timing(&self) -> Self {
        MetricsRecord {
            time_s: 0.0,
            first_solution_time: self.first_solution_time.map(|_| 0.0),
            ..self.clone()
        }
    }
}

/// Best-cost improvement event: tree size and cost right after it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub nodes: usize,
    pub cost: f64,
}
