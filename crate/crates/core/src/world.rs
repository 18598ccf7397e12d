//! Workspaces, box obstacles, planning tasks and exact collision queries for
//! point robots.

use std::ops::{Deref, DerefMut};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{distance, Real};

/// A configuration of the point robot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
#[serde(bound = "T: Real")]
pub struct State<T>(pub Vec<T>);

impl<T: Real> State<T> {
    pub fn new(coords: Vec<T>) -> Self {
        State(coords)
    }

    pub fn from_f64(coords: &[f64]) -> Self {
        State(coords.iter().map(|&c| T::lit(c)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|c| c.as_f64()).collect()
    }
}

impl<T> Deref for State<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

impl<T> DerefMut for State<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.0
    }
}

/// Axis-aligned box, closed: its boundary belongs to the obstacle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BoxObstacle<T> {
    pub center: Vec<T>,
    pub half_extent: Vec<T>,
}

impl<T: Real> BoxObstacle<T> {
    pub fn new(center: Vec<T>, half_extent: Vec<T>) -> Result<Self> {
        if center.len() != half_extent.len() {
            return Err(Error::invalid(format!(
                "obstacle center has {} coordinates but half_extent has {}",
                center.len(),
                half_extent.len()
            )));
        }
        if let Some(i) = half_extent.iter().position(|h| !(*h > T::zero()) || !h.is_finite()) {
            return Err(Error::invalid(format!(
                "obstacle half_extent[{i}] = {} is not strictly positive",
                half_extent[i]
            )));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("obstacle center is not finite"));
        }
        Ok(BoxObstacle {
            center,
            half_extent,
        })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.iter()
            .zip(self.center.iter().zip(&self.half_extent))
            .all(|(&xi, (&c, &h))| (xi - c).abs() <= h)
    }

    /// Slab test of the closed segment `a + t (b - a)`, `t in [0, 1]`.
    pub fn intersects_segment(&self, a: &[T], b: &[T]) -> bool {
        let mut t_enter = T::zero();
        let mut t_exit = T::one();
        for i in 0..a.len() {
            let lo = self.center[i] - self.half_extent[i];
            let hi = self.center[i] + self.half_extent[i];
            let d = b[i] - a[i];
            if d == T::zero() {
                if a[i] < lo || a[i] > hi {
                    return false;
                }
                continue;
            }
            let mut t_lo = (lo - a[i]) / d;
            let mut t_hi = (hi - a[i]) / d;
            if t_lo > t_hi {
                std::mem::swap(&mut t_lo, &mut t_hi);
            }
            t_enter = t_enter.max(t_lo);
            t_exit = t_exit.min(t_hi);
            if t_enter > t_exit {
                return false;
            }
        }
        true
    }

    /// Lower corner and upper corner.
    pub fn corners(&self) -> (Vec<T>, Vec<T>) {
        let lo = self.center.iter().zip(&self.half_extent).map(|(&c, &h)| c - h).collect();
        let hi = self.center.iter().zip(&self.half_extent).map(|(&c, &h)| c + h).collect();
        (lo, hi)
    }
}

/// Bounded `dim`-dimensional region populated by box obstacles.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct Workspace<T> {
    dim: usize,
    bounds: Vec<(T, T)>,
    obstacles: Vec<BoxObstacle<T>>,
}

impl<T: Real> Workspace<T> {
    pub fn new(bounds: Vec<(T, T)>, obstacles: Vec<BoxObstacle<T>>) -> Result<Self> {
        let dim = bounds.len();
        if dim == 0 {
            return Err(Error::invalid("workspace must have at least one axis"));
        }
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::invalid(format!("bounds[{i}]: low {lo} must be below high {hi}")));
            }
        }
        for (k, obs) in obstacles.iter().enumerate() {
            validate_obstacle(k, obs, &bounds)?;
        }
        Ok(Workspace {
            dim,
            bounds,
            obstacles,
        })
    }

    /// Obstacle-free hyper-rectangle `[low, high]^dim`.
    pub fn empty_cube(dim: usize, low: T, high: T) -> Result<Self> {
        Self::new(vec![(low, high); dim], Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bounds(&self) -> &[(T, T)] {
        &self.bounds
    }

    pub fn obstacles(&self) -> &[BoxObstacle<T>] {
        &self.obstacles
    }

    pub fn span(&self, axis: usize) -> T {
        self.bounds[axis].1 - self.bounds[axis].0
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.len() == self.dim && x.iter().zip(&self.bounds).all(|(&v, &(lo, hi))| v >= lo && v <= hi)
    }

    pub fn clamp(&self, x: &mut [T]) {
        for (v, &(lo, hi)) in x.iter_mut().zip(&self.bounds) {
            *v = v.max(lo).min(hi);
        }
    }

    fn check_dim(&self, x: &[T], what: &str) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::invalid(format!(
                "{what} has {} coordinates, workspace is {}-dimensional",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    pub fn point_in_collision(&self, x: &[T]) -> Result<bool> {
        self.check_dim(x, "state")?;
        Ok(self.point_collides(x))
    }

    pub fn segment_in_collision(&self, a: &[T], b: &[T]) -> Result<bool> {
        self.check_dim(a, "segment start")?;
        self.check_dim(b, "segment end")?;
        Ok(self.segment_collides(a, b))
    }

    /// Unchecked variant for hot loops where dimensions are already known to agree.
    #[inline]
    pub fn point_collides(&self, x: &[T]) -> bool {
        self.obstacles.iter().any(|o| o.contains(x))
    }

    #[inline]
    pub fn segment_collides(&self, a: &[T], b: &[T]) -> bool {
        self.obstacles.iter().any(|o| o.intersects_segment(a, b))
    }

    /// Uniform sample over the bounding hyper-rectangle. Obstacles are not
    /// filtered.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> State<T> {
        State(
            self.bounds
                .iter()
                .map(|&(lo, hi)| lo + (hi - lo) * T::lit(rng.gen::<f64>()))
                .collect(),
        )
    }

    /// Maps world coordinates to `[-1, 1]` per axis.
    pub fn normalize(&self, x: &[T]) -> Vec<T> {
        let two = T::lit(2.0);
        x.iter()
            .zip(&self.bounds)
            .map(|(&v, &(lo, hi))| two * (v - lo) / (hi - lo) - T::one())
            .collect()
    }

    pub fn denormalize(&self, u: &[T]) -> Vec<T> {
        let half = T::lit(0.5);
        u.iter()
            .zip(&self.bounds)
            .map(|(&v, &(lo, hi))| lo + (v + T::one()) * half * (hi - lo))
            .collect()
    }

    /// Parses the JSON workspace format, reporting the offending line on
    /// invariant violations.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: WorkspaceFile<T> = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        raw.into_workspace(text, 0)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&WorkspaceFile::from(self)).expect("workspace serializes")
    }
}

fn validate_obstacle<T: Real>(k: usize, obs: &BoxObstacle<T>, bounds: &[(T, T)]) -> Result<()> {
    if obs.center.len() != bounds.len() || obs.half_extent.len() != bounds.len() {
        return Err(Error::invalid(format!("obstacle {k}: dimension does not match workspace")));
    }
    if obs.half_extent.iter().any(|h| !(*h > T::zero())) {
        return Err(Error::invalid(format!("obstacle {k}: half_extent must be strictly positive")));
    }
    for (i, &(lo, hi)) in bounds.iter().enumerate() {
        if obs.center[i] - obs.half_extent[i] < lo || obs.center[i] + obs.half_extent[i] > hi {
            return Err(Error::invalid(format!("obstacle {k}: extends outside bounds on axis {i}")));
        }
    }
    Ok(())
}

/// On-disk layout: `{dim, bounds: [[lo, hi], ...], obstacles: [{center, half_extent}]}`.
#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct WorkspaceFile<T> {
    dim: usize,
    bounds: Vec<[T; 2]>,
    obstacles: Vec<BoxObstacle<T>>,
}

impl<T: Real> From<&Workspace<T>> for WorkspaceFile<T> {
    fn from(ws: &Workspace<T>) -> Self {
        WorkspaceFile {
            dim: ws.dim,
            bounds: ws.bounds.iter().map(|&(l, h)| [l, h]).collect(),
            obstacles: ws.obstacles.clone(),
        }
    }
}

impl<T: Real> WorkspaceFile<T> {
    fn into_workspace(self, text: &str, search_from: usize) -> Result<Workspace<T>> {
        let at = |key: &str, nth: usize| Error::Parse {
            line: line_of_key(text, key, nth, search_from),
            message: String::new(),
        };
        let with = |e: Error, msg: String| match e {
            Error::Parse { line, .. } => Error::Parse { line, message: msg },
            other => other,
        };
        if self.dim == 0 || self.bounds.len() != self.dim {
            return Err(with(
                at("dim", 0),
                format!("dim {} does not match {} bounds entries", self.dim, self.bounds.len()),
            ));
        }
        let bounds: Vec<(T, T)> = self.bounds.iter().map(|b| (b[0], b[1])).collect();
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo < hi) {
                return Err(with(at("bounds", 0), format!("bounds[{i}]: low {lo} must be below high {hi}")));
            }
        }
        for (k, obs) in self.obstacles.iter().enumerate() {
            if let Err(Error::InvalidInput(msg)) = validate_obstacle(k, obs, &bounds) {
                return Err(with(at("center", k), msg));
            }
        }
        Workspace::new(bounds, self.obstacles)
    }
}

/// 1-based line of the `nth` occurrence of `"key"` at or after byte offset `from`.
fn line_of_key(text: &str, key: &str, nth: usize, from: usize) -> usize {
    let needle = format!("\"{key}\"");
    let mut offset = from.min(text.len());
    let mut found = None;
    for _ in 0..=nth {
        match text[offset..].find(&needle) {
            Some(pos) => {
                found = Some(offset + pos);
                offset += pos + needle.len();
            }
            None => {
                found = None;
                break;
            }
        }
    }
    match found {
        Some(pos) => text[..pos].matches('\n').count() + 1,
        None => 1,
    }
}

/// Start state and closed goal ball inside a shared workspace.
#[derive(Clone, Debug)]
pub struct PlanningTask<T> {
    pub id: String,
    pub workspace: Arc<Workspace<T>>,
    pub x_init: State<T>,
    pub goal_center: State<T>,
    pub goal_radius: T,
}

impl<T: Real> PlanningTask<T> {
    pub fn new(
        id: impl Into<String>,
        workspace: Arc<Workspace<T>>,
        x_init: State<T>,
        goal_center: State<T>,
        goal_radius: T,
    ) -> Result<Self> {
        let ws = &workspace;
        ws.check_dim(&x_init, "x_init")?;
        ws.check_dim(&goal_center, "goal_center")?;
        if !x_init.is_finite() || !goal_center.is_finite() {
            return Err(Error::invalid("task states must be finite"));
        }
        if !ws.contains(&x_init) || !ws.contains(&goal_center) {
            return Err(Error::invalid("task states must lie inside the workspace bounds"));
        }
        if !(goal_radius > T::zero()) {
            return Err(Error::invalid("goal_radius must be positive"));
        }
        if ws.point_collides(&x_init) {
            return Err(Error::invalid("x_init is in collision"));
        }
        if ws.point_collides(&goal_center) {
            return Err(Error::invalid("goal_center is in collision"));
        }
        if distance(&x_init, &goal_center) <= goal_radius {
            return Err(Error::invalid("x_init already lies in the goal region"));
        }
        Ok(PlanningTask {
            id: id.into(),
            workspace,
            x_init,
            goal_center,
            goal_radius,
        })
    }

    pub fn dim(&self) -> usize {
        self.workspace.dim()
    }

    pub fn in_goal(&self, x: &[T]) -> bool {
        distance(x, &self.goal_center) <= self.goal_radius
    }

    /// Straight-line distance between the start and the goal center.
    pub fn c_min(&self) -> T {
        distance(&self.x_init, &self.goal_center)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: TaskFile<T> = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        let ws_from = text.find("\"workspace\"").unwrap_or(0);
        let workspace = raw.workspace.into_workspace(text, ws_from)?;
        PlanningTask::new(
            raw.id.unwrap_or_else(|| "task".to_string()),
            Arc::new(workspace),
            raw.x_init,
            raw.goal_center,
            raw.goal_radius,
        )
        .map_err(|e| match e {
            Error::InvalidInput(message) => Error::Parse {
                line: line_of_key(text, "x_init", 0, 0),
                message,
            },
            other => other,
        })
    }

    pub fn to_json_string(&self) -> String {
        let file = TaskFile {
            id: Some(self.id.clone()),
            workspace: WorkspaceFile::from(self.workspace.as_ref()),
            x_init: self.x_init.clone(),
            goal_center: self.goal_center.clone(),
            goal_radius: self.goal_radius,
        };
        serde_json::to_string_pretty(&file).expect("task serializes")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct TaskFile<T> {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    workspace: WorkspaceFile<T>,
    x_init: State<T>,
    goal_center: State<T>,
    goal_radius: T,
}
