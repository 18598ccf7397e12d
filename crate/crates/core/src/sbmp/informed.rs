//! Uniform sampling of the prolate hyperspheroid whose points could lie on a
//! path cheaper than the current best.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::{distance, norm, Real};
use crate::world::{PlanningTask, State};

/// Relative inflation applied when the transverse diameter equals the focal
/// distance, so the region keeps positive volume.
pub const DEGENERATE_INFLATION: f64 = 1e-6;

/// Rejections outside the workspace before the sampler gives up.
const MAX_BOUNDS_REJECTIONS: usize = 1_000_000;

/// Frame of the ellipsoid family with foci at the task start and goal center.
#[derive(Clone, Debug)]
pub struct InformedFrame<T> {
    focus_a: Vec<T>,
    focus_b: Vec<T>,
    center: Vec<T>,
    /// Orthonormal basis, column 0 along the focal axis. Stored column-major.
    basis: Vec<Vec<T>>,
    c_min: T,
}

impl<T: Real> InformedFrame<T> {
    pub fn new(focus_a: &[T], focus_b: &[T]) -> Self {
        let d = focus_a.len();
        let c_min = distance(focus_a, focus_b);
        let center: Vec<T> = focus_a
            .iter()
            .zip(focus_b)
            .map(|(&a, &b)| (a + b) * T::lit(0.5))
            .collect();
        let mut axis: Vec<T> = focus_a.iter().zip(focus_b).map(|(&a, &b)| b - a).collect();
        if c_min > T::zero() {
            axis.iter_mut().for_each(|v| *v = *v / c_min);
        } else {
            axis = (0..d).map(|i| if i == 0 { T::one() } else { T::zero() }).collect();
        }
        InformedFrame {
            focus_a: focus_a.to_vec(),
            focus_b: focus_b.to_vec(),
            center,
            basis: complete_basis(axis),
            c_min,
        }
    }

    pub fn for_task(task: &PlanningTask<T>) -> Self {
        Self::new(&task.x_init, &task.goal_center)
    }

    pub fn c_min(&self) -> T {
        self.c_min
    }

    /// Transverse diameter actually used for `c_best`, after degenerate
    /// inflation.
    pub fn effective_diameter(&self, c_best: T) -> T {
        c_best.max(self.c_min * (T::one() + T::lit(DEGENERATE_INFLATION)))
    }

    /// Semi-axes `(a, b)`: `a = c/2`, `b = sqrt(c^2 - c_min^2)/2`.
    pub fn semi_axes(&self, c_best: T) -> (T, T) {
        let c = self.effective_diameter(c_best);
        let half = T::lit(0.5);
        (c * half, (c * c - self.c_min * self.c_min).max(T::zero()).sqrt() * half)
    }

    pub fn contains(&self, x: &[T], c_best: T, tol: T) -> bool {
        distance(x, &self.focus_a) + distance(x, &self.focus_b) <= self.effective_diameter(c_best) + tol
    }

    /// One sample from the ellipsoid, without bounds filtering.
    pub fn sample_unbounded<R: Rng + ?Sized>(&self, c_best: T, rng: &mut R) -> State<T> {
        let d = self.center.len();
        let (a, b) = self.semi_axes(c_best);
        let ball = unit_ball_sample::<T, R>(d, rng);
        let mut out = self.center.clone();
        for (j, &u) in ball.iter().enumerate() {
            let scaled = u * if j == 0 { a } else { b };
            for (o, &col) in out.iter_mut().zip(&self.basis[j]) {
                *o = *o + col * scaled;
            }
        }
        State(out)
    }
}

/// Uniform sample from the informed set of `task` for solution cost `c_best`,
/// redrawn until it falls inside the workspace bounds.
pub fn informed_sample<T: Real, R: Rng + ?Sized>(
    task: &PlanningTask<T>,
    c_best: T,
    rng: &mut R,
) -> Result<State<T>> {
    sample_in_frame(&InformedFrame::for_task(task), task, c_best, rng)
}

pub fn sample_in_frame<T: Real, R: Rng + ?Sized>(
    frame: &InformedFrame<T>,
    task: &PlanningTask<T>,
    c_best: T,
    rng: &mut R,
) -> Result<State<T>> {
    if c_best < frame.c_min() || !c_best.is_finite() {
        return Err(Error::invalid(format!(
            "informed sampling needs c_best >= c_min ({} < {})",
            c_best,
            frame.c_min()
        )));
    }
    for _ in 0..MAX_BOUNDS_REJECTIONS {
        let x = frame.sample_unbounded(c_best, rng);
        if task.workspace.contains(&x) {
            return Ok(x);
        }
    }
    Err(Error::invalid("informed set does not overlap the workspace bounds"))
}

fn unit_ball_sample<T: Real, R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<T> {
    loop {
        let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&g);
        if n > 0.0 {
            let r = rng.gen::<f64>().powf(1.0 / d as f64);
            return g.iter().map(|v| T::lit(v / n * r)).collect();
        }
    }
}

/// Extends a unit vector to an orthonormal basis by Gram-Schmidt over the
/// standard basis.
fn complete_basis<T: Real>(first: Vec<T>) -> Vec<Vec<T>> {
    let d = first.len();
    let mut basis = vec![first];
    for k in 0..d {
        if basis.len() == d {
            break;
        }
        let mut v: Vec<T> = (0..d).map(|i| if i == k { T::one() } else { T::zero() }).collect();
        for b in &basis {
            let dot: T = v.iter().zip(b).map(|(&x, &y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, &y)| *x = *x - dot * y);
        }
        let n = norm(&v);
        if n > T::lit(1e-6) {
            v.iter_mut().for_each(|x| *x = *x / n);
            basis.push(v);
        }
    }
    basis
}
