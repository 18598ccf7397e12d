//! Incremental k-d tree over points that never move once inserted.
//!
//! Planning trees only ever append states (rewiring changes parents, not
//! positions), so the index supports insertion and exact queries but no
//! removal or rebalancing.

use crate::scalar::Real;

const NONE: usize = usize::MAX;

#[derive(Clone, Debug)]
pub struct KdIndex<T> {
    dim: usize,
    coords: Vec<T>,
    left: Vec<usize>,
    right: Vec<usize>,
    axis: Vec<usize>,
}

impl<T: Real> KdIndex<T> {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0);
        KdIndex {
            dim,
            coords: Vec::new(),
            left: Vec::new(),
            right: Vec::new(),
            axis: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.axis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.axis.is_empty()
    }

    #[inline]
    fn point(&self, i: usize) -> &[T] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    /// Inserts a point and returns its index (insertion order).
    pub fn insert(&mut self, p: &[T]) -> usize {
        assert_eq!(p.len(), self.dim);
        let idx = self.len();
        self.coords.extend_from_slice(p);
        self.left.push(NONE);
        self.right.push(NONE);
        if idx == 0 {
            self.axis.push(0);
            return idx;
        }
        let mut node = 0;
        loop {
            let a = self.axis[node];
            let goes_left = p[a] < self.coords[node * self.dim + a];
            let slot = if goes_left { self.left[node] } else { self.right[node] };
            if slot == NONE {
                if goes_left {
                    self.left[node] = idx;
                } else {
                    self.right[node] = idx;
                }
                self.axis.push((a + 1) % self.dim);
                return idx;
            }
            node = slot;
        }
    }

    /// Closest point to `q`; ties resolve to the lowest index.
    pub fn nearest(&self, q: &[T]) -> Option<(usize, T)> {
        if self.is_empty() {
            return None;
        }
        let mut best = (T::infinity(), NONE);
        let mut stack = vec![(0usize, T::zero())];
        while let Some((node, bound)) = stack.pop() {
            if bound > best.0 {
                continue;
            }
            let p = self.point(node);
            let d2 = crate::scalar::distance_sq(p, q);
            if d2 < best.0 || (d2 == best.0 && node < best.1) {
                best = (d2, node);
            }
            let a = self.axis[node];
            let diff = q[a] - p[a];
            let (near, far) = if diff < T::zero() {
                (self.left[node], self.right[node])
            } else {
                (self.right[node], self.left[node])
            };
            if far != NONE {
                stack.push((far, bound.max(diff * diff)));
            }
            if near != NONE {
                stack.push((near, bound));
            }
        }
        Some((best.1, best.0))
    }

    /// Indices of all points with squared distance `<= radius_sq`, ascending.
    pub fn within(&self, q: &[T], radius_sq: T) -> Vec<usize> {
        let mut out = Vec::new();
        if self.is_empty() {
            return out;
        }
        let mut stack = vec![0usize];
        while let Some(node) = stack.pop() {
            let p = self.point(node);
            if crate::scalar::distance_sq(p, q) <= radius_sq {
                out.push(node);
            }
            let a = self.axis[node];
            let diff = q[a] - p[a];
            let (near, far) = if diff < T::zero() {
                (self.left[node], self.right[node])
            } else {
                (self.right[node], self.left[node])
            };
            if near != NONE {
                stack.push(near);
            }
            if far != NONE && diff * diff <= radius_sq {
                stack.push(far);
            }
        }
        out.sort_unstable();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_nearest(points: &[Vec<f64>], q: &[f64]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, p) in points.iter().enumerate() {
            let d = crate::scalar::distance_sq(p, q);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    #[test]
    fn matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for dim in 1..=4 {
            let mut idx = KdIndex::new(dim);
            let mut points = Vec::new();
            for _ in 0..500 {
                let p: Vec<f64> = (0..dim).map(|_| rng.gen_range(-5.0..5.0)).collect();
                idx.insert(&p);
                points.push(p);
            }
            for _ in 0..300 {
                let q: Vec<f64> = (0..dim).map(|_| rng.gen_range(-6.0..6.0)).collect();
                assert_eq!(idx.nearest(&q).unwrap().0, brute_nearest(&points, &q));
                let r2 = rng.gen_range(0.0..4.0);
                let want: Vec<usize> = (0..points.len())
                    .filter(|&i| crate::scalar::distance_sq(&points[i], &q) <= r2)
                    .collect();
                assert_eq!(idx.within(&q, r2), want);
            }
        }
    }

    #[test]
    fn duplicate_points_prefer_lowest_index() {
        let mut idx = KdIndex::new(2);
        for _ in 0..10 {
            idx.insert(&[1.0, 1.0]);
        }
        idx.insert(&[0.0, 0.0]);
        assert_eq!(idx.nearest(&[1.0, 1.0]).unwrap().0, 0);
        assert_eq!(idx.within(&[1.0, 1.0], 0.0), (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn degenerate_insert_order_stays_iterative() {
        // a sorted line produces a maximally deep tree
        let mut idx = KdIndex::new(1);
        for i in 0..5_000 {
            idx.insert(&[i as f64]);
        }
        assert_eq!(idx.nearest(&[4_999.4]).unwrap().0, 4_999);
    }
}
