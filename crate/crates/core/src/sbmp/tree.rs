use serde::{Deserialize, Serialize};

use super::kdtree::KdIndex;
use crate::scalar::{distance, Real};
use crate::world::State;

/// Below this size nearest-neighbour queries scan linearly.
pub const LINEAR_SCAN_BELOW: usize = 32;

#[derive(Clone, Debug)]
pub struct TreeNode<T> {
    pub state: State<T>,
    pub parent: Option<usize>,
    pub cost: T,
    children: Vec<usize>,
}

impl<T> TreeNode<T> {
    pub fn children(&self) -> &[usize] {
        &self.children
    }
}

/// Rooted search tree with cost-to-come bookkeeping and a spatial index.
#[derive(Clone, Debug)]
pub struct PlanningTree<T> {
    nodes: Vec<TreeNode<T>>,
    index: KdIndex<T>,
}

impl<T: Real> PlanningTree<T> {
    pub fn new(root: State<T>) -> Self {
        let mut index = KdIndex::new(root.dim());
        index.insert(&root);
        PlanningTree {
            nodes: vec![TreeNode {
                state: root,
                parent: None,
                cost: T::zero(),
                children: Vec::new(),
            }],
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].state.dim()
    }

    pub fn node(&self, i: usize) -> &TreeNode<T> {
        &self.nodes[i]
    }

    pub fn nodes(&self) -> &[TreeNode<T>] {
        &self.nodes
    }

    pub fn state(&self, i: usize) -> &State<T> {
        &self.nodes[i].state
    }

    pub fn cost(&self, i: usize) -> T {
        self.nodes[i].cost
    }

    pub fn push(&mut self, state: State<T>, parent: usize, cost: T) -> usize {
        let idx = self.nodes.len();
        self.index.insert(&state);
        self.nodes[parent].children.push(idx);
        self.nodes.push(TreeNode {
            state,
            parent: Some(parent),
            cost,
            children: Vec::new(),
        });
        idx
    }

    /// Index of the node closest to `x`, lowest index on ties.
    pub fn nearest(&self, x: &[T]) -> usize {
        if self.nodes.len() < LINEAR_SCAN_BELOW {
            self.nearest_linear(x)
        } else {
            self.index.nearest(x).expect("tree is never empty").0
        }
    }

    pub fn nearest_linear(&self, x: &[T]) -> usize {
        let mut best = (T::infinity(), 0);
        for (i, n) in self.nodes.iter().enumerate() {
            let d = crate::scalar::distance_sq(&n.state, x);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    /// All nodes within `radius` of `x`, ascending index.
    pub fn within_radius(&self, x: &[T], radius: T) -> Vec<usize> {
        let r2 = radius * radius;
        if self.nodes.len() < LINEAR_SCAN_BELOW {
            (0..self.nodes.len())
                .filter(|&i| crate::scalar::distance_sq(&self.nodes[i].state, x) <= r2)
                .collect()
        } else {
            self.index.within(x, r2)
        }
    }

    pub fn is_ancestor(&self, ancestor: usize, mut node: usize) -> bool {
        loop {
            if node == ancestor {
                return true;
            }
            match self.nodes[node].parent {
                Some(p) => node = p,
                None => return false,
            }
        }
    }

    /// Moves `child` under `new_parent` with the given cost and shifts the
    /// costs of its whole subtree by the same amount.
    pub fn reparent(&mut self, child: usize, new_parent: usize, new_cost: T) {
        debug_assert!(!self.is_ancestor(child, new_parent));
        if let Some(old) = self.nodes[child].parent {
            let siblings = &mut self.nodes[old].children;
            if let Some(pos) = siblings.iter().position(|&c| c == child) {
                siblings.swap_remove(pos);
            }
        }
        self.nodes[new_parent].children.push(child);
        self.nodes[child].parent = Some(new_parent);
        self.nodes[child].cost = new_cost;
        self.propagate_costs(child);
    }

    fn propagate_costs(&mut self, from: usize) {
        let mut stack = vec![from];
        while let Some(n) = stack.pop() {
            let base = self.nodes[n].cost;
            for k in 0..self.nodes[n].children.len() {
                let c = self.nodes[n].children[k];
                let edge = distance(&self.nodes[c].state, &self.nodes[n].state);
                self.nodes[c].cost = base + edge;
                stack.push(c);
            }
        }
    }

    /// States from the root to `index`.
    pub fn path_to(&self, index: usize) -> Path<T> {
        let mut states = Vec::new();
        let mut cur = Some(index);
        while let Some(i) = cur {
            states.push(self.nodes[i].state.clone());
            cur = self.nodes[i].parent;
        }
        states.reverse();
        Path::new(states)
    }

    /// Costs recomputed from parent links alone; `None` when a parent chain
    /// does not terminate at the root (a cycle).
    pub fn recomputed_costs(&self) -> Option<Vec<T>> {
        let n = self.nodes.len();
        let mut out = vec![T::zero(); n];
        for (i, slot) in out.iter_mut().enumerate() {
            let mut total = T::zero();
            let mut cur = i;
            let mut steps = 0;
            while let Some(p) = self.nodes[cur].parent {
                total = total + distance(&self.nodes[cur].state, &self.nodes[p].state);
                cur = p;
                steps += 1;
                if steps > n {
                    return None;
                }
            }
            if cur != 0 {
                return None;
            }
            *slot = total;
        }
        Some(out)
    }

    /// Checks acyclicity, the root convention, child lists, and stored costs
    /// against a from-scratch recomputation.
    pub fn check_invariants(&self, tol: T) -> Result<(), String> {
        if self.nodes[0].parent.is_some() || self.nodes[0].cost != T::zero() {
            return Err("root must have no parent and zero cost".into());
        }
        let costs = self.recomputed_costs().ok_or("parent links contain a cycle")?;
        for (i, (node, want)) in self.nodes.iter().zip(&costs).enumerate() {
            if (node.cost - *want).abs() > tol {
                return Err(format!("node {i}: stored cost {} but recomputed {}", node.cost, want));
            }
            if let Some(p) = node.parent {
                if !self.nodes[p].children.contains(&i) {
                    return Err(format!("node {i} missing from child list of {p}"));
                }
            }
            for &c in &node.children {
                if self.nodes[c].parent != Some(i) {
                    return Err(format!("node {c} listed as child of {i} but has another parent"));
                }
            }
        }
        Ok(())
    }
}

/// Sequence of states; consecutive pairs are straight edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
#[serde(bound = "T: Real")]
pub struct Path<T> {
    pub states: Vec<State<T>>,
}

impl<T: Real> Path<T> {
    pub fn new(states: Vec<State<T>>) -> Self {
        assert!(!states.is_empty(), "a path holds at least one state");
        Path { states }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn first(&self) -> &State<T> {
        &self.states[0]
    }

    pub fn last(&self) -> &State<T> {
        self.states.last().expect("non-empty path")
    }

    /// Sum of edge lengths.
    pub fn cost(&self) -> T {
        path_cost(&self.states)
    }
}

pub fn path_cost<T: Real>(states: &[State<T>]) -> T {
    states
        .windows(2)
        .map(|w| distance(&w[0], &w[1]))
        .fold(T::zero(), |a, b| a + b)
}
