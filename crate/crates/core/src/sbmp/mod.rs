//! Optimal sampling-based planning: the search tree, RRT* primitives,
//! informed sampling and the planners built from them.

pub mod informed;
pub mod kdtree;
pub mod planner;
pub mod primitives;
pub mod tree;

pub use informed::{informed_sample, InformedFrame};
pub use planner::{
    irrt_star, plan_with, rrt_star, Extension, InformedSampler, PlanResult, PlannerConfig, PlannerRng, Probe,
    SampleContext, Sampler, Search, StopRule, UniformSampler,
};
pub use primitives::{choose_parent, near_radius, near_set, rewire, steer};
pub use tree::{path_cost, Path, PlanningTree, TreeNode};
