//! Scene and task generation, expert-path harvesting, training-example
//! construction and the joint encoder/transformer training loop.

pub mod dataset;
pub mod scenes;
pub mod train;

pub use dataset::{
    explode_examples, harvest_expert_paths, read_dataset, write_dataset, DatasetManifest, ExpertPath, HarvestConfig,
    HarvestReport, SceneEntry, Split, TrainingExample,
};
pub use scenes::{generate_task, generate_workspaces, SceneConfig};
pub use train::{evaluate, example_loss, train, train_observed, write_log_csv, EpochLog, TrainConfig, TrainOutcome};

/// Mixes a base seed with indices (splitmix64 finalizer) so parallel workers
/// get independent, order-free seeds.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut z = base;
    for &p in parts {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(p.wrapping_mul(0xbf58_476d_1ce4_e5b9));
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}
