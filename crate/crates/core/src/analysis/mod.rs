//! Post-training analysis: parameter efficiency, per-node activity
//! statistics, weight distributions, and pairwise significance tests.

mod efficiency;
mod hits;
mod stats;

pub use efficiency::{efficiency_scores, EfficiencyScore, ModelSummary};
pub use hits::{hit_matrix, node_entropy, selectivity_index, HitMatrix, NodeEntropy};
pub use stats::{histogram, weight_stats, welch_t_test, Histogram, TTest, WeightStats};
