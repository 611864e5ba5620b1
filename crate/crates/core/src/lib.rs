//! Simulation of a recommender whose models retrain on their own logged
//! traffic, and of A/B-test designs run on top of that feedback loop.
//!
//! Module map:
//!
//! * [`env`]: ground-truth user responses to short and long videos.
//! * [`mlcore`]: the ranking model, the propensity network and their
//!   optimizers.
//! * [`designs`]: the feedback loop under weighted training, data
//!   splitting, data pooling and snapshot designs, plus global regimes.
//! * [`stats`]: difference-in-means estimates and cross-replication
//!   summaries.
//! * [`reweight`]: exact checks of the propensity-weight identities on
//!   finite sample spaces.
//! * [`exec`]: replication scheduling (rayon with the `parallel` feature).

pub mod designs;
pub mod env;
pub mod exec;
pub mod interaction;
pub mod mlcore;
pub mod reweight;
pub mod rng;
pub mod stats;

pub use designs::{
    assign, compute_weights, make_production_model, rank_and_choose, run_experiment, run_global, run_period,
    run_replication, train_on_batch, Arm, DesignError, ExperimentConfig, GlobalRun, LoopState, Method, Models,
    PairedGlobal,
};
pub use env::{EnvParams, Outcome};
pub use interaction::Interaction;
pub use stats::{Metric, MetricVector, ReplicationResult, SummaryStats};
