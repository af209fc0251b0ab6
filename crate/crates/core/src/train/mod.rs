//! Round-robin pure-batch training with momentum SGD.
//!
//! Every step draws one batch from a single domain, in the cyclic order
//! `1, 2, …, D`. In parallel-domain mode the `D` batches of one cycle run
//! concurrently against the same parameters and their gradients are summed
//! in domain order before a single update.
//!
//! All randomness (epoch permutations, augmentation) is derived from the
//! seeds and the step index, so a run resumed from a checkpoint continues the
//! same trajectory.

mod augment;
mod evaluate;
mod optim;
mod plan;
mod schedule;
mod trainer;

pub use augment::{augment, crop, crop_pad};
pub use evaluate::{error_rate, evaluate, evaluate_all};
pub use optim::{sgd_step, sgd_update, OptimizerState, SgdConfig};
pub use plan::{plan_entry, round_robin, BatchPlan, DomainStream};
pub use schedule::Schedule;
pub use trainer::{MetricsRecord, TrainConfig, Trainer};
