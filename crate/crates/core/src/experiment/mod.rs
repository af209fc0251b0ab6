//! Declarative experiments: configuration files, run directories,
//! checkpoints and report tables.
//!
//! A run directory holds `config.toml` (the configuration as given),
//! `manifest.json`, `metrics.jsonl`, `timing.jsonl` and `checkpoint.udrc`.

mod checkpoint;
mod config;
mod report;
mod runner;

pub use checkpoint::{Checkpoint, UDRC_MAGIC, UDRC_VERSION};
pub use config::{parse_config, DomainSource, DomainSpec, ExperimentConfig, ModelSection, Seeds, TrainSection};
pub use report::{read_metrics, report, Manifest};
pub use runner::{
    build_model, eval, gradcheck, load_domains, train, EvalResult, RunFiles, TrainOptions, TrainOutcome,
    LAYER_TOLERANCE, MODEL_TOLERANCE,
};
