use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{load_binary, generate_synthetic, whiten, Dataset, Split};
use crate::error::{Error, Result};
use crate::experiment::checkpoint::Checkpoint;
use crate::experiment::config::{DomainSource, ExperimentConfig};
use crate::experiment::report::Manifest;
use crate::gradcheck::{finite_difference_check, layer_suite, CheckOptions, GradReport, ModelCheck, Precision};
use crate::network::{apply_sharing, build_blueprint, Model, Preset, SharingConfig, SharingMode};
use crate::norm::{Mode, NormStrategy};
use crate::train::{evaluate_all, MetricsRecord, OptimizerState, Trainer};
use crate::DomainId;

/// Files of one run directory.
#[derive(Clone, Debug, PartialEq)]
pub struct RunFiles {
    pub dir: PathBuf,
    /// One JSON metric record per line, appended as training goes.
    pub metrics: PathBuf,
    /// Wall-clock seconds per metric record, kept apart so metrics files of
    /// identical runs are identical.
    pub timing: PathBuf,
    pub checkpoint: PathBuf,
    pub manifest: PathBuf,
    pub config: PathBuf,
}

impl RunFiles {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        let dir = dir.into();
        Self {
            metrics: dir.join("metrics.jsonl"),
            timing: dir.join("timing.jsonl"),
            checkpoint: dir.join("checkpoint.udrc"),
            manifest: dir.join("manifest.json"),
            config: dir.join("config.toml"),
            dir,
        }
    }
}

/// Loads or generates every domain, then splits, converts and whitens it.
pub fn load_domains(cfg: &ExperimentConfig) -> Result<Vec<Dataset>> {
    cfg.domains
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let mut ds = match &spec.source {
                DomainSource::Synthetic(s) => generate_synthetic(s)?,
                DomainSource::Path(p) => load_binary(p)?,
            };
            ds.descriptor.id = DomainId::from_index(i);
            ds.descriptor.name = spec.name.clone();
            if spec.rgb {
                ds = ds.to_rgb()?;
            }
            ds = ds.with_split(spec.split_ratio, cfg.seeds.data.wrapping_add(i as u64))?;
            if spec.whiten {
                ds = whiten(ds)?.0;
            }
            Ok(ds)
        })
        .collect()
}

/// The configured network for the given datasets, freshly initialized.
pub fn build_model(cfg: &ExperimentConfig, datasets: &[Dataset]) -> Result<Model<f32>> {
    let classes: Vec<usize> = datasets.iter().map(|d| d.descriptor.classes).collect();
    let channels = datasets.first().map_or(3, |d| d.descriptor.input.2);
    let bp = cfg.blueprint(&classes, channels)?;
    Ok(apply_sharing::<f32>(&bp, &cfg.sharing(), cfg.seeds.model)?.with_eps(cfg.eps))
}

fn append_line(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut line = serde_json::to_string(value).expect("record serializes");
    line.push('\n');
    f.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Overrides the config's output directory.
    pub output_dir: Option<PathBuf>,
    /// Checkpoint to continue from.
    pub resume: Option<PathBuf>,
}

pub struct TrainOutcome {
    pub records: Vec<MetricsRecord>,
    pub model: Model<f32>,
    pub files: RunFiles,
}

#[derive(Serialize)]
struct DivergenceEvent {
    event: &'static str,
    step: usize,
    loss: f64,
}

#[derive(Serialize)]
struct Timing {
    step: usize,
    seconds: f64,
}

/// Trains a configuration, writing metrics, timing, manifest, a copy of the
/// config and a checkpoint at every metric record.
pub fn train(cfg: &ExperimentConfig, config_text: &str, opts: &TrainOptions) -> Result<TrainOutcome> {
    let dir = opts
        .output_dir
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| Error::Config("no output directory (set `output_dir` or pass one)".into()))?;
    let datasets = load_domains(cfg)?;
    let mut model = build_model(cfg, &datasets)?;
    let train_cfg = cfg.train_config()?;
    let hash = cfg.hash();
    let files = RunFiles::new(&dir);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let (velocity, step) = match &opts.resume {
        Some(path) => Checkpoint::load(path, &model.bank)?.restore(&mut model, &hash)?,
        None => {
            for p in [&files.metrics, &files.timing] {
                File::create(p).map_err(|e| Error::io(p, e))?;
            }
            (OptimizerState::new(&model.bank, train_cfg.sgd).velocity, 0)
        }
    };
    let manifest = Manifest {
        name: cfg.name.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: cfg.hash_hex(),
        seeds: cfg.seeds,
        param_counts: model.param_counts(),
        config: cfg.clone(),
        config_text: config_text.to_string(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&files.manifest, json).map_err(|e| Error::io(&files.manifest, e))?;
    std::fs::write(&files.config, config_text).map_err(|e| Error::io(&files.config, e))?;

    let optimizer = OptimizerState {
        velocity,
        config: train_cfg.sgd,
    };
    let mut trainer = Trainer::resume(model, optimizer, &datasets, train_cfg, step)?;
    let clock = Instant::now();
    let result = trainer.run(|rec, t| {
        append_line(&files.metrics, rec)?;
        append_line(
            &files.timing,
            &Timing {
                step: rec.step,
                seconds: clock.elapsed().as_secs_f64(),
            },
        )?;
        Checkpoint::capture(hash, &t.model, &t.optimizer, t.step()).save(&files.checkpoint)
    });
    match result {
        Ok(records) => Ok(TrainOutcome {
            records,
            model: trainer.model,
            files,
        }),
        Err(Error::Divergence { step, loss }) => {
            append_line(
                &files.metrics,
                &DivergenceEvent {
                    event: "divergence",
                    step,
                    loss,
                },
            )?;
            Err(Error::Divergence { step, loss })
        }
        Err(e) => Err(e),
    }
}

/// Validation errors of a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub step: usize,
    pub mode: Mode,
    pub val_error: Vec<f64>,
    pub mean_error: f64,
}

pub fn eval(cfg: &ExperimentConfig, checkpoint: &Path, mode: Mode) -> Result<EvalResult> {
    let datasets = load_domains(cfg)?;
    let mut model = build_model(cfg, &datasets)?;
    let (_, step) = Checkpoint::load(checkpoint, &model.bank)?.restore(&mut model, &cfg.hash())?;
    let (val_error, mean_error) = evaluate_all(&model, &datasets, Split::Val, mode, cfg.train.eval_batch_size)?;
    Ok(EvalResult {
        step,
        mode,
        val_error,
        mean_error,
    })
}

pub const LAYER_TOLERANCE: f64 = 1e-4;
pub const MODEL_TOLERANCE: f64 = 1e-3;

/// Finite-difference reports for every layer type (32-bit analytic
/// gradients) and for a whole two-domain network of the preset.
pub fn gradcheck(preset: Preset, seed: u64) -> Result<Vec<GradReport>> {
    let mut reports: Vec<GradReport> = layer_suite(Precision::Single, seed)?
        .iter()
        .map(|op| {
            finite_difference_check(
                op.as_ref(),
                &CheckOptions {
                    tol: LAYER_TOLERANCE,
                    seed,
                    ..CheckOptions::default()
                },
            )
        })
        .collect();
    let mut bp = build_blueprint(preset, 1, NormStrategy::default(), &[3, 4])?;
    // Full-size resnet38 inputs make the network check needlessly slow; the layer
    // structure is the same at 8×8.
    if preset == Preset::Resnet38 {
        bp = bp.with_input(8, 3)?;
    }
    let model = apply_sharing::<f32>(&bp, &SharingConfig::new(SharingMode::DeepSharing, 1), seed)?;
    let check = ModelCheck::random_batch(&model, DomainId::from_index(1), 2, seed, Precision::Single)?;
    reports.push(finite_difference_check(
        &check,
        &CheckOptions {
            h: 1e-6,
            tol: MODEL_TOLERANCE,
            max_entries: Some(8),
            seed,
        },
    ));
    Ok(reports)
}
