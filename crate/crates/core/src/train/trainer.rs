use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::network::{BatchMoment, Grads, Model};
use crate::norm::Mode;
use crate::par;
use crate::train::augment::augment;
use crate::train::evaluate::evaluate;
use crate::train::optim::{sgd_step, OptimizerState, SgdConfig};
use crate::train::plan::DomainStream;
use crate::train::schedule::Schedule;
use crate::util::rng_for;
use crate::DomainId;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub schedule: Schedule,
    pub sgd: SgdConfig,
    /// Run the batches of one round-robin cycle concurrently and apply their
    /// summed gradient in a single step.
    pub parallel_domains: bool,
    /// Steps between metric records; 0 records only at the end.
    pub eval_every: usize,
    pub eval_batch_size: usize,
    pub data_seed: u64,
    pub aug_seed: u64,
    pub augment: bool,
    /// Steps at the end of training over which BN moments are averaged.
    /// Defaults to one epoch of the largest domain for every active domain.
    pub moment_window: Option<usize>,
    /// Domains taking part in the round robin (all by default).
    pub active: Option<Vec<DomainId>>,
}

impl TrainConfig {
    pub fn new(batch_size: usize, schedule: Schedule) -> Self {
        Self {
            batch_size,
            schedule,
            sgd: SgdConfig::default(),
            parallel_domains: false,
            eval_every: 0,
            eval_batch_size: batch_size,
            data_seed: 0,
            aug_seed: 0,
            augment: true,
            moment_window: None,
            active: None,
        }
    }
}

/// One evaluation point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    /// Optimizer steps completed.
    pub step: usize,
    /// Learning rate of the last completed step.
    pub lr: f64,
    /// Mean training loss per domain since the previous record (`None` for
    /// domains without a batch in that window).
    pub train_loss: Vec<Option<f64>>,
    /// Validation top-1 error per domain, in percent.
    pub val_error: Vec<f64>,
    pub mean_error: f64,
    pub eval_mode: Mode,
    #[serde(rename = "final")]
    pub is_final: bool,
}

/// Round-robin trainer over one model and its `D` datasets.
pub struct Trainer<'a> {
    pub model: Model<f32>,
    pub optimizer: OptimizerState<f32>,
    datasets: &'a [Dataset],
    streams: Vec<DomainStream>,
    active: Vec<DomainId>,
    config: TrainConfig,
    step: usize,
    window_start: usize,
    losses: Vec<(f64, usize)>,
}

impl<'a> Trainer<'a> {
    pub fn new(model: Model<f32>, datasets: &'a [Dataset], config: TrainConfig) -> Result<Self> {
        let optimizer = OptimizerState::new(&model.bank, config.sgd);
        Self::resume(model, optimizer, datasets, config, 0)
    }

    /// Continues from a saved model, optimizer state and step count.
    pub fn resume(
        model: Model<f32>,
        optimizer: OptimizerState<f32>,
        datasets: &'a [Dataset],
        config: TrainConfig,
        step: usize,
    ) -> Result<Self> {
        let mut errs = config.schedule.violations();
        let d = model.domains();
        if datasets.len() != d {
            errs.push(format!("model has {d} domains but {} datasets were given", datasets.len()));
        }
        let bp = model.blueprint();
        for (i, ds) in datasets.iter().enumerate() {
            let name = &ds.descriptor.name;
            if ds.descriptor.input != bp.input {
                errs.push(format!(
                    "domain `{name}` images are {:?}, the network expects {:?}",
                    ds.descriptor.input, bp.input
                ));
            }
            if let Some(&k) = bp.classes.get(i) {
                if k != ds.descriptor.classes {
                    errs.push(format!(
                        "domain `{name}` has {} classes, the network {k}",
                        ds.descriptor.classes
                    ));
                }
            }
            if ds.indices(Split::Train).is_empty() {
                errs.push(format!("domain `{name}` has an empty training split"));
            }
        }
        if config.batch_size == 0 || config.eval_batch_size == 0 {
            errs.push("batch sizes must be positive".into());
        }
        let active = config.active.clone().unwrap_or_else(|| DomainId::all(d).collect());
        if active.is_empty() {
            errs.push("no active domains".into());
        }
        if let Some(a) = active.iter().find(|a| a.get() > d) {
            errs.push(format!("active domain {a} is out of range 1..={d}"));
        }
        if config.parallel_domains && config.eval_every % active.len().max(1) != 0 {
            errs.push(format!(
                "eval_every {} must be a multiple of the {} active domains in parallel mode",
                config.eval_every,
                active.len()
            ));
        }
        if step > config.schedule.total_steps {
            errs.push(format!(
                "resume step {step} is past the schedule's {} steps",
                config.schedule.total_steps
            ));
        }
        if optimizer.velocity.len() != model.bank.slot_count() {
            errs.push("optimizer state does not match the model".into());
        }
        if !errs.is_empty() {
            return Err(Error::ConfigViolations(errs));
        }

        let streams = datasets
            .iter()
            .enumerate()
            .map(|(i, ds)| {
                DomainStream::new(
                    ds.indices(Split::Train),
                    config.batch_size,
                    config.data_seed,
                    DomainId::from_index(i),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let epoch = active
            .iter()
            .map(|a| streams[a.index()].batches_per_epoch())
            .max()
            .unwrap_or(1);
        let window = config.moment_window.unwrap_or(epoch * active.len());
        let total = config.schedule.total_steps;
        Ok(Self {
            model,
            optimizer: OptimizerState {
                config: config.sgd,
                ..optimizer
            },
            datasets,
            streams,
            config,
            step,
            window_start: total.saturating_sub(window),
            losses: vec![(0.0, 0); d],
            active,
        })
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// First step whose BN moments are accumulated.
    pub fn moment_window_start(&self) -> usize {
        self.window_start
    }

    /// Domain and stream batch index of plan entry `step`.
    pub fn plan_entry(&self, step: usize) -> (DomainId, usize) {
        let n = self.active.len();
        (self.active[step % n], step / n)
    }

    /// Trains to the end of the schedule.
    pub fn run(
        &mut self,
        on_record: impl FnMut(&MetricsRecord, &Self) -> Result<()>,
    ) -> Result<Vec<MetricsRecord>> {
        self.run_until(self.config.schedule.total_steps, on_record)
    }

    /// Trains until `stop` steps are complete, calling `on_record` after each
    /// metric record (the trainer is then at a resumable point).
    pub fn run_until(
        &mut self,
        stop: usize,
        mut on_record: impl FnMut(&MetricsRecord, &Self) -> Result<()>,
    ) -> Result<Vec<MetricsRecord>> {
        let total = self.config.schedule.total_steps;
        let stop = stop.min(total);
        let group = if self.config.parallel_domains { self.active.len() } else { 1 };
        let mut records = Vec::new();
        while self.step < stop {
            let start = self.step;
            let end = ((start / group + 1) * group).min(stop);
            let lr = self.config.schedule.lr_at(start)?;
            self.train_group(start, end, lr)?;
            self.step = end;
            let every = self.config.eval_every;
            let crossed = every > 0 && end / every > start / every;
            if crossed || end == total {
                let rec = self.record(lr, end == total)?;
                on_record(&rec, self)?;
                records.push(rec);
            }
        }
        Ok(records)
    }

    fn batch_result(&self, s: usize) -> Result<(f64, Grads<f32>, Vec<BatchMoment<f32>>)> {
        let (d, k) = self.plan_entry(s);
        let ds = &self.datasets[d.index()];
        let (x, labels) = ds.batch(&self.streams[d.index()].batch(k));
        let x = if self.config.augment {
            let mut rng = rng_for(self.config.aug_seed, "augment", &[s as u64]);
            augment(&x, ds.descriptor.flip_allowed, &mut rng)
        } else {
            x
        };
        let (loss, grads, moments) = self.model.loss_and_grads(&x, &labels, d)?;
        if !loss.is_finite() || !grads.is_finite() {
            return Err(Error::Divergence { step: s, loss });
        }
        Ok((loss, grads, moments))
    }

    fn train_group(&mut self, start: usize, end: usize, lr: f64) -> Result<()> {
        let results = par::map_range(end - start, |j| self.batch_result(start + j));
        let mut total: Option<Grads<f32>> = None;
        for (j, r) in results.into_iter().enumerate() {
            let s = start + j;
            let (loss, grads, moments) = r?;
            let d = self.plan_entry(s).0;
            let acc = &mut self.losses[d.index()];
            acc.0 += loss;
            acc.1 += 1;
            if s == self.window_start {
                self.model.bank.reset_moments();
            }
            if s >= self.window_start {
                self.model.bank.accumulate(&moments)?;
            }
            match &mut total {
                None => total = Some(grads),
                Some(t) => t.accumulate(&grads)?,
            }
        }
        if let Some(g) = total {
            sgd_step(&mut self.model.bank, &g, &mut self.optimizer, lr)?;
        }
        Ok(())
    }

    fn record(&mut self, lr: f64, is_final: bool) -> Result<MetricsRecord> {
        let train_loss = self
            .losses
            .iter()
            .map(|&(s, n)| (n > 0).then(|| s / n as f64))
            .collect();
        self.losses.iter_mut().for_each(|l| *l = (0.0, 0));
        // Moments are complete only at the end; earlier evaluations use the
        // validation batch's own statistics.
        // Domains left out of the plan never accumulate moments and are
        // always evaluated on their own batch statistics.
        let eval_mode = if is_final { Mode::Frozen } else { Mode::BnPlus };
        let val_error = self
            .datasets
            .iter()
            .enumerate()
            .map(|(i, ds)| {
                let d = DomainId::from_index(i);
                let mode = if self.active.contains(&d) { eval_mode } else { Mode::BnPlus };
                evaluate(&self.model, ds, d, Split::Val, mode, self.config.eval_batch_size)
            })
            .collect::<Result<Vec<_>>>()?;
        let mean_error = val_error.iter().sum::<f64>() / val_error.len() as f64;
        Ok(MetricsRecord {
            step: self.step,
            lr,
            train_loss,
            val_error,
            mean_error,
            eval_mode,
            is_final,
        })
    }
}
