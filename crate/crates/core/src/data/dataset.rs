use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::tensor::{Dims4, Tensor4};
use crate::util::rng_for;
use crate::DomainId;

/// Per-channel whitening statistics (population mean and standard deviation).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Whitening {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Static description of one domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainDescriptor {
    pub id: DomainId,
    pub name: String,
    /// `(H, W, C)` of every image.
    pub input: (usize, usize, usize),
    pub classes: usize,
    pub flip_allowed: bool,
    pub whitening: Option<Whitening>,
    pub split_ratio: f64,
}

impl DomainDescriptor {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config(format!(
                "domain `{}` has {} classes; at least 2 required",
                self.name, self.classes
            )));
        }
        if let Some(w) = &self.whitening {
            if let Some(c) = w.std.iter().position(|&s| !(s > 0.0)) {
                return Err(Error::DegenerateChannel { channel: c });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
}

/// Seeded uniform train/val assignment with exactly `round(ratio·n)` train
/// examples.
pub fn split(n: usize, ratio: f64, seed: u64) -> Result<Vec<Split>> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio must be in (0, 1), got {ratio}")));
    }
    let n_train = (ratio * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, "split", &[n as u64]));
    let mut out = vec![Split::Val; n];
    for &i in &order[..n_train] {
        out[i] = Split::Train;
    }
    Ok(out)
}

/// Images (H×W×C×N) with labels and a train/val assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub descriptor: DomainDescriptor,
    images: Tensor4<f32>,
    labels: Vec<usize>,
    split: Vec<Split>,
}

impl Dataset {
    /// A dataset with every example in the training split.
    pub fn new(descriptor: DomainDescriptor, images: Tensor4<f32>, labels: Vec<usize>) -> Result<Self> {
        descriptor.validate()?;
        let d = images.dims();
        let (h, w, c) = descriptor.input;
        ensure_dim("image H", h, d.h)?;
        ensure_dim("image W", w, d.w)?;
        ensure_dim("image C", c, d.c)?;
        ensure_dim("label count", d.t, labels.len())?;
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= descriptor.classes) {
            return Err(Error::Label {
                index: i,
                label: l,
                classes: descriptor.classes,
            });
        }
        let split = vec![Split::Train; labels.len()];
        Ok(Self {
            descriptor,
            images,
            labels,
            split,
        })
    }

    /// Reassigns the split with `split(len, ratio, seed)`.
    pub fn with_split(mut self, ratio: f64, seed: u64) -> Result<Self> {
        self.split = split(self.len(), ratio, seed)?;
        self.descriptor.split_ratio = ratio;
        Ok(self)
    }

    pub fn with_assignment(mut self, assignment: Vec<Split>) -> Result<Self> {
        ensure_dim("split assignment", self.len(), assignment.len())?;
        self.split = assignment;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn images(&self) -> &Tensor4<f32> {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn assignment(&self) -> &[Split] {
        &self.split
    }

    pub fn indices(&self, which: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split[i] == which).collect()
    }

    /// Images and labels of the given examples, in order.
    pub fn batch(&self, indices: &[usize]) -> (Tensor4<f32>, Vec<usize>) {
        (
            self.images.gather(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    /// Replicates a single channel three times; other datasets are returned
    /// unchanged.
    pub fn to_rgb(self) -> Result<Self> {
        let d = self.images.dims();
        if d.c != 1 {
            return Ok(self);
        }
        let images = Tensor4::from_fn(Dims4::new(d.h, d.w, 3, d.t), |v, u, _, t| {
            self.images.at(v, u, 0, t)
        });
        let mut descriptor = self.descriptor;
        descriptor.input.2 = 3;
        if let Some(w) = &mut descriptor.whitening {
            w.mean = vec![w.mean[0]; 3];
            w.std = vec![w.std[0]; 3];
        }
        Ok(Self {
            descriptor,
            images,
            ..self
        })
    }

    /// Per-channel population statistics over the training split only.
    pub fn train_statistics(&self) -> Result<Whitening> {
        let d = self.images.dims();
        let train = self.indices(Split::Train);
        if train.is_empty() {
            return Err(Error::Config(format!(
                "domain `{}` has an empty training split",
                self.descriptor.name
            )));
        }
        let mut mean = vec![0.0; d.c];
        let mut std = vec![0.0; d.c];
        let n = (train.len() * d.plane()) as f64;
        for c in 0..d.c {
            let s: f64 = train
                .iter()
                .map(|&t| self.images.plane(c, t).iter().map(|&v| v as f64).sum::<f64>())
                .sum();
            let m = s / n;
            let q: f64 = train
                .iter()
                .map(|&t| {
                    self.images
                        .plane(c, t)
                        .iter()
                        .map(|&v| (v as f64 - m).powi(2))
                        .sum::<f64>()
                })
                .sum();
            mean[c] = m;
            std[c] = (q / n).sqrt();
        }
        if let Some(c) = std.iter().position(|&s| !(s > 1e-12)) {
            return Err(Error::DegenerateChannel { channel: c });
        }
        Ok(Whitening { mean, std })
    }

    /// Applies `(x − mean)/std` per channel to every example.
    pub fn apply_whitening(mut self, w: &Whitening) -> Result<Self> {
        let d = self.images.dims();
        ensure_dim("whitening channels", d.c, w.mean.len())?;
        ensure_dim("whitening channels", d.c, w.std.len())?;
        for t in 0..d.t {
            for c in 0..d.c {
                let (m, s) = (w.mean[c], w.std[c]);
                for v in self.images.plane_mut(c, t) {
                    *v = ((*v as f64 - m) / s) as f32;
                }
            }
        }
        self.descriptor.whitening = Some(w.clone());
        Ok(self)
    }
}

/// Whitens with statistics of the training split; validation pixels are
/// never read when computing them.
pub fn whiten(dataset: Dataset) -> Result<(Dataset, Whitening)> {
    let stats = dataset.train_statistics()?;
    Ok((dataset.apply_whitening(&stats)?, stats))
}
