//! Central finite-difference oracle for hand-written backward passes.
//!
//! The objective is always evaluated in `f64`. The analytic gradient under
//! test is computed either in `f32` ([`Precision::Single`], the storage type
//! used for training) or in `f64` ([`Precision::Double`]).
//!
//! Error per slot is the largest absolute deviation between analytic and
//! numeric gradient, divided by the larger of the two gradients' max-norms over
//! the checked entries (0 when both are identically zero).

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::Result;
use crate::network::Model;
use crate::norm::{self, Mode, ScaleParams};
use crate::ops;
use crate::scalar::{cast_slice, Scalar};
use crate::tensor::{Dims4, Tensor4};
use crate::util::rng_for;
use crate::DomainId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Precision {
    Single,
    Double,
}

/// One named input tensor, flattened.
#[derive(Clone, Debug)]
pub struct Slot {
    pub name: String,
    pub values: Vec<f64>,
}

impl Slot {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            values,
        }
    }
}

/// A scalar function of several input slots with an analytic gradient.
pub trait Differentiable: Sync {
    fn name(&self) -> String;
    fn inputs(&self) -> Vec<Slot>;
    /// The objective in full precision.
    fn objective(&self, inputs: &[Vec<f64>]) -> Result<f64>;
    /// Analytic gradient of the objective, one vector per slot.
    fn gradient(&self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>>;
}

#[derive(Clone, Copy, Debug)]
pub struct CheckOptions {
    pub h: f64,
    pub tol: f64,
    /// Check at most this many randomly chosen entries per slot.
    pub max_entries: Option<usize>,
    pub seed: u64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            h: 1e-5,
            tol: 1e-4,
            max_entries: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SlotReport {
    pub name: String,
    pub max_rel_error: f64,
    pub entries_checked: usize,
    pub flagged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradReport {
    pub op: String,
    pub tol: f64,
    pub slots: Vec<SlotReport>,
    /// Set when the oracle itself could not be evaluated.
    pub failure: Option<String>,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none() && self.slots.iter().all(|s| !s.flagged)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.slots.iter().map(|s| s.max_rel_error).fold(0.0, f64::max)
    }

    pub fn flagged_fraction(&self) -> f64 {
        if self.slots.is_empty() {
            return 0.0;
        }
        self.slots.iter().filter(|s| s.flagged).count() as f64 / self.slots.len() as f64
    }

    fn failed(op: String, tol: f64, why: String) -> Self {
        Self {
            op,
            tol,
            slots: Vec::new(),
            failure: Some(why),
        }
    }
}

impl std::fmt::Display for GradReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let status = if self.passed() { "ok" } else { "FAIL" };
        write!(f, "{:<16} {:>4}  max rel err {:.3e} (tol {:.0e})", self.op, status, self.max_rel_error(), self.tol)?;
        if let Some(why) = &self.failure {
            write!(f, "  oracle failure: {why}")?;
        }
        for s in &self.slots {
            write!(f, "\n    {:<24} {:.3e} over {} entries{}", s.name, s.max_rel_error, s.entries_checked, if s.flagged { "  <-- flagged" } else { "" })?;
        }
        Ok(())
    }
}

/// Compares the analytic gradient of `op` with central differences
/// `(f(x+h) − f(x−h)) / 2h`.
pub fn finite_difference_check(op: &dyn Differentiable, opts: &CheckOptions) -> GradReport {
    let name = op.name();
    let slots = op.inputs();
    let point: Vec<Vec<f64>> = slots.iter().map(|s| s.values.clone()).collect();
    let analytic = match op.gradient(&point) {
        Ok(g) => g,
        Err(e) => return GradReport::failed(name, opts.tol, format!("analytic gradient: {e}")),
    };

    let mut rng = rng_for(opts.seed, "gradcheck", &[]);
    let mut reports = Vec::with_capacity(slots.len());
    for (si, slot) in slots.iter().enumerate() {
        let n = slot.values.len();
        let mut entries: Vec<usize> = match opts.max_entries {
            Some(m) if m < n => sample(&mut rng, n, m).into_vec(),
            _ => (0..n).collect(),
        };
        entries.sort_unstable();

        let mut numeric = Vec::with_capacity(entries.len());
        let mut probe = point.clone();
        for &i in &entries {
            let x0 = point[si][i];
            probe[si][i] = x0 + opts.h;
            let plus = op.objective(&probe);
            probe[si][i] = x0 - opts.h;
            let minus = op.objective(&probe);
            probe[si][i] = x0;
            match (plus, minus) {
                (Ok(p), Ok(m)) if p.is_finite() && m.is_finite() => {
                    numeric.push((p - m) / (2.0 * opts.h))
                }
                (p, m) => {
                    let why = format!(
                        "non-finite objective at {}[{i}]: f(x+h)={:?}, f(x−h)={:?}",
                        slot.name,
                        p.map_err(|e| e.to_string()),
                        m.map_err(|e| e.to_string())
                    );
                    return GradReport::failed(name, opts.tol, why);
                }
            }
        }

        let a: Vec<f64> = entries.iter().map(|&i| analytic[si][i]).collect();
        let scale = a
            .iter()
            .chain(&numeric)
            .map(|v| v.abs())
            .fold(0.0, f64::max);
        let worst = a
            .iter()
            .zip(&numeric)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        let err = if scale == 0.0 { 0.0 } else { worst / scale };
        reports.push(SlotReport {
            name: slot.name.clone(),
            max_rel_error: err,
            entries_checked: entries.len(),
            flagged: !(err < opts.tol),
        });
    }
    GradReport {
        op: name,
        tol: opts.tol,
        slots: reports,
        failure: None,
    }
}

/// A primitive layer exercised through the oracle with a fixed random
/// projection of its output as the scalar objective.
pub trait LayerOp: Sync {
    fn name(&self) -> &str;
    fn slots(&self) -> Vec<Slot>;
    fn forward<T: Scalar>(&self, inputs: &[Vec<T>]) -> Result<Tensor4<T>>;
    fn backward<T: Scalar>(&self, inputs: &[Vec<T>], upstream: &Tensor4<T>) -> Result<Vec<Vec<T>>>;
}

/// `objective = Σ r ⊙ layer(inputs)` for a fixed Gaussian `r`.
pub struct Projected<L> {
    layer: L,
    projection: Tensor4<f64>,
    precision: Precision,
}

impl<L: LayerOp> Projected<L> {
    pub fn new(layer: L, precision: Precision, seed: u64) -> Result<Self> {
        let point: Vec<Vec<f64>> = layer.slots().into_iter().map(|s| s.values).collect();
        let dims = layer.forward::<f64>(&point)?.dims();
        let mut rng = rng_for(seed, "projection", &[]);
        let projection = Tensor4::from_fn(dims, |_, _, _, _| rng.sample(StandardNormal));
        Ok(Self {
            layer,
            projection,
            precision,
        })
    }

    fn gradient_in<T: Scalar>(&self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let cast: Vec<Vec<T>> = inputs.iter().map(|v| cast_slice(v)).collect();
        let grads = self.layer.backward::<T>(&cast, &self.projection.cast())?;
        Ok(grads.iter().map(|g| cast_slice(g)).collect())
    }
}

impl<L: LayerOp> Differentiable for Projected<L> {
    fn name(&self) -> String {
        self.layer.name().to_string()
    }

    fn inputs(&self) -> Vec<Slot> {
        self.layer.slots()
    }

    fn objective(&self, inputs: &[Vec<f64>]) -> Result<f64> {
        let y = self.layer.forward::<f64>(inputs)?;
        Ok(y.data()
            .iter()
            .zip(self.projection.data())
            .map(|(a, b)| a * b)
            .sum())
    }

    fn gradient(&self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        match self.precision {
            Precision::Single => self.gradient_in::<f32>(inputs),
            Precision::Double => self.gradient_in::<f64>(inputs),
        }
    }
}

fn gaussian(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn tensor<T: Scalar>(dims: Dims4, values: &[T]) -> Result<Tensor4<T>> {
    Tensor4::new(dims, values.to_vec())
}

pub struct ConvLayer {
    pub x: Dims4,
    pub w: Dims4,
    pub stride: usize,
    pub pad: usize,
    pub seed: u64,
}

impl LayerOp for ConvLayer {
    fn name(&self) -> &str {
        "conv2d"
    }

    fn slots(&self) -> Vec<Slot> {
        let mut rng = rng_for(self.seed, "conv", &[]);
        vec![
            Slot::new("x", gaussian(&mut rng, self.x.len(), 1.0)),
            Slot::new("weights", gaussian(&mut rng, self.w.len(), 0.5)),
            Slot::new("bias", gaussian(&mut rng, self.w.t, 0.5)),
        ]
    }

    fn forward<T: Scalar>(&self, i: &[Vec<T>]) -> Result<Tensor4<T>> {
        ops::conv2d(&tensor(self.x, &i[0])?, &tensor(self.w, &i[1])?, &i[2], self.stride, self.pad)
    }

    fn backward<T: Scalar>(&self, i: &[Vec<T>], up: &Tensor4<T>) -> Result<Vec<Vec<T>>> {
        let g = ops::conv2d_backward(&tensor(self.x, &i[0])?, &tensor(self.w, &i[1])?, self.stride, self.pad, up)?;
        Ok(vec![g.input.expect("requested").into_data(), g.weights.into_data(), g.bias])
    }
}

pub struct LinearLayer {
    pub x: Dims4,
    pub outputs: usize,
    pub seed: u64,
}

impl LayerOp for LinearLayer {
    fn name(&self) -> &str {
        "linear"
    }

    fn slots(&self) -> Vec<Slot> {
        let mut rng = rng_for(self.seed, "linear", &[]);
        let f = self.x.instance();
        vec![
            Slot::new("x", gaussian(&mut rng, self.x.len(), 1.0)),
            Slot::new("weights", gaussian(&mut rng, f * self.outputs, 0.5)),
            Slot::new("bias", gaussian(&mut rng, self.outputs, 0.5)),
        ]
    }

    fn forward<T: Scalar>(&self, i: &[Vec<T>]) -> Result<Tensor4<T>> {
        let w = tensor(ops::linear_dims(self.x.instance(), self.outputs), &i[1])?;
        ops::linear(&tensor(self.x, &i[0])?, &w, &i[2])
    }

    fn backward<T: Scalar>(&self, i: &[Vec<T>], up: &Tensor4<T>) -> Result<Vec<Vec<T>>> {
        let w = tensor(ops::linear_dims(self.x.instance(), self.outputs), &i[1])?;
        let g = ops::linear_backward(&tensor(self.x, &i[0])?, &w, up)?;
        Ok(vec![g.input.into_data(), g.weights.into_data(), g.bias])
    }
}

/// ReLU evaluated away from its kink: inputs have magnitude at least 0.1.
pub struct ReluLayer {
    pub x: Dims4,
    pub seed: u64,
}

impl LayerOp for ReluLayer {
    fn name(&self) -> &str {
        "relu"
    }

    fn slots(&self) -> Vec<Slot> {
        let mut rng = rng_for(self.seed, "relu", &[]);
        let x = gaussian(&mut rng, self.x.len(), 1.0)
            .into_iter()
            .map(|v| if v.abs() < 0.1 { v.signum() * 0.1 + v } else { v })
            .collect();
        vec![Slot::new("x", x)]
    }

    fn forward<T: Scalar>(&self, i: &[Vec<T>]) -> Result<Tensor4<T>> {
        Ok(ops::relu(&tensor(self.x, &i[0])?))
    }

    fn backward<T: Scalar>(&self, i: &[Vec<T>], up: &Tensor4<T>) -> Result<Vec<Vec<T>>> {
        Ok(vec![ops::relu_backward(&tensor(self.x, &i[0])?, up)?.into_data()])
    }
}

pub struct PoolLayer {
    pub x: Dims4,
    pub seed: u64,
}

impl LayerOp for PoolLayer {
    fn name(&self) -> &str {
        "global_avg_pool"
    }

    fn slots(&self) -> Vec<Slot> {
        let mut rng = rng_for(self.seed, "pool", &[]);
        vec![Slot::new("x", gaussian(&mut rng, self.x.len(), 1.0))]
    }

    fn forward<T: Scalar>(&self, i: &[Vec<T>]) -> Result<Tensor4<T>> {
        Ok(ops::global_avg_pool(&tensor(self.x, &i[0])?))
    }

    fn backward<T: Scalar>(&self, _: &[Vec<T>], up: &Tensor4<T>) -> Result<Vec<Vec<T>>> {
        Ok(vec![ops::global_avg_pool_backward(self.x, up)?.into_data()])
    }
}

pub struct BatchNormLayer {
    pub x: Dims4,
    pub eps: f64,
    pub seed: u64,
}

impl LayerOp for BatchNormLayer {
    fn name(&self) -> &str {
        "batch_norm"
    }

    fn slots(&self) -> Vec<Slot> {
        let mut rng = rng_for(self.seed, "bn", &[]);
        vec![Slot::new("x", gaussian(&mut rng, self.x.len(), 1.0))]
    }

    fn forward<T: Scalar>(&self, i: &[Vec<T>]) -> Result<Tensor4<T>> {
        Ok(norm::batch_norm_forward(&tensor(self.x, &i[0])?, self.eps).0)
    }

    fn backward<T: Scalar>(&self, i: &[Vec<T>], up: &Tensor4<T>) -> Result<Vec<Vec<T>>> {
        Ok(vec![norm::batch_norm_backward(&tensor(self.x, &i[0])?, up, self.eps)?.into_data()])
    }
}

pub struct InstanceNormLayer {
    pub x: Dims4,
    pub eps: f64,
    pub seed: u64,
}

impl LayerOp for InstanceNormLayer {
    fn name(&self) -> &str {
        "instance_norm"
    }

    fn slots(&self) -> Vec<Slot> {
        let mut rng = rng_for(self.seed, "in", &[]);
        vec![Slot::new("x", gaussian(&mut rng, self.x.len(), 1.0))]
    }

    fn forward<T: Scalar>(&self, i: &[Vec<T>]) -> Result<Tensor4<T>> {
        Ok(norm::instance_norm_forward(&tensor(self.x, &i[0])?, self.eps))
    }

    fn backward<T: Scalar>(&self, i: &[Vec<T>], up: &Tensor4<T>) -> Result<Vec<Vec<T>>> {
        Ok(vec![norm::instance_norm_backward(&tensor(self.x, &i[0])?, up, self.eps)?.into_data()])
    }
}

pub struct ScaleLayer {
    pub x: Dims4,
    pub seed: u64,
}

impl LayerOp for ScaleLayer {
    fn name(&self) -> &str {
        "scale"
    }

    fn slots(&self) -> Vec<Slot> {
        let mut rng = rng_for(self.seed, "scale", &[]);
        vec![
            Slot::new("x", gaussian(&mut rng, self.x.len(), 1.0)),
            Slot::new("s", gaussian(&mut rng, self.x.c, 1.0)),
            Slot::new("b", gaussian(&mut rng, self.x.c, 1.0)),
        ]
    }

    fn forward<T: Scalar>(&self, i: &[Vec<T>]) -> Result<Tensor4<T>> {
        let p = ScaleParams::new(i[1].clone(), i[2].clone())?;
        norm::scale_forward(&tensor(self.x, &i[0])?, &p)
    }

    fn backward<T: Scalar>(&self, i: &[Vec<T>], up: &Tensor4<T>) -> Result<Vec<Vec<T>>> {
        let p = ScaleParams::new(i[1].clone(), i[2].clone())?;
        let (dx, g) = norm::scale_backward(&tensor(self.x, &i[0])?, &p, up)?;
        Ok(vec![dx.into_data(), g.s, g.b])
    }
}

/// Softmax cross-entropy; the objective is the loss itself.
pub struct SoftmaxCeCheck {
    pub classes: usize,
    pub batch: usize,
    pub precision: Precision,
    pub seed: u64,
}

impl SoftmaxCeCheck {
    fn labels(&self) -> Vec<usize> {
        let mut rng = rng_for(self.seed, "labels", &[]);
        (0..self.batch).map(|_| rng.random_range(0..self.classes)).collect()
    }

    fn dims(&self) -> Dims4 {
        Dims4::new(1, 1, self.classes, self.batch)
    }

    fn grad_in<T: Scalar>(&self, logits: &[f64]) -> Result<Vec<Vec<f64>>> {
        let z = Tensor4::<T>::new(self.dims(), cast_slice(logits))?;
        let (_, g) = ops::softmax_cross_entropy(&z, &self.labels())?;
        Ok(vec![cast_slice(g.data())])
    }
}

impl Differentiable for SoftmaxCeCheck {
    fn name(&self) -> String {
        "softmax_ce".into()
    }

    fn inputs(&self) -> Vec<Slot> {
        let mut rng = rng_for(self.seed, "logits", &[]);
        vec![Slot::new("logits", gaussian(&mut rng, self.classes * self.batch, 2.0))]
    }

    fn objective(&self, inputs: &[Vec<f64>]) -> Result<f64> {
        let z = Tensor4::<f64>::new(self.dims(), inputs[0].clone())?;
        Ok(ops::softmax_cross_entropy(&z, &self.labels())?.0)
    }

    fn gradient(&self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        match self.precision {
            Precision::Single => self.grad_in::<f32>(&inputs[0]),
            Precision::Double => self.grad_in::<f64>(&inputs[0]),
        }
    }
}

/// Wraps an operation and negates its analytic gradient (negative control).
pub struct SignFlipped<D>(pub D);

impl<D: Differentiable> Differentiable for SignFlipped<D> {
    fn name(&self) -> String {
        format!("{} (sign-flipped)", self.0.name())
    }

    fn inputs(&self) -> Vec<Slot> {
        self.0.inputs()
    }

    fn objective(&self, inputs: &[Vec<f64>]) -> Result<f64> {
        self.0.objective(inputs)
    }

    fn gradient(&self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .0
            .gradient(inputs)?
            .into_iter()
            .map(|g| g.into_iter().map(|v| -v).collect())
            .collect())
    }
}

/// The standard battery: every primitive layer type on small random tensors.
pub fn layer_suite(precision: Precision, seed: u64) -> Result<Vec<Box<dyn Differentiable>>> {
    let eps = norm::DEFAULT_EPS;
    Ok(vec![
        Box::new(Projected::new(
            ConvLayer { x: Dims4::new(5, 5, 3, 2), w: Dims4::new(3, 3, 3, 4), stride: 1, pad: 1, seed },
            precision,
            seed,
        )?),
        Box::new(Projected::new(
            ConvLayer { x: Dims4::new(5, 5, 2, 2), w: Dims4::new(1, 1, 2, 3), stride: 2, pad: 0, seed },
            precision,
            seed,
        )?),
        Box::new(Projected::new(LinearLayer { x: Dims4::new(2, 2, 3, 3), outputs: 4, seed }, precision, seed)?),
        Box::new(Projected::new(ReluLayer { x: Dims4::new(3, 3, 2, 2), seed }, precision, seed)?),
        Box::new(Projected::new(PoolLayer { x: Dims4::new(3, 4, 2, 3), seed }, precision, seed)?),
        Box::new(SoftmaxCeCheck { classes: 5, batch: 3, precision, seed }),
        Box::new(Projected::new(BatchNormLayer { x: Dims4::new(2, 2, 2, 3), eps, seed }, precision, seed)?),
        Box::new(Projected::new(InstanceNormLayer { x: Dims4::new(3, 3, 2, 2), eps, seed }, precision, seed)?),
        Box::new(Projected::new(ScaleLayer { x: Dims4::new(3, 2, 3, 2), seed }, precision, seed)?),
    ])
}

/// The whole network: training-mode cross-entropy of one pure batch as a
/// function of every learnable slot.
pub struct ModelCheck {
    model: Model<f64>,
    x: Tensor4<f64>,
    labels: Vec<usize>,
    domain: DomainId,
    precision: Precision,
}

impl ModelCheck {
    pub fn new<T: Scalar>(model: &Model<T>, x: &Tensor4<T>, labels: &[usize], domain: DomainId, precision: Precision) -> Self {
        Self {
            model: model.cast(),
            x: x.cast(),
            labels: labels.to_vec(),
            domain,
            precision,
        }
    }

    /// A random batch of `batch` instances drawn from `seed`.
    pub fn random_batch<T: Scalar>(model: &Model<T>, domain: DomainId, batch: usize, seed: u64, precision: Precision) -> Result<Self> {
        let (h, w, c) = model.blueprint().input;
        let k = model.blueprint().classes[domain.checked_index(model.domains())?];
        let mut rng = rng_for(seed, "model-batch", &[]);
        let x = Tensor4::from_fn(Dims4::new(h, w, c, batch), |_, _, _, _| rng.sample(StandardNormal));
        let labels = (0..batch).map(|_| rng.random_range(0..k)).collect::<Vec<_>>();
        Ok(Self::new(&model.cast::<f64>(), &x, &labels, domain, precision))
    }

    fn with_params<T: Scalar>(&self, inputs: &[Vec<f64>]) -> Result<Model<T>> {
        let mut m = self.model.cast::<T>();
        m.bank.load_slots(inputs)?;
        Ok(m)
    }

    fn grad_in<T: Scalar>(&self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let m = self.with_params::<T>(inputs)?;
        let (_, grads, _) = m.loss_and_grads(&self.x.cast(), &self.labels, self.domain)?;
        Ok(inputs
            .iter()
            .enumerate()
            .map(|(i, v)| cast_slice(&grads.dense(i, v.len())))
            .collect())
    }
}

impl Differentiable for ModelCheck {
    fn name(&self) -> String {
        format!("model ({})", self.model.blueprint().preset.label())
    }

    fn inputs(&self) -> Vec<Slot> {
        let names = self.model.bank.slot_names();
        self.model
            .bank
            .slots()
            .into_iter()
            .zip(names)
            .map(|((v, _), n)| Slot::new(n, v.to_vec()))
            .collect()
    }

    fn objective(&self, inputs: &[Vec<f64>]) -> Result<f64> {
        let m = self.with_params::<f64>(inputs)?;
        let fwd = m.forward(&self.x, self.domain, Mode::Train, false)?;
        Ok(ops::softmax_cross_entropy(&fwd.logits, &self.labels)?.0)
    }

    fn gradient(&self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        match self.precision {
            Precision::Single => self.grad_in::<f32>(inputs),
            Precision::Double => self.grad_in::<f64>(inputs),
        }
    }
}
