use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{ensure_dim, Error, Result};
use crate::network::bank::{BatchMoment, Grads, NormSite, Param, ParamBank, ParamRole};
use crate::network::blueprint::Blueprint;
use crate::network::sharing::SharingConfig;
use crate::norm::{site_backward, site_forward, DomainParamCollections, Mode, SiteCache};
use crate::ops::{self, Padding};
use crate::scalar::Scalar;
use crate::tensor::{Dims4, Tensor4};
use crate::util::rng_for;
use crate::DomainId;

/// Which part of the network a tensor belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Stem,
    Residual,
    Classifier,
}

/// A normalization site plus the collection-local domain that selects its
/// entries. Per-domain (unshared) sites hold single-domain collections, so
/// their local domain is always 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NormRef {
    pub site: usize,
    pub domain: DomainId,
}

/// Structure of one residual unit, identical across domains.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UnitPlan {
    pub stage: usize,
    pub index: usize,
    pub cin: usize,
    pub cout: usize,
    pub stride: usize,
    pub in_size: usize,
}

impl UnitPlan {
    fn name(&self) -> String {
        format!("s{}u{}", self.stage, self.index)
    }

    /// Padding of the first (possibly strided) 3×3 convolution. A stride-2
    /// convolution on an even input drops the trailing pad row so the
    /// output tiles exactly.
    fn pad1(&self) -> Padding {
        if self.stride == 1 {
            Padding::uniform(1)
        } else {
            Padding {
                before: 1,
                after: self.in_size % 2,
            }
        }
    }

    fn projected(&self) -> bool {
        self.stride != 1 || self.cin != self.cout
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnitBinding {
    pub norm1: NormRef,
    pub conv1: usize,
    pub norm2: NormRef,
    pub conv2: usize,
    pub proj: Option<usize>,
}

/// Parameter ids one domain resolves to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DomainBinding {
    pub stem: usize,
    pub units: Vec<UnitBinding>,
    pub head_norm: NormRef,
    pub fc_weight: usize,
    pub fc_bias: usize,
}

impl DomainBinding {
    pub fn tensor_ids(&self) -> Vec<usize> {
        let mut v = vec![self.stem];
        for u in &self.units {
            v.push(u.conv1);
            v.push(u.conv2);
            v.extend(u.proj);
        }
        v.push(self.fc_weight);
        v.push(self.fc_bias);
        v
    }

    pub fn norm_refs(&self) -> Vec<NormRef> {
        let mut v = Vec::new();
        for u in &self.units {
            v.push(u.norm1);
            v.push(u.norm2);
        }
        v.push(self.head_norm);
        v
    }
}

/// Exact parameter counts of a model (all domains together).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ParamCounts {
    pub stem: usize,
    pub residual: usize,
    pub classifier: usize,
    /// Learnable scales and biases of the normalization sites.
    pub scales: usize,
    /// Accumulated (non-learnable) BN means and variances.
    pub moments: usize,
}

impl ParamCounts {
    pub fn conv(&self) -> usize {
        self.stem + self.residual
    }

    /// Everything except normalization collections.
    pub fn non_norm(&self) -> usize {
        self.conv() + self.classifier
    }

    /// All learnable parameters.
    pub fn total(&self) -> usize {
        self.non_norm() + self.scales
    }
}

/// A network instantiated for `D` domains under a sharing configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T = f32> {
    blueprint: Blueprint,
    sharing: SharingConfig,
    eps: f64,
    plan: Vec<UnitPlan>,
    groups: Vec<ParamGroup>,
    pub bank: ParamBank<T>,
    bindings: Vec<DomainBinding>,
    pairings: Vec<Vec<usize>>,
}

struct UnitTape<T> {
    site1: SiteCache<T>,
    a: Tensor4<T>,
    site2: SiteCache<T>,
    b: Tensor4<T>,
    sub: Option<Tensor4<T>>,
}

struct Tape<T> {
    domain: DomainId,
    input: Tensor4<T>,
    units: Vec<UnitTape<T>>,
    head: SiteCache<T>,
    head_act: Tensor4<T>,
    pooled: Tensor4<T>,
}

/// Result of a forward pass.
pub struct Forward<T = f32> {
    pub logits: Tensor4<T>,
    /// Batch statistics of BN sites (train mode only).
    pub moments: Vec<BatchMoment<T>>,
    tape: Option<Tape<T>>,
}

impl<T> Forward<T> {
    pub fn has_tape(&self) -> bool {
        self.tape.is_some()
    }

    /// Drops retained activations; a later backward is a lifecycle error.
    pub fn discard_tape(&mut self) {
        self.tape = None;
    }
}

struct Builder<'a, T> {
    seed: u64,
    bank: ParamBank<T>,
    groups: Vec<ParamGroup>,
    index: HashMap<String, usize>,
    sites: HashMap<String, usize>,
    bp: &'a Blueprint,
}

impl<T: Scalar> Builder<'_, T> {
    fn qualified(name: &str, owner: Option<DomainId>) -> String {
        match owner {
            Some(d) => format!("d{d}/{name}"),
            None => name.to_string(),
        }
    }

    /// He-normal tensor. The draw depends on the base name and the owning
    /// domain's position only, so domain 1's private copy equals the shared
    /// tensor of the same name.
    fn tensor(&mut self, name: &str, owner: Option<DomainId>, dims: Dims4, group: ParamGroup, fan_in: usize) -> usize {
        let full = Self::qualified(name, owner);
        if let Some(&id) = self.index.get(&full) {
            return id;
        }
        let copy = owner.map_or(0, |d| d.index() as u64);
        let mut rng = rng_for(self.seed, name, &[copy]);
        let std = (2.0 / fan_in as f64).sqrt();
        let value = Tensor4::from_fn(dims, |_, _, _, _| {
            T::of(std * rng.sample::<f64, _>(StandardNormal))
        });
        self.push(full, ParamRole::Weight, value, group)
    }

    fn zeros(&mut self, name: &str, owner: Option<DomainId>, dims: Dims4, group: ParamGroup) -> usize {
        let full = Self::qualified(name, owner);
        if let Some(&id) = self.index.get(&full) {
            return id;
        }
        self.push(full, ParamRole::Bias, Tensor4::zeros(dims), group)
    }

    fn push(&mut self, name: String, role: ParamRole, value: Tensor4<T>, group: ParamGroup) -> usize {
        let id = self.bank.tensors.len();
        self.index.insert(name.clone(), id);
        self.bank.tensors.push(Param { name, role, value });
        self.groups.push(group);
        id
    }

    fn site(&mut self, name: &str, owner: Option<DomainId>, d: DomainId, channels: usize) -> NormRef {
        let full = Self::qualified(name, owner);
        let site = match self.sites.get(&full) {
            Some(&id) => id,
            None => {
                let domains = if owner.is_some() { 1 } else { self.bp.domains() };
                let id = self.bank.sites.len();
                self.bank.sites.push(NormSite {
                    name: full.clone(),
                    coll: DomainParamCollections::new(&self.bp.norm, channels, domains),
                });
                self.sites.insert(full, id);
                id
            }
        };
        let domain = if owner.is_some() { DomainId::from_index(0) } else { d };
        NormRef { site, domain }
    }
}

fn conv_dims(k: usize, cin: usize, cout: usize) -> Dims4 {
    Dims4::new(k, k, cin, cout)
}

fn add_into<T: Scalar>(acc: &mut Tensor4<T>, other: &Tensor4<T>) {
    for (a, &b) in acc.data_mut().iter_mut().zip(other.data()) {
        *a += b;
    }
}

/// Instantiates a blueprint for its `D` domains under `sharing`, drawing the
/// initial weights from `seed`.
pub fn apply_sharing<T: Scalar>(bp: &Blueprint, sharing: &SharingConfig, seed: u64) -> Result<Model<T>> {
    bp.validate()?;
    sharing.validate(bp)?;
    let mut plan = Vec::new();
    let mut cin = bp.stem_filters;
    let mut size = bp.input.0;
    for (si, st) in bp.stages.iter().enumerate() {
        for ui in 0..st.units {
            let stride = if si > 0 && ui == 0 { 2 } else { 1 };
            plan.push(UnitPlan {
                stage: si + 1,
                index: ui + 1,
                cin,
                cout: st.filters,
                stride,
                in_size: size,
            });
            cin = st.filters;
            size = st.size;
        }
    }

    let mut b = Builder {
        seed,
        bank: ParamBank {
            tensors: Vec::new(),
            sites: Vec::new(),
        },
        groups: Vec::new(),
        index: HashMap::new(),
        sites: HashMap::new(),
        bp,
    };
    let last_stage = bp.stages.len();
    let c_in = bp.input.2;
    let features = bp.stages[last_stage - 1].filters;
    let mut bindings = Vec::new();
    for d in DomainId::all(bp.domains()) {
        let owner = |shared: bool| (!shared).then_some(d);
        let stem_owner = owner(sharing.stage_shared(1));
        let stem = b.tensor("stem.conv", stem_owner, conv_dims(3, c_in, bp.stem_filters), ParamGroup::Stem, 9 * c_in);
        let mut units = Vec::new();
        for u in &plan {
            let o = owner(sharing.stage_shared(u.stage));
            let n = u.name();
            let norm1 = b.site(&format!("{n}.norm1"), o, d, u.cin);
            let conv1 = b.tensor(&format!("{n}.conv1"), o, conv_dims(3, u.cin, u.cout), ParamGroup::Residual, 9 * u.cin);
            let norm2 = b.site(&format!("{n}.norm2"), o, d, u.cout);
            let conv2 = b.tensor(&format!("{n}.conv2"), o, conv_dims(3, u.cout, u.cout), ParamGroup::Residual, 9 * u.cout);
            let proj = u.projected().then(|| {
                b.tensor(&format!("{n}.proj"), o, conv_dims(1, u.cin, u.cout), ParamGroup::Residual, u.cin)
            });
            units.push(UnitBinding {
                norm1,
                conv1,
                norm2,
                conv2,
                proj,
            });
        }
        let head_owner = owner(sharing.stage_shared(last_stage));
        let head_norm = b.site("head.norm", head_owner, d, features);
        let fc_owner = owner(sharing.classifier_shared());
        let k = bp.classes[d.index()];
        let fc_weight = b.tensor("head.fc.weight", fc_owner, ops::linear_dims(features, k), ParamGroup::Classifier, features);
        let fc_bias = b.zeros("head.fc.bias", fc_owner, Dims4::new(1, 1, k, 1), ParamGroup::Classifier);
        bindings.push(DomainBinding {
            stem,
            units,
            head_norm,
            fc_weight,
            fc_bias,
        });
    }

    let pairings = DomainId::all(bp.domains())
        .map(|d| {
            let k = bp.classes[d.index()];
            let mut p: Vec<usize> = (0..k).collect();
            if sharing.classifier_shared() && d.index() > 0 {
                p.shuffle(&mut rng_for(seed, "class-pairing", &[d.get() as u64]));
            }
            p
        })
        .collect();

    Ok(Model {
        blueprint: bp.clone(),
        sharing: sharing.clone(),
        eps: crate::norm::DEFAULT_EPS,
        plan,
        groups: b.groups,
        bank: b.bank,
        bindings,
        pairings,
    })
}

impl<T: Scalar> Model<T> {
    pub fn blueprint(&self) -> &Blueprint {
        &self.blueprint
    }

    pub fn sharing(&self) -> &SharingConfig {
        &self.sharing
    }

    pub fn domains(&self) -> usize {
        self.bindings.len()
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn plan(&self) -> &[UnitPlan] {
        &self.plan
    }

    pub fn binding(&self, d: DomainId) -> Result<&DomainBinding> {
        Ok(&self.bindings[d.checked_index(self.domains())?])
    }

    pub fn group(&self, tensor: usize) -> ParamGroup {
        self.groups[tensor]
    }

    /// Class pairing of domain `d`: its class `y` uses output unit
    /// `pairing[y]` of the (possibly shared) classifier. Identity unless the
    /// classifier is shared.
    pub fn pairing(&self, d: DomainId) -> Result<&[usize]> {
        Ok(&self.pairings[d.checked_index(self.domains())?])
    }

    pub fn pairings(&self) -> &[Vec<usize>] {
        &self.pairings
    }

    pub fn set_pairings(&mut self, pairings: Vec<Vec<usize>>) -> Result<()> {
        ensure_dim("pairing domains", self.domains(), pairings.len())?;
        for (d, p) in pairings.iter().enumerate() {
            ensure_dim("pairing classes", self.blueprint.classes[d], p.len())?;
            let mut seen = vec![false; p.len()];
            for &c in p {
                if c >= p.len() || std::mem::replace(&mut seen[c], true) {
                    return Err(Error::Compatibility(format!(
                        "class pairing of domain {} is not a permutation",
                        d + 1
                    )));
                }
            }
        }
        self.pairings = pairings;
        Ok(())
    }

    pub fn param_counts(&self) -> ParamCounts {
        let mut c = ParamCounts::default();
        for (p, g) in self.bank.tensors.iter().zip(&self.groups) {
            let n = p.value.len();
            match g {
                ParamGroup::Stem => c.stem += n,
                ParamGroup::Residual => c.residual += n,
                ParamGroup::Classifier => c.classifier += n,
            }
        }
        for s in &self.bank.sites {
            c.scales += s.coll.learnable_count();
            c.moments += s
                .coll
                .moment_entries()
                .iter()
                .map(|m| 2 * m.channels())
                .sum::<usize>();
        }
        c
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            blueprint: self.blueprint.clone(),
            sharing: self.sharing.clone(),
            eps: self.eps,
            plan: self.plan.clone(),
            groups: self.groups.clone(),
            bank: self.bank.cast(),
            bindings: self.bindings.clone(),
            pairings: self.pairings.clone(),
        }
    }

    fn weights(&self, id: usize) -> &Tensor4<T> {
        &self.bank.tensors[id].value
    }

    fn check_input(&self, x: &Tensor4<T>) -> Result<()> {
        let (h, w, c) = self.blueprint.input;
        let xd = x.dims();
        ensure_dim("input H", h, xd.h)?;
        ensure_dim("input W", w, xd.w)?;
        ensure_dim("input C", c, xd.c)
    }

    fn norm(
        &self,
        x: &Tensor4<T>,
        r: NormRef,
        mode: Mode,
        retain: bool,
        moments: &mut Vec<BatchMoment<T>>,
    ) -> Result<(Tensor4<T>, Option<SiteCache<T>>)> {
        let coll = &self.bank.sites[r.site].coll;
        let out = site_forward(x, &self.blueprint.norm, coll, r.domain, mode, self.eps, retain)?;
        if let Some(m) = out.batch_moments {
            if let Some(entry) = coll.moment_slot(r.domain)? {
                moments.push(BatchMoment {
                    site: r.site,
                    entry,
                    moments: m,
                });
            }
        }
        Ok((out.y, out.cache))
    }

    /// Logits of a pure batch of domain `d`, in the domain's own class order.
    /// `retain` keeps the activations needed by [`Model::backward`].
    pub fn forward(&self, x: &Tensor4<T>, d: DomainId, mode: Mode, retain: bool) -> Result<Forward<T>> {
        let bind = self.binding(d)?;
        self.check_input(x)?;
        let mut moments = Vec::new();
        let stem_w = self.weights(bind.stem);
        let mut h = ops::conv2d(x, stem_w, &vec![T::zero(); stem_w.dims().t], 1, 1)?;
        let mut tapes = Vec::with_capacity(self.plan.len());

        for (u, ub) in self.plan.iter().zip(&bind.units) {
            let (y1, site1) = self.norm(&h, ub.norm1, mode, retain, &mut moments)?;
            let a = ops::relu(&y1);
            drop(y1);
            let zero = vec![T::zero(); u.cout];
            let c1 = ops::conv2d_padded(&a, self.weights(ub.conv1), &zero, u.stride, u.pad1())?;
            let (y2, site2) = self.norm(&c1, ub.norm2, mode, retain, &mut moments)?;
            drop(c1);
            let bact = ops::relu(&y2);
            drop(y2);
            let mut out = ops::conv2d(&bact, self.weights(ub.conv2), &zero, 1, 1)?;
            let sub = match ub.proj {
                Some(p) => {
                    let sub = if u.stride == 1 { a.clone() } else { ops::subsample(&a, u.stride) };
                    add_into(&mut out, &ops::conv2d(&sub, self.weights(p), &zero, 1, 0)?);
                    Some(sub)
                }
                None => {
                    add_into(&mut out, &h);
                    None
                }
            };
            if retain {
                tapes.push(UnitTape {
                    site1: site1.expect("retained"),
                    a,
                    site2: site2.expect("retained"),
                    b: bact,
                    sub,
                });
            }
            h = out;
        }

        let (yh, head) = self.norm(&h, bind.head_norm, mode, retain, &mut moments)?;
        let head_act = ops::relu(&yh);
        let pooled = ops::global_avg_pool(&head_act);
        let z = ops::linear(&pooled, self.weights(bind.fc_weight), self.weights(bind.fc_bias).data())?;
        let logits = self.unpair(d, &z);
        let tape = retain.then(|| Tape {
            domain: d,
            input: x.clone(),
            units: tapes,
            head: head.expect("retained"),
            head_act,
            pooled,
        });
        Ok(Forward {
            logits,
            moments,
            tape,
        })
    }

    /// Classifier outputs → domain class order.
    fn unpair(&self, d: DomainId, z: &Tensor4<T>) -> Tensor4<T> {
        let p = &self.pairings[d.index()];
        if p.iter().enumerate().all(|(i, &j)| i == j) {
            return z.clone();
        }
        let mut out = z.clone();
        for t in 0..z.dims().t {
            for (y, &j) in p.iter().enumerate() {
                out.set(0, 0, y, t, z.at(0, 0, j, t));
            }
        }
        out
    }

    fn pair(&self, d: DomainId, g: &Tensor4<T>) -> Tensor4<T> {
        let p = &self.pairings[d.index()];
        let mut out = g.clone();
        for t in 0..g.dims().t {
            for (y, &j) in p.iter().enumerate() {
                out.set(0, 0, j, t, g.at(0, 0, y, t));
            }
        }
        out
    }

    /// Gradients of every learnable slot given the gradient of the logits.
    /// Slots outside domain `d`'s binding stay untouched (exactly zero).
    pub fn backward(&self, fwd: &Forward<T>, dlogits: &Tensor4<T>) -> Result<Grads<T>> {
        let tape = fwd.tape.as_ref().ok_or_else(|| {
            Error::Lifecycle("backward called without retained forward state".into())
        })?;
        ensure_dim("logit gradient T", fwd.logits.dims().t, dlogits.dims().t)?;
        ensure_dim("logit gradient classes", fwd.logits.dims().c, dlogits.dims().c)?;
        let d = tape.domain;
        let bind = self.binding(d)?;
        let bank = &self.bank;
        let mut grads = Grads::empty(bank.slot_count());

        let dz = self.pair(d, dlogits);
        let fc = ops::linear_backward(&tape.pooled, self.weights(bind.fc_weight), &dz)?;
        grads.add_to(bank.tensor_slot(bind.fc_weight), fc.weights.data());
        grads.add_to(bank.tensor_slot(bind.fc_bias), &fc.bias);
        let dact = ops::global_avg_pool_backward(tape.head_act.dims(), &fc.input)?;
        let dy = ops::relu_backward(&tape.head_act, &dact)?;
        let (mut dh, sg) = site_backward(&tape.head, &dy)?;
        grads.add_scale(bank.scale_slot(bind.head_norm.site, tape.head.scale_slot), &sg);

        for ((u, ub), ut) in self.plan.iter().zip(&bind.units).zip(&tape.units).rev() {
            let g2 = ops::conv2d_backward(&ut.b, self.weights(ub.conv2), 1, 1, &dh)?;
            grads.add_to(bank.tensor_slot(ub.conv2), g2.weights.data());
            let dy2 = ops::relu_backward(&ut.b, &g2.input.expect("requested"))?;
            let (dc1, sg2) = site_backward(&ut.site2, &dy2)?;
            grads.add_scale(bank.scale_slot(ub.norm2.site, ut.site2.scale_slot), &sg2);
            let g1 = ops::conv2d_backward_with(&ut.a, self.weights(ub.conv1), u.stride, u.pad1(), &dc1, true)?;
            grads.add_to(bank.tensor_slot(ub.conv1), g1.weights.data());
            let mut da = g1.input.expect("requested");
            if let (Some(p), Some(sub)) = (ub.proj, &ut.sub) {
                let gp = ops::conv2d_backward(sub, self.weights(p), 1, 0, &dh)?;
                grads.add_to(bank.tensor_slot(p), gp.weights.data());
                let dsub = gp.input.expect("requested");
                if u.stride == 1 {
                    add_into(&mut da, &dsub);
                } else {
                    add_into(&mut da, &ops::subsample_backward(ut.a.dims(), u.stride, &dsub)?);
                }
            }
            let dy1 = ops::relu_backward(&ut.a, &da)?;
            let (mut dx, sg1) = site_backward(&ut.site1, &dy1)?;
            grads.add_scale(bank.scale_slot(ub.norm1.site, ut.site1.scale_slot), &sg1);
            if ub.proj.is_none() {
                add_into(&mut dx, &dh);
            }
            dh = dx;
        }

        let stem_w = self.weights(bind.stem);
        let gs = ops::conv2d_backward_with(&tape.input, stem_w, 1, Padding::uniform(1), &dh, false)?;
        grads.add_to(bank.tensor_slot(bind.stem), gs.weights.data());
        Ok(grads)
    }

    /// Mean cross-entropy of a pure batch and its gradients (train mode).
    pub fn loss_and_grads(
        &self,
        x: &Tensor4<T>,
        labels: &[usize],
        d: DomainId,
    ) -> Result<(f64, Grads<T>, Vec<BatchMoment<T>>)> {
        let mut fwd = self.forward(x, d, Mode::Train, true)?;
        let (loss, dlogits) = ops::softmax_cross_entropy(&fwd.logits, labels)?;
        let grads = self.backward(&fwd, &dlogits)?;
        fwd.discard_tape();
        Ok((loss, grads, fwd.moments))
    }
}
