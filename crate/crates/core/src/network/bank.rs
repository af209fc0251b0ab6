use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Result};
use crate::norm::{accumulate_moments, DomainParamCollections, MomentParams, ScaleParams};
use crate::scalar::Scalar;
use crate::tensor::Tensor4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamRole {
    /// Filter banks and classifier matrices; subject to weight decay.
    Weight,
    Bias,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T = f32> {
    pub name: String,
    pub role: ParamRole,
    pub value: Tensor4<T>,
}

/// The collections of one normalization site.
#[derive(Clone, Debug, PartialEq)]
pub struct NormSite<T = f32> {
    pub name: String,
    pub coll: DomainParamCollections<T>,
}

/// Every parameter of a model. Learnable values are addressed by a flat
/// slot index: tensors first (in order), then each site's scale entries as
/// `s` then `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamBank<T = f32> {
    pub tensors: Vec<Param<T>>,
    pub sites: Vec<NormSite<T>>,
}

/// Batch moments produced by one BN site during a training forward pass,
/// addressed to the moment entry they accumulate into.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchMoment<T = f32> {
    pub site: usize,
    pub entry: usize,
    pub moments: MomentParams<T>,
}

impl<T: Scalar> ParamBank<T> {
    pub fn slot_count(&self) -> usize {
        self.tensors.len()
            + self
                .sites
                .iter()
                .map(|s| 2 * s.coll.scale_entries().len())
                .sum::<usize>()
    }

    pub fn tensor_slot(&self, i: usize) -> usize {
        i
    }

    /// Slot of the `s` vector of scale entry `entry` of `site`; `b` follows.
    pub fn scale_slot(&self, site: usize, entry: usize) -> usize {
        self.tensors.len()
            + self.sites[..site]
                .iter()
                .map(|s| 2 * s.coll.scale_entries().len())
                .sum::<usize>()
            + 2 * entry
    }

    /// Read-only views of all learnable slots, with their decay flag.
    pub fn slots(&self) -> Vec<(&[T], bool)> {
        let mut out: Vec<(&[T], bool)> = self
            .tensors
            .iter()
            .map(|p| (p.value.data(), p.role == ParamRole::Weight))
            .collect();
        for site in &self.sites {
            for e in site.coll.scale_entries() {
                out.push((&e.s, false));
                out.push((&e.b, false));
            }
        }
        out
    }

    pub fn slots_mut(&mut self) -> Vec<(&mut [T], bool)> {
        let mut out: Vec<(&mut [T], bool)> = self
            .tensors
            .iter_mut()
            .map(|p| {
                let decay = p.role == ParamRole::Weight;
                (p.value.data_mut(), decay)
            })
            .collect();
        for site in &mut self.sites {
            for e in site.coll.scale_entries_mut() {
                out.push((&mut e.s, false));
                out.push((&mut e.b, false));
            }
        }
        out
    }

    /// Display name of every slot.
    pub fn slot_names(&self) -> Vec<String> {
        let mut out: Vec<String> = self.tensors.iter().map(|p| p.name.clone()).collect();
        for site in &self.sites {
            let n = site.coll.scale_entries().len();
            for e in 0..n {
                let tag = if n == 1 { String::new() } else { format!("[{}]", e + 1) };
                out.push(format!("{}{tag}/s", site.name));
                out.push(format!("{}{tag}/b", site.name));
            }
        }
        out
    }

    pub fn learnable_count(&self) -> usize {
        self.slots().iter().map(|(s, _)| s.len()).sum()
    }

    pub fn accumulate(&mut self, batch: &[BatchMoment<T>]) -> Result<()> {
        for m in batch {
            let entry = &mut self.sites[m.site].coll.moment_entries_mut()[m.entry];
            *entry = accumulate_moments(entry, &m.moments)?;
        }
        Ok(())
    }

    /// Clears every accumulated moment (count 0).
    pub fn reset_moments(&mut self) {
        for site in &mut self.sites {
            for e in site.coll.moment_entries_mut() {
                *e = MomentParams::empty(e.channels());
            }
        }
    }

    pub fn cast<U: Scalar>(&self) -> ParamBank<U> {
        ParamBank {
            tensors: self
                .tensors
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    role: p.role,
                    value: p.value.cast(),
                })
                .collect(),
            sites: self
                .sites
                .iter()
                .map(|s| NormSite {
                    name: s.name.clone(),
                    coll: s.coll.cast(),
                })
                .collect(),
        }
    }

    /// Overwrites every learnable slot from flat `f64` vectors.
    pub fn load_slots(&mut self, values: &[Vec<f64>]) -> Result<()> {
        let mut slots = self.slots_mut();
        ensure_dim("parameter slots", slots.len(), values.len())?;
        for ((dst, _), src) in slots.iter_mut().zip(values) {
            ensure_dim("parameter slot length", dst.len(), src.len())?;
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = T::of(s);
            }
        }
        Ok(())
    }
}

/// Gradients aligned with a bank's learnable slots. `None` marks a slot the
/// backward pass never reached, i.e. an exactly zero gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Grads<T = f32> {
    pub slots: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Grads<T> {
    pub fn empty(slots: usize) -> Self {
        Self {
            slots: vec![None; slots],
        }
    }

    pub(crate) fn add_to(&mut self, slot: usize, g: &[T]) {
        match &mut self.slots[slot] {
            Some(acc) => {
                for (a, &b) in acc.iter_mut().zip(g) {
                    *a += b;
                }
            }
            none => *none = Some(g.to_vec()),
        }
    }

    pub(crate) fn add_scale(&mut self, slot: usize, g: &ScaleParams<T>) {
        self.add_to(slot, &g.s);
        self.add_to(slot + 1, &g.b);
    }

    /// Adds `other` slot by slot.
    pub fn accumulate(&mut self, other: &Grads<T>) -> Result<()> {
        ensure_dim("gradient slots", self.slots.len(), other.slots.len())?;
        for (i, g) in other.slots.iter().enumerate() {
            if let Some(g) = g {
                self.add_to(i, g);
            }
        }
        Ok(())
    }

    pub fn is_touched(&self, slot: usize) -> bool {
        self.slots[slot].is_some()
    }

    /// Slot gradient, materializing zeros for untouched slots.
    pub fn dense(&self, slot: usize, len: usize) -> Vec<T> {
        self.slots[slot]
            .clone()
            .unwrap_or_else(|| vec![T::zero(); len])
    }

    pub fn norm_sq(&self, slot: usize) -> f64 {
        self.slots[slot]
            .as_ref()
            .map_or(0.0, |g| g.iter().map(|v| v.f64() * v.f64()).sum())
    }

    pub fn is_finite(&self) -> bool {
        self.slots
            .iter()
            .flatten()
            .all(|g| g.iter().all(|v| v.is_finite()))
    }
}
