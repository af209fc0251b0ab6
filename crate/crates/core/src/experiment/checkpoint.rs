//! UDRC: single-file training checkpoints (little-endian).
//!
//! ```text
//! "UDRC"  u32 version  [32] config hash  u64 step
//! u32 tensors   { str name, u8 role, u32×4 dims, f32… }
//! u32 sites     { str name, u32 scale entries { u32 C, f32×C s, f32×C b },
//!                           u32 moment entries { u32 C, u64 count, f32×C mu, f32×C sigma2 } }
//! u32 velocity slots { u32 len, f32… }
//! u32 pairings { u32 K, u32×K }
//! ```
//! Strings are a `u32` byte length followed by UTF-8.

use std::path::Path;

use crate::error::{Error, Result};
use crate::network::{Model, ParamBank, ParamRole};
use crate::norm::{MomentParams, ScaleParams};
use crate::tensor::{Dims4, Tensor4};
use crate::train::OptimizerState;

pub const UDRC_MAGIC: &[u8; 4] = b"UDRC";
pub const UDRC_VERSION: u32 = 1;

/// Everything needed to resume training bit-exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config_hash: [u8; 32],
    pub step: u64,
    pub bank: ParamBank<f32>,
    pub velocity: Vec<Vec<f32>>,
    pub pairings: Vec<Vec<usize>>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
    fn f32s(&mut self, v: &[f32]) {
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        match self.at.checked_add(n).filter(|&e| e <= self.bytes.len()) {
            Some(end) => {
                let s = &self.bytes[self.at..end];
                self.at = end;
                Ok(s)
            }
            None => Err(Error::Format {
                offset: self.bytes.len() as u64,
                message: format!("file ends inside {what} starting at byte {}", self.at),
            }),
        }
    }
    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")) as usize)
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
    fn str(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)?;
        let at = self.at;
        let b = self.take(n, what)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::Format {
            offset: at as u64,
            message: format!("{what} is not UTF-8"),
        })
    }
    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let b = self.take(n.checked_mul(4).unwrap_or(usize::MAX), what)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}

impl Checkpoint {
    pub fn capture(config_hash: [u8; 32], model: &Model<f32>, optimizer: &OptimizerState<f32>, step: usize) -> Self {
        Self {
            config_hash,
            step: step as u64,
            bank: model.bank.clone(),
            velocity: optimizer.velocity.clone(),
            pairings: model.pairings().to_vec(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(UDRC_MAGIC);
        w.u32(UDRC_VERSION as usize);
        w.0.extend_from_slice(&self.config_hash);
        w.u64(self.step);
        w.u32(self.bank.tensors.len());
        for p in &self.bank.tensors {
            w.str(&p.name);
            w.0.push(match p.role {
                ParamRole::Weight => 0,
                ParamRole::Bias => 1,
            });
            let d = p.value.dims();
            for v in [d.h, d.w, d.c, d.t] {
                w.u32(v);
            }
            w.f32s(p.value.data());
        }
        w.u32(self.bank.sites.len());
        for s in &self.bank.sites {
            w.str(&s.name);
            let scales = s.coll.scale_entries();
            w.u32(scales.len());
            for e in scales {
                w.u32(e.channels());
                w.f32s(&e.s);
                w.f32s(&e.b);
            }
            let moments = s.coll.moment_entries();
            w.u32(moments.len());
            for e in moments {
                w.u32(e.channels());
                w.u64(e.count);
                w.f32s(&e.mu);
                w.f32s(&e.sigma2);
            }
        }
        w.u32(self.velocity.len());
        for v in &self.velocity {
            w.u32(v.len());
            w.f32s(v);
        }
        w.u32(self.pairings.len());
        for p in &self.pairings {
            w.u32(p.len());
            for &k in p {
                w.u32(k);
            }
        }
        w.0
    }

    /// Parses a checkpoint into a bank shaped like `template` (normally a
    /// freshly built model for the same config). Structural differences are
    /// compatibility errors; damaged bytes are format errors.
    pub fn from_bytes(bytes: &[u8], template: &ParamBank<f32>) -> Result<Self> {
        let mut r = Reader { bytes, at: 0 };
        let fmt = |offset: usize, message: String| Error::Format {
            offset: offset as u64,
            message,
        };
        let incompatible = |m: String| Error::Compatibility(m);
        if r.take(4, "the magic bytes")? != UDRC_MAGIC {
            return Err(fmt(0, "bad magic, expected \"UDRC\"".into()));
        }
        let version = r.u32("the version")?;
        if version != UDRC_VERSION as usize {
            return Err(fmt(4, format!("unsupported checkpoint version {version}")));
        }
        let config_hash: [u8; 32] = r.take(32, "the config hash")?.try_into().expect("32 bytes");
        let step = r.u64("the step count")?;

        let mut bank = template.clone();
        let n = r.u32("the tensor count")?;
        if n != bank.tensors.len() {
            return Err(incompatible(format!(
                "checkpoint has {n} tensors, the model {}",
                bank.tensors.len()
            )));
        }
        for p in &mut bank.tensors {
            let name = r.str("a tensor name")?;
            let at = r.at;
            let role = match r.take(1, "a tensor role")?[0] {
                0 => ParamRole::Weight,
                1 => ParamRole::Bias,
                b => return Err(fmt(at, format!("tensor `{name}`: bad role byte {b}"))),
            };
            let mut dims = [0; 4];
            for d in &mut dims {
                *d = r.u32("tensor dimensions")?;
            }
            let dims = Dims4::new(dims[0], dims[1], dims[2], dims[3]);
            if name != p.name || role != p.role || dims != p.value.dims() {
                return Err(incompatible(format!(
                    "tensor `{name}` {dims:?} does not match the model's `{}` {:?}",
                    p.name,
                    p.value.dims()
                )));
            }
            p.value = Tensor4::new(dims, r.f32s(dims.len(), "tensor values")?)?;
        }
        let n = r.u32("the site count")?;
        if n != bank.sites.len() {
            return Err(incompatible(format!(
                "checkpoint has {n} normalization sites, the model {}",
                bank.sites.len()
            )));
        }
        for site in &mut bank.sites {
            let name = r.str("a site name")?;
            if name != site.name {
                return Err(incompatible(format!("site `{name}` where the model has `{}`", site.name)));
            }
            let n = r.u32("the scale entry count")?;
            if n != site.coll.scale_entries().len() {
                return Err(incompatible(format!("site `{name}`: {n} scale entries")));
            }
            for e in site.coll.scale_entries_mut() {
                let c = r.u32("scale channels")?;
                if c != e.channels() {
                    return Err(incompatible(format!("site `{name}`: {c} channels")));
                }
                *e = ScaleParams::new(r.f32s(c, "scale values")?, r.f32s(c, "bias values")?)?;
            }
            let n = r.u32("the moment entry count")?;
            if n != site.coll.moment_entries().len() {
                return Err(incompatible(format!("site `{name}`: {n} moment entries")));
            }
            for e in site.coll.moment_entries_mut() {
                let c = r.u32("moment channels")?;
                if c != e.channels() {
                    return Err(incompatible(format!("site `{name}`: {c} moment channels")));
                }
                let count = r.u64("a moment count")?;
                *e = MomentParams {
                    mu: r.f32s(c, "moment means")?,
                    sigma2: r.f32s(c, "moment variances")?,
                    count,
                };
            }
        }
        let slots = bank.slots();
        let n = r.u32("the velocity slot count")?;
        if n != slots.len() {
            return Err(incompatible(format!("{n} velocity slots, the model has {}", slots.len())));
        }
        let mut velocity = Vec::with_capacity(n);
        for (s, _) in &slots {
            let len = r.u32("a velocity length")?;
            if len != s.len() {
                return Err(incompatible(format!("velocity slot of length {len}, expected {}", s.len())));
            }
            velocity.push(r.f32s(len, "velocity values")?);
        }
        drop(slots);
        let n = r.u32("the pairing count")?;
        let mut pairings = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let k = r.u32("a pairing length")?;
            let mut p = Vec::with_capacity(k.min(1 << 16));
            for _ in 0..k {
                p.push(r.u32("a pairing entry")?);
            }
            pairings.push(p);
        }
        if r.at != bytes.len() {
            return Err(fmt(r.at, format!("{} trailing bytes", bytes.len() - r.at)));
        }
        Ok(Self {
            config_hash,
            step,
            bank,
            velocity,
            pairings,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        // Write then rename, so an interrupted save keeps the previous file.
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, template: &ParamBank<f32>) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, template)
    }

    /// Installs the checkpoint into `model` after checking the config hash,
    /// returning the optimizer velocities and the step count.
    pub fn restore(self, model: &mut Model<f32>, config_hash: &[u8; 32]) -> Result<(Vec<Vec<f32>>, usize)> {
        if &self.config_hash != config_hash {
            return Err(Error::Compatibility(
                "checkpoint was written for a different configuration (config hash mismatch)".into(),
            ));
        }
        model.set_pairings(self.pairings).map_err(|e| Error::Compatibility(e.to_string()))?;
        model.bank = self.bank;
        Ok((self.velocity, self.step as usize))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{apply_sharing, build_blueprint, Preset, SharingConfig, SharingMode};
    use crate::norm::NormStrategy;
    use crate::train::SgdConfig;

    fn model(mode: SharingMode) -> Model<f32> {
        let bp = build_blueprint(Preset::Desk8, 1, NormStrategy::default(), &[3, 3])
            .unwrap()
            .with_input(8, 3)
            .unwrap();
        apply_sharing(&bp, &SharingConfig::new(mode, 1), 5).unwrap()
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let m = model(SharingMode::FullSharing);
        let mut opt = OptimizerState::new(&m.bank, SgdConfig::default());
        opt.velocity[0][0] = 0.25;
        let a = Checkpoint::capture([7; 32], &m, &opt, 12).to_bytes();
        let back = Checkpoint::from_bytes(&a, &m.bank).unwrap();
        assert_eq!(back.step, 12);
        assert_eq!(back.velocity, opt.velocity);
        assert_eq!(back.to_bytes(), a);
    }

    #[test]
    fn other_sharing_is_incompatible() {
        let m = model(SharingMode::DeepSharing);
        let opt = OptimizerState::new(&m.bank, SgdConfig::default());
        let bytes = Checkpoint::capture([0; 32], &m, &opt, 0).to_bytes();
        let other = model(SharingMode::NoSharing);
        assert!(matches!(Checkpoint::from_bytes(&bytes, &other.bank), Err(Error::Compatibility(_))));
    }

    #[test]
    fn truncation_is_located() {
        let m = model(SharingMode::DeepSharing);
        let opt = OptimizerState::new(&m.bank, SgdConfig::default());
        let bytes = Checkpoint::capture([0; 32], &m, &opt, 0).to_bytes();
        for cut in [3, 40, bytes.len() / 2, bytes.len() - 1] {
            match Checkpoint::from_bytes(&bytes[..cut], &m.bank) {
                Err(Error::Format { offset, .. }) => assert_eq!(offset, cut as u64),
                other => panic!("cut {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn hash_mismatch_is_incompatible() {
        let mut m = model(SharingMode::DeepSharing);
        let opt = OptimizerState::new(&m.bank, SgdConfig::default());
        let ck = Checkpoint::capture([1; 32], &m, &opt, 0);
        assert!(matches!(ck.restore(&mut m, &[2; 32]), Err(Error::Compatibility(_))));
    }
}
