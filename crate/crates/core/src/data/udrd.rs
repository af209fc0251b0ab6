//! UDRD: a minimal little-endian image-classification dataset file.
//!
//! ```text
//! offset  size         field
//! 0       4            magic "UDRD"
//! 4       4            version (u32) = 1
//! 8       4 × 5        N, H, W, C, K (u32)
//! 28      1            flip_allowed (0 or 1)
//! 29      3            reserved (zero)
//! 32      4·N·H·W·C    pixels (f32), per instance row-major with
//!                      interleaved channels: [n][row][col][channel]
//! ...     4·N          labels (u32)
//! ```

use std::io::Write;
use std::path::Path;

use crate::data::dataset::{Dataset, DomainDescriptor};
use crate::error::{Error, Result};
use crate::tensor::{Dims4, Tensor4};
use crate::DomainId;

pub const UDRD_MAGIC: &[u8; 4] = b"UDRD";
pub const UDRD_VERSION: u32 = 1;
const HEADER: usize = 32;

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

pub fn write_udrd(ds: &Dataset, out: &mut impl Write) -> std::io::Result<()> {
    let d = ds.images().dims();
    let mut buf = Vec::with_capacity(HEADER + 4 * (d.len() + d.t));
    buf.extend_from_slice(UDRD_MAGIC);
    for v in [UDRD_VERSION, d.t as u32, d.h as u32, d.w as u32, d.c as u32, ds.descriptor.classes as u32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.push(ds.descriptor.flip_allowed as u8);
    buf.extend_from_slice(&[0; 3]);
    let x = ds.images();
    for t in 0..d.t {
        for v in 0..d.h {
            for u in 0..d.w {
                for c in 0..d.c {
                    buf.extend_from_slice(&x.at(v, u, c, t).to_le_bytes());
                }
            }
        }
    }
    for &l in ds.labels() {
        buf.extend_from_slice(&(l as u32).to_le_bytes());
    }
    out.write_all(&buf)
}

fn u32_at(bytes: &[u8], offset: usize) -> Result<u32> {
    match bytes.get(offset..offset + 4) {
        Some(b) => Ok(u32::from_le_bytes(b.try_into().expect("4 bytes"))),
        None => Err(format_err(bytes.len(), format!("file ends inside the header field at byte {offset}"))),
    }
}

/// Parses a UDRD image. The dataset is named `name` and starts with every
/// example in the training split.
pub fn read_udrd(bytes: &[u8], name: &str) -> Result<Dataset> {
    if bytes.len() < 4 {
        return Err(format_err(bytes.len(), "file ends inside the magic bytes"));
    }
    if &bytes[..4] != UDRD_MAGIC {
        return Err(format_err(0, format!("bad magic {:?}, expected \"UDRD\"", &bytes[..4])));
    }
    let version = u32_at(bytes, 4)?;
    if version != UDRD_VERSION {
        return Err(format_err(4, format!("unsupported version {version}")));
    }
    let mut fields = [0usize; 5];
    for (i, f) in fields.iter_mut().enumerate() {
        *f = u32_at(bytes, 8 + 4 * i)? as usize;
    }
    let [n, h, w, c, k] = fields;
    for (i, (name, v)) in ["N", "H", "W", "C"].iter().zip([n, h, w, c]).enumerate() {
        if v == 0 {
            return Err(format_err(8 + 4 * i, format!("{name} must be positive")));
        }
    }
    if k < 2 {
        return Err(format_err(24, format!("class count K={k} must be at least 2")));
    }
    let flip = match bytes.get(28) {
        None => return Err(format_err(bytes.len(), "file ends before the flip flag")),
        Some(0) => false,
        Some(1) => true,
        Some(b) => return Err(format_err(28, format!("flip flag must be 0 or 1, got {b}"))),
    };
    if bytes.len() < HEADER {
        return Err(format_err(bytes.len(), "file ends inside the reserved header bytes"));
    }
    let pixels = n
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .and_then(|v| v.checked_mul(c))
        .filter(|&p| p.checked_mul(4).is_some())
        .ok_or_else(|| format_err(8, "declared dimensions overflow"))?;
    let labels_at = HEADER + 4 * pixels;
    let end = labels_at + 4 * n;
    if bytes.len() < end {
        return Err(format_err(
            bytes.len(),
            format!("truncated: {} bytes declared, {} present", end, bytes.len()),
        ));
    }
    if bytes.len() > end {
        return Err(format_err(end, format!("{} trailing bytes after the labels", bytes.len() - end)));
    }

    let mut images = Tensor4::zeros(Dims4::new(h, w, c, n));
    let mut off = HEADER;
    for t in 0..n {
        for v in 0..h {
            for u in 0..w {
                for ch in 0..c {
                    let val = f32::from_le_bytes(bytes[off..off + 4].try_into().expect("4 bytes"));
                    images.set(v, u, ch, t, val);
                    off += 4;
                }
            }
        }
    }
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let at = labels_at + 4 * i;
        let l = u32_at(bytes, at)? as usize;
        if l >= k {
            return Err(format_err(at, format!("record {i}: label {l} is not below K={k}")));
        }
        labels.push(l);
    }
    let descriptor = DomainDescriptor {
        id: DomainId::from_index(0),
        name: name.to_string(),
        input: (h, w, c),
        classes: k,
        flip_allowed: flip,
        whitening: None,
        split_ratio: 1.0,
    };
    Dataset::new(descriptor, images, labels)
}

pub fn save_binary(ds: &Dataset, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_udrd(ds, &mut f).map_err(|e| Error::io(path, e))
}

pub fn load_binary(path: &Path) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_udrd(&bytes, &name)
}
