//! Domains: descriptors, datasets with train/val splits, whitening,
//! synthetic generators with controllable channel shift, and the UDRD binary
//! format.

mod dataset;
mod synth;
mod udrd;

pub use dataset::{split, whiten, DomainDescriptor, Dataset, Split, Whitening};
pub use synth::{generate_synthetic, SynthSpec};
pub use udrd::{load_binary, read_udrd, save_binary, write_udrd, UDRD_MAGIC, UDRD_VERSION};
