//! Labeled corpus construction: folder ingest, post-processing operations
//! in single and mixed form, stratified splits, a procedural toy corpus and
//! loading into training tensors.

pub mod error;
pub mod forge;
pub mod imageops;
pub mod manifest;
pub mod opspec;
pub mod split;
pub mod toy;

pub use error::{ForgeError, Result};
pub use forge::{forge, ingest, load_dataset, mix_param, ForgeMode};
pub use manifest::{Manifest, SampleRecord, Split};
pub use opspec::{condition_label, OpKind, OpSpec};
pub use split::{stratified_split, DEFAULT_RATIOS};
pub use toy::{synthesize_toy_corpus, ToyCorpus, TOY_CLASSES};
