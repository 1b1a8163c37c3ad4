//! Tensor engine, residual front-ends, the AMTENnet model family, training
//! and evaluation for forensic image-manipulation classifiers.

pub mod error;
pub mod eval;
pub mod extractor;
pub mod gradcheck;
pub mod model;
pub mod ops;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use extractor::{Extractor, ExtractorConfig, ExtractorKind};
pub use model::{build_ablation, build_amtennet, build_mini, shape_plan, ModelGraph, Network};
pub use ops::Mode;
pub use tensor::{Param, Scalar, Tensor};
pub use train::{Dataset, TrainConfig, Trainer};
