//! Residual front-ends: the adaptive trace block and its ablation variants,
//! fixed high-pass/SRM banks, the constrained convolution and the identity
//! (no extractor). All map an RGB image to a same-size trace map.

mod amten;
mod constrained;
mod fixed;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::ops::Mode;
use crate::tensor::{Param, Scalar, Tensor};

pub use amten::{TraceBlock, TraceMaps};
pub use constrained::{constrained_conv_project, ConstrainedConv};
pub use fixed::{FixedBank, FixedKind, FIRST_ORDER, SECOND_ORDER, SQUARE_5X5};

/// Channels of the RGB images every extractor consumes.
pub const IMAGE_CHANNELS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractorKind {
    Amten,
    /// Ablation variant 1..=6.
    AmtenVariant(u8),
    Highpass,
    Srm,
    ConstrainedConv,
    None,
}

/// Which front-end to build and, for the trace-block family, how it is wired.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractorConfig {
    pub kind: ExtractorKind,
    /// Conv 1 kernel size (3, or 5 for variant 5).
    pub predictor_kernel: usize,
    /// Feed F_mt forward through the concatenations.
    pub reuse_enabled: bool,
    /// Kernel count of Conv 4 and Conv 5.
    pub conv45_kernels: usize,
    /// Subtract the input from the Conv 1 prediction (off for variant 1).
    pub residual: bool,
    /// Two convolutions between concatenations (off for variant 6).
    pub stacked_convs: bool,
}

impl ExtractorConfig {
    pub fn amten() -> Self {
        Self {
            kind: ExtractorKind::Amten,
            predictor_kernel: 3,
            reuse_enabled: true,
            conv45_kernels: 6,
            residual: true,
            stacked_convs: true,
        }
    }

    /// Ablation rows AMTEN_1 .. AMTEN_6.
    pub fn variant(id: u8) -> Result<Self> {
        let base = Self {
            kind: ExtractorKind::AmtenVariant(id),
            ..Self::amten()
        };
        Ok(match id {
            1 => Self {
                residual: false,
                ..base
            },
            2 => Self {
                reuse_enabled: false,
                ..base
            },
            3 => Self {
                conv45_kernels: 3,
                ..base
            },
            4 => Self {
                conv45_kernels: 12,
                ..base
            },
            5 => Self {
                predictor_kernel: 5,
                ..base
            },
            6 => Self {
                stacked_convs: false,
                ..base
            },
            _ => return Err(Error::Config(format!("unknown AMTEN variant {id}, expected 1..=6"))),
        })
    }

    fn plain(kind: ExtractorKind) -> Self {
        Self {
            kind,
            ..Self::amten()
        }
    }

    pub fn highpass() -> Self {
        Self::plain(ExtractorKind::Highpass)
    }

    pub fn srm() -> Self {
        Self::plain(ExtractorKind::Srm)
    }

    pub fn constrained_conv() -> Self {
        Self::plain(ExtractorKind::ConstrainedConv)
    }

    pub fn none() -> Self {
        Self::plain(ExtractorKind::None)
    }

    /// Parses `amten`, `amten_1`..`amten_6`, `highpass`, `srm`,
    /// `constrained_conv` and `none`.
    pub fn parse(name: &str) -> Result<Self> {
        let lower = name.trim().to_ascii_lowercase();
        match lower.as_str() {
            "amten" => Ok(Self::amten()),
            "highpass" | "hand_crafted_res" => Ok(Self::highpass()),
            "srm" => Ok(Self::srm()),
            "constrained_conv" | "constrained" => Ok(Self::constrained_conv()),
            "none" | "model_base" => Ok(Self::none()),
            other => match other.strip_prefix("amten_").map(str::parse::<u8>) {
                Some(Ok(id)) => Self::variant(id),
                _ => Err(Error::Config(format!("unknown extractor '{name}'"))),
            },
        }
    }

    pub fn label(&self) -> String {
        match self.kind {
            ExtractorKind::Amten => "amten".into(),
            ExtractorKind::AmtenVariant(id) => format!("amten_{id}"),
            ExtractorKind::Highpass => "highpass".into(),
            ExtractorKind::Srm => "srm".into(),
            ExtractorKind::ConstrainedConv => "constrained_conv".into(),
            ExtractorKind::None => "none".into(),
        }
    }

    pub fn is_trace_block(&self) -> bool {
        matches!(self.kind, ExtractorKind::Amten | ExtractorKind::AmtenVariant(_))
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == ExtractorKind::Amten && *self != Self::amten() {
            return Err(Error::Config(
                "canonical AMTEN uses a 3×3 predictor, reuse and 6 Conv 4/5 kernels".into(),
            ));
        }
        if self.is_trace_block() {
            if ![3, 5].contains(&self.predictor_kernel) {
                return Err(Error::Config(format!(
                    "predictor kernel {} not in {{3, 5}}",
                    self.predictor_kernel
                )));
            }
            if self.conv45_kernels == 0 {
                return Err(Error::Config("Conv 4/5 need at least one kernel".into()));
            }
        }
        Ok(())
    }

    /// Channel count of the trace map handed to Conv 6.
    pub fn out_channels(&self) -> usize {
        match self.kind {
            ExtractorKind::Amten | ExtractorKind::AmtenVariant(_) => {
                let (f_mt, f1, f2) = (IMAGE_CHANNELS, IMAGE_CHANNELS, self.conv45_kernels);
                if self.reuse_enabled {
                    // [F_2, F_mt, [F_1, F_mt]]
                    f2 + f_mt + f1 + f_mt
                } else {
                    f2
                }
            }
            ExtractorKind::Highpass | ExtractorKind::Srm => IMAGE_CHANNELS * 3,
            ExtractorKind::ConstrainedConv | ExtractorKind::None => IMAGE_CHANNELS,
        }
    }

    /// Per-layer rows `(name, kernel, count)` of the front-end, for the
    /// shape planner.
    pub fn layer_rows(&self) -> Vec<(String, usize, usize)> {
        match self.kind {
            ExtractorKind::Amten | ExtractorKind::AmtenVariant(_) => {
                let mut rows = vec![
                    ("Conv 1".to_string(), self.predictor_kernel, IMAGE_CHANNELS),
                    ("Conv 2".to_string(), 3, IMAGE_CHANNELS),
                ];
                if self.stacked_convs {
                    rows.push(("Conv 3".into(), 3, IMAGE_CHANNELS));
                }
                rows.push(("Conv 4".into(), 3, self.conv45_kernels));
                if self.stacked_convs {
                    rows.push(("Conv 5".into(), 3, self.conv45_kernels));
                }
                rows
            }
            ExtractorKind::Highpass | ExtractorKind::Srm => {
                vec![(format!("{} bank", self.label()), 5, IMAGE_CHANNELS * 3)]
            }
            ExtractorKind::ConstrainedConv => {
                vec![("Constrained conv".into(), 5, IMAGE_CHANNELS)]
            }
            ExtractorKind::None => Vec::new(),
        }
    }
}

/// Runtime state of a residual front-end.
#[derive(Clone, Debug)]
pub enum Extractor<T> {
    Identity,
    Trace(TraceBlock<T>),
    Fixed(FixedBank<T>),
    Constrained(ConstrainedConv<T>),
}

impl<T: Scalar> Extractor<T> {
    pub fn build<R: Rng + ?Sized>(cfg: &ExtractorConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        Ok(match cfg.kind {
            ExtractorKind::Amten | ExtractorKind::AmtenVariant(_) => {
                Extractor::Trace(TraceBlock::new(*cfg, rng)?)
            }
            ExtractorKind::Highpass => Extractor::Fixed(FixedBank::new(FixedKind::Highpass)),
            ExtractorKind::Srm => Extractor::Fixed(FixedBank::new(FixedKind::Srm)),
            ExtractorKind::ConstrainedConv => Extractor::Constrained(ConstrainedConv::new(rng)?),
            ExtractorKind::None => Extractor::Identity,
        })
    }

    pub fn forward(&mut self, image: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        if image.c() != IMAGE_CHANNELS {
            return Err(shape_err(
                "extractor",
                format!("{IMAGE_CHANNELS} input channels"),
                image.shape(),
            ));
        }
        match self {
            Extractor::Identity => Ok(image.clone()),
            Extractor::Trace(block) => block.forward(image, mode),
            Extractor::Fixed(bank) => Ok(bank.forward(image)),
            Extractor::Constrained(c) => c.forward(image, mode),
        }
    }

    /// Accumulates parameter gradients; returns the image gradient when
    /// requested and available.
    pub fn backward(&mut self, out_grad: &Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>> {
        match self {
            Extractor::Identity => Ok(need_input_grad.then(|| out_grad.clone())),
            Extractor::Trace(block) => block.backward(out_grad, need_input_grad),
            Extractor::Fixed(_) => Ok(None),
            Extractor::Constrained(c) => c.backward(out_grad, need_input_grad),
        }
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        match self {
            Extractor::Trace(block) => block.params(),
            Extractor::Constrained(c) => vec![&c.conv.weight, &c.conv.bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        match self {
            Extractor::Trace(block) => block.params_mut(),
            Extractor::Constrained(c) => vec![&mut c.conv.weight, &mut c.conv.bias],
            _ => Vec::new(),
        }
    }

    /// Hook run after every optimizer step.
    pub fn after_step(&mut self) {
        if let Extractor::Constrained(c) = self {
            constrained_conv_project(&mut c.conv);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_channel_counts_are_computed() {
        assert_eq!(ExtractorConfig::amten().out_channels(), 15);
        let counts: Vec<usize> = (1..=6)
            .map(|id| ExtractorConfig::variant(id).unwrap().out_channels())
            .collect();
        assert_eq!(counts, vec![15, 6, 12, 21, 15, 15]);
        assert_eq!(ExtractorConfig::srm().out_channels(), 9);
        assert_eq!(ExtractorConfig::none().out_channels(), 3);
    }

    #[test]
    fn unknown_variant_is_rejected() {
        assert!(ExtractorConfig::variant(0).is_err());
        assert!(ExtractorConfig::variant(7).is_err());
        assert!(ExtractorConfig::parse("amten_9").is_err());
        assert!(ExtractorConfig::parse("bogus").is_err());
    }

    #[test]
    fn canonical_form_is_enforced() {
        let bad = ExtractorConfig {
            predictor_kernel: 5,
            ..ExtractorConfig::amten()
        };
        assert!(bad.validate().is_err());
        assert!(ExtractorConfig::amten().validate().is_ok());
    }

    #[test]
    fn names_round_trip() {
        for name in ["amten", "amten_1", "amten_6", "highpass", "srm", "constrained_conv", "none"] {
            assert_eq!(ExtractorConfig::parse(name).unwrap().label(), name);
        }
    }
}
