//! Operation names, their allowed parameters and the `NAME:param` encoding.

use std::fmt;
use std::str::FromStr;

use image::RgbImage;

use crate::error::{ForgeError, Result};
use crate::imageops;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    /// Mean filtering.
    Me,
    /// Gaussian filtering.
    Gb,
    /// Median filtering.
    Med,
    /// Gamma correction.
    Gc,
    /// JPEG compression.
    Jp,
    /// Scaling; positive percentages enlarge, negative shrink.
    Sc,
}

pub const KERNEL_SIZES: [u32; 3] = [3, 5, 7];
pub const GAMMAS: [f64; 8] = [0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8, 2.0];
pub const JPEG_QUALITIES: std::ops::RangeInclusive<u32> = 60..=90;
pub const SCALE_UP: [u32; 12] = [1, 3, 5, 10, 20, 30, 40, 50, 60, 70, 80, 90];
pub const SCALE_DOWN: [u32; 11] = [1, 3, 5, 10, 15, 20, 25, 30, 35, 40, 45];

impl OpKind {
    pub const ALL: [OpKind; 6] = [OpKind::Me, OpKind::Gb, OpKind::Med, OpKind::Gc, OpKind::Jp, OpKind::Sc];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Me => "ME",
            OpKind::Gb => "GB",
            OpKind::Med => "MED",
            OpKind::Gc => "GC",
            OpKind::Jp => "JP",
            OpKind::Sc => "SC",
        }
    }

    /// Every allowed parameter, in a fixed order.
    pub fn domain(self) -> Vec<f64> {
        match self {
            OpKind::Me | OpKind::Gb | OpKind::Med => KERNEL_SIZES.iter().map(|&k| k as f64).collect(),
            OpKind::Gc => GAMMAS.to_vec(),
            OpKind::Jp => JPEG_QUALITIES.map(|q| q as f64).collect(),
            OpKind::Sc => SCALE_UP
                .iter()
                .map(|&p| p as f64)
                .chain(SCALE_DOWN.iter().map(|&p| -(p as f64)))
                .collect(),
        }
    }
}

impl FromStr for OpKind {
    type Err = ForgeError;

    fn from_str(s: &str) -> Result<Self> {
        OpKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                ForgeError::Domain(format!("unknown operation {s:?}, expected one of ME, GB, MED, GC, JP, SC"))
            })
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One operation with a parameter from its domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OpSpec {
    pub kind: OpKind,
    pub param: f64,
}

impl OpSpec {
    pub fn new(kind: OpKind, param: f64) -> Result<Self> {
        if !kind.domain().iter().any(|&d| (d - param).abs() < 1e-9) {
            let allowed = match kind {
                OpKind::Me | OpKind::Gb | OpKind::Med => "kernel size 3, 5 or 7".to_string(),
                OpKind::Gc => "gamma in {0.6, 0.8, ..., 2.0}".to_string(),
                OpKind::Jp => "quality factor in [60, 90]".to_string(),
                OpKind::Sc => format!("up {SCALE_UP:?} or down {SCALE_DOWN:?} percent"),
            };
            return Err(ForgeError::Domain(format!(
                "{kind} parameter {param} outside its domain ({allowed})"
            )));
        }
        let param = kind
            .domain()
            .into_iter()
            .find(|&d| (d - param).abs() < 1e-9)
            .unwrap_or(param);
        Ok(Self { kind, param })
    }

    /// Applies the operation. JPEG additionally returns the encoded bytes.
    pub fn apply(&self, img: &RgbImage) -> Result<(RgbImage, Option<Vec<u8>>)> {
        let k = self.param as usize;
        Ok(match self.kind {
            OpKind::Me => (imageops::mean_filter(img, k)?, None),
            OpKind::Gb => (imageops::gaussian_blur(img, k, 0.0)?, None),
            OpKind::Med => (imageops::median_filter(img, k)?, None),
            OpKind::Gc => (imageops::gamma_correct(img, self.param)?, None),
            OpKind::Jp => {
                let (out, bytes) = imageops::jpeg_recompress(img, self.param as u8)?;
                (out, Some(bytes))
            }
            OpKind::Sc => (imageops::scale(img, self.param)?, None),
        })
    }
}

impl fmt::Display for OpSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            OpKind::Sc => write!(f, "SC:{:+}", self.param),
            _ => write!(f, "{}:{}", self.kind, self.param),
        }
    }
}

impl FromStr for OpSpec {
    type Err = ForgeError;

    fn from_str(s: &str) -> Result<Self> {
        let (name, param) = s
            .split_once(':')
            .ok_or_else(|| ForgeError::Domain(format!("operation {s:?} is not NAME:param")))?;
        let param: f64 = param
            .trim()
            .parse()
            .map_err(|_| ForgeError::Domain(format!("bad parameter in {s:?}")))?;
        OpSpec::new(name.trim().parse()?, param)
    }
}

/// Parses `ME:5,JP:60`; `-` or an empty string is the empty chain.
pub fn parse_chain(s: &str) -> Result<Vec<OpSpec>> {
    let s = s.trim();
    if s.is_empty() || s == "-" {
        return Ok(Vec::new());
    }
    s.split(',').map(str::parse).collect()
}

pub fn format_chain(ops: &[OpSpec]) -> String {
    if ops.is_empty() {
        return "-".into();
    }
    ops.iter().map(|o| o.to_string()).collect::<Vec<_>>().join(",")
}

/// Short condition label such as `JP60`, `ME5` or `GC1.2`.
pub fn condition_label(op: &OpSpec) -> String {
    match op.kind {
        OpKind::Sc => format!("SC{:+}", op.param),
        _ => format!("{}{}", op.kind, op.param),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn domains() {
        assert_eq!(OpKind::Sc.domain().len(), 23);
        assert_eq!(OpKind::Jp.domain().len(), 31);
        assert_eq!(OpKind::Gc.domain().len(), 8);
        assert!(OpSpec::new(OpKind::Me, 4.0).is_err());
        assert!(OpSpec::new(OpKind::Jp, 59.0).is_err());
        assert!(OpSpec::new(OpKind::Jp, 91.0).is_err());
        assert!(OpSpec::new(OpKind::Sc, 15.0).is_err());
        assert!(OpSpec::new(OpKind::Sc, -15.0).is_ok());
        assert!(OpSpec::new(OpKind::Sc, -50.0).is_err());
        assert!(OpSpec::new(OpKind::Gc, 1.1).is_err());
    }

    #[test]
    fn encoding_round_trips() {
        let chain = parse_chain("ME:5,JP:60,SC:-10,GC:1.2,SC:+90").unwrap();
        assert_eq!(chain.len(), 5);
        assert_eq!(format_chain(&chain), "ME:5,JP:60,SC:-10,GC:1.2,SC:+90");
        assert!(parse_chain("-").unwrap().is_empty());
        assert!(parse_chain("XX:3").is_err());
        assert!(parse_chain("ME5").is_err());
        assert_eq!(condition_label(&chain[1]), "JP60");
    }
}
