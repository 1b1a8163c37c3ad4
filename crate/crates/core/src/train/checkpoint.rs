//! Binary checkpoint format, little-endian throughout:
//!
//! ```text
//! magic "AMTNCKPT" | u32 version | u32 len + JSON header (graph, config)
//! u64 iteration | u64 rng seed | u64 rng stream
//! u32 blocks, each: u32 len + name | u32 ndim + u64 dims | f32 values | f32 velocity
//! u32 stats,  each: u32 len + name | u64 len | f32 values
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::model::{ModelGraph, Network};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"AMTNCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Position of the trainer's shuffling stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f32>,
    pub velocity: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub graph: ModelGraph,
    pub config: TrainConfig,
    pub iteration: usize,
    pub rng: RngState,
    pub blocks: Vec<ParamBlock>,
    pub stats: Vec<(String, Vec<f32>)>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    graph: ModelGraph,
    config: TrainConfig,
}

impl Checkpoint {
    pub fn capture(net: &Network<f32>, config: &TrainConfig, iteration: usize, rng: RngState) -> Self {
        Self {
            graph: net.graph.clone(),
            config: config.clone(),
            iteration,
            rng,
            blocks: net
                .params()
                .into_iter()
                .map(|p| ParamBlock {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    value: p.value.clone(),
                    velocity: p.velocity.clone(),
                })
                .collect(),
            stats: net
                .running_stats()
                .into_iter()
                .map(|(n, v)| (n, v.clone()))
                .collect(),
        }
    }

    /// Rebuilds the network and copies every block and statistic into it.
    pub fn restore(&self) -> Result<Network<f32>> {
        let mut net = Network::<f32>::new(&self.graph, 0)?;
        let mut params = net.params_mut();
        if params.len() != self.blocks.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} parameter blocks, model has {}",
                self.blocks.len(),
                params.len()
            )));
        }
        for (p, b) in params.iter_mut().zip(&self.blocks) {
            if p.name != b.name || p.shape != b.shape {
                return Err(Error::Checkpoint(format!(
                    "block {} {:?} does not match model block {} {:?}",
                    b.name, b.shape, p.name, p.shape
                )));
            }
            p.value.clone_from(&b.value);
            p.velocity.clone_from(&b.velocity);
        }
        let mut stats = net.running_stats_mut();
        if stats.len() != self.stats.len() {
            return Err(Error::Checkpoint("running statistics do not match the model".into()));
        }
        for ((name, dst), (src_name, src)) in stats.iter_mut().zip(&self.stats) {
            if name != src_name || dst.len() != src.len() {
                return Err(Error::Checkpoint(format!("statistic {src_name} does not match {name}")));
            }
            dst.clone_from(src);
        }
        Ok(net)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let header = serde_json::to_vec(&Header {
            graph: self.graph.clone(),
            config: self.config.clone(),
        })?;
        put_bytes(&mut out, &header);
        out.extend_from_slice(&(self.iteration as u64).to_le_bytes());
        out.extend_from_slice(&self.rng.seed.to_le_bytes());
        out.extend_from_slice(&self.rng.stream.to_le_bytes());
        out.extend_from_slice(&(self.blocks.len() as u32).to_le_bytes());
        for b in &self.blocks {
            put_bytes(&mut out, b.name.as_bytes());
            out.extend_from_slice(&(b.shape.len() as u32).to_le_bytes());
            for &d in &b.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            put_f32s(&mut out, &b.value);
            put_f32s(&mut out, &b.velocity);
        }
        out.extend_from_slice(&(self.stats.len() as u32).to_le_bytes());
        for (name, v) in &self.stats {
            put_bytes(&mut out, name.as_bytes());
            out.extend_from_slice(&(v.len() as u64).to_le_bytes());
            put_f32s(&mut out, v);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let header_len = r.u32()? as usize;
        let header: Header = serde_json::from_slice(r.take(header_len)?)?;
        let iteration = r.u64()? as usize;
        let rng = RngState {
            seed: r.u64()?,
            stream: r.u64()?,
        };
        let mut blocks = Vec::new();
        for _ in 0..r.u32()? {
            let name = r.string()?;
            let ndim = r.u32()? as usize;
            let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let len: usize = shape.iter().product();
            let value = r.f32s(len)?;
            let velocity = r.f32s(len)?;
            blocks.push(ParamBlock {
                name,
                shape,
                value,
                velocity,
            });
        }
        let mut stats = Vec::new();
        for _ in 0..r.u32()? {
            let name = r.string()?;
            let len = r.u64()? as usize;
            stats.push((name, r.f32s(len)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after checkpoint payload",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            graph: header.graph,
            config: header.config,
            iteration,
            rng,
            blocks,
            stats,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)
            .map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    out.extend_from_slice(&(b.len() as u32).to_le_bytes());
    out.extend_from_slice(b);
}

fn put_f32s(out: &mut Vec<u8>, v: &[f32]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated checkpoint at byte {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint("block too large".into()))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extractor::ExtractorConfig;
    use crate::model::build_mini;

    fn sample() -> Checkpoint {
        let g = build_mini(0.25, 48, 3, ExtractorConfig::amten()).unwrap();
        let mut net = Network::<f32>::new(&g, 5).unwrap();
        for p in net.params_mut() {
            p.velocity.iter_mut().enumerate().for_each(|(i, v)| *v = i as f32 * 1e-3);
        }
        Checkpoint::capture(&net, &TrainConfig::default(), 17, RngState { seed: 5, stream: 2 })
    }

    #[test]
    fn bytes_round_trip_is_idempotent() {
        let c = sample();
        let bytes = c.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        let net = back.restore().unwrap();
        assert_eq!(Checkpoint::capture(&net, &c.config, 17, c.rng).to_bytes().unwrap(), bytes);
    }

    #[test]
    fn corruption_is_reported() {
        let mut bytes = sample().to_bytes().unwrap();
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad_magic), Err(Error::Checkpoint(m)) if m.contains("magic")));
        bytes[8] = 99;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Checkpoint(m)) if m.contains("version")));
        let ok = sample().to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&ok[..ok.len() - 3]).is_err());
    }
}
