//! The AMTENnet family as declarative graphs: full-size AMTENnet and its
//! extractor swaps (Model-base, SRM-, high-pass- and constrained-conv
//! front-ends), the pooling and 1×1 ablations, and reduced "-mini"
//! networks for desk-scale runs.

mod network;
mod plan;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extractor::{ExtractorConfig, IMAGE_CHANNELS};

pub use network::{Layer, Network};
pub use plan::{render_plan, shape_plan, PlanRow};

/// Default network input, `(channels, height, width)`.
pub const INPUT_SIZE: (usize, usize, usize) = (IMAGE_CHANNELS, 128, 128);

/// Conv 6–9 kernel counts.
pub const HFE_KERNELS: [usize; 4] = [24, 48, 64, 128];

/// Width of the two hidden fully connected layers.
pub const FC_HIDDEN: usize = 300;

/// One layer of the feature extractor.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        name: String,
        kernels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    BatchNorm {
        name: String,
    },
    Relu,
    MaxPool {
        kernel: usize,
        stride: usize,
        ceil_mode: bool,
    },
    AvgPool {
        kernel: usize,
        stride: usize,
        ceil_mode: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    Max,
    Avg,
}

/// Immutable description of a network: front-end, feature extractor
/// (Conv 6–9 with pooling, ReLU and BN) and the fully connected classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelGraph {
    pub name: String,
    pub extractor: ExtractorConfig,
    pub hfe_layers: Vec<LayerSpec>,
    /// Hidden FC widths; the output layer has `num_classes` neurons.
    pub fc_hidden: Vec<usize>,
    pub num_classes: usize,
    pub input_size: (usize, usize, usize),
}

/// Conv → BN → ReLU → pool blocks; BN on the first three blocks only.
fn hfe(kernels: [usize; 4], conv9_kernel: usize, pool: PoolKind) -> Vec<LayerSpec> {
    let paddings = [1, 0, 0, conv9_kernel / 2];
    let sizes = [3, 3, 3, conv9_kernel];
    let mut layers = Vec::new();
    for (i, ((&count, &k), &pad)) in kernels.iter().zip(&sizes).zip(&paddings).enumerate() {
        let idx = i + 6;
        layers.push(LayerSpec::Conv {
            name: format!("conv{idx}"),
            kernels: count,
            kernel: k,
            stride: 1,
            padding: pad,
        });
        if i < 3 {
            layers.push(LayerSpec::BatchNorm {
                name: format!("bn{idx}"),
            });
        }
        layers.push(LayerSpec::Relu);
        layers.push(match pool {
            PoolKind::Max => LayerSpec::MaxPool {
                kernel: 3,
                stride: 2,
                ceil_mode: true,
            },
            PoolKind::Avg => LayerSpec::AvgPool {
                kernel: 3,
                stride: 2,
                ceil_mode: true,
            },
        });
    }
    layers
}

fn graph_name(extractor: &ExtractorConfig) -> String {
    match extractor.label().as_str() {
        "amten" => "AMTENnet".into(),
        "none" => "Model-base".into(),
        "highpass" => "Hand-Crafted-Res-Model-base".into(),
        "srm" => "SRM-Model-base".into(),
        "constrained_conv" => "Constrained-Conv-Model-base".into(),
        other => format!("AMTENnet-{}", other.to_uppercase()),
    }
}

/// Full-size network for 128×128 RGB input.
pub fn build_amtennet(num_classes: usize, extractor: ExtractorConfig) -> Result<ModelGraph> {
    if num_classes < 2 {
        return Err(Error::Config(format!("need at least 2 classes, got {num_classes}")));
    }
    extractor.validate()?;
    let graph = ModelGraph {
        name: graph_name(&extractor),
        extractor,
        hfe_layers: hfe(HFE_KERNELS, 1, PoolKind::Max),
        fc_hidden: vec![FC_HIDDEN, FC_HIDDEN],
        num_classes,
        input_size: INPUT_SIZE,
    };
    shape_plan(&graph)?;
    Ok(graph)
}

/// Network-level ablations: 7 swaps every max pool for average pooling,
/// 8 widens Conv 9 from 1×1 to 3×3 (padding 1).
pub fn build_ablation(id: u8, num_classes: usize) -> Result<ModelGraph> {
    build_amtennet(num_classes, ExtractorConfig::amten())?.with_network_ablation(id)
}

/// Same topology with feature-extractor and classifier widths scaled by
/// `scale` and a square `input_size`. The trace block is left unchanged.
pub fn build_mini(
    scale: f64,
    input_size: usize,
    num_classes: usize,
    extractor: ExtractorConfig,
) -> Result<ModelGraph> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(Error::Config(format!("mini scale must be in (0, 1], got {scale}")));
    }
    let mut graph = build_amtennet(num_classes, extractor)?;
    let scaled = |v: usize| ((v as f64 * scale).round() as usize).max(1);
    graph.hfe_layers = hfe(HFE_KERNELS.map(scaled), 1, PoolKind::Max);
    graph.fc_hidden = vec![scaled(FC_HIDDEN); 2];
    graph.input_size = (IMAGE_CHANNELS, input_size, input_size);
    graph.name = format!("{}-mini", graph.name);
    shape_plan(&graph)?;
    Ok(graph)
}

impl ModelGraph {
    /// Replaces the front-end, keeping feature extractor and classifier.
    pub fn with_extractor(&self, extractor: ExtractorConfig) -> Result<Self> {
        extractor.validate()?;
        let mini = self.name.ends_with("-mini");
        let mut g = self.clone();
        g.extractor = extractor;
        g.name = graph_name(&extractor);
        if mini {
            g.name.push_str("-mini");
        }
        shape_plan(&g)?;
        Ok(g)
    }

    /// Applies network ablation 7 or 8, keeping the current layer widths.
    pub fn with_network_ablation(&self, id: u8) -> Result<Self> {
        let mut kernels = [0; 4];
        for (slot, l) in kernels.iter_mut().zip(self.hfe_layers.iter().filter_map(|l| match l {
            LayerSpec::Conv { kernels, .. } => Some(*kernels),
            _ => None,
        })) {
            *slot = l;
        }
        let mut g = self.clone();
        g.hfe_layers = match id {
            7 => hfe(kernels, 1, PoolKind::Avg),
            8 => hfe(kernels, 3, PoolKind::Max),
            _ => return Err(Error::Config(format!("unknown network ablation {id}, expected 7 or 8"))),
        };
        let mini = self.name.ends_with("-mini");
        g.name = format!("AMTENnet_{id}{}", if mini { "-mini" } else { "" });
        shape_plan(&g)?;
        Ok(g)
    }

    pub fn with_input_size(&self, size: usize) -> Result<Self> {
        let mut g = self.clone();
        g.input_size = (IMAGE_CHANNELS, size, size);
        shape_plan(&g)?;
        Ok(g)
    }

    pub fn count(&self, pred: impl Fn(&LayerSpec) -> bool) -> usize {
        self.hfe_layers.iter().filter(|l| pred(l)).count()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let g: Self = serde_json::from_str(s)?;
        g.extractor.validate()?;
        shape_plan(&g)?;
        Ok(g)
    }

    /// Name, layer list and planned shapes in one readable document.
    pub fn manifest(&self) -> Result<String> {
        let plan = shape_plan(self)?;
        let doc = serde_json::json!({
            "name": self.name,
            "graph": self,
            "shapes": plan,
        });
        Ok(serde_json::to_string_pretty(&doc)?)
    }
}
