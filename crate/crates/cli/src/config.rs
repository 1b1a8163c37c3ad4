use std::fs;
use std::path::{Path, PathBuf};

use amten_core::{build_amtennet, build_mini, ExtractorConfig, ModelGraph, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{io_at, CliError, Result};

/// One run's settings, read from a TOML file and overridden by flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// When false the seed is drawn from the clock and recorded in the stamp.
    pub deterministic: bool,
    pub corpus: CorpusConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub manifest: Option<PathBuf>,
    /// Square model input; images are resized bilinearly.
    pub input_size: usize,
    pub ratios: [f64; 3],
    pub toy_classes: usize,
    pub toy_per_class: usize,
    pub toy_size: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// `amten`, `amten_1`..`amten_6`, `none`, `highpass`, `srm` or
    /// `constrained_conv`.
    pub extractor: String,
    /// Width multiplier; 1.0 builds the full network.
    pub scale: f64,
    /// Network ablation 7 or 8.
    pub network_ablation: Option<u8>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            deterministic: true,
            corpus: CorpusConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            input_size: 128,
            ratios: amten_forge::DEFAULT_RATIOS,
            toy_classes: 4,
            toy_per_class: 1000,
            toy_size: 64,
        }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            extractor: "amten".into(),
            scale: 1.0,
            network_ablation: None,
        }
    }
}

impl ModelConfig {
    pub fn graph(&self, input_size: usize, num_classes: usize) -> Result<ModelGraph> {
        let extractor = ExtractorConfig::parse(&self.extractor)?;
        let mut graph = if self.scale == 1.0 && input_size == 128 {
            build_amtennet(num_classes, extractor)?
        } else {
            build_mini(self.scale, input_size, num_classes, extractor)?
        };
        if let Some(id) = self.network_ablation {
            graph = graph.with_network_ablation(id)?;
        }
        Ok(graph)
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_at(path))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    /// Resolves the seed and pushes it into the trainer settings.
    pub fn finalize(&mut self) -> Result<()> {
        if !self.deterministic {
            self.seed = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_nanos() as u64);
        }
        self.train.seed = self.seed;
        self.train.validate()?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_and_defaults_merge() {
        let cfg: RunConfig = toml::from_str(
            "seed = 7\n[model]\nextractor = \"none\"\nscale = 0.25\n[train]\nepochs = 3\n[corpus]\ninput_size = 64\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.batch_size, 64);
        let g = cfg.model.graph(cfg.corpus.input_size, 4).unwrap();
        assert_eq!(g.name, "Model-base-mini");
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        assert!(toml::from_str::<RunConfig>("sed = 1\n").is_err());
        assert!(toml::from_str::<RunConfig>("[train]\nlr = 1\n").is_err());
    }

    #[test]
    fn seed_reaches_trainer() {
        let mut cfg = RunConfig {
            seed: 42,
            ..Default::default()
        };
        cfg.finalize().unwrap();
        assert_eq!(cfg.train.seed, 42);
        cfg.train.batch_size = 1;
        assert!(matches!(cfg.finalize(), Err(CliError::Usage(_))));
    }

    #[test]
    fn full_network_at_reference_input() {
        let g = ModelConfig::default().graph(128, 8).unwrap();
        assert_eq!(g.name, "AMTENnet");
        let g = ModelConfig {
            network_ablation: Some(8),
            ..Default::default()
        }
        .graph(128, 8)
        .unwrap();
        assert_eq!(g.name, "AMTENnet_8");
    }
}
