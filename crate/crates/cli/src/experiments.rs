//! Experiment drivers shared by the subcommands and the acceptance suite.

use std::fs;
use std::path::Path;

use amten_core::eval::{AblationRow, AblationTable, ConfusionMatrix, RobustnessGrid};
use amten_core::train::{Evaluation, FitOptions, IterationHook, TrainReport};
use amten_core::{Dataset, ModelGraph, Network, TrainConfig, Trainer};
use amten_forge::{forge, load_dataset, ForgeMode, Manifest, OpKind, OpSpec, Split};
use image::{GrayImage, Luma};

use crate::config::ModelConfig;
use crate::error::{io_at, CliError, Result};

/// Train, optional validation and test tensors of one corpus.
#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Dataset,
    pub val: Option<Dataset>,
    pub test: Dataset,
    pub class_names: Vec<String>,
}

impl Splits {
    pub fn load(manifest: &Manifest, input_size: usize) -> Result<Self> {
        let [train, val, test] = manifest.split_counts();
        if train == 0 || test == 0 {
            return Err(CliError::Data(format!(
                "manifest needs train and test records, found {train} train, {val} val, {test} test; run `amten forge` to split it"
            )));
        }
        Ok(Self {
            train: load_dataset(manifest, Some(Split::Train), input_size)?,
            val: if val > 0 {
                Some(load_dataset(manifest, Some(Split::Val), input_size)?)
            } else {
                None
            },
            test: load_dataset(manifest, Some(Split::Test), input_size)?,
            class_names: manifest.class_names()?,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }
}

pub struct TrainOutcome {
    pub report: TrainReport,
    pub test: Evaluation,
    pub confusion: ConfusionMatrix,
    pub trainer: Trainer,
}

/// Trains `graph` on the train split and scores the test split. With an
/// output directory, writes metrics, checkpoints and the test report there.
pub fn train_and_test(
    graph: &ModelGraph,
    cfg: &TrainConfig,
    splits: &Splits,
    out_dir: Option<&Path>,
    hook: Option<&mut IterationHook<'_>>,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(graph, cfg.clone())?;
    let opts = FitOptions {
        out_dir: out_dir.map(Path::to_path_buf),
        stop_at: None,
    };
    let report = trainer.fit(&splits.train, splits.val.as_ref(), &opts, hook)?;
    let test = trainer.evaluate(&splits.test)?;
    let confusion = ConfusionMatrix::new(&test.predictions, &test.labels, &splits.class_names)?;
    if let Some(dir) = out_dir {
        write(&dir.join("confusion.csv"), &confusion.to_csv())?;
        write(
            &dir.join("test_report.txt"),
            &format!(
                "{}\ntest accuracy: {:.2}%\n\n{}",
                graph.name,
                100.0 * test.accuracy,
                confusion.render()
            ),
        )?;
    }
    log::info!("{}: test accuracy {:.2}%", graph.name, 100.0 * test.accuracy);
    Ok(TrainOutcome {
        report,
        test,
        confusion,
        trainer,
    })
}

pub fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_at(dir))?;
    }
    fs::write(path, text).map_err(io_at(path))
}

/// One row of the ablation table.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationModel {
    pub label: &'static str,
    pub description: &'static str,
    pub extractor: &'static str,
    pub network_ablation: Option<u8>,
}

const fn row(label: &'static str, description: &'static str, extractor: &'static str) -> AblationModel {
    AblationModel {
        label,
        description,
        extractor,
        network_ablation: None,
    }
}

/// AMTENnet, Model-base and AMTEN_1..6; AMTENnet_7 and _8 on request.
pub fn ablation_models(with_network_ablations: bool) -> Vec<AblationModel> {
    let mut rows = vec![
        row("AMTENnet", "-", "amten"),
        row("Model-base", "Remove the AMTEN", "none"),
        row("AMTEN_1", "Image data is used instead of residual features F_mt", "amten_1"),
        row("AMTEN_2", "F_mt is not reused", "amten_2"),
        row("AMTEN_3", "Conv 4 = 3 and Conv 5 = 3", "amten_3"),
        row("AMTEN_4", "Conv 4 = 12 and Conv 5 = 12", "amten_4"),
        row("AMTEN_5", "5x5 convolutional kernel as the predictor", "amten_5"),
        row("AMTEN_6", "Remove Conv 3 and Conv 5", "amten_6"),
    ];
    if with_network_ablations {
        rows.push(AblationModel {
            network_ablation: Some(7),
            ..row("AMTENnet_7", "All pooling functions are replaced by average pooling", "amten")
        });
        rows.push(AblationModel {
            network_ablation: Some(8),
            ..row("AMTENnet_8", "The 1x1 convolutional kernel in Conv 9 is replaced by 3x3", "amten")
        });
    }
    rows
}

/// Trains each model on the same corpus and tabulates test accuracy and
/// RER against the first row.
pub fn run_ablation(
    models: &[AblationModel],
    base: &ModelConfig,
    input_size: usize,
    cfg: &TrainConfig,
    splits: &Splits,
    out_dir: Option<&Path>,
) -> Result<AblationTable> {
    let mut table = AblationTable { rows: Vec::new() };
    for m in models {
        let mc = ModelConfig {
            extractor: m.extractor.into(),
            network_ablation: m.network_ablation,
            ..base.clone()
        };
        let graph = mc.graph(input_size, splits.num_classes())?;
        let dir = out_dir.map(|d| d.join(m.label));
        let outcome = train_and_test(&graph, cfg, splits, dir.as_deref(), None)?;
        table.rows.push(AblationRow {
            model: m.label.into(),
            description: m.description.into(),
            accuracy: outcome.test.accuracy,
        });
    }
    if let Some(dir) = out_dir {
        write(&dir.join("ablation.csv"), &table.to_csv())?;
        write(&dir.join("ablation.txt"), &table.render())?;
    }
    Ok(table)
}

pub const ROBUSTNESS_CONDITIONS: [&str; 5] = ["Raw", "JP60", "JP-mix", "ME5", "ME-mix"];

/// Training conditions pooled for the mixed-data protocol.
pub const MIXED_TRAINING: [&str; 3] = ["Raw", "JP-mix", "ME-mix"];

/// Column shown for JPEG 2000, which is not implemented.
pub const UNSUPPORTED_CONDITION: &str = "JP2";

pub fn condition_mode(name: &str) -> Result<Option<ForgeMode>> {
    Ok(match name {
        "Raw" => None,
        "JP-mix" => Some(ForgeMode::Mix(OpKind::Jp)),
        "ME-mix" => Some(ForgeMode::Mix(OpKind::Me)),
        "GB-mix" => Some(ForgeMode::Mix(OpKind::Gb)),
        "MED-mix" => Some(ForgeMode::Mix(OpKind::Med)),
        "GC-mix" => Some(ForgeMode::Mix(OpKind::Gc)),
        "SC-mix" => Some(ForgeMode::Mix(OpKind::Sc)),
        other => {
            let split = other
                .find(|c: char| c.is_ascii_digit() || c == '+' || c == '-')
                .ok_or_else(|| CliError::Usage(format!("unknown condition {other:?}")))?;
            let (kind, param) = other.split_at(split);
            let param: f64 = param
                .parse()
                .map_err(|_| CliError::Usage(format!("unknown condition {other:?}")))?;
            Some(ForgeMode::Single(OpSpec::new(kind.parse()?, param)?))
        }
    })
}

/// Mixed-data report: accuracy of one model on each test condition.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedReport {
    pub trained_on: Vec<String>,
    pub accuracies: Vec<(String, f64)>,
}

impl MixedReport {
    pub fn average(&self) -> f64 {
        self.accuracies.iter().map(|(_, a)| a).sum::<f64>() / self.accuracies.len().max(1) as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("test,accuracy\n");
        for (name, acc) in &self.accuracies {
            s.push_str(&format!("{name},{acc:.6}\n"));
        }
        s.push_str(&format!("Average,{:.6}\n", self.average()));
        s
    }

    pub fn render(&self) -> String {
        let mut s = format!("trained on {}\n{:<10} {:>9}\n", self.trained_on.join(" + "), "Test", "Accuracy");
        for (name, acc) in &self.accuracies {
            s.push_str(&format!("{name:<10} {:>8.2}%\n", 100.0 * acc));
        }
        s.push_str(&format!("{:<10} {:>8.2}%\n", "Average", 100.0 * self.average()));
        s
    }
}

pub struct RobustnessReport {
    pub grid: RobustnessGrid,
    pub mixed: MixedReport,
}

/// Derives every condition from the split raw corpus, trains on each and
/// tests on all, then trains once on the pooled mixed conditions.
pub fn run_robustness(
    raw: &Manifest,
    graph: &ModelGraph,
    cfg: &TrainConfig,
    input_size: usize,
    with_jp2: bool,
    out_dir: &Path,
) -> Result<RobustnessReport> {
    let mut data = Vec::new();
    for (i, name) in ROBUSTNESS_CONDITIONS.iter().enumerate() {
        let manifest = match condition_mode(name)? {
            None => raw.clone(),
            Some(mode) => {
                let dir = out_dir.join("corpora").join(name);
                let m = forge(raw, mode, cfg.seed.wrapping_add(i as u64), &dir)?;
                m.write(&dir.join("manifest.tsv"))?;
                m
            }
        };
        log::info!("robustness: loaded condition {name}");
        data.push(Splits::load(&manifest, input_size)?);
    }
    let mut cols: Vec<String> = ROBUSTNESS_CONDITIONS.iter().map(|s| s.to_string()).collect();
    if with_jp2 {
        cols.push(UNSUPPORTED_CONDITION.into());
    }
    let rows: Vec<String> = ROBUSTNESS_CONDITIONS.iter().map(|s| s.to_string()).collect();
    let mut grid = RobustnessGrid::new(rows, cols);
    for (r, name) in ROBUSTNESS_CONDITIONS.iter().enumerate() {
        let outcome = train_and_test(graph, cfg, &data[r], Some(&out_dir.join("train").join(name)), None)?;
        let mut trainer = outcome.trainer;
        for (c, test) in data.iter().enumerate() {
            grid.set(r, c, trainer.evaluate(&test.test)?.accuracy);
        }
        log::info!("robustness: trained on {name}");
    }
    let pooled: Vec<&Dataset> = MIXED_TRAINING
        .iter()
        .map(|n| &data[ROBUSTNESS_CONDITIONS.iter().position(|c| c == n).expect("known condition")].train)
        .collect();
    let pooled_val: Vec<&Dataset> = MIXED_TRAINING
        .iter()
        .filter_map(|n| data[ROBUSTNESS_CONDITIONS.iter().position(|c| c == n).expect("known condition")].val.as_ref())
        .collect();
    let mixed_splits = Splits {
        train: Dataset::concat(&pooled)?,
        val: if pooled_val.is_empty() {
            None
        } else {
            Some(Dataset::concat(&pooled_val)?)
        },
        test: data[0].test.clone(),
        class_names: data[0].class_names.clone(),
    };
    let outcome = train_and_test(graph, cfg, &mixed_splits, Some(&out_dir.join("train").join("mixed")), None)?;
    let mut trainer = outcome.trainer;
    let mut accuracies = Vec::new();
    for (name, test) in ROBUSTNESS_CONDITIONS.iter().zip(&data) {
        accuracies.push((name.to_string(), trainer.evaluate(&test.test)?.accuracy));
    }
    let mixed = MixedReport {
        trained_on: MIXED_TRAINING.iter().map(|s| s.to_string()).collect(),
        accuracies,
    };
    write(&out_dir.join("robustness.csv"), &grid.to_csv())?;
    write(&out_dir.join("robustness.txt"), &grid.render())?;
    write(&out_dir.join("mixed.csv"), &mixed.to_csv())?;
    write(&out_dir.join("mixed.txt"), &mixed.render())?;
    Ok(RobustnessReport { grid, mixed })
}

/// Mean of `‖F_mt‖² / ‖I‖²` over the images of `ds`; `None` when the
/// network has no trace block.
pub fn trace_energy_ratio(net: &Network<f32>, ds: &Dataset, batch: usize) -> Result<Option<f64>> {
    let mut total = 0.0;
    let indices: Vec<usize> = (0..ds.len()).collect();
    for chunk in indices.chunks(batch.max(1)) {
        let (x, _) = ds.batch(chunk);
        let Some(maps) = net.trace_maps(&x)? else {
            return Ok(None);
        };
        for i in 0..chunk.len() {
            let image: f64 = x.item(i).iter().map(|&v| (v as f64).powi(2)).sum();
            let trace: f64 = maps.f_mt.item(i).iter().map(|&v| (v as f64).powi(2)).sum();
            total += if image > 0.0 { trace / image } else { 0.0 };
        }
    }
    Ok(Some(total / ds.len().max(1) as f64))
}

fn channel_image(values: &[f32], h: usize, w: usize) -> GrayImage {
    let (lo, hi) = values
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    GrayImage::from_fn(w as u32, h as u32, |x, y| {
        let v = values[y as usize * w + x as usize];
        Luma([((v - lo) / span * 255.0).round() as u8])
    })
}

/// Saves min-max normalized F_mt and F_2 channel maps of the first `count`
/// images as `<tag>_img<i>_<map><c>.png`. Returns the files written.
pub fn dump_traces(
    net: &Network<f32>,
    ds: &Dataset,
    count: usize,
    tag: &str,
    dir: &Path,
) -> Result<Vec<std::path::PathBuf>> {
    fs::create_dir_all(dir).map_err(io_at(dir))?;
    let idx: Vec<usize> = (0..count.min(ds.len())).collect();
    let (x, _) = ds.batch(&idx);
    let maps = net
        .trace_maps(&x)?
        .ok_or_else(|| CliError::Usage(format!("{} has no trace block to dump", net.graph.name)))?;
    let mut written = Vec::new();
    for i in 0..idx.len() {
        for (name, t) in [("fmt", &maps.f_mt), ("f2", &maps.f_2)] {
            let [_, c, h, w] = t.shape();
            let item = t.item(i);
            for ch in 0..c {
                let path = dir.join(format!("{tag}_img{i}_{name}{ch}.png"));
                channel_image(&item[ch * h * w..(ch + 1) * h * w], h, w)
                    .save(&path)
                    .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_ablation_has_eight_rows() {
        let rows = ablation_models(false);
        assert_eq!(rows.len(), 8);
        assert_eq!(rows[0].label, "AMTENnet");
        assert_eq!(rows[1].label, "Model-base");
        assert_eq!(ablation_models(true).len(), 10);
        for r in ablation_models(true) {
            let mc = ModelConfig {
                extractor: r.extractor.into(),
                network_ablation: r.network_ablation,
                scale: 0.25,
            };
            mc.graph(64, 4).unwrap();
        }
    }

    #[test]
    fn conditions_parse() {
        assert_eq!(condition_mode("Raw").unwrap(), None);
        assert_eq!(
            condition_mode("JP60").unwrap(),
            Some(ForgeMode::Single(OpSpec::new(OpKind::Jp, 60.0).unwrap()))
        );
        assert_eq!(condition_mode("ME-mix").unwrap(), Some(ForgeMode::Mix(OpKind::Me)));
        assert!(condition_mode("ME4").is_err());
        assert!(condition_mode("XYZ").is_err());
        for c in ROBUSTNESS_CONDITIONS {
            condition_mode(c).unwrap();
        }
    }

    #[test]
    fn mixed_report_averages() {
        let r = MixedReport {
            trained_on: vec!["Raw".into()],
            accuracies: vec![("Raw".into(), 0.9), ("JP60".into(), 0.7)],
        };
        assert!((r.average() - 0.8).abs() < 1e-12);
        assert!(r.to_csv().ends_with("Average,0.800000\n"));
        assert!(r.render().contains("80.00%"));
    }
}
