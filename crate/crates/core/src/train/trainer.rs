use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{Checkpoint, RngState};
use super::config::{iterations_per_epoch, lr_at, TrainConfig};
use super::dataset::Dataset;
use super::sgd::{sgd_step, SgdStep};
use crate::error::{Error, Result};
use crate::model::{ModelGraph, Network};
use crate::ops::{argmax_rows, softmax_cross_entropy, Mode};

pub const METRIC_HEADER: &str = "iteration,lr,loss,val_accuracy";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const METRIC_LOG: &str = "metrics.csv";
pub const MODEL_MANIFEST: &str = "model.json";

const SHUFFLE_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// One line of the metric log. `iteration` counts completed steps.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub iteration: usize,
    pub lr: f64,
    pub loss: f64,
    pub val_accuracy: Option<f64>,
}

impl MetricRow {
    pub fn to_csv(&self) -> String {
        let val = self.val_accuracy.map(|v| v.to_string()).unwrap_or_default();
        format!("{},{},{},{}", self.iteration, self.lr, self.loss, val)
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    pub rows: Vec<MetricRow>,
    /// `(iteration, accuracy)` of the best validation score.
    pub best_val: Option<(usize, f64)>,
    pub final_val: Option<f64>,
    /// Windows whose smoothed loss rose after the first learning-rate drop.
    pub smoothed_loss_increases: Vec<usize>,
}

impl TrainReport {
    pub fn losses(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.loss).collect()
    }
}

/// Predictions of one evaluation pass.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub predictions: Vec<usize>,
    pub labels: Vec<usize>,
    pub accuracy: f64,
}

#[derive(Clone, Debug, Default)]
pub struct FitOptions {
    /// Receives checkpoints, the model manifest and the metric log.
    pub out_dir: Option<PathBuf>,
    /// Stop after this many completed iterations.
    pub stop_at: Option<usize>,
}

pub type IterationHook<'a> = dyn FnMut(&mut Trainer, &MetricRow) -> Result<()> + 'a;

/// Owns the network and optimizer state; batches are full and drawn
/// cyclically from a per-epoch permutation seeded by `(seed, epoch)`.
pub struct Trainer {
    pub net: Network<f32>,
    pub cfg: TrainConfig,
    pub iteration: usize,
    perm: Option<(u64, Vec<usize>)>,
}

impl Trainer {
    pub fn new(graph: &ModelGraph, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            net: Network::new(graph, cfg.seed)?,
            cfg,
            iteration: 0,
            perm: None,
        })
    }

    pub fn resume(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.config.validate()?;
        if ckpt.rng.seed != ckpt.config.seed ^ SHUFFLE_SALT {
            return Err(Error::Checkpoint("shuffle stream does not belong to the stored seed".into()));
        }
        Ok(Self {
            net: ckpt.restore()?,
            cfg: ckpt.config.clone(),
            iteration: ckpt.iteration,
            perm: None,
        })
    }

    pub fn checkpoint(&self, train_len: usize) -> Checkpoint {
        let epoch = self.iteration / iterations_per_epoch(train_len.max(1), self.cfg.batch_size);
        Checkpoint::capture(
            &self.net,
            &self.cfg,
            self.iteration,
            RngState {
                seed: self.cfg.seed ^ SHUFFLE_SALT,
                stream: epoch as u64,
            },
        )
    }

    pub fn total_iterations(&self, train_len: usize) -> usize {
        self.cfg.epochs * iterations_per_epoch(train_len, self.cfg.batch_size)
    }

    /// Sample indices of the batch for the current iteration.
    pub fn batch_indices(&mut self, n: usize) -> Vec<usize> {
        let b = self.cfg.batch_size;
        let ipe = iterations_per_epoch(n, b);
        let epoch = (self.iteration / ipe) as u64;
        let j = self.iteration % ipe;
        if !matches!(&self.perm, Some((e, p)) if *e == epoch && p.len() == n) {
            let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ SHUFFLE_SALT);
            rng.set_stream(epoch);
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(&mut rng);
            self.perm = Some((epoch, p));
        }
        let perm = &self.perm.as_ref().unwrap().1;
        (0..b).map(|t| perm[(j * b + t) % n]).collect()
    }

    /// One forward/backward/update on the next batch.
    pub fn step(&mut self, train: &Dataset) -> Result<MetricRow> {
        if train.is_empty() {
            return Err(Error::Data("training split is empty".into()));
        }
        let idx = self.batch_indices(train.len());
        let (x, y) = train.batch(&idx);
        self.net.zero_grad();
        let logits = self.net.forward(&x, Mode::Train)?;
        let (loss, g) = softmax_cross_entropy(&logits, &y)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss is {loss} at iteration {}",
                self.iteration + 1
            )));
        }
        self.net.backward(&g, false)?;
        let lr = lr_at(self.iteration, &self.cfg);
        let step = SgdStep {
            lr,
            momentum: self.cfg.momentum,
            decay: self.cfg.decay,
            rule: self.cfg.update_rule,
        };
        sgd_step(&mut self.net.params_mut(), step)?;
        if let Some(p) = self.net.params().into_iter().find(|p| !p.velocity.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite(format!("momentum buffer of {} diverged", p.name)));
        }
        self.net.after_step();
        self.iteration += 1;
        Ok(MetricRow {
            iteration: self.iteration,
            lr,
            loss: loss as f64,
            val_accuracy: None,
        })
    }

    /// Inference-mode predictions over a whole dataset.
    pub fn evaluate(&mut self, ds: &Dataset) -> Result<Evaluation> {
        evaluate(&mut self.net, ds, self.cfg.batch_size)
    }

    /// Runs the remaining iterations of the schedule.
    pub fn fit(
        &mut self,
        train: &Dataset,
        val: Option<&Dataset>,
        opts: &FitOptions,
        mut hook: Option<&mut IterationHook<'_>>,
    ) -> Result<TrainReport> {
        self.check_data(train, "train")?;
        if let Some(v) = val {
            self.check_data(v, "val")?;
        }
        let total = self.total_iterations(train.len());
        let end = opts.stop_at.map_or(total, |s| s.min(total));
        let mut log = match &opts.out_dir {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                fs::write(dir.join(MODEL_MANIFEST), self.net.graph.manifest()?)?;
                Some(open_log(&dir.join(METRIC_LOG), self.iteration == 0)?)
            }
            None => None,
        };
        let mut report = TrainReport::default();
        while self.iteration < end {
            let mut row = self.step(train)?;
            if let Some(v) = val {
                if self.iteration.is_multiple_of(self.cfg.eval_every) || self.iteration == total {
                    let acc = self.evaluate(v)?.accuracy;
                    row.val_accuracy = Some(acc);
                    if report.best_val.is_none_or(|(_, b)| acc > b) {
                        report.best_val = Some((self.iteration, acc));
                        if let Some(dir) = &opts.out_dir {
                            self.checkpoint(train.len()).save(&dir.join(BEST_CHECKPOINT))?;
                        }
                    }
                    if self.iteration == total {
                        report.final_val = Some(acc);
                    }
                }
            }
            if let Some(w) = log.as_mut() {
                writeln!(w, "{}", row.to_csv())?;
            }
            if let Some(h) = hook.as_mut() {
                h(self, &row)?;
            }
            report.rows.push(row);
        }
        if let Some(w) = log.as_mut() {
            w.flush()?;
        }
        if let Some(dir) = &opts.out_dir {
            self.checkpoint(train.len()).save(&dir.join(FINAL_CHECKPOINT))?;
        }
        report.smoothed_loss_increases = smoothed_loss_increases(&report.rows, 50, self.cfg.step);
        for w in &report.smoothed_loss_increases {
            log::warn!("smoothed training loss rose in the 50-step window ending at iteration {w}");
        }
        Ok(report)
    }

    fn check_data(&self, ds: &Dataset, split: &str) -> Result<()> {
        if ds.is_empty() {
            return Err(Error::Data(format!("{split} split is empty")));
        }
        let g = &self.net.graph;
        if ds.num_classes != g.num_classes {
            return Err(Error::Data(format!(
                "{split} split has {} classes, model expects {}",
                ds.num_classes, g.num_classes
            )));
        }
        if ds.image_size() != (g.input_size.1, g.input_size.2) {
            return Err(Error::Data(format!(
                "{split} images are {:?}, model expects {:?}",
                ds.image_size(),
                (g.input_size.1, g.input_size.2)
            )));
        }
        Ok(())
    }
}

fn open_log(path: &Path, fresh: bool) -> Result<BufWriter<File>> {
    let exists = path.exists();
    let file = if fresh {
        File::create(path)?
    } else {
        OpenOptions::new().append(true).create(true).open(path)?
    };
    let mut w = BufWriter::new(file);
    if fresh || !exists {
        writeln!(w, "{METRIC_HEADER}")?;
    }
    Ok(w)
}

/// Inference-mode accuracy of any network over a dataset.
pub fn evaluate(net: &mut Network<f32>, ds: &Dataset, batch: usize) -> Result<Evaluation> {
    if ds.is_empty() {
        return Err(Error::Data("evaluation split is empty".into()));
    }
    let mut predictions = Vec::with_capacity(ds.len());
    let idx: Vec<usize> = (0..ds.len()).collect();
    for chunk in idx.chunks(batch.max(1)) {
        let (x, _) = ds.batch(chunk);
        predictions.extend(argmax_rows(&net.forward(&x, Mode::Infer)?));
    }
    let correct = predictions.iter().zip(&ds.labels).filter(|(p, l)| p == l).count();
    Ok(Evaluation {
        accuracy: correct as f64 / ds.len() as f64,
        predictions,
        labels: ds.labels.clone(),
    })
}

/// End iterations of consecutive `window`-step blocks, after iteration
/// `from`, whose mean loss exceeds the previous block's.
pub fn smoothed_loss_increases(rows: &[MetricRow], window: usize, from: usize) -> Vec<usize> {
    let tail: Vec<&MetricRow> = rows.iter().filter(|r| r.iteration > from).collect();
    let means: Vec<(usize, f64)> = tail
        .chunks_exact(window)
        .map(|c| (c[c.len() - 1].iteration, c.iter().map(|r| r.loss).sum::<f64>() / window as f64))
        .collect();
    means
        .windows(2)
        .filter(|w| w[1].1 > w[0].1)
        .map(|w| w[1].0)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extractor::ExtractorConfig;
    use crate::model::build_mini;
    use crate::tensor::Tensor;
    use rand::Rng;

    fn toy(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let label = i % 2;
            for _ in 0..3 * 40 * 40 {
                let v: f32 = rng.random();
                data.push(if label == 0 { 0.5 } else { v });
            }
            labels.push(label);
        }
        Dataset::new(Tensor::from_vec([n, 3, 40, 40], data).unwrap(), labels, 2).unwrap()
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            batch_size: 4,
            epochs: 1,
            eval_every: 3,
            seed: 3,
            base_lr: 0.01,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn batches_cycle_through_a_permutation() {
        let g = build_mini(0.25, 40, 2, ExtractorConfig::amten()).unwrap();
        let mut t = Trainer::new(&g, cfg()).unwrap();
        let mut seen = Vec::new();
        for _ in 0..3 {
            seen.extend(t.batch_indices(10));
            t.iteration += 1;
        }
        // 10 samples, batch 4: 3 iterations cover 12 slots, wrapping once
        let mut first: Vec<usize> = seen[..10].to_vec();
        first.sort();
        assert_eq!(first, (0..10).collect::<Vec<_>>());
        assert_eq!(&seen[10..], &seen[..2]);
    }

    #[test]
    fn same_seed_same_losses() {
        let g = build_mini(0.25, 40, 2, ExtractorConfig::amten()).unwrap();
        let ds = toy(12, 1);
        let run = || {
            let mut t = Trainer::new(&g, cfg()).unwrap();
            t.fit(&ds, Some(&ds), &FitOptions::default(), None).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.rows.len(), 3);
        assert_eq!(a.losses(), b.losses());
        assert!(a.rows[2].val_accuracy.is_some());
    }

    #[test]
    fn mismatched_data_is_rejected() {
        let g = build_mini(0.25, 40, 3, ExtractorConfig::amten()).unwrap();
        let mut t = Trainer::new(&g, cfg()).unwrap();
        assert!(matches!(
            t.fit(&toy(4, 0), None, &FitOptions::default(), None),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn smoothing_detects_rises() {
        let rows: Vec<MetricRow> = (1..=6)
            .map(|i| MetricRow {
                iteration: i,
                lr: 0.1,
                loss: [3.0, 3.0, 1.0, 1.0, 2.0, 2.0][i - 1],
                val_accuracy: None,
            })
            .collect();
        assert_eq!(smoothed_loss_increases(&rows, 2, 0), vec![6]);
        assert!(smoothed_loss_increases(&rows, 2, 4).is_empty());
    }
}
