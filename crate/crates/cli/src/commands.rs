use std::path::{Path, PathBuf};

use amten_core::eval::{binary_collapse, ConfusionMatrix};
use amten_core::gradcheck::{layer_suite, network_check};
use amten_core::model::{render_plan, shape_plan};
use amten_core::train::{Checkpoint, FitOptions, MetricRow};
use amten_core::{Network, Trainer};
use amten_forge::{forge, ingest, stratified_split, synthesize_toy_corpus, Manifest, Split};
use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::experiments::{
    ablation_models, condition_mode, dump_traces, run_ablation, run_robustness, trace_energy_ratio, train_and_test,
    write, Splits,
};
use crate::stamp::write_stamp;

pub const MANIFEST_FILE: &str = "manifest.tsv";

#[derive(Parser, Debug)]
#[command(name = "amten", version, about = "Face-manipulation trace detection: corpora, training and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Output directory; nothing is written outside it.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Run seed for corpus splits, initialization and batch order.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Draw the seed from the clock (recorded in the stamp).
    #[arg(long)]
    pub nondeterministic: bool,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ModelArgs {
    /// Corpus manifest with train/val/test splits.
    #[arg(long, short)]
    pub manifest: Option<PathBuf>,
    /// Front-end: amten, amten_1..amten_6, none, highpass, srm, constrained_conv.
    #[arg(long)]
    pub extractor: Option<String>,
    /// Width multiplier for reduced networks.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Square model input; images are resized to it.
    #[arg(long)]
    pub input_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Base learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Validation interval in iterations.
    #[arg(long)]
    pub eval_every: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build corpora: synthesize the toy set, ingest folders or apply operations.
    Forge {
        #[command(subcommand)]
        action: ForgeAction,
    },
    /// Train one model and score its test split.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        /// Network ablation 7 (average pooling) or 8 (3x3 Conv 9).
        #[arg(long)]
        network_ablation: Option<u8>,
        /// Also save a checkpoint after these iterations.
        #[arg(long, value_delimiter = ',')]
        save_at: Vec<usize>,
        /// Continue from a checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score a checkpoint on one split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, short)]
        manifest: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Class indices counted as real for the two-class collapse.
        #[arg(long, value_delimiter = ',')]
        real_classes: Vec<usize>,
    },
    /// Finite-difference gradient checks of every layer and a whole network.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, default_value = "amten")]
        extractor: String,
        #[arg(long, default_value_t = 0.25)]
        scale: f64,
        #[arg(long, default_value_t = 40)]
        input_size: usize,
        /// Entries checked per parameter block of the network.
        #[arg(long, default_value_t = 6)]
        per_block: usize,
    },
    /// Per-filter trace images and energy ratios of one or more checkpoints.
    Traces {
        #[command(flatten)]
        common: Common,
        #[arg(long, required = true, value_delimiter = ',')]
        checkpoints: Vec<PathBuf>,
        #[arg(long, short)]
        manifest: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Only images of this class index.
        #[arg(long)]
        class: Option<usize>,
        #[arg(long, default_value_t = 4)]
        count: usize,
    },
    /// Train the ablation models on one corpus and report accuracy and RER.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        /// Add AMTENnet_7 and AMTENnet_8.
        #[arg(long)]
        with_network_ablations: bool,
    },
    /// Train on each post-processing condition, test on all, then train on the mix.
    Robustness {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        /// Add a JPEG 2000 column, reported as unsupported.
        #[arg(long)]
        with_jp2: bool,
    },
    /// Print the layer-by-layer shape plan of a model.
    Plan {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 8)]
        classes: usize,
    },
}

#[derive(Subcommand, Debug)]
pub enum ForgeAction {
    /// Synthesize and split the procedural toy corpus.
    Toy {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        per_class: Option<usize>,
        #[arg(long)]
        size: Option<u32>,
    },
    /// Index `SRC/<class>/<image>` folders and split them.
    Ingest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        src: PathBuf,
    },
    /// Apply one operation (e.g. JP:60) or a mix (e.g. JP-mix) to a corpus.
    Apply {
        #[command(flatten)]
        common: Common,
        #[arg(long, short)]
        manifest: PathBuf,
        /// `JP:60`, `ME:5`, `SC:-10`, or a condition such as `JP60` or `ME-mix`.
        #[arg(long)]
        op: String,
    },
}

fn prepare(common: &Common, model: Option<&ModelArgs>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load_or_default(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if common.nondeterministic {
        cfg.deterministic = false;
    }
    if let Some(m) = model {
        apply_model_args(&mut cfg, m);
    }
    cfg.finalize()?;
    Ok(cfg)
}

fn apply_model_args(cfg: &mut RunConfig, m: &ModelArgs) {
    if let Some(v) = &m.manifest {
        cfg.corpus.manifest = Some(v.clone());
    }
    if let Some(v) = &m.extractor {
        cfg.model.extractor = v.clone();
    }
    if let Some(v) = m.scale {
        cfg.model.scale = v;
    }
    if let Some(v) = m.input_size {
        cfg.corpus.input_size = v;
    }
    if let Some(v) = m.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = m.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = m.lr {
        cfg.train.base_lr = v;
    }
    if let Some(v) = m.eval_every {
        cfg.train.eval_every = v;
    }
}

fn manifest_of(cfg: &RunConfig) -> Result<Manifest> {
    let path = cfg
        .corpus
        .manifest
        .as_ref()
        .ok_or_else(|| CliError::Usage("no corpus manifest given (--manifest or corpus.manifest)".into()))?;
    Ok(Manifest::read(path)?)
}

fn parse_split(s: &str) -> Result<Split> {
    s.parse().map_err(|e: amten_forge::ForgeError| CliError::Usage(e.to_string()))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Forge { action } => cmd_forge(action),
        Command::Train {
            common,
            model,
            network_ablation,
            save_at,
            resume,
        } => cmd_train(&common, &model, network_ablation, &save_at, resume.as_deref()),
        Command::Eval {
            common,
            checkpoint,
            manifest,
            split,
            real_classes,
        } => cmd_eval(&common, &checkpoint, &manifest, &split, &real_classes),
        Command::Gradcheck {
            common,
            seeds,
            extractor,
            scale,
            input_size,
            per_block,
        } => cmd_gradcheck(&common, seeds, &extractor, scale, input_size, per_block),
        Command::Traces {
            common,
            checkpoints,
            manifest,
            split,
            class,
            count,
        } => cmd_traces(&common, &checkpoints, &manifest, &split, class, count),
        Command::Ablate {
            common,
            model,
            with_network_ablations,
        } => cmd_ablate(&common, &model, with_network_ablations),
        Command::Robustness { common, model, with_jp2 } => cmd_robustness(&common, &model, with_jp2),
        Command::Plan { model, classes } => cmd_plan(&model, classes),
    }
}

pub fn cmd_forge(action: ForgeAction) -> Result<()> {
    let (common, name) = match &action {
        ForgeAction::Toy { common, .. } => (common, "forge toy"),
        ForgeAction::Ingest { common, .. } => (common, "forge ingest"),
        ForgeAction::Apply { common, .. } => (common, "forge apply"),
    };
    let mut cfg = prepare(common, None)?;
    let out = &common.out;
    let manifest = match &action {
        ForgeAction::Toy {
            classes,
            per_class,
            size,
            ..
        } => {
            cfg.corpus.toy_classes = classes.unwrap_or(cfg.corpus.toy_classes);
            cfg.corpus.toy_per_class = per_class.unwrap_or(cfg.corpus.toy_per_class);
            cfg.corpus.toy_size = size.unwrap_or(cfg.corpus.toy_size);
            let toy = synthesize_toy_corpus(
                cfg.corpus.toy_classes,
                cfg.corpus.toy_per_class,
                cfg.corpus.toy_size,
                cfg.seed,
                out,
            )?;
            let t = toy.dct_test;
            println!("block-DCT energy test, clean vs manipulated: t = {:.3}, p = {:.3e}", t.t, t.p_value);
            if t.p_value >= 0.01 {
                return Err(CliError::Data(format!(
                    "toy classes are not separable by block-DCT energy (p = {:.3e})",
                    t.p_value
                )));
            }
            let mut m = toy.manifest;
            stratified_split(&mut m, cfg.corpus.ratios, cfg.seed)?;
            m
        }
        ForgeAction::Ingest { src, .. } => {
            let mut m = ingest(src)?;
            stratified_split(&mut m, cfg.corpus.ratios, cfg.seed)?;
            m
        }
        ForgeAction::Apply { manifest, op, .. } => {
            let src = Manifest::read(manifest)?;
            let mode = match op.contains(':') {
                true => amten_forge::ForgeMode::Single(op.parse()?),
                false => condition_mode(op)?
                    .ok_or_else(|| CliError::Usage("`Raw` is the unmodified corpus; nothing to apply".into()))?,
            };
            println!("applying {}", mode.label());
            forge(&src, mode, cfg.seed, out)?
        }
    };
    manifest.write(&out.join(MANIFEST_FILE))?;
    let [train, val, test] = manifest.split_counts();
    println!(
        "{} records in {} classes; train {train}, val {val}, test {test}; manifest at {}",
        manifest.records.len(),
        manifest.num_classes(),
        out.join(MANIFEST_FILE).display()
    );
    write_stamp(out, name, &cfg)
}

pub fn cmd_train(
    common: &Common,
    model: &ModelArgs,
    network_ablation: Option<u8>,
    save_at: &[usize],
    resume: Option<&Path>,
) -> Result<()> {
    let mut cfg = prepare(common, Some(model))?;
    if network_ablation.is_some() {
        cfg.model.network_ablation = network_ablation;
    }
    let manifest = manifest_of(&cfg)?;
    let splits = Splits::load(&manifest, cfg.corpus.input_size)?;
    let graph = cfg.model.graph(cfg.corpus.input_size, splits.num_classes())?;
    write_stamp(&common.out, "train", &cfg)?;
    let out = common.out.clone();
    let train_len = splits.train.len();
    let mut hook = |t: &mut Trainer, row: &MetricRow| -> amten_core::Result<()> {
        if save_at.contains(&row.iteration) {
            t.checkpoint(train_len).save(&out.join(format!("iter_{}.ckpt", row.iteration)))?;
        }
        if row.iteration.is_multiple_of(50) || row.val_accuracy.is_some() {
            log::info!(
                "iteration {} lr {:.6} loss {:.4}{}",
                row.iteration,
                row.lr,
                row.loss,
                row.val_accuracy.map_or(String::new(), |a| format!(" val {:.2}%", 100.0 * a))
            );
        }
        Ok(())
    };
    let outcome = match resume {
        None => train_and_test(&graph, &cfg.train, &splits, Some(&common.out), Some(&mut hook))?,
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            let mut trainer = Trainer::resume(&ckpt)?;
            let opts = FitOptions {
                out_dir: Some(common.out.clone()),
                stop_at: None,
            };
            trainer.fit(&splits.train, splits.val.as_ref(), &opts, Some(&mut hook))?;
            let test = trainer.evaluate(&splits.test)?;
            let confusion = ConfusionMatrix::new(&test.predictions, &test.labels, &splits.class_names)?;
            write(&common.out.join("confusion.csv"), &confusion.to_csv())?;
            println!("{}", confusion.render());
            println!("test accuracy: {:.2}%", 100.0 * test.accuracy);
            return Ok(());
        }
    };
    println!("{}", outcome.confusion.render());
    println!("test accuracy: {:.2}%", 100.0 * outcome.test.accuracy);
    Ok(())
}

pub fn cmd_eval(common: &Common, checkpoint: &Path, manifest: &Path, split: &str, real: &[usize]) -> Result<()> {
    let mut cfg = prepare(common, None)?;
    cfg.corpus.manifest = Some(manifest.to_path_buf());
    let ckpt = Checkpoint::load(checkpoint)?;
    let mut net = ckpt.restore()?;
    let m = Manifest::read(manifest)?;
    let size = net.graph.input_size.1;
    let ds = amten_forge::load_dataset(&m, Some(parse_split(split)?), size)?;
    let names = m.class_names()?;
    let ev = amten_core::train::evaluate(&mut net, &ds, ckpt.config.batch_size)?;
    let cm = ConfusionMatrix::new(&ev.predictions, &ev.labels, &names)?;
    write_stamp(&common.out, "eval", &cfg)?;
    write(&common.out.join("confusion.csv"), &cm.to_csv())?;
    let mut report = format!("{}\n{split} accuracy: {:.2}%\n\n{}", net.graph.name, 100.0 * ev.accuracy, cm.render());
    if !real.is_empty() {
        let truth = binary_collapse(&ev.labels, real);
        let pred = binary_collapse(&ev.predictions, real);
        let bin = ConfusionMatrix::new(&pred, &truth, &["real".to_string(), "fake".to_string()])?;
        report.push_str(&format!("\nreal vs fake accuracy: {:.2}%\n{}", 100.0 * bin.accuracy(), bin.render()));
        write(&common.out.join("binary_confusion.csv"), &bin.to_csv())?;
    }
    write(&common.out.join("eval_report.txt"), &report)?;
    println!("{report}");
    Ok(())
}

pub fn cmd_gradcheck(
    common: &Common,
    seeds: u64,
    extractor: &str,
    scale: f64,
    input_size: usize,
    per_block: usize,
) -> Result<()> {
    let mut cfg = prepare(common, None)?;
    cfg.model.extractor = extractor.into();
    cfg.model.scale = scale;
    cfg.corpus.input_size = input_size;
    write_stamp(&common.out, "gradcheck", &cfg)?;
    let mut text = String::new();
    let mut failed = Vec::new();
    let (mut worst_layer, mut worst_net) = (0.0f64, 0.0f64);
    for s in 0..seeds {
        let seed = cfg.seed.wrapping_add(s);
        for (name, report) in layer_suite(seed)? {
            worst_layer = worst_layer.max(report.max_rel_err());
            if !report.passed() {
                failed.push(format!("seed {seed} {name}"));
                text.push_str(&format!("seed {seed} {name}\n{}", report.render()));
            }
        }
    }
    let graph = amten_core::build_mini(scale, input_size, 3, amten_core::ExtractorConfig::parse(extractor)?)?;
    for s in 0..seeds {
        let seed = cfg.seed.wrapping_add(s);
        let report = network_check(&graph, seed, 2, per_block)?;
        worst_net = worst_net.max(report.max_rel_err());
        if !report.passed() {
            failed.push(format!("seed {seed} {}", graph.name));
        }
        if s == 0 || !report.passed() {
            text.push_str(&format!("seed {seed} {}\n{}", graph.name, report.render()));
        }
    }
    let summary = format!(
        "{seeds} seeds: worst layer error {worst_layer:.3e}, worst {} error {worst_net:.3e}, {} failures\n",
        graph.name,
        failed.len()
    );
    write(&common.out.join("gradcheck.txt"), &format!("{summary}\n{text}"))?;
    print!("{summary}");
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numerical(format!("gradient check failed: {}", failed.join(", "))))
    }
}

pub fn cmd_traces(
    common: &Common,
    checkpoints: &[PathBuf],
    manifest: &Path,
    split: &str,
    class: Option<usize>,
    count: usize,
) -> Result<()> {
    let mut cfg = prepare(common, None)?;
    cfg.corpus.manifest = Some(manifest.to_path_buf());
    let mut m = Manifest::read(manifest)?;
    if let Some(c) = class {
        m.records.retain(|r| r.class_index == c);
    }
    write_stamp(&common.out, "traces", &cfg)?;
    let mut csv = String::from("checkpoint,iteration,energy_ratio\n");
    for path in checkpoints {
        let ckpt = Checkpoint::load(path)?;
        let net: Network<f32> = ckpt.restore()?;
        let ds = amten_forge::load_dataset(&m, Some(parse_split(split)?), net.graph.input_size.1)?;
        let tag = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let ratio = trace_energy_ratio(&net, &ds, 32)?
            .ok_or_else(|| CliError::Usage(format!("{} has no trace block", net.graph.name)))?;
        let files = dump_traces(&net, &ds, count, &tag, &common.out)?;
        println!(
            "{tag} (iteration {}): mean |F_mt|^2/|I|^2 = {ratio:.6}, {} images written",
            ckpt.iteration,
            files.len()
        );
        csv.push_str(&format!("{},{},{ratio:.9}\n", path.display(), ckpt.iteration));
    }
    write(&common.out.join("energy.csv"), &csv)
}

pub fn cmd_ablate(common: &Common, model: &ModelArgs, with_network: bool) -> Result<()> {
    let cfg = prepare(common, Some(model))?;
    let manifest = manifest_of(&cfg)?;
    let splits = Splits::load(&manifest, cfg.corpus.input_size)?;
    write_stamp(&common.out, "ablate", &cfg)?;
    let table = run_ablation(
        &ablation_models(with_network),
        &cfg.model,
        cfg.corpus.input_size,
        &cfg.train,
        &splits,
        Some(&common.out),
    )?;
    println!("{}", table.render());
    Ok(())
}

pub fn cmd_robustness(common: &Common, model: &ModelArgs, with_jp2: bool) -> Result<()> {
    let cfg = prepare(common, Some(model))?;
    let manifest = manifest_of(&cfg)?;
    let graph = cfg.model.graph(cfg.corpus.input_size, manifest.num_classes())?;
    write_stamp(&common.out, "robustness", &cfg)?;
    let report = run_robustness(&manifest, &graph, &cfg.train, cfg.corpus.input_size, with_jp2, &common.out)?;
    println!("{}\n{}", report.grid.render(), report.mixed.render());
    Ok(())
}

pub fn cmd_plan(model: &ModelArgs, classes: usize) -> Result<()> {
    let mut cfg = RunConfig::default();
    apply_model_args(&mut cfg, model);
    let graph = cfg.model.graph(cfg.corpus.input_size, classes)?;
    print!("{}", render_plan(&shape_plan(&graph)?));
    println!("parameters: {}", Network::<f32>::new(&graph, 0)?.param_count());
    Ok(())
}
