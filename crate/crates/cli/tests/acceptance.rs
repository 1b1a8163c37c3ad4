//! End-to-end acceptance suite. Every criterion prints one PASS/FAIL line;
//! soft criteria are logged and never gate the run.
//!
//! Run with `cargo test -p amten-cli --test acceptance -- --nocapture`.
//! Artifacts (reports, trace images, checkpoints) land in
//! `target/tmp/acceptance`.

use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use amten_cli::experiments::{dump_traces, run_robustness, trace_energy_ratio, train_and_test, write, Splits};
use amten_cli::RunConfig;
use amten_core::eval::{rer, AblationRow, AblationTable};
use amten_core::extractor::TraceBlock;
use amten_core::gradcheck::{layer_suite, network_check};
use amten_core::model::{build_amtennet, build_mini, shape_plan};
use amten_core::train::{lr_at, sgd_step, FitOptions, MetricRow, SgdStep, UpdateRule};
use amten_core::{Dataset, Extractor, ExtractorConfig, Param, Tensor, TrainConfig, Trainer};
use amten_forge::imageops::{gamma_correct, mean_filter, median_filter, resize_bilinear, scale};
use amten_forge::{load_dataset, mix_param, stratified_split, synthesize_toy_corpus, Manifest, OpKind, DEFAULT_RATIOS};
use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOY_CLASSES: usize = 4;
const TOY_PER_CLASS: usize = 1000;
const TOY_SIZE: u32 = 64;
const ROBUST_PER_CLASS: usize = 1000;
const ROBUST_SIZE: u32 = 48;
const SOFT_SEEDS: [u64; 3] = [0, 1, 2];

struct Verdict {
    pass: bool,
    soft: bool,
    detail: String,
}

impl Verdict {
    fn hard(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            soft: false,
            detail: detail.into(),
        }
    }

    fn soft(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            soft: true,
            detail: detail.into(),
        }
    }
}

fn artifacts() -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn toy_config() -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/toy.toml");
    let mut cfg = RunConfig::load(&path).unwrap();
    cfg.finalize().unwrap();
    cfg
}

fn toy_corpus(per_class: usize, size: u32, seed: u64, dir: &Path) -> Manifest {
    let toy = synthesize_toy_corpus(TOY_CLASSES, per_class, size, seed, dir).unwrap();
    assert!(toy.dct_test.p_value < 0.01, "{:?}", toy.dct_test);
    let mut m = toy.manifest;
    stratified_split(&mut m, DEFAULT_RATIOS, seed).unwrap();
    m
}

fn to_core(e: impl std::fmt::Display) -> amten_core::Error {
    amten_core::Error::Data(e.to_string())
}

// 1. Layer ladder and kernel counts of the full network.

fn shape_conformance() -> Verdict {
    let t = Instant::now();
    let plan = shape_plan(&build_amtennet(8, ExtractorConfig::amten()).unwrap()).unwrap();
    let spatial: Vec<usize> = plan
        .iter()
        .filter(|r| matches!(r.kind, "extractor" | "conv" | "maxpool"))
        .map(|r| r.out[1])
        .collect();
    let kernels: Vec<usize> = plan
        .iter()
        .filter(|r| matches!(r.kind, "extractor" | "conv"))
        .filter_map(|r| r.count)
        .collect();
    let want_spatial = [128, 128, 128, 128, 128, 128, 64, 62, 31, 29, 14, 14, 7];
    let want_kernels = [3, 3, 3, 6, 6, 24, 48, 64, 128];
    let square = plan.iter().all(|r| r.out[1] == r.out[2]);
    let elapsed = t.elapsed();
    Verdict::hard(
        spatial == want_spatial && kernels == want_kernels && square && elapsed < Duration::from_secs(1),
        format!("spatial {spatial:?}, kernels {kernels:?}, {elapsed:.2?}"),
    )
}

// 2. Finite-difference checks over 20 seeds.

fn gradient_suite() -> Verdict {
    let t = Instant::now();
    let mut layer_worst = 0.0f64;
    let mut failures = Vec::new();
    let mut checked_layers = 0;
    for seed in 0..20 {
        for (name, report) in layer_suite(seed).unwrap() {
            let err = report.max_rel_err();
            layer_worst = layer_worst.max(err);
            checked_layers += 1;
            if err >= 1e-5 || report.blocks.iter().any(|b| b.checked == 0) {
                failures.push(format!("{name}@{seed}"));
            }
        }
    }
    let graph = build_mini(0.25, 40, 3, ExtractorConfig::amten()).unwrap();
    let mut net_worst = 0.0f64;
    let (mut scored, mut kinks) = (0, 0);
    for seed in 0..20 {
        let report = network_check(&graph, seed, 2, 6).unwrap();
        let err = report.max_rel_err();
        let checked: usize = report.blocks.iter().map(|b| b.checked).sum();
        scored += checked;
        kinks += report.blocks.iter().map(|b| b.kinks).sum::<usize>();
        net_worst = net_worst.max(err);
        if err >= 1e-4 || checked == 0 {
            failures.push(format!("network@{seed}"));
        }
    }
    let elapsed = t.elapsed();
    Verdict::hard(
        failures.is_empty() && elapsed < Duration::from_secs(300),
        format!(
            "{checked_layers} layer checks worst {layer_worst:.2e}, mini network worst {net_worst:.2e} \
             ({scored} entries scored, {kinks} on kinks), {elapsed:.1?}{}",
            if failures.is_empty() {
                String::new()
            } else {
                format!(", failing {failures:?}")
            }
        ),
    )
}

// 3. Identity predictor with zero biases yields zero traces.

fn trace_identity() -> Verdict {
    fn zeros<T: amten_core::Scalar>(seed: u64) -> (bool, bool) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut block = TraceBlock::<T>::new(ExtractorConfig::amten(), &mut rng).unwrap();
        for conv in block.convs_mut() {
            conv.bias.value.iter_mut().for_each(|b| *b = T::zero());
        }
        block.set_identity_predictor();
        let img = Tensor::<T>::randn([2, 3, 24, 24], 1.0, &mut rng);
        let maps = block.trace_maps(&img).unwrap();
        (
            maps.f_mt.data().iter().all(|&v| v == T::zero()),
            maps.f_reu.data().iter().all(|&v| v == T::zero()),
        )
    }
    let runs = [zeros::<f64>(0), zeros::<f64>(1), zeros::<f32>(2)];
    Verdict::hard(
        runs.iter().all(|&(a, b)| a && b),
        format!("(F_mt zero, F_reu zero) for f64, f64, f32: {runs:?}"),
    )
}

// 4. Closed-form momentum sequence and step schedule.

fn optimizer_oracle() -> Verdict {
    // v ← 0.9 v − 0.1 (g + 0.005 w), w ← w + v, g = 0.5, from w = 1, v = 0.
    let expected = [1899.0 / 2000.0, 3414301.0 / 4000000.0, 5734529499.0 / 8000000000.0];
    let mut p = Param::<f64>::filled("w", &[1], 1.0);
    let step = SgdStep {
        lr: 0.1,
        momentum: 0.9,
        decay: 0.005,
        rule: UpdateRule::Standard,
    };
    let mut worst = 0.0f64;
    for e in expected {
        p.grad = vec![0.5];
        sgd_step(&mut [&mut p], step).unwrap();
        worst = worst.max((p.value[0] - e).abs());
    }
    let lr = lr_at(2500, &TrainConfig::default());
    Verdict::hard(
        worst < 1e-12 && lr == 0.00025,
        format!("max deviation {worst:.1e}, lr_at(2500) = {lr}"),
    )
}

// 5. Relative error reduction against the published column.

fn rer_arithmetic() -> Verdict {
    let cases = [(96.16, 98.52, 61.46), (97.14, 98.52, 48.25), (97.46, 98.52, 41.73)];
    let mut detail = String::new();
    let mut pass = true;
    for (worse, better, printed) in cases {
        let got = 100.0 * rer(worse / 100.0, better / 100.0).unwrap();
        pass &= (got - printed).abs() <= 0.05;
        let _ = write!(detail, "({worse}, {better}) -> {got:.3}% vs {printed}%; ");
    }
    Verdict::hard(pass, detail.trim_end_matches("; "))
}

// 6. Constrained kernels stay projected after every update.

fn kernel_violation(ex: &Extractor<f32>) -> f64 {
    let Extractor::Constrained(cc) = ex else {
        return f64::INFINITY;
    };
    let k = cc.conv.kernel();
    let centre = (k / 2) * k + k / 2;
    cc.conv
        .weight
        .value
        .chunks(k * k)
        .map(|s| {
            let surround: f64 = s.iter().enumerate().filter(|&(i, _)| i != centre).map(|(_, &v)| v as f64).sum();
            (s[centre] as f64 + 1.0).abs().max((surround - 1.0).abs())
        })
        .fold(0.0, f64::max)
}

fn constrained_invariant() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let m = synthesize_toy_corpus(TOY_CLASSES, 25, 48, 3, dir.path()).unwrap().manifest;
    let data = load_dataset(&m, None, 48).unwrap();
    let graph = build_mini(0.25, 48, TOY_CLASSES, ExtractorConfig::constrained_conv()).unwrap();
    let cfg = TrainConfig {
        batch_size: 8,
        epochs: 39,
        base_lr: 0.01,
        step: 200,
        gamma: 0.5,
        eval_every: 1000,
        seed: 4,
        ..Default::default()
    };
    let mut trainer = Trainer::new(&graph, cfg).unwrap();
    let mut worst = kernel_violation(&trainer.net.extractor);
    let mut steps = 0;
    let mut hook = |t: &mut Trainer, _: &MetricRow| -> amten_core::Result<()> {
        worst = worst.max(kernel_violation(&t.net.extractor));
        steps += 1;
        Ok(())
    };
    let opts = FitOptions {
        out_dir: None,
        stop_at: Some(500),
    };
    let losses = trainer.fit(&data, None, &opts, Some(&mut hook)).unwrap().losses();
    let finite = losses.iter().all(|l| l.is_finite());
    Verdict::hard(
        steps == 500 && worst < 1e-6 && finite,
        format!("{steps} steps, worst violation {worst:.2e}, final loss {:.4}", losses.last().unwrap()),
    )
}

// 7. Brute-force window oracles and trivial op cases.

fn replicated(img: &RgbImage, x: i64, y: i64) -> Rgb<u8> {
    let x = x.clamp(0, img.width() as i64 - 1) as u32;
    let y = y.clamp(0, img.height() as i64 - 1) as u32;
    *img.get_pixel(x, y)
}

fn window(img: &RgbImage, x: u32, y: u32, c: usize, k: u32) -> Vec<u8> {
    let r = (k / 2) as i64;
    let mut v = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            v.push(replicated(img, x as i64 + dx, y as i64 + dy)[c]);
        }
    }
    v
}

fn image_ops() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut median_mismatch = 0usize;
    let mut mean_worst = 0.0f64;
    for _ in 0..100 {
        let img = RgbImage::from_fn(16, 16, |_, _| Rgb([rng.random(), rng.random(), rng.random()]));
        for k in [3u32, 5, 7] {
            let med = median_filter(&img, k as usize).unwrap();
            let mean = mean_filter(&img, k as usize).unwrap();
            for (x, y, p) in med.enumerate_pixels() {
                for c in 0..3 {
                    let mut w = window(&img, x, y, c, k);
                    w.sort_unstable();
                    median_mismatch += usize::from(w[w.len() / 2] != p[c]);
                    let exact = w.iter().map(|&v| v as f64).sum::<f64>() / w.len() as f64;
                    mean_worst = mean_worst.max((exact - mean.get_pixel(x, y)[c] as f64).abs());
                }
            }
        }
    }

    let img = RgbImage::from_fn(100, 100, |x, y| Rgb([(x * 2) as u8, (y * 2) as u8, ((x + y) % 256) as u8]));
    let gamma_identity = gamma_correct(&img, 1.0).unwrap() == img;
    let quarter = RgbImage::from_pixel(1, 1, Rgb([64, 64, 64]));
    let gamma_square = gamma_correct(&quarter, 2.0).unwrap().get_pixel(0, 0)[0] == (0.0625f64 * 255.0).round() as u8;
    let scale_identity = scale(&img, 0.0).unwrap() == img;
    let enlarged = scale(&img, 50.0).unwrap();
    let scale_size = enlarged.dimensions() == (150, 150);
    let small = RgbImage::from_fn(5, 5, |x, y| Rgb([(x * 40 + y) as u8, (y * 50) as u8, 7]));
    let up = resize_bilinear(&small, 9, 9).unwrap();
    let grid_points = (0..5).all(|y| (0..5).all(|x| up.get_pixel(2 * x, 2 * y) == small.get_pixel(x, y)));

    let mut totals = [0usize; 3];
    for seed in 0..3u64 {
        for i in 0..10_000 {
            let k = mix_param(OpKind::Me, seed, i).param;
            totals[[3.0, 5.0, 7.0].iter().position(|&v| v == k).unwrap()] += 1;
        }
    }
    let averaged = totals.map(|t| t as f64 / 3.0);
    let multinomial = averaged.iter().all(|a| (a - 10_000.0 / 3.0).abs() <= 150.0);

    let pass = median_mismatch == 0
        && mean_worst <= 1.0
        && gamma_identity
        && gamma_square
        && scale_identity
        && scale_size
        && grid_points
        && multinomial;
    Verdict::hard(
        pass,
        format!(
            "median mismatches {median_mismatch}, mean worst {mean_worst:.3} levels, gamma {gamma_identity}/{gamma_square}, \
             scale {scale_identity}/{scale_size}/{grid_points}, ME-mix seed-averaged counts {averaged:.1?}"
        ),
    )
}

// 8 and 10. End-to-end toy run with the content-suppression trend.

struct ToyOutcome {
    end_to_end: Verdict,
    direction: Verdict,
    suppression: Verdict,
}

fn class_subset(ds: &Dataset, class: usize) -> Dataset {
    let idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == class).collect();
    let (x, y) = ds.batch(&idx);
    Dataset::new(x, y, ds.num_classes).unwrap()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn toy_run() -> ToyOutcome {
    let out = artifacts().join("toy");
    let _ = std::fs::remove_dir_all(&out);
    let cfg = toy_config();
    let input = cfg.corpus.input_size;
    let t = Instant::now();
    let manifest = toy_corpus(TOY_PER_CLASS, TOY_SIZE, cfg.seed, &out.join("corpus"));
    let splits = Splits::load(&manifest, input).unwrap();
    let clean = class_subset(&splits.test, 0);

    let amten = cfg.model.graph(input, TOY_CLASSES).unwrap();
    let base = amten_cli::config::ModelConfig {
        extractor: "none".into(),
        ..cfg.model.clone()
    }
    .graph(input, TOY_CLASSES)
    .unwrap();

    let traces = out.join("traces");
    let mut early: Option<f64> = None;
    let mut hook = |tr: &mut Trainer, row: &MetricRow| -> amten_core::Result<()> {
        if row.iteration == 100 {
            early = trace_energy_ratio(&tr.net, &clean, 64).map_err(to_core)?;
            dump_traces(&tr.net, &clean, 2, "iter100", &traces).map_err(to_core)?;
            tr.checkpoint(splits.train.len()).save(&out.join("iter_100.ckpt"))?;
        }
        Ok(())
    };
    let first = train_and_test(&amten, &cfg.train, &splits, Some(&out.join("amten_seed0")), Some(&mut hook)).unwrap();
    let elapsed = t.elapsed();
    let late = trace_energy_ratio(&first.trainer.net, &clean, 64).unwrap();
    dump_traces(&first.trainer.net, &clean, 2, "final", &traces).unwrap();
    let amten_acc = first.test.accuracy;
    let epochs = cfg.train.epochs;

    let second = train_and_test(&amten, &cfg.train, &splits, Some(&out.join("amten_seed0_again")), None).unwrap();
    let csv = |d: &str| std::fs::read(out.join(d).join("metrics.csv")).unwrap();
    let identical = csv("amten_seed0") == csv("amten_seed0_again") && first.report.losses() == second.report.losses();

    let base0 = train_and_test(&base, &cfg.train, &splits, Some(&out.join("base_seed0")), None).unwrap();
    let table = AblationTable {
        rows: vec![
            AblationRow {
                model: amten.name.clone(),
                description: "Trace block + HFE + classifier".into(),
                accuracy: amten_acc,
            },
            AblationRow {
                model: base.name.clone(),
                description: "No trace block; RGB input to Conv 6".into(),
                accuracy: base0.test.accuracy,
            },
        ],
    };
    let report = table.render();
    write(&out.join("ablation.txt"), &report).unwrap();
    write(&out.join("ablation.csv"), &table.to_csv()).unwrap();
    emit(&report);
    let reported = table.rers().len() == 2 && out.join("ablation.csv").exists();

    let end_to_end = Verdict::hard(
        amten_acc >= 0.95 && epochs <= 10 && elapsed < Duration::from_secs(30 * 60) && identical && reported,
        format!(
            "AMTENnet-mini test accuracy {:.2}% in {epochs} epochs, {elapsed:.0?} (corpus + training), identical rerun CSV {identical}, \
             Model-base-mini {:.2}%, report at {}",
            100.0 * amten_acc,
            100.0 * base0.test.accuracy,
            out.join("ablation.txt").display()
        ),
    );

    let mut amten_accs = vec![amten_acc];
    let mut base_accs = vec![base0.test.accuracy];
    for &seed in &SOFT_SEEDS[1..] {
        let mut train = cfg.train.clone();
        train.seed = seed;
        amten_accs.push(train_and_test(&amten, &train, &splits, None, None).unwrap().test.accuracy);
        base_accs.push(train_and_test(&base, &train, &splits, None, None).unwrap().test.accuracy);
    }
    let (ma, mb) = (median(amten_accs.clone()), median(base_accs.clone()));
    let direction = Verdict::soft(
        ma >= mb,
        format!("median over seeds {SOFT_SEEDS:?}: AMTENnet-mini {ma:.4} {amten_accs:.4?}, Model-base-mini {mb:.4} {base_accs:.4?}"),
    );

    let suppression = match (early, late) {
        (Some(e), Some(l)) => Verdict::soft(
            l < e,
            format!(
                "clean-image energy ratio at iteration 100 {e:.4}, final {l:.4}; trace images in {}",
                traces.display()
            ),
        ),
        _ => Verdict::soft(false, "energy ratio unavailable"),
    };
    ToyOutcome {
        end_to_end,
        direction,
        suppression,
    }
}

// 9. Robustness grid and mixed-training report.

fn robustness() -> (Verdict, Verdict) {
    let out = artifacts().join("robustness");
    let _ = std::fs::remove_dir_all(&out);
    let cfg = toy_config();
    let input = ROBUST_SIZE as usize;
    let raw = toy_corpus(ROBUST_PER_CLASS, ROBUST_SIZE, cfg.seed, &out.join("raw"));
    let graph = cfg.model.graph(input, TOY_CLASSES).unwrap();
    let chance = 1.0 / TOY_CLASSES as f64;

    let mut hard = None;
    let mut dominated = Vec::new();
    for &seed in &SOFT_SEEDS {
        let mut train = cfg.train.clone();
        train.seed = seed;
        let dir = out.join(format!("seed{seed}"));
        let report = run_robustness(&raw, &graph, &train, input, false, &dir).unwrap();
        emit(&format!("robustness, seed {seed}\n{}\n{}", report.grid.render(), report.mixed.render()));
        dominated.push(report.grid.diagonal_dominates(0).unwrap_or(false));
        if hard.is_none() {
            let cells: Vec<f64> = report.grid.cells.iter().flatten().flatten().copied().collect();
            let lo = cells.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = cells.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let shape = report.grid.rows.len() == 5 && report.grid.cols.len() == 5 && report.grid.is_complete();
            let averages = report.grid.row_averages().iter().all(Option::is_some);
            let mixed = report.mixed.accuracies.len() == 5
                && report.mixed.accuracies.iter().all(|&(_, a)| (chance..=1.0).contains(&a));
            let files = ["robustness.csv", "robustness.txt", "mixed.csv", "mixed.txt"]
                .iter()
                .all(|f| dir.join(f).exists());
            hard = Some(Verdict::hard(
                shape && averages && mixed && files && lo >= chance && hi <= 1.0,
                format!(
                    "seed {seed}: complete 5x5 grid {shape}, row averages {averages}, cells in [{lo:.4}, {hi:.4}] vs chance {chance}, \
                     mixed report {:.4?} (average {:.4}), reports in {}",
                    report.mixed.accuracies.iter().map(|(_, a)| *a).collect::<Vec<_>>(),
                    report.mixed.average(),
                    dir.display()
                ),
            ));
        }
    }
    let count = dominated.iter().filter(|&&d| d).count();
    let soft = Verdict::soft(
        count >= 2,
        format!("Raw-row diagonal dominates on {count} of {} seeds {dominated:?}", SOFT_SEEDS.len()),
    );
    (hard.unwrap(), soft)
}

/// Writes past the test harness's output capture so the verdicts show up in
/// plain `cargo test` logs.
fn emit(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}");
    let _ = out.flush();
}

fn guarded<T>(name: &str, f: impl FnOnce() -> T) -> Result<T, String> {
    let t = Instant::now();
    let r = catch_unwind(AssertUnwindSafe(f)).map_err(|e| {
        e.downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into())
    });
    emit(&format!("[criterion {name} finished in {:.1?}]", t.elapsed()));
    r
}

#[test]
fn acceptance() {
    let mut lines: Vec<(String, Verdict)> = Vec::new();
    let mut record = |label: &str, v: Result<Verdict, String>| {
        let v = v.unwrap_or_else(|e| Verdict::hard(false, format!("panicked: {e}")));
        emit(&format!("{} {label}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail));
        lines.push((label.to_string(), v));
    };

    record("1 shape conformance", guarded("1", shape_conformance));
    record("2 gradient suite", guarded("2", gradient_suite));
    record("3 trace identity", guarded("3", trace_identity));
    record("4 optimizer oracle", guarded("4", optimizer_oracle));
    record("5 RER arithmetic", guarded("5", rer_arithmetic));
    record("6 constrained-conv invariant", guarded("6", constrained_invariant));
    record("7 image-op oracles", guarded("7", image_ops));
    match guarded("8", toy_run) {
        Ok(o) => {
            record("8 end-to-end toy run", Ok(o.end_to_end));
            record("8 (soft) seed-median direction", Ok(o.direction));
            record("10 (soft) content suppression", Ok(o.suppression));
        }
        Err(e) => {
            record("8 end-to-end toy run", Err(e.clone()));
            record("10 (soft) content suppression", Ok(Verdict::soft(false, format!("toy run panicked: {e}"))));
        }
    }
    match guarded("9", robustness) {
        Ok((hard, soft)) => {
            record("9 robustness protocol", Ok(hard));
            record("9 (soft) Raw diagonal", Ok(soft));
        }
        Err(e) => record("9 robustness protocol", Err(e)),
    }

    let mut summary = String::new();
    for (label, v) in &lines {
        let tag = match (v.pass, v.soft) {
            (true, _) => "PASS",
            (false, true) => "FAIL (soft, not gating)",
            (false, false) => "FAIL",
        };
        let _ = writeln!(summary, "{tag} {label}: {}", v.detail);
    }
    write(&artifacts().join("summary.txt"), &summary).unwrap();
    emit(&format!("\nacceptance summary\n{summary}"));
    let failed: Vec<&str> = lines.iter().filter(|(_, v)| !v.pass && !v.soft).map(|(l, _)| l.as_str()).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
