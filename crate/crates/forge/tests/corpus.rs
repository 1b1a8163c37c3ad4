use std::collections::HashSet;

use amten_forge::forge::read_rgb;
use amten_forge::toy::toy_base;
use amten_forge::{
    forge, mix_param, stratified_split, synthesize_toy_corpus, ForgeMode, Manifest, OpKind, OpSpec, SampleRecord,
    Split, DEFAULT_RATIOS,
};

#[test]
fn mean_filter_mix_frequencies_stay_within_bound() {
    let seeds = [0u64, 1, 2];
    let mut totals = [0usize; 3];
    for &seed in &seeds {
        for i in 0..10_000 {
            let op = mix_param(OpKind::Me, seed, i);
            totals[[3.0, 5.0, 7.0].iter().position(|&k| k == op.param).unwrap()] += 1;
        }
    }
    for t in totals {
        let mean = t as f64 / seeds.len() as f64;
        assert!((mean - 10_000.0 / 3.0).abs() <= 150.0, "{totals:?}");
    }
}

#[test]
fn deterministic_ops_reproduce_stored_images() {
    let dir = tempfile::tempdir().unwrap();
    let toy = synthesize_toy_corpus(3, 4, 32, 11, &dir.path().join("toy")).unwrap();
    for kind in [OpKind::Me, OpKind::Gb, OpKind::Med, OpKind::Gc, OpKind::Sc, OpKind::Jp] {
        let out = forge(&toy.manifest, ForgeMode::Mix(kind), 5, &dir.path().join(kind.name())).unwrap();
        for (src, rec) in toy.manifest.records.iter().zip(&out.records) {
            let op = *rec.ops.last().unwrap();
            let (again, _) = op.apply(&read_rgb(&toy.manifest.resolve(src)).unwrap()).unwrap();
            assert_eq!(again, read_rgb(&out.resolve(rec)).unwrap(), "{op}");
        }
    }
    for (i, rec) in toy.manifest.records.iter().enumerate() {
        let mut img = toy_base(11, i, 32);
        for op in &rec.ops {
            img = op.apply(&img).unwrap().0;
        }
        assert_eq!(img, read_rgb(&toy.manifest.resolve(rec)).unwrap());
    }
}

#[test]
fn manifests_survive_a_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let mut toy = synthesize_toy_corpus(2, 5, 16, 1, dir.path()).unwrap().manifest;
    stratified_split(&mut toy, DEFAULT_RATIOS, 3).unwrap();
    let jp = forge(&toy, ForgeMode::Single(OpSpec::new(OpKind::Jp, 60.0).unwrap()), 0, &dir.path().join("jp")).unwrap();
    let path = dir.path().join("jp").join("manifest.tsv");
    jp.write(&path).unwrap();
    let back = Manifest::read(&path).unwrap();
    assert_eq!(back, jp);
    assert!(back.records.iter().all(|r| r.ops.last().unwrap().to_string() == "JP:60"));
}

#[test]
fn splits_partition_each_class() {
    let records = (0..3000)
        .map(|i| SampleRecord {
            path: format!("{}/{i}.png", i % 3).into(),
            class_index: i % 3,
            class_name: format!("c{}", i % 3),
            ops: Vec::new(),
            split: None,
        })
        .collect();
    let mut m = Manifest::new("", records);
    stratified_split(&mut m, DEFAULT_RATIOS, 9).unwrap();
    for class in 0..3 {
        let count = |s: Split| m.records.iter().filter(|r| r.class_index == class && r.split == Some(s)).count();
        assert_eq!([count(Split::Train), count(Split::Val), count(Split::Test)], [750, 50, 200]);
    }
    let test: HashSet<_> = m.in_split(Split::Test).iter().map(|r| r.path.clone()).collect();
    assert!(m
        .records
        .iter()
        .filter(|r| r.split != Some(Split::Test))
        .all(|r| !test.contains(&r.path)));
}

#[test]
fn domain_violations_are_rejected() {
    assert!(OpSpec::new(OpKind::Jp, 59.0).is_err());
    assert!(OpSpec::new(OpKind::Gc, 0.7).is_err());
    assert!(OpSpec::new(OpKind::Sc, 15.0).is_err());
    assert!(OpSpec::new(OpKind::Sc, -15.0).is_ok());
    assert!(OpSpec::new(OpKind::Me, 4.0).is_err());
}
