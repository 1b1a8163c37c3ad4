use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ForgeError, Result};
use crate::manifest::{Manifest, Split};

pub const DEFAULT_RATIOS: [f64; 3] = [0.75, 0.05, 0.20];

/// Per-class counts for `n` items: train and val rounded, test the rest.
pub fn split_sizes(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let train = ((n as f64 * ratios[0]).round() as usize).min(n);
    let val = ((n as f64 * ratios[1]).round() as usize).min(n - train);
    [train, val, n - train - val]
}

/// Stratified, seeded assignment of every record to train/val/test.
pub fn stratified_split(manifest: &mut Manifest, ratios: [f64; 3], seed: u64) -> Result<()> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(ForgeError::Domain(format!("split ratios {ratios:?} must be non-negative and sum to 1")));
    }
    for class in 0..manifest.num_classes() {
        let mut idx: Vec<usize> = manifest
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.class_index == class)
            .map(|(i, _)| i)
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(class as u64);
        idx.shuffle(&mut rng);
        let [train, val, _] = split_sizes(idx.len(), ratios);
        for (pos, &i) in idx.iter().enumerate() {
            manifest.records[i].split = Some(if pos < train {
                Split::Train
            } else if pos < train + val {
                Split::Val
            } else {
                Split::Test
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::SampleRecord;
    use proptest::prelude::*;
    use std::path::PathBuf;

    fn corpus(per_class: &[usize]) -> Manifest {
        let mut records = Vec::new();
        for (c, &n) in per_class.iter().enumerate() {
            for i in 0..n {
                records.push(SampleRecord {
                    path: PathBuf::from(format!("{c}/{i}.png")),
                    class_index: c,
                    class_name: format!("c{c}"),
                    ops: Vec::new(),
                    split: None,
                });
            }
        }
        Manifest::new("", records)
    }

    #[test]
    fn thousand_per_class() {
        let mut m = corpus(&[1000, 1000]);
        stratified_split(&mut m, DEFAULT_RATIOS, 1).unwrap();
        assert_eq!(m.split_counts(), [1500, 100, 400]);
        let mut again = corpus(&[1000, 1000]);
        stratified_split(&mut again, DEFAULT_RATIOS, 1).unwrap();
        assert_eq!(m, again);
        let mut other = corpus(&[1000, 1000]);
        stratified_split(&mut other, DEFAULT_RATIOS, 2).unwrap();
        assert_ne!(m, other);
    }

    #[test]
    fn bad_ratios_are_rejected() {
        let mut m = corpus(&[10]);
        assert!(stratified_split(&mut m, [0.5, 0.5, 0.5], 0).is_err());
        assert!(stratified_split(&mut m, [1.2, -0.1, -0.1], 0).is_err());
    }

    proptest! {
        #[test]
        fn per_class_ratios_hold(sizes in proptest::collection::vec(0usize..300, 1..5), seed in 0u64..50) {
            let mut m = corpus(&sizes);
            stratified_split(&mut m, DEFAULT_RATIOS, seed).unwrap();
            prop_assert!(m.records.iter().all(|r| r.split.is_some()));
            for (c, &n) in sizes.iter().enumerate() {
                for (k, split) in Split::ALL.iter().enumerate() {
                    let got = m.records.iter().filter(|r| r.class_index == c && r.split == Some(*split)).count();
                    prop_assert!((got as f64 - n as f64 * DEFAULT_RATIOS[k]).abs() <= 1.0 + 1e-9);
                }
            }
        }
    }
}
