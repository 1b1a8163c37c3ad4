//! Procedural stand-in corpus: smooth noise plus random shapes plus sensor
//! noise, with each class derived from its own base images by a fixed
//! operation chain.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{ForgeError, Result};
use crate::forge::save_output;
use crate::manifest::{Manifest, SampleRecord};
use crate::opspec::{OpKind, OpSpec};

/// Class names and op chains, in class-index order.
pub const TOY_CLASSES: [(&str, &[(OpKind, f64)]); 6] = [
    ("clean", &[]),
    ("MED5", &[(OpKind::Med, 5.0)]),
    ("GB5", &[(OpKind::Gb, 5.0)]),
    ("JP60", &[(OpKind::Jp, 60.0)]),
    ("ME5", &[(OpKind::Me, 5.0)]),
    ("GC2", &[(OpKind::Gc, 2.0)]),
];

const SENSOR_NOISE_SIGMA: f64 = 6.0;

pub fn toy_chain(class: usize) -> Result<Vec<OpSpec>> {
    let (_, chain) = TOY_CLASSES
        .get(class)
        .ok_or_else(|| ForgeError::Domain(format!("toy corpus supports up to {} classes", TOY_CLASSES.len())))?;
    chain.iter().map(|&(k, p)| OpSpec::new(k, p)).collect()
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Base image number `index` for `seed`.
pub fn toy_base(seed: u64, index: usize, size: u32) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let s = size as f64;

    let grid = 5usize;
    let coarse: Vec<[f64; 3]> = (0..grid * grid)
        .map(|_| [0; 3].map(|_: i32| rng.random_range(40.0..215.0)))
        .collect();
    let mut px = vec![[0.0f64; 3]; (size * size) as usize];
    for y in 0..size {
        for x in 0..size {
            let gx = x as f64 / (s - 1.0).max(1.0) * (grid - 1) as f64;
            let gy = y as f64 / (s - 1.0).max(1.0) * (grid - 1) as f64;
            let (x0, y0) = ((gx as usize).min(grid - 2), (gy as usize).min(grid - 2));
            let (tx, ty) = (gx - x0 as f64, gy - y0 as f64);
            let at = |i: usize, j: usize| coarse[j * grid + i];
            for c in 0..3 {
                let top = lerp(at(x0, y0)[c], at(x0 + 1, y0)[c], tx);
                let bottom = lerp(at(x0, y0 + 1)[c], at(x0 + 1, y0 + 1)[c], tx);
                px[(y * size + x) as usize][c] = lerp(top, bottom, ty);
            }
        }
    }

    for _ in 0..rng.random_range(3..7) {
        let color = [0; 3].map(|_: i32| rng.random_range(0.0..255.0));
        let (cx, cy) = (rng.random_range(0.0..s), rng.random_range(0.0..s));
        let (rx, ry) = (rng.random_range(0.05 * s..0.3 * s), rng.random_range(0.05 * s..0.3 * s));
        let disc = rng.random_bool(0.5);
        for y in 0..size {
            for x in 0..size {
                let (dx, dy) = ((x as f64 - cx) / rx, (y as f64 - cy) / ry);
                let inside = if disc {
                    dx * dx + dy * dy <= 1.0
                } else {
                    dx.abs() <= 1.0 && dy.abs() <= 1.0
                };
                if inside {
                    px[(y * size + x) as usize] = color;
                }
            }
        }
    }

    let noise = Normal::new(0.0, SENSOR_NOISE_SIGMA).expect("positive sigma");
    RgbImage::from_fn(size, size, |x, y| {
        let p = px[(y * size + x) as usize];
        Rgb(p.map(|v| (v + noise.sample(&mut rng)).round().clamp(0.0, 255.0) as u8))
    })
}

/// Mean energy of the 8×8 block-DCT coefficients with `u + v >= 8`, on
/// luma, per pixel.
pub fn block_dct_highfreq_energy(img: &RgbImage) -> f64 {
    let n = 8usize;
    let basis: Vec<f64> = (0..n * n)
        .map(|i| {
            let (u, x) = (i / n, i % n);
            let a = if u == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
            a * ((2 * x + 1) as f64 * u as f64 * PI / (2 * n) as f64).cos()
        })
        .collect();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let luma = |x: usize, y: usize| {
        let p = img.get_pixel(x as u32, y as u32).0;
        0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64
    };
    let (mut energy, mut pixels) = (0.0, 0usize);
    for by in (0..h / n * n).step_by(n) {
        for bx in (0..w / n * n).step_by(n) {
            let block: Vec<f64> = (0..n * n).map(|i| luma(bx + i % n, by + i / n) - 128.0).collect();
            for v in 0..n {
                for u in 0..n {
                    if u + v < n {
                        continue;
                    }
                    let mut c = 0.0;
                    for y in 0..n {
                        for x in 0..n {
                            c += basis[v * n + y] * basis[u * n + x] * block[y * n + x];
                        }
                    }
                    energy += c * c;
                }
            }
            pixels += n * n;
        }
    }
    if pixels == 0 {
        0.0
    } else {
        energy / pixels as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    /// Two-sided.
    pub p_value: f64,
}

pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(ForgeError::Data("Welch test needs at least 2 samples per group".into()));
    }
    let stats = |s: &[f64]| {
        let n = s.len() as f64;
        let mean = s.iter().sum::<f64>() / n;
        let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (n, mean, var / n)
    };
    let (na, ma, sa) = stats(a);
    let (nb, mb, sb) = stats(b);
    let se2 = sa + sb;
    if se2 <= 0.0 {
        let p_value = if ma == mb { 1.0 } else { 0.0 };
        return Ok(WelchTest {
            t: if ma == mb { 0.0 } else { f64::INFINITY },
            df: na + nb - 2.0,
            p_value,
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| ForgeError::Data(e.to_string()))?;
    Ok(WelchTest {
        t,
        df,
        p_value: 2.0 * (1.0 - dist.cdf(t.abs())),
    })
}

pub struct ToyCorpus {
    pub manifest: Manifest,
    /// Block-DCT energy comparison of the clean class against class 3
    /// (or the last class when there are fewer).
    pub dct_test: WelchTest,
}

/// Writes `classes × per_class` images below `out_dir`; every sample has
/// its own base image.
pub fn synthesize_toy_corpus(
    classes: usize,
    per_class: usize,
    size: u32,
    seed: u64,
    out_dir: &Path,
) -> Result<ToyCorpus> {
    if !(2..=TOY_CLASSES.len()).contains(&classes) {
        return Err(ForgeError::Domain(format!(
            "toy corpus needs 2 to {} classes, got {classes}",
            TOY_CLASSES.len()
        )));
    }
    if per_class < 2 || size < 8 {
        return Err(ForgeError::Domain(format!(
            "toy corpus needs at least 2 images per class of at least 8 pixels, got {per_class} of {size}"
        )));
    }
    let probe = 3.min(classes - 1);
    let (mut clean, mut other) = (Vec::new(), Vec::new());
    let mut records = Vec::with_capacity(classes * per_class);
    for class in 0..classes {
        let chain = toy_chain(class)?;
        let name = TOY_CLASSES[class].0;
        for i in 0..per_class {
            let mut img = toy_base(seed, class * per_class + i, size);
            let mut jpeg = None;
            for op in &chain {
                let (out, bytes) = op.apply(&img)?;
                img = out;
                jpeg = bytes;
            }
            if class == 0 {
                clean.push(block_dct_highfreq_energy(&img));
            } else if class == probe {
                other.push(block_dct_highfreq_energy(&img));
            }
            let rel = PathBuf::from(name).join(format!("{i:05}"));
            let written = save_output(&out_dir.join(&rel), &img, jpeg.as_deref())?;
            records.push(SampleRecord {
                path: written.strip_prefix(out_dir).map(Path::to_path_buf).unwrap_or(written),
                class_index: class,
                class_name: name.to_string(),
                ops: chain.clone(),
                split: None,
            });
        }
    }
    let dct_test = welch_t_test(&clean, &other)?;
    log::info!(
        "toy corpus: clean vs {} block-DCT energy t = {:.2}, p = {:.3e}",
        TOY_CLASSES[probe].0,
        dct_test.t,
        dct_test.p_value
    );
    Ok(ToyCorpus {
        manifest: Manifest::new(out_dir, records),
        dct_test,
    })
}
