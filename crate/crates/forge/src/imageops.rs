//! Post-processing operations on 8-bit RGB images. Spatial filters
//! replicate edge pixels; every output is re-quantized to 8 bits.

use std::io::Cursor;

use image::codecs::jpeg::JpegEncoder;
use image::{ImageFormat, Rgb, RgbImage};

use crate::error::{ForgeError, Result};

fn check_kernel(k: usize, op: &str) -> Result<()> {
    if k.is_multiple_of(2) || !(3..=7).contains(&k) {
        return Err(ForgeError::Domain(format!("{op}: kernel size must be 3, 5 or 7, got {k}")));
    }
    Ok(())
}

fn clamp_coord(v: isize, len: u32) -> u32 {
    v.clamp(0, len as isize - 1) as u32
}

/// Pixel at `(x, y)` with out-of-range coordinates clamped to the border.
pub fn replicated(img: &RgbImage, x: isize, y: isize) -> Rgb<u8> {
    *img.get_pixel(clamp_coord(x, img.width()), clamp_coord(y, img.height()))
}

fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Box filter; each output is the rounded window mean.
pub fn mean_filter(img: &RgbImage, k: usize) -> Result<RgbImage> {
    check_kernel(k, "mean filter")?;
    let r = (k / 2) as isize;
    let area = (k * k) as u32;
    Ok(RgbImage::from_fn(img.width(), img.height(), |x, y| {
        let mut sum = [0u32; 3];
        for dy in -r..=r {
            for dx in -r..=r {
                let p = replicated(img, x as isize + dx, y as isize + dy);
                for c in 0..3 {
                    sum[c] += p[c] as u32;
                }
            }
        }
        Rgb(sum.map(|s| ((s + area / 2) / area) as u8))
    }))
}

/// Normalized 1-D Gaussian taps. With `sigma <= 0` the width is derived from
/// the kernel size: the fixed binomial tables for sizes up to 7, otherwise
/// `σ = 0.3·((k − 1)/2 − 1) + 0.8`.
pub fn gaussian_kernel(k: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        match k {
            1 => return vec![1.0],
            3 => return vec![0.25, 0.5, 0.25],
            5 => return vec![0.0625, 0.25, 0.375, 0.25, 0.0625],
            7 => return vec![0.03125, 0.109375, 0.21875, 0.28125, 0.21875, 0.109375, 0.03125],
            _ => {}
        }
    }
    let sigma = if sigma > 0.0 {
        sigma
    } else {
        0.3 * ((k as f64 - 1.0) * 0.5 - 1.0) + 0.8
    };
    let r = (k / 2) as f64;
    let taps: Vec<f64> = (0..k)
        .map(|i| (-(i as f64 - r).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Separable Gaussian blur.
pub fn gaussian_blur(img: &RgbImage, k: usize, sigma: f64) -> Result<RgbImage> {
    check_kernel(k, "gaussian blur")?;
    let taps = gaussian_kernel(k, sigma);
    let r = (k / 2) as isize;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut horiz = vec![[0.0f64; 3]; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0; 3];
            for (i, t) in taps.iter().enumerate() {
                let p = replicated(img, x as isize + i as isize - r, y as isize);
                for c in 0..3 {
                    acc[c] += t * p[c] as f64;
                }
            }
            horiz[y * w + x] = acc;
        }
    }
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let mut acc = [0.0; 3];
        for (i, t) in taps.iter().enumerate() {
            let yy = clamp_coord(y as isize + i as isize - r, h as u32) as usize;
            let p = horiz[yy * w + x as usize];
            for c in 0..3 {
                acc[c] += t * p[c];
            }
        }
        Rgb(acc.map(quantize))
    }))
}

/// Per-channel median of each window (exact order statistic).
pub fn median_filter(img: &RgbImage, k: usize) -> Result<RgbImage> {
    check_kernel(k, "median filter")?;
    let r = (k / 2) as isize;
    let mut window = vec![[0u8; 3]; k * k];
    let mut chan = vec![0u8; k * k];
    Ok(RgbImage::from_fn(img.width(), img.height(), |x, y| {
        let mut i = 0;
        for dy in -r..=r {
            for dx in -r..=r {
                window[i] = replicated(img, x as isize + dx, y as isize + dy).0;
                i += 1;
            }
        }
        let mut out = [0u8; 3];
        for c in 0..3 {
            for (dst, px) in chan.iter_mut().zip(&window) {
                *dst = px[c];
            }
            let mid = chan.len() / 2;
            out[c] = *chan.select_nth_unstable(mid).1;
        }
        Rgb(out)
    }))
}

/// `out = in^γ` on `[0, 1]`-normalized channels.
pub fn gamma_correct(img: &RgbImage, gamma: f64) -> Result<RgbImage> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(ForgeError::Domain(format!("gamma must be positive, got {gamma}")));
    }
    let lut: Vec<u8> = (0..=255u32)
        .map(|v| quantize(255.0 * (v as f64 / 255.0).powf(gamma)))
        .collect();
    let mut out = img.clone();
    for p in out.pixels_mut() {
        p.0 = p.0.map(|v| lut[v as usize]);
    }
    Ok(out)
}

/// Baseline JPEG encode at `quality`; returns the decoded image and the
/// encoded bytes.
pub fn jpeg_recompress(img: &RgbImage, quality: u8) -> Result<(RgbImage, Vec<u8>)> {
    if !(1..=100).contains(&quality) {
        return Err(ForgeError::Domain(format!("JPEG quality must be in [1, 100], got {quality}")));
    }
    let mut bytes = Vec::new();
    JpegEncoder::new_with_quality(&mut bytes, quality).encode_image(img)?;
    let decoded = image::load(Cursor::new(&bytes), ImageFormat::Jpeg)?.to_rgb8();
    Ok((decoded, bytes))
}

/// Bilinear resampling with corner pixels aligned: destination pixel `d`
/// samples source position `d·(S − 1)/(D − 1)`.
pub fn resize_bilinear(img: &RgbImage, width: u32, height: u32) -> Result<RgbImage> {
    if width == 0 || height == 0 || img.width() == 0 || img.height() == 0 {
        return Err(ForgeError::Domain(format!(
            "cannot resize {}x{} to {width}x{height}",
            img.width(),
            img.height()
        )));
    }
    if (width, height) == img.dimensions() {
        return Ok(img.clone());
    }
    let map = |d: u32, dst: u32, src: u32| -> (u32, u32, f64) {
        if dst == 1 || src == 1 {
            return (0, 0, 0.0);
        }
        let pos = d as f64 * (src - 1) as f64 / (dst - 1) as f64;
        let lo = (pos.floor() as u32).min(src - 1);
        let hi = (lo + 1).min(src - 1);
        (lo, hi, pos - lo as f64)
    };
    Ok(RgbImage::from_fn(width, height, |x, y| {
        let (x0, x1, fx) = map(x, width, img.width());
        let (y0, y1, fy) = map(y, height, img.height());
        let (a, b) = (img.get_pixel(x0, y0), img.get_pixel(x1, y0));
        let (c, d) = (img.get_pixel(x0, y1), img.get_pixel(x1, y1));
        let mut out = [0u8; 3];
        for ch in 0..3 {
            let top = a[ch] as f64 * (1.0 - fx) + b[ch] as f64 * fx;
            let bottom = c[ch] as f64 * (1.0 - fx) + d[ch] as f64 * fx;
            out[ch] = quantize(top * (1.0 - fy) + bottom * fy);
        }
        Rgb(out)
    }))
}

/// Bilinear scaling by `1 + percent/100`; negative percentages shrink. The
/// result keeps its new size.
pub fn scale(img: &RgbImage, percent: f64) -> Result<RgbImage> {
    if !(percent > -100.0 && percent.is_finite()) {
        return Err(ForgeError::Domain(format!("scaling percentage must exceed -100, got {percent}")));
    }
    let f = 1.0 + percent / 100.0;
    let w = ((img.width() as f64 * f).round() as u32).max(1);
    let h = ((img.height() as f64 * f).round() as u32).max(1);
    resize_bilinear(img, w, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: u32, h: u32, seed: u64) -> RgbImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RgbImage::from_fn(w, h, |_, _| Rgb([rng.random(), rng.random(), rng.random()]))
    }

    #[test]
    fn filters_preserve_constants() {
        let img = RgbImage::from_pixel(9, 7, Rgb([17, 200, 3]));
        for k in [3, 5, 7] {
            assert_eq!(mean_filter(&img, k).unwrap(), img);
            assert_eq!(gaussian_blur(&img, k, 0.0).unwrap(), img);
            assert_eq!(median_filter(&img, k).unwrap(), img);
        }
    }

    #[test]
    fn even_and_oversized_kernels_are_rejected() {
        let img = RgbImage::new(4, 4);
        assert!(mean_filter(&img, 4).is_err());
        assert!(median_filter(&img, 9).is_err());
        assert!(gaussian_blur(&img, 2, 0.0).is_err());
    }

    #[test]
    fn median_ignores_an_outlier() {
        let vals = [1u8, 2, 3, 4, 255, 6, 7, 8, 9];
        let img = RgbImage::from_fn(3, 3, |x, y| {
            let v = vals[(y * 3 + x) as usize];
            Rgb([v, v, v])
        });
        assert_eq!(median_filter(&img, 3).unwrap().get_pixel(1, 1)[0], 6);
        let vals = [1u8, 2, 3, 4, 5, 6, 7, 8, 255];
        let img = RgbImage::from_fn(3, 3, |x, y| {
            let v = vals[(y * 3 + x) as usize];
            Rgb([v, v, v])
        });
        assert_eq!(median_filter(&img, 3).unwrap().get_pixel(1, 1)[0], 5);
    }

    #[test]
    fn gaussian_taps() {
        for k in [3, 5, 7, 9] {
            let t = gaussian_kernel(k, 0.0);
            assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(t.windows(2).take(k / 2).all(|w| w[0] < w[1]));
        }
        let t = gaussian_kernel(9, 0.0);
        let sigma: f64 = 0.3 * (4.0 - 1.0) + 0.8;
        assert!((t[3] / t[4] - (-1.0 / (2.0 * sigma * sigma)).exp()).abs() < 1e-12);
    }

    #[test]
    fn gamma_cases() {
        let img = random_image(8, 8, 1);
        assert_eq!(gamma_correct(&img, 1.0).unwrap(), img);
        let quarter = RgbImage::from_pixel(1, 1, Rgb([64, 64, 64]));
        let out = gamma_correct(&quarter, 2.0).unwrap();
        assert_eq!(out.get_pixel(0, 0)[0], (255.0 * (64.0f64 / 255.0).powi(2)).round() as u8);
        assert!(gamma_correct(&img, 0.0).is_err());
    }

    #[test]
    fn jpeg_measurements() {
        let smooth = RgbImage::from_fn(64, 64, |x, y| Rgb([(x * 3) as u8, (y * 3) as u8, ((x + y) * 2) as u8]));
        let (q100, _) = jpeg_recompress(&smooth, 100).unwrap();
        assert!(psnr(&smooth, &q100) > 40.0);

        let img = random_image(64, 64, 2);
        let (_, b60) = jpeg_recompress(&img, 60).unwrap();
        let (_, b90) = jpeg_recompress(&img, 90).unwrap();
        assert!(b60.len() < b90.len());

        let textured = gaussian_blur(&img, 3, 0.0).unwrap();
        let (once, _) = jpeg_recompress(&textured, 60).unwrap();
        let (twice, _) = jpeg_recompress(&once, 60).unwrap();
        assert!(changed(&once, &twice) < changed(&textured, &once));
        assert!(jpeg_recompress(&img, 0).is_err());
        assert!(jpeg_recompress(&img, 101).is_err());
    }

    fn psnr(a: &RgbImage, b: &RgbImage) -> f64 {
        let mse: f64 = a
            .as_raw()
            .iter()
            .zip(b.as_raw())
            .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
            .sum::<f64>()
            / a.as_raw().len() as f64;
        10.0 * (255.0f64 * 255.0 / mse.max(1e-12)).log10()
    }

    fn changed(a: &RgbImage, b: &RgbImage) -> usize {
        a.as_raw().iter().zip(b.as_raw()).filter(|(x, y)| x != y).count()
    }

    #[test]
    fn scaling_sizes() {
        let img = random_image(100, 100, 3);
        assert_eq!(scale(&img, 0.0).unwrap(), img);
        assert_eq!(scale(&img, 50.0).unwrap().dimensions(), (150, 150));
        assert_eq!(scale(&img, -45.0).unwrap().dimensions(), (55, 55));
        assert!(scale(&img, -100.0).is_err());
    }

    #[test]
    fn bilinear_hits_grid_points() {
        let img = random_image(5, 4, 4);
        // 5→9 columns, 4→7 rows: every other destination pixel is a source pixel
        let big = resize_bilinear(&img, 9, 7).unwrap();
        for y in 0..4 {
            for x in 0..5 {
                assert_eq!(big.get_pixel(2 * x, 2 * y), img.get_pixel(x, y));
            }
        }
    }

    proptest! {
        #[test]
        fn gamma_is_monotone(g in 0.2f64..3.0) {
            let ramp = RgbImage::from_fn(256, 1, |x, _| Rgb([x as u8; 3]));
            let out = gamma_correct(&ramp, g).unwrap();
            prop_assert!(out.pixels().zip(out.pixels().skip(1)).all(|(a, b)| a[0] <= b[0]));
        }

        #[test]
        fn outputs_keep_dimensions(w in 1u32..12, h in 1u32..12, seed in 0u64..100, k in prop::sample::select(vec![3usize, 5, 7])) {
            let img = random_image(w, h, seed);
            prop_assert_eq!(mean_filter(&img, k).unwrap().dimensions(), (w, h));
            prop_assert_eq!(median_filter(&img, k).unwrap().dimensions(), (w, h));
            prop_assert_eq!(gaussian_blur(&img, k, 0.0).unwrap().dimensions(), (w, h));
        }
    }
}
