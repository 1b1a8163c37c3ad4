use std::fs;
use std::path::{Path, PathBuf};

use amten_core::Dataset;
use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{io_err, ForgeError, Result};
use crate::imageops::resize_bilinear;
use crate::manifest::{Manifest, SampleRecord, Split};
use crate::opspec::{OpKind, OpSpec};

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ForgeMode {
    /// One fixed parameter for every image, e.g. JP60.
    Single(OpSpec),
    /// Per-image parameter drawn uniformly from the operation's domain.
    Mix(OpKind),
}

impl ForgeMode {
    pub fn label(&self) -> String {
        match self {
            ForgeMode::Single(op) => crate::opspec::condition_label(op),
            ForgeMode::Mix(kind) => format!("{kind}-mix"),
        }
    }
}

/// Parameter drawn for record `index` in mix mode.
pub fn mix_param(kind: OpKind, seed: u64, index: usize) -> OpSpec {
    let domain = kind.domain();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let param = domain[rng.random_range(0..domain.len())];
    OpSpec { kind, param }
}

/// Builds a manifest from `root/<class>/<image>`; classes are the sorted
/// subdirectory names.
pub fn ingest(root: &Path) -> Result<Manifest> {
    let mut classes: Vec<PathBuf> = fs::read_dir(root)
        .map_err(io_err(root))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    classes.sort();
    if classes.len() < 2 {
        return Err(ForgeError::Data(format!(
            "{}: need at least 2 class subdirectories, found {}",
            root.display(),
            classes.len()
        )));
    }
    let mut records = Vec::new();
    for (class_index, dir) in classes.iter().enumerate() {
        let class_name = dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io_err(dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            })
            .collect();
        files.sort();
        if files.is_empty() {
            log::warn!("{}: no images", dir.display());
        }
        for f in files {
            records.push(SampleRecord {
                path: f.strip_prefix(root).map(Path::to_path_buf).unwrap_or(f),
                class_index,
                class_name: class_name.clone(),
                ops: Vec::new(),
                split: None,
            });
        }
    }
    Ok(Manifest::new(root, records))
}

pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|source| ForgeError::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(img.to_rgb8())
}

/// Writes an op result: JPEG outputs keep the encoder's bytes, everything
/// else is stored as PNG. Returns the path actually written.
pub fn save_output(path: &Path, img: &RgbImage, jpeg: Option<&[u8]>) -> Result<PathBuf> {
    let path = path.with_extension(if jpeg.is_some() { "jpg" } else { "png" });
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    match jpeg {
        Some(bytes) => fs::write(&path, bytes).map_err(io_err(&path))?,
        None => img
            .save_with_format(&path, image::ImageFormat::Png)
            .map_err(|source| ForgeError::Image {
                path: path.clone(),
                source,
            })?,
    }
    Ok(path)
}

fn output_rel(record: &SampleRecord, index: usize) -> PathBuf {
    if record.path.is_relative() {
        record.path.clone()
    } else {
        let stem = record.path.file_stem().unwrap_or_default().to_string_lossy();
        PathBuf::from(&record.class_name).join(format!("{index:06}_{stem}"))
    }
}

/// Applies `mode` to every record of `src`, writing images below `out_dir`
/// and returning their manifest. Classes, splits and earlier ops carry over.
pub fn forge(src: &Manifest, mode: ForgeMode, seed: u64, out_dir: &Path) -> Result<Manifest> {
    let mut records = Vec::with_capacity(src.records.len());
    for (i, rec) in src.records.iter().enumerate() {
        let op = match mode {
            ForgeMode::Single(op) => op,
            ForgeMode::Mix(kind) => mix_param(kind, seed, i),
        };
        let img = read_rgb(&src.resolve(rec))?;
        let (out, jpeg) = op.apply(&img)?;
        let rel = output_rel(rec, i);
        let written = save_output(&out_dir.join(&rel), &out, jpeg.as_deref())?;
        let mut ops = rec.ops.clone();
        ops.push(op);
        records.push(SampleRecord {
            path: written.strip_prefix(out_dir).map(Path::to_path_buf).unwrap_or(written),
            ops,
            ..rec.clone()
        });
    }
    Ok(Manifest::new(out_dir, records))
}

/// Packs one image as `(c, h, w)` bytes, resized bilinearly when needed.
pub fn to_chw(img: &RgbImage, size: usize) -> Result<Vec<u8>> {
    let resized;
    let img = if img.dimensions() == (size as u32, size as u32) {
        img
    } else {
        resized = resize_bilinear(img, size as u32, size as u32)?;
        &resized
    };
    let plane = size * size;
    let mut out = vec![0u8; 3 * plane];
    for (i, px) in img.pixels().enumerate() {
        for c in 0..3 {
            out[c * plane + i] = px.0[c];
        }
    }
    Ok(out)
}

/// Loads one split (or every record when `split` is `None`) as a tensor
/// dataset of `size`×`size` images scaled to [0, 1].
pub fn load_dataset(manifest: &Manifest, split: Option<Split>, size: usize) -> Result<Dataset> {
    let records: Vec<&SampleRecord> = match split {
        Some(s) => manifest.in_split(s),
        None => manifest.records.iter().collect(),
    };
    if records.is_empty() {
        return Err(ForgeError::Data(format!(
            "no records in split {}",
            split.map_or("all", Split::name)
        )));
    }
    let mut items = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    for r in records {
        items.push(to_chw(&read_rgb(&manifest.resolve(r))?, size)?);
        labels.push(r.class_index);
    }
    Ok(Dataset::from_u8(&items, labels, manifest.num_classes(), (size, size))?)
}
