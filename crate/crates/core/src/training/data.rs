//! Training images and the seeded patch sampler.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{ImageF, ImageU8};

/// Decoded training images. Patches are drawn with [`sample_patches`].
#[derive(Clone, Debug)]
pub struct PatchDataset {
    source: Option<PathBuf>,
    images: Vec<ImageF>,
}

/// Image files with a supported extension in `dir`, sorted by name.
pub fn image_files(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir.as_ref())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "ppm" | "pnm"))
        })
        .collect();
    files.sort();
    Ok(files)
}

impl PatchDataset {
    /// Loads every PNG/PPM file in `dir`.
    pub fn from_folder(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let files = image_files(dir)?;
        if files.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "no PNG or PPM images found in {}",
                dir.display()
            )));
        }
        let images = files
            .iter()
            .map(|f| ImageU8::load(f).map(|i| i.to_float()))
            .collect::<Result<Vec<_>>>()?;
        Ok(PatchDataset {
            source: Some(dir.to_path_buf()),
            images,
        })
    }

    pub fn from_images(images: Vec<ImageF>) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::InvalidArgument("dataset has no images".into()));
        }
        Ok(PatchDataset { source: None, images })
    }

    pub fn source(&self) -> Option<&Path> {
        self.source.as_deref()
    }

    pub fn images(&self) -> &[ImageF] {
        &self.images
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// `n` square crops of side `patch`, a pure function of `seed`. Images
/// smaller than a patch are extended by edge replication first; the crop
/// origin is uniform over the valid positions.
pub fn sample_patches(data: &PatchDataset, n: usize, patch: usize, seed: u64) -> Result<Vec<ImageF>> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("dataset has no images".into()));
    }
    if patch == 0 {
        return Err(Error::InvalidArgument("patch side must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let img = &data.images[rng.gen_range(0..data.images.len())];
            let (h, w) = (img.height().max(patch), img.width().max(patch));
            let y0 = rng.gen_range(0..=h - patch);
            let x0 = rng.gen_range(0..=w - patch);
            let mut px = Vec::with_capacity(patch * patch * 3);
            for y in y0..y0 + patch {
                for x in x0..x0 + patch {
                    for c in 0..3 {
                        px.push(img.get(y.min(img.height() - 1), x.min(img.width() - 1), c));
                    }
                }
            }
            ImageF::new(patch, patch, px)
        })
        .collect()
}

/// Deterministic natural-looking test image: a smooth colour field with
/// overlapping flat and shaded shapes, soft edges and fine texture.
pub fn synthetic_image(height: usize, width: usize, seed: u64) -> ImageU8 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (hf, wf) = (height as f32, width as f32);
    let base: [[f32; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(0.15..0.85)));
    let freq: [(f32, f32, f32); 3] =
        std::array::from_fn(|_| (rng.gen_range(0.5..3.0), rng.gen_range(0.5..3.0), rng.gen_range(0.0..6.28)));

    struct Shape {
        cy: f32,
        cx: f32,
        ry: f32,
        rx: f32,
        round: bool,
        color: [f32; 3],
        shade: f32,
    }
    let count = rng.gen_range(3..8);
    let shapes: Vec<Shape> = (0..count)
        .map(|_| Shape {
            cy: rng.gen_range(0.0..hf),
            cx: rng.gen_range(0.0..wf),
            ry: rng.gen_range(0.08..0.35) * hf,
            rx: rng.gen_range(0.08..0.35) * wf,
            round: rng.gen(),
            color: std::array::from_fn(|_| rng.gen_range(0.0..1.0)),
            shade: rng.gen_range(-0.3..0.3),
        })
        .collect();
    let texture_amp = rng.gen_range(0.0..0.04);
    let mut tex = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
    let mut pixels = Vec::with_capacity(height * width * 3);
    for y in 0..height {
        for x in 0..width {
            let (u, v) = (y as f32 / hf, x as f32 / wf);
            let mut rgb = [0.0f32; 3];
            for c in 0..3 {
                let (fy, fx, ph) = freq[c];
                let wave = 0.5 + 0.5 * (fy * u * 3.0 + fx * v * 3.0 + ph).sin();
                rgb[c] = base[0][c] * (1.0 - u) + base[1][c] * u * v + base[2][c] * wave * 0.5;
            }
            for s in &shapes {
                let (dy, dx) = ((y as f32 - s.cy) / s.ry, (x as f32 - s.cx) / s.rx);
                let d = if s.round { (dy * dy + dx * dx).sqrt() } else { dy.abs().max(dx.abs()) };
                // One-pixel-wide soft edge.
                let edge = ((1.0 - d) * s.ry.min(s.rx)).clamp(0.0, 1.0);
                if edge > 0.0 {
                    for c in 0..3 {
                        let shaded = s.color[c] * (1.0 + s.shade * dy);
                        rgb[c] = rgb[c] * (1.0 - edge) + shaded * edge;
                    }
                }
            }
            for val in rgb {
                let n = tex.gen_range(-1.0f32..1.0) * texture_amp;
                pixels.push(((val + n).clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    ImageU8::new(height, width, pixels).expect("consistent dims")
}

/// `count` synthetic images with seeds `seed, seed + 1, ...`.
pub fn synthetic_images(count: usize, height: usize, width: usize, seed: u64) -> Vec<ImageU8> {
    (0..count as u64).map(|i| synthetic_image(height, width, seed.wrapping_add(i))).collect()
}
