use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uvrc_core::training::{synthetic_image, synthetic_images};
use uvrc_core::variable_rate::{
    compress, decompress, estimate_file_bits, scale_compress, scale_decompress, HEADER_LEN,
};
use uvrc_core::{CompressedFile, Error, ImageU8, ModelWeights};

use crate::check::Outcome;

const FUZZ_TRIALS: usize = 1000;
const MAX_ESTIMATE_ERROR: f64 = 0.05;

/// `scale_compress(x, 1)` equals `compress(x)` byte for byte on ten images
/// of random size, and both decode to the same image.
pub fn unit_scale_identity(w: &ModelWeights) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut same = 0;
    let n = 10;
    for i in 0..n {
        let x = synthetic_image(rng.gen_range(16..=96), rng.gen_range(16..=96), 30_000 + i);
        let (Ok(a), Ok(b)) = (compress(&x, w), scale_compress(&x, 1.0, w)) else {
            continue;
        };
        let decoded = (decompress(&a, w), scale_decompress(&b, w));
        if a.to_bytes() == b.to_bytes() && matches!(&decoded, (Ok(p), Ok(q)) if p == q) {
            same += 1;
        }
    }
    Outcome::new(same == n, format!("{same}/{n} images byte-identical with identical decodes"))
}

/// Measured file size against the model's likelihood estimate on ten
/// held-out images, each within 5%.
pub fn estimate_consistency(w: &ModelWeights) -> Outcome {
    let images = synthetic_images(10, 64, 64, 20_000);
    let mut worst: f64 = 0.0;
    let mut within = 0;
    for x in &images {
        let (Ok(f), Ok(est)) = (compress(x, w), estimate_file_bits(x, w, 1.0)) else {
            continue;
        };
        let rel = (8.0 * f.byte_len() as f64 - est).abs() / est;
        worst = worst.max(rel);
        if rel <= MAX_ESTIMATE_ERROR {
            within += 1;
        }
    }
    Outcome::new(
        within == images.len(),
        format!("{within}/{} images within 5%, worst {:.2}%", images.len(), 100.0 * worst),
    )
}

fn weights_round_trip(w: &ModelWeights, dir: &std::path::Path) -> Outcome {
    let path = dir.join("model.uvrw");
    let loaded = w.save(&path).and_then(|_| ModelWeights::load(&path));
    match loaded {
        Ok(l) => Outcome::new(
            l.fingerprint() == w.fingerprint() && l == *w,
            format!("weights fingerprint {:016x} → {:016x}", w.fingerprint(), l.fingerprint()),
        ),
        Err(e) => Outcome::new(false, format!("weights round trip: {e}")),
    }
}

fn file_round_trip(w: &ModelWeights, x: &ImageU8, dir: &std::path::Path) -> Outcome {
    let path = dir.join("image.uvrc");
    let run = || -> uvrc_core::Result<bool> {
        let f = scale_compress(x, 0.6, w)?;
        f.write(&path)?;
        let g = CompressedFile::read(&path)?;
        Ok(g == f && scale_decompress(&g, w)? == scale_decompress(&f, w)?)
    };
    match run() {
        Ok(ok) => Outcome::new(ok, "file write/read decodes identically"),
        Err(e) => Outcome::new(false, format!("file round trip: {e}")),
    }
}

fn fuzz(w: &ModelWeights, images: &[ImageU8]) -> Outcome {
    let files: Vec<Vec<u8>> = images
        .iter()
        .map(|x| scale_compress(x, 0.7, w).map(|f| f.to_bytes()))
        .collect::<Result<_, _>>()
        .expect("compress");
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut detected = 0;
    for _ in 0..FUZZ_TRIALS {
        let mut bytes = files[rng.gen_range(0..files.len())].clone();
        let i = rng.gen_range(HEADER_LEN..bytes.len());
        bytes[i] ^= rng.gen_range(1..=255u8);
        let r = CompressedFile::from_bytes(&bytes).and_then(|f| scale_decompress(&f, w));
        if matches!(r, Err(Error::CorruptStream(_))) {
            detected += 1;
        }
    }
    let rate = detected as f64 / FUZZ_TRIALS as f64;
    Outcome::new(rate >= 0.99, format!("{detected}/{FUZZ_TRIALS} payload corruptions detected"))
}

pub fn persistence(w: &ModelWeights, images: &[ImageU8]) -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    Outcome::all(vec![
        weights_round_trip(w, dir.path()),
        file_round_trip(w, &images[0], dir.path()),
        fuzz(w, images),
    ])
}
