//! Training-time additive-noise relaxation and inference-time rounding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, Result};
use crate::latent::TensorF;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuantizerMode {
    /// `t + u`, `u ~ U[-0.5, 0.5)`; training passes only.
    Noise,
    /// Round half away from zero.
    Round,
    /// `round(y - mu) + mu`.
    MeanShiftRound,
}

/// Derives the noise seed for one tensor at one training step.
pub fn noise_seed(global_seed: u64, step: u64, tensor_id: u64) -> u64 {
    // splitmix64 over the three keys
    let mut z = global_seed
        .wrapping_add(step.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(tensor_id.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `n` i.i.d. samples from `U[-0.5, 0.5)`.
pub fn uniform_noise(n: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen::<f32>() - 0.5).collect()
}

pub fn quantize_noise(t: &TensorF, seed: u64) -> TensorF {
    let noise = uniform_noise(t.len(), seed);
    let data = t.data().iter().zip(noise).map(|(v, u)| v + u).collect();
    TensorF::new(t.shape(), data).expect("shape preserved")
}

pub fn quantize_round(t: &TensorF) -> TensorF {
    t.map(f32::round)
}

/// `round(y - mu) + mu`.
pub fn quantize_mean_shift(y: &TensorF, mu: &TensorF) -> Result<TensorF> {
    let symbols = mean_shift_symbols(y, mu)?;
    let data = symbols.iter().zip(mu.data()).map(|(&k, &m)| k as f32 + m).collect();
    TensorF::new(y.shape(), data)
}

/// The integers actually transmitted for `y` under mean `mu`: `round(y - mu)`.
pub fn mean_shift_symbols(y: &TensorF, mu: &TensorF) -> Result<Vec<i32>> {
    if y.shape() != mu.shape() {
        return Err(shape_err("quantize_mean_shift", y.shape(), mu.shape()));
    }
    Ok(y.data().iter().zip(mu.data()).map(|(&v, &m)| (v - m).round() as i32).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f32]) -> TensorF {
        TensorF::new([1, 1, v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn round_half_away_from_zero() {
        let r = quantize_round(&t(&[0.49, 0.5, -0.5, 1.5, -2.5, 3.0, -7.0]));
        assert_eq!(r.data(), &[0.0, 1.0, -1.0, 2.0, -3.0, 3.0, -7.0]);
    }

    #[test]
    fn mean_shift_examples() {
        let q = quantize_mean_shift(&t(&[1.3]), &t(&[0.4])).unwrap();
        assert!((q.data()[0] - 1.4).abs() < 1e-6);
        let y = t(&[0.2, -1.7, 3.49]);
        let zero = t(&[0.0; 3]);
        assert_eq!(quantize_mean_shift(&y, &zero).unwrap(), quantize_round(&y));
        let bad = TensorF::zeros([1, 1, 2]);
        assert!(quantize_mean_shift(&y, &bad).is_err());
    }

    #[test]
    fn noise_is_bounded_and_seeded() {
        let x = t(&[0.0, 1.0, -3.0, 10.5]);
        let a = quantize_noise(&x, 7);
        let b = quantize_noise(&x, 7);
        assert_eq!(a, b);
        assert_ne!(a, quantize_noise(&x, 8));
        for (o, i) in a.data().iter().zip(x.data()) {
            assert!((o - i).abs() <= 0.5);
        }
    }

    #[test]
    fn noise_moments_match_uniform() {
        let n = 1_000_000;
        let u = uniform_noise(n, 42);
        assert!(u.iter().all(|v| (-0.5..0.5).contains(v)));
        let mean = u.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
        let var = u.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.002, "mean {mean}");
        assert!((var - 1.0 / 12.0).abs() < 0.02 / 12.0, "variance {var}");
    }

    #[test]
    fn noise_seeds_differ_per_key() {
        let a = noise_seed(1, 2, 3);
        assert_ne!(a, noise_seed(1, 3, 2));
        assert_ne!(a, noise_seed(2, 2, 3));
        assert_eq!(a, noise_seed(1, 2, 3));
    }

    proptest::proptest! {
        #[test]
        fn round_is_idempotent_and_bounded(v in proptest::collection::vec(-1e4f32..1e4, 1..64)) {
            let x = t(&v);
            let r = quantize_round(&x);
            proptest::prop_assert_eq!(quantize_round(&r), r.clone());
            for (a, b) in r.data().iter().zip(x.data()) {
                proptest::prop_assert!((a - b).abs() <= 0.5);
            }
        }

        #[test]
        fn mean_shift_is_integral_offset(v in proptest::collection::vec((-300f32..300.0, -50f32..50.0), 1..64)) {
            let y = t(&v.iter().map(|p| p.0).collect::<Vec<_>>());
            let mu = t(&v.iter().map(|p| p.1).collect::<Vec<_>>());
            let syms = mean_shift_symbols(&y, &mu).unwrap();
            let q = quantize_mean_shift(&y, &mu).unwrap();
            for i in 0..v.len() {
                proptest::prop_assert!((q.data()[i] - mu.data()[i] - syms[i] as f32).abs() < 1e-3);
                proptest::prop_assert!((q.data()[i] - y.data()[i]).abs() <= 0.5 + 1e-4);
            }
        }
    }
}
