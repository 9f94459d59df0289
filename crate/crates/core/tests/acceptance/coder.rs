use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uvrc_core::entropy::{build_cdf_table, range_decode, range_encode, table_entropy_bits};
use uvrc_core::model::{Architecture, DistortionMetric, ModelConfig};
use uvrc_core::training::{gradient_check, synthetic_image};
use uvrc_core::{ModelWeights, TrainingConfig};

use crate::check::Outcome;

const TRIALS: usize = 200;
const MAX_SYMBOLS: usize = 100_000;

fn random_pmf(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    // Mix of flat, peaked and sparse distributions.
    let p: Vec<f64> = match rng.gen_range(0..3) {
        0 => (0..k).map(|_| rng.gen::<f64>()).collect(),
        1 => {
            let c = rng.gen_range(0..k) as f64;
            let w = rng.gen_range(0.3..8.0);
            (0..k).map(|i| (-((i as f64 - c) / w).abs()).exp()).collect()
        }
        _ => (0..k).map(|_| if rng.gen_bool(0.2) { rng.gen::<f64>() } else { 1e-7 }).collect(),
    };
    let z: f64 = p.iter().sum();
    p.into_iter().map(|v| v / z).collect()
}

fn sample(rng: &mut ChaCha8Rng, pmf: &[f64]) -> usize {
    let mut u = rng.gen::<f64>();
    for (i, &p) in pmf.iter().enumerate() {
        if u < p {
            return i;
        }
        u -= p;
    }
    pmf.len() - 1
}

pub fn exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0DE);
    let (mut exact, mut within) = (0, 0);
    for trial in 0..TRIALS {
        let k = rng.gen_range(1..=256);
        let n = if trial % 10 == 0 { MAX_SYMBOLS } else { rng.gen_range(1..=MAX_SYMBOLS) };
        let pmf = random_pmf(&mut rng, k);
        let min_sym = rng.gen_range(-128..=0);
        let table = build_cdf_table(&pmf, min_sym, false).expect("table");
        let symbols: Vec<i32> = (0..n).map(|_| min_sym + sample(&mut rng, &pmf) as i32).collect();
        let tables = vec![&table; n];
        let bytes = range_encode(&symbols, &tables).expect("encode");
        if range_decode(&bytes, &tables, n).ok().as_deref() == Some(&symbols[..]) {
            exact += 1;
        }
        let entropy_bytes = table_entropy_bits(&symbols, &tables).expect("in support") / 8.0;
        let bound = entropy_bytes * 1.01 + 64.0;
        if bytes.len() as f64 <= bound {
            within += 1;
        }
    }
    Outcome::new(
        exact == TRIALS && within == TRIALS,
        format!("{exact}/{TRIALS} bit-exact, {within}/{TRIALS} within entropy+1%+64 B"),
    )
}

pub fn gradient_validity() -> Outcome {
    let arch = ModelConfig {
        architecture: Architecture::Hyperprior,
        latent_channels: 6,
        hyper_channels: 3,
        hidden_channels: 4,
        kernel_size: 3,
        stride_y: 4,
        stride_z: 8,
        ..ModelConfig::default()
    };
    let params = ModelWeights::init(arch.clone()).expect("init").num_parameters();
    let x = synthetic_image(16, 16, 7).to_float();
    let mut parts = Vec::new();
    for metric in [DistortionMetric::Mse, DistortionMetric::MsSsim] {
        let cfg = TrainingConfig { lambda: 0.01, metric, seed: 5, ..TrainingConfig::default() };
        match gradient_check(&cfg, &arch, &x) {
            Ok(err) => parts.push(Outcome::new(err < 1e-4, format!("{metric}: max rel error {err:.2e}"))),
            Err(e) => parts.push(Outcome::new(false, format!("{metric}: {e}"))),
        }
    }
    let o = Outcome::all(parts);
    Outcome::new(o.pass && params <= 10_000, format!("{params} params; {}", o.detail))
}
