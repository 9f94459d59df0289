//! Acceptance suite. Trains the toy models once, then checks each
//! criterion and prints one PASS/FAIL line for it. Exits non-zero if any
//! criterion fails.

mod check;
mod coder;
mod latent;
mod models;
mod persistence;
mod rate;

use std::time::Instant;

use check::Report;

fn main() {
    let start = Instant::now();
    let mut report = Report::default();

    report.record(1, "entropy coder exactness", coder::exactness());
    report.record(2, "gradient validity", coder::gradient_validity());

    let m = models::Models::train();
    let held_out = models::held_out();

    report.record(3, "s=1 identity", persistence::unit_scale_identity(&m.hyperprior));
    report.record(4, "variable-rate mechanism (hyperprior/MSE)", rate::mechanism(&m.hyperprior, &held_out));
    report.record(5, "universality (a) factorized/MSE", rate::mechanism(&m.factorized, &held_out));
    report.record(5, "universality (b) attention_lite/MS-SSIM", rate::mechanism(&m.attention_ms_ssim, &held_out));
    report.record(6, "rate-range coverage", rate::coverage(&m.hyperprior, &m.hyperprior_high_rate, &held_out));
    report.record(7, "latent contraction", latent::contraction(&m.hyperprior, &held_out));
    report.record(8, "bit-estimate consistency", persistence::estimate_consistency(&m.hyperprior));
    report.record(9, "persistence", persistence::persistence(&m.hyperprior, &held_out));

    println!("total time {:.1} s", start.elapsed().as_secs_f64());
    std::process::exit(report.finish());
}
