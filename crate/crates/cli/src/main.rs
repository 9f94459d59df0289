//! `uvrc`: train, code and evaluate variable-rate image codec models.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use uvrc_core::model::{Architecture, DistortionMetric, ModelConfig};
use uvrc_core::tooling::{
    dispersion_stats, export_csv, export_histograms_csv, export_plot, import_csv, latent_histogram, pareto_envelope,
    pareto_envelope_by, rd_point, Histogram, PlotAxis, DEFAULT_BINS,
};
use uvrc_core::training::{image_files, train_model_with};
use uvrc_core::variable_rate::{scale_compress, scale_decompress, sweep_scales};
use uvrc_core::{CompressedFile, Error, ImageU8, ModelWeights, PatchDataset, RDCurve, RDPoint, Result, TrainingConfig};

#[derive(Parser)]
#[command(name = "uvrc", version, about = "Learned image codec with input-scaling variable rate")]
struct Cli {
    /// Seed for training and any sampling.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a folder of PNG/PPM images.
    Train(TrainArgs),
    /// Compress an image at scale factor s.
    Compress {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        scale: f32,
        input: PathBuf,
        output: PathBuf,
    },
    /// Decompress a .uvrc file to PNG or PPM.
    Decompress {
        #[arg(long)]
        weights: PathBuf,
        input: PathBuf,
        output: PathBuf,
    },
    /// Sweep scale factors over a folder and write the averaged RD curve.
    Sweep {
        #[arg(long)]
        weights: PathBuf,
        /// `lo:hi:step` or a comma-separated list.
        #[arg(long, default_value = "0.1:0.9:0.1")]
        scales: Scales,
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also render the curve as SVG.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Latent symbol histograms averaged over a folder, one per scale.
    Hist {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long, default_value = "0.8,0.5,0.2")]
        scales: Scales,
        #[arg(long)]
        images: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pareto envelope over RD curves read from CSV files.
    Envelope {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Quality axis: psnr or ms_ssim.
        #[arg(long, default_value = "psnr")]
        axis: Axis,
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Evaluate a model at one scale: per-image and mean RD point.
    Eval {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        images: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        scale: f32,
        /// Write the mean point as a one-point reference curve.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value = "hyperprior")]
    arch: Architecture,
    #[arg(long, default_value = "mse")]
    metric: DistortionMetric,
    #[arg(long, default_value_t = 0.003)]
    lambda: f64,
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    #[arg(long, default_value_t = 16)]
    batch: usize,
    #[arg(long, default_value_t = 32)]
    patch: usize,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Loss log CSV (step, loss, D, R_bpp).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Clone, Debug)]
struct Scales(Vec<f32>);

impl FromStr for Scales {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let num = |v: &str| v.trim().parse::<f32>().map_err(|e| format!("{v:?}: {e}"));
        let parts: Vec<&str> = s.split(':').collect();
        let v: Vec<f32> = match parts.as_slice() {
            [lo, hi, step] => {
                let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
                if !(step > 0.0) || hi < lo {
                    return Err(format!("bad range {s:?}"));
                }
                let n = ((hi - lo) / step + 1e-4).floor() as usize;
                // Computed from the index, not accumulated, so 0.1:0.9:0.1
                // gives exactly 0.1, 0.2, ..., 0.9 after rounding.
                (0..=n).map(|i| ((lo + i as f32 * step) * 1e4).round() / 1e4).collect()
            }
            [_] => s.split(',').map(num).collect::<std::result::Result<_, _>>()?,
            _ => return Err(format!("expected lo:hi:step or a list, got {s:?}")),
        };
        if v.is_empty() {
            return Err("no scales".into());
        }
        Ok(Scales(v))
    }
}

#[derive(Clone, Copy, Debug)]
struct Axis(PlotAxis);

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "psnr" => Ok(Axis(PlotAxis::Psnr)),
            "ms_ssim" | "ms-ssim" => Ok(Axis(PlotAxis::MsSsim)),
            _ => Err(format!("unknown axis {s:?}, expected psnr or ms_ssim")),
        }
    }
}

struct Ctx {
    seed: u64,
    quiet: bool,
}

impl Ctx {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn load_images(dir: &Path) -> Result<Vec<(PathBuf, ImageU8)>> {
    let files = image_files(dir)?;
    if files.is_empty() {
        return Err(Error::InvalidArgument(format!("no PNG/PPM images in {}", dir.display())));
    }
    files.into_iter().map(|p| ImageU8::load(&p).map(|x| (p, x))).collect()
}

fn curve_label(w: &ModelWeights) -> String {
    let c = w.config();
    format!("{}/{} lambda={}", c.architecture, c.metric, c.lambda)
}

fn train(ctx: &Ctx, a: TrainArgs) -> Result<()> {
    let data = PatchDataset::from_folder(&a.data)?;
    let cfg = TrainingConfig {
        lambda: a.lambda,
        metric: a.metric,
        steps: a.steps,
        batch: a.batch,
        patch: a.patch,
        lr: a.lr.unwrap_or(TrainingConfig::default().lr),
        seed: ctx.seed,
        ..TrainingConfig::default()
    };
    let arch = ModelConfig { init_seed: ctx.seed, ..ModelConfig::toy(a.arch) };
    ctx.say(format!("training {}/{} λ={} on {} images", a.arch, a.metric, a.lambda, data.len()));
    let every = (a.steps / 20).max(1);
    let r = train_model_with(&cfg, &data, &arch, |rec| {
        if (rec.step + 1) % every == 0 {
            ctx.say(format!(
                "step {:>6} loss {:.5} D {:.5} R {:.4} bpp",
                rec.step + 1,
                rec.loss,
                rec.distortion,
                rec.rate_bpp
            ));
        }
    })?;
    r.weights.save(&a.out)?;
    if let Some(log) = &a.log {
        r.log.write_csv(log)?;
    }
    ctx.say(format!("wrote {} (fingerprint {:016x})", a.out.display(), r.weights.fingerprint()));
    Ok(())
}

fn sweep(ctx: &Ctx, weights: &Path, scales: &Scales, images: &Path, out: &Path, plot: Option<&Path>) -> Result<()> {
    let w = ModelWeights::load(weights)?;
    let imgs: Vec<ImageU8> = load_images(images)?.into_iter().map(|(_, x)| x).collect();
    let r = sweep_scales(&imgs, &w, &scales.0)?;
    for f in &r.failures {
        ctx.say(format!("image {} at s={}: {}", f.image, f.scale, f.error));
    }
    for p in &r.points {
        ctx.say(format!("s={:.3} bpp={:.4} psnr={:.3} ms_ssim={:.4}", p.s, p.bpp, p.psnr_db, p.ms_ssim));
    }
    let curve = RDCurve::new(curve_label(&w), r.points, true);
    export_csv(std::slice::from_ref(&curve), out)?;
    if let Some(p) = plot {
        export_plot(std::slice::from_ref(&curve), PlotAxis::Psnr, p)?;
    }
    Ok(())
}

fn hist(ctx: &Ctx, weights: &Path, scales: &Scales, images: &Path, bins: usize, out: &Path) -> Result<()> {
    let w = ModelWeights::load(weights)?;
    let imgs = load_images(images)?;
    let mut rows = Vec::new();
    for &s in &scales.0 {
        let mut mass = vec![0.0; bins];
        for (_, x) in &imgs {
            let h = latent_histogram(x, &w, s, bins)?;
            for (m, v) in mass.iter_mut().zip(h.mass()) {
                *m += v / imgs.len() as f64;
            }
        }
        let h = Histogram::from_mass(mass)?;
        let d = dispersion_stats(&h);
        ctx.say(format!(
            "s={s:.3} variance={:.4} zero_mass={:.4} b={:.4}",
            d.variance, d.zero_mass, d.laplacian_b
        ));
        rows.push((curve_label(&w), s, h));
    }
    export_histograms_csv(&rows, out)
}

fn envelope(ctx: &Ctx, inputs: &[PathBuf], out: &Path, axis: Axis, plot: Option<&Path>) -> Result<()> {
    let mut curves = Vec::new();
    for p in inputs {
        curves.extend(import_csv(p)?);
    }
    let env = match axis.0 {
        PlotAxis::Psnr => pareto_envelope(&curves)?,
        PlotAxis::MsSsim => pareto_envelope_by(&curves, |p| p.ms_ssim)?,
    };
    ctx.say(format!("envelope keeps {} points", env.points().len()));
    curves.push(env);
    export_csv(&curves, out)?;
    if let Some(p) = plot {
        export_plot(&curves, axis.0, p)?;
    }
    Ok(())
}

fn eval(ctx: &Ctx, weights: &Path, images: &Path, s: f32, out: Option<&Path>) -> Result<()> {
    let w = ModelWeights::load(weights)?;
    let imgs = load_images(images)?;
    let mut points = Vec::new();
    for (path, x) in &imgs {
        let p = rd_point(x, &w, s)?;
        println!(
            "{}\tbpp {:.4}\tpsnr {:.3}\tms_ssim {:.4}",
            path.display(),
            p.bpp,
            p.psnr_db,
            p.ms_ssim
        );
        points.push(p);
    }
    let n = points.len() as f64;
    let mean = |f: fn(&RDPoint) -> f64| points.iter().map(f).sum::<f64>() / n;
    let m = RDPoint {
        bpp: mean(|p| p.bpp),
        psnr_db: mean(|p| p.psnr_db),
        ms_ssim: mean(|p| p.ms_ssim),
        distortion: mean(|p| p.distortion),
        ..points[0].clone()
    };
    println!("mean\tbpp {:.4}\tpsnr {:.3}\tms_ssim {:.4}", m.bpp, m.psnr_db, m.ms_ssim);
    if let Some(out) = out {
        export_csv(&[RDCurve::new(curve_label(&w), vec![m], false)], out)?;
        ctx.say(format!("wrote {}", out.display()));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx { seed: cli.seed, quiet: cli.quiet };
    match cli.command {
        Command::Train(a) => train(&ctx, a),
        Command::Compress { weights, scale, input, output } => {
            let w = ModelWeights::load(&weights)?;
            let f = scale_compress(&ImageU8::load(&input)?, scale, &w)?;
            f.write(&output)?;
            let bpp = 8.0 * f.byte_len() as f64 / (f.height as f64 * f.width as f64);
            ctx.say(format!("{} bytes, {bpp:.4} bpp", f.byte_len()));
            Ok(())
        }
        Command::Decompress { weights, input, output } => {
            let w = ModelWeights::load(&weights)?;
            scale_decompress(&CompressedFile::read(&input)?, &w)?.save(&output)
        }
        Command::Sweep { weights, scales, images, out, plot } => {
            sweep(&ctx, &weights, &scales, &images, &out, plot.as_deref())
        }
        Command::Hist { weights, scales, images, bins, out } => hist(&ctx, &weights, &scales, &images, bins, &out),
        Command::Envelope { inputs, out, axis, plot } => envelope(&ctx, &inputs, &out, axis, plot.as_deref()),
        Command::Eval { weights, images, scale, out } => eval(&ctx, &weights, &images, scale, out.as_deref()),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) => 2,
        Error::CorruptStream(_) => 3,
        Error::ModelMismatch { .. } => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_ranges_and_lists() {
        let r: Scales = "0.1:0.9:0.1".parse().unwrap();
        assert_eq!(r.0, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]);
        assert_eq!("0.5:1:0.25".parse::<Scales>().unwrap().0, vec![0.5, 0.75, 1.0]);
        assert_eq!("0.8, 0.2".parse::<Scales>().unwrap().0, vec![0.8, 0.2]);
        for bad in ["", "0.9:0.1:0.1", "0.1:0.9:0", "a,b", "1:2"] {
            assert!(bad.parse::<Scales>().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::InvalidArgument("x".into())), 2);
        assert_eq!(exit_code(&Error::CorruptStream("x".into())), 3);
        assert_eq!(exit_code(&Error::ModelMismatch { stream: 1, model: 2 }), 4);
        assert_eq!(exit_code(&Error::MalformedWeights("x".into())), 1);
    }
}
