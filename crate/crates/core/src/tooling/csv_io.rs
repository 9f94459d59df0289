//! CSV persistence. Floats are written in shortest round-trip form, so
//! export/import is lossless; fingerprints are 16 hex digits.

use std::path::Path;

use super::histogram::Histogram;
use super::{RDCurve, RDPoint};
use crate::error::{Error, Result};

pub const CURVE_HEADER: [&str; 9] = [
    "label",
    "s",
    "lambda",
    "bpp",
    "psnr_db",
    "ms_ssim",
    "fingerprint",
    "distortion",
    "style",
];

pub const HISTOGRAM_HEADER: [&str; 4] = ["label", "s", "symbol", "mass"];

/// One row per point, curves in order.
pub fn export_csv(curves: &[RDCurve], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CURVE_HEADER)?;
    for c in curves {
        let style = if c.dashed { "dashed" } else { "solid" };
        for p in c.points() {
            w.write_record([
                c.label.clone(),
                p.s.to_string(),
                p.lambda.to_string(),
                p.bpp.to_string(),
                p.psnr_db.to_string(),
                p.ms_ssim.to_string(),
                format!("{:016x}", p.fingerprint),
                p.distortion.to_string(),
                style.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads curves back, grouped by label in order of first appearance.
pub fn import_csv(path: impl AsRef<Path>) -> Result<Vec<RDCurve>> {
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.iter().ne(CURVE_HEADER) {
        return Err(Error::InvalidArgument(format!("unexpected CSV header {:?}", r.headers()?)));
    }
    let mut groups: Vec<(String, bool, Vec<RDPoint>)> = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let bad = |i: usize| Error::InvalidArgument(format!("row {}: bad {} {:?}", line + 2, CURVE_HEADER[i], field(i)));
        let real = |i: usize| field(i).parse::<f64>().map_err(|_| bad(i));
        let point = RDPoint {
            s: field(1).parse().map_err(|_| bad(1))?,
            lambda: real(2)?,
            bpp: real(3)?,
            psnr_db: real(4)?,
            ms_ssim: real(5)?,
            fingerprint: u64::from_str_radix(field(6), 16).map_err(|_| bad(6))?,
            distortion: real(7)?,
        };
        let dashed = match field(8) {
            "dashed" => true,
            "solid" => false,
            _ => return Err(bad(8)),
        };
        let label = field(0);
        match groups.iter_mut().find(|g| g.0 == label) {
            Some(g) => g.2.push(point),
            None => groups.push((label.to_string(), dashed, vec![point])),
        }
    }
    Ok(groups.into_iter().map(|(l, d, p)| RDCurve::new(l, p, d)).collect())
}

/// One row per bin for each labelled histogram.
pub fn export_histograms_csv(hists: &[(String, f32, Histogram)], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HISTOGRAM_HEADER)?;
    for (label, s, h) in hists {
        for (k, m) in h.bins() {
            w.write_record([label.clone(), s.to_string(), k.to_string(), m.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
