use std::path::Path;

use plotters::prelude::*;

use super::{RDCurve, RDPoint};
use crate::error::{Error, Result};

/// Quality axis of a rate-distortion plot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotAxis {
    Psnr,
    MsSsim,
}

impl PlotAxis {
    fn value(self, p: &RDPoint) -> f64 {
        match self {
            PlotAxis::Psnr => p.psnr_db,
            PlotAxis::MsSsim => p.ms_ssim,
        }
    }

    fn label(self) -> &'static str {
        match self {
            PlotAxis::Psnr => "PSNR (dB)",
            PlotAxis::MsSsim => "MS-SSIM",
        }
    }
}

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(148, 103, 189),
    RGBColor(255, 127, 14),
    RGBColor(23, 190, 207),
];

fn plot_err(e: impl std::fmt::Display) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Renders bpp against `axis` as SVG: solid lines for reference curves,
/// dashed for curves flagged `dashed`, one legend entry per curve label.
pub fn export_plot(curves: &[RDCurve], axis: PlotAxis, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let pts: Vec<(f64, f64)> = curves
        .iter()
        .flat_map(|c| c.points().iter().map(|p| (p.bpp, axis.value(p))))
        .collect();
    if pts.is_empty() {
        return Err(Error::InvalidArgument("nothing to plot".into()));
    }
    let span = |vals: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
        let pad = ((hi - lo) * 0.05).max(1e-3);
        (lo - pad)..(hi + pad)
    };
    let xr = span(&mut pts.iter().map(|p| p.0));
    let yr = span(&mut pts.iter().map(|p| p.1));

    let root = SVGBackend::new(path, (800, 560)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .margin(16)
        .x_label_area_size(44)
        .y_label_area_size(60)
        .build_cartesian_2d(xr, yr)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("bpp")
        .y_desc(axis.label())
        .draw()
        .map_err(plot_err)?;
    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let line: Vec<(f64, f64)> = c.points().iter().map(|p| (p.bpp, axis.value(p))).collect();
        let style = ShapeStyle::from(&color).stroke_width(2);
        let anno = if c.dashed {
            chart.draw_series(DashedLineSeries::new(line.clone(), 8, 5, style)).map_err(plot_err)?
        } else {
            chart.draw_series(LineSeries::new(line.clone(), style)).map_err(plot_err)?
        };
        anno.label(c.label.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
        chart
            .draw_series(line.iter().map(|&p| Circle::new(p, 3, color.filled())))
            .map_err(plot_err)?;
    }
    chart
        .configure_series_labels()
        .position(SeriesLabelPosition::LowerRight)
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(label: &str, dashed: bool, offset: f64) -> RDCurve {
        let pts = (1..5)
            .map(|i| RDPoint {
                bpp: i as f64 * 0.2 + offset,
                psnr_db: 24.0 + i as f64,
                ms_ssim: 0.8 + i as f64 / 50.0,
                distortion: 0.0,
                s: 1.0,
                fingerprint: 0,
                lambda: 0.0,
            })
            .collect();
        RDCurve::new(label, pts, dashed)
    }

    #[test]
    fn writes_svg_with_legend_labels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rd.svg");
        let curves = [curve("reference lambda=0.003", false, 0.0), curve("sweep s", true, 0.05)];
        export_plot(&curves, PlotAxis::Psnr, &p).unwrap();
        let svg = std::fs::read_to_string(&p).unwrap();
        assert!(svg.starts_with("<svg"));
        for c in &curves {
            assert!(svg.contains(&c.label));
        }
        let q = dir.path().join("ms.svg");
        export_plot(&curves, PlotAxis::MsSsim, &q).unwrap();
        assert!(std::fs::read_to_string(&q).unwrap().contains("MS-SSIM"));
    }

    #[test]
    fn dashed_flag_changes_rendering() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.svg"), dir.path().join("b.svg"));
        export_plot(&[curve("c", false, 0.0)], PlotAxis::Psnr, &a).unwrap();
        export_plot(&[curve("c", true, 0.0)], PlotAxis::Psnr, &b).unwrap();
        let count = |p: &Path| std::fs::read_to_string(p).unwrap().matches("<polyline").count();
        // A dashed line is drawn as many short segments.
        assert!(count(&b) > count(&a));
    }

    #[test]
    fn single_point_curve_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let one = RDCurve::new("one", curve("x", false, 0.0).points()[..1].to_vec(), false);
        export_plot(&[one], PlotAxis::Psnr, dir.path().join("one.svg")).unwrap();
        assert!(export_plot(&[], PlotAxis::Psnr, dir.path().join("none.svg")).is_err());
        assert!(export_plot(&[curve("c", false, 0.0)], PlotAxis::Psnr, dir.path().join("no/dir.svg")).is_err());
    }
}
