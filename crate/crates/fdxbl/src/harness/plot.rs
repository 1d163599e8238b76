//! Tiny deterministic SVG plots. The CSVs are the experiment contract;
//! these are a convenience layer for eyeballing curves.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::error::Result;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn from_series(series: &BTreeMap<String, Vec<(f64, f64)>>) -> Self {
        let mut f = Frame {
            x_min: f64::INFINITY,
            x_max: f64::NEG_INFINITY,
            y_min: f64::INFINITY,
            y_max: f64::NEG_INFINITY,
        };
        for curve in series.values() {
            for &(x, y) in curve {
                f.x_min = f.x_min.min(x);
                f.x_max = f.x_max.max(x);
                f.y_min = f.y_min.min(y);
                f.y_max = f.y_max.max(y);
            }
        }
        if !f.x_min.is_finite() || f.x_min == f.x_max {
            f.x_min -= 1.0;
            f.x_max += 1.0;
        }
        if !f.y_min.is_finite() || f.y_min == f.y_max {
            f.y_min -= 1.0;
            f.y_max += 1.0;
        }
        f
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn render(
    series: &BTreeMap<String, Vec<(f64, f64)>>,
    title: &str,
    x_label: &str,
    y_label: &str,
    path: &Path,
) -> Result<()> {
    let frame = Frame::from_series(series);
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    )?;
    writeln!(out, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>")?;
    writeln!(
        out,
        "<text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{title}</text>",
        WIDTH / 2.0
    )?;
    // Axes.
    writeln!(
        out,
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>",
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    )?;
    writeln!(
        out,
        "<line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>",
        m = MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN
    )?;
    writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{x_label}</text>",
        WIDTH / 2.0,
        HEIGHT - 16.0
    )?;
    writeln!(
        out,
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 {:.1})\">{y_label}</text>",
        HEIGHT / 2.0,
        HEIGHT / 2.0
    )?;
    // Axis extremes.
    for (v, x_axis) in [(frame.x_min, true), (frame.x_max, true), (frame.y_min, false), (frame.y_max, false)] {
        if x_axis {
            writeln!(
                out,
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">{v:.3}</text>",
                frame.px(v),
                HEIGHT - MARGIN + 16.0
            )?;
        } else {
            writeln!(
                out,
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">{v:.3}</text>",
                MARGIN - 6.0,
                frame.py(v) + 4.0
            )?;
        }
    }
    // Curves and legend.
    for (i, (label, curve)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let points: Vec<String> = curve
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
            .collect();
        writeln!(
            out,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            points.join(" ")
        )?;
        let ly = MARGIN + 16.0 * i as f64;
        writeln!(
            out,
            "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>",
            WIDTH - MARGIN - 110.0,
            WIDTH - MARGIN - 90.0
        )?;
        writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\">{label}</text>",
            WIDTH - MARGIN - 84.0,
            ly + 4.0
        )?;
    }
    writeln!(out, "</svg>")?;
    Ok(())
}

/// Plot one line per labeled series.
pub fn line_plot(
    series: &BTreeMap<String, Vec<(f64, f64)>>,
    title: &str,
    x_label: &str,
    y_label: &str,
    path: &Path,
) -> Result<()> {
    render(series, title, x_label, y_label, path)
}

/// Plot CDF step curves.
pub fn cdf_plot(
    cdfs: &BTreeMap<String, Vec<(f64, f64)>>,
    title: &str,
    x_label: &str,
    path: &Path,
) -> Result<()> {
    render(cdfs, title, x_label, "empirical CDF", path)
}
