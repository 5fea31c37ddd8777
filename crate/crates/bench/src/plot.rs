//! Minimal static SVG line plots and overlaid histograms.

use std::fmt::Write as _;
use std::path::Path;

use crate::BenchError;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 48.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    /// Defaults to `0, 1, 2, ...` when absent.
    pub x: Option<Vec<f64>>,
    pub y: Vec<f64>,
}

impl Series {
    pub fn new(label: impl Into<String>, y: Vec<f64>) -> Self {
        Series {
            label: label.into(),
            x: None,
            y,
        }
    }

    fn xs(&self) -> Vec<f64> {
        self.x.clone().unwrap_or_else(|| (0..self.y.len()).map(|i| i as f64).collect())
    }
}

pub struct Axes<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
}

/// Maps data coordinates into the plotting area.
struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let widen = |(lo, hi): (f64, f64)| if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
        Frame { x: widen(x), y: widen(y) }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn bounds<'a>(values: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick_label(v: f64) -> String {
    if v == 0.0 || (v.abs() >= 1e-2 && v.abs() < 1e5) {
        format!("{v:.3}").trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}")
    }
}

fn header(svg: &mut String, axes: &Axes, frame: &Frame) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        (MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0,
        escape(axes.title)
    );
    let (x0, x1) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let (y0, y1) = (HEIGHT - MARGIN_BOTTOM, MARGIN_TOP);
    let _ = writeln!(
        svg,
        r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = frame.x.0 + f * (frame.x.1 - frame.x.0);
        let yv = frame.y.0 + f * (frame.y.1 - frame.y.0);
        let (px, py) = (frame.px(xv), frame.py(yv));
        let _ = writeln!(
            svg,
            r#"<line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            y0 + 4.0,
            y0 + 16.0,
            tick_label(xv)
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 4.0,
            x0 - 6.0,
            py + 4.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 10.0,
        escape(axes.x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(14,{:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        (y0 + y1) / 2.0,
        escape(axes.y_label)
    );
}

fn legend(svg: &mut String, labels: &[&str]) {
    for (i, label) in labels.iter().enumerate() {
        let y = MARGIN_TOP + 8.0 + 18.0 * i as f64;
        let x = WIDTH - MARGIN_RIGHT + 12.0;
        let _ = writeln!(
            svg,
            r#"<rect x="{x}" y="{:.2}" width="12" height="12" fill="{}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            y - 10.0,
            PALETTE[i % PALETTE.len()],
            x + 18.0,
            y,
            escape(label)
        );
    }
}

fn write(path: &Path, svg: &str) -> Result<(), BenchError> {
    std::fs::write(path, svg).map_err(|e| BenchError::io(path.to_path_buf(), e))
}

/// One polyline per series on shared axes.
pub fn plot_line(series: &[Series], axes: &Axes, path: &Path) -> Result<(), BenchError> {
    if series.is_empty() || series.iter().any(|s| s.y.is_empty()) {
        return Err(BenchError::Plot(format!("{}: nothing to plot", path.display())));
    }
    let xs: Vec<Vec<f64>> = series.iter().map(Series::xs).collect();
    if xs.iter().zip(series).any(|(x, s)| x.len() != s.y.len()) {
        return Err(BenchError::Plot("x and y lengths differ".into()));
    }
    let frame = Frame::new(bounds(xs.iter().flatten()), bounds(series.iter().flat_map(|s| &s.y)));
    let mut svg = String::new();
    header(&mut svg, axes, &frame);
    for (i, (s, x)) in series.iter().zip(&xs).enumerate() {
        // long traces are decimated to about two points per pixel column
        let stride = (s.y.len() / 1000).max(1);
        let mut d = String::new();
        let mut pen_down = false;
        for j in (0..s.y.len()).step_by(stride).chain(std::iter::once(s.y.len() - 1)) {
            if !s.y[j].is_finite() || !x[j].is_finite() {
                pen_down = false;
                continue;
            }
            let _ = write!(
                d,
                "{}{:.2},{:.2} ",
                if pen_down { "L" } else { "M" },
                frame.px(x[j]),
                frame.py(s.y[j])
            );
            pen_down = true;
        }
        let _ = writeln!(
            svg,
            r#"<path d="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            d.trim_end(),
            PALETTE[i % PALETTE.len()]
        );
    }
    legend(&mut svg, &series.iter().map(|s| s.label.as_str()).collect::<Vec<_>>());
    svg.push_str("</svg>\n");
    write(path, &svg)
}

/// Density-normalized histograms over a shared set of bins, drawn as
/// translucent overlapping bars.
pub fn plot_histogram(groups: &[(String, Vec<f64>)], bins: usize, axes: &Axes, path: &Path) -> Result<(), BenchError> {
    if groups.is_empty() || bins == 0 || groups.iter().any(|(_, v)| v.is_empty()) {
        return Err(BenchError::Plot(format!("{}: nothing to plot", path.display())));
    }
    let (lo, hi) = bounds(groups.iter().flat_map(|(_, v)| v));
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(BenchError::Plot("histogram data has no finite values".into()));
    }
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let densities: Vec<Vec<f64>> = groups
        .iter()
        .map(|(_, v)| {
            let mut counts = vec![0usize; bins];
            for x in v.iter().filter(|x| x.is_finite()) {
                let b = (((x - lo) / width) as usize).min(bins - 1);
                counts[b] += 1;
            }
            counts.iter().map(|c| *c as f64 / (v.len() as f64 * width)).collect()
        })
        .collect();
    let top = densities.iter().flatten().fold(0.0f64, |m, v| m.max(*v));
    let frame = Frame::new((lo, lo + width * bins as f64), (0.0, top.max(f64::MIN_POSITIVE)));
    let mut svg = String::new();
    header(&mut svg, axes, &frame);
    for (i, dens) in densities.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        for (b, h) in dens.iter().enumerate().filter(|(_, h)| **h > 0.0) {
            let x0 = frame.px(lo + b as f64 * width);
            let x1 = frame.px(lo + (b + 1) as f64 * width);
            let y = frame.py(*h);
            let _ = writeln!(
                svg,
                r#"<rect x="{x0:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.4"/>"#,
                x1 - x0,
                frame.py(0.0) - y
            );
        }
    }
    legend(&mut svg, &groups.iter().map(|(l, _)| l.as_str()).collect::<Vec<_>>());
    svg.push_str("</svg>\n");
    write(path, &svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const AXES: Axes = Axes {
        title: "t",
        x_label: "x",
        y_label: "y",
    };

    #[test]
    fn line_plot_has_one_path_per_series() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.svg");
        let series = [Series::new("a", vec![1.0, 0.5, 0.25]), Series::new("b<c", vec![0.0, 1.0])];
        plot_line(&series, &AXES, &path).unwrap();
        let svg = std::fs::read_to_string(&path).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("stroke-width=\"1.5\"").count(), 2);
        assert!(svg.contains("b&lt;c"));
    }

    #[test]
    fn histogram_overlays_three_groups() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.svg");
        let groups: Vec<(String, Vec<f64>)> = (0..3)
            .map(|g| (format!("g{g}"), (0..100).map(|i| i as f64 * 0.01 + g as f64).collect()))
            .collect();
        plot_histogram(&groups, 10, &AXES, &path).unwrap();
        let svg = std::fs::read_to_string(&path).unwrap();
        for g in 0..3 {
            assert!(svg.contains(&format!(">g{g}</text>")));
        }
        assert!(svg.contains("fill-opacity=\"0.4\""));
    }

    #[test]
    fn rejects_empty_input_and_bad_paths() {
        let dir = tempfile::tempdir().unwrap();
        assert!(plot_line(&[], &AXES, &dir.path().join("e.svg")).is_err());
        assert!(plot_histogram(&[("a".into(), vec![])], 5, &AXES, &dir.path().join("e.svg")).is_err());
        let unwritable = dir.path().join("missing").join("x.svg");
        assert!(plot_line(&[Series::new("a", vec![1.0])], &AXES, &unwritable).is_err());
    }

    #[test]
    fn constant_data_still_renders() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.svg");
        plot_histogram(&[("c".into(), vec![2.0; 10])], 4, &AXES, &path).unwrap();
        plot_line(&[Series::new("c", vec![2.0; 10])], &AXES, &path).unwrap();
    }
}
