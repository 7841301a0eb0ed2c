//! Standalone SVG figures: line plots, heatmaps and causal-plane
//! trajectories. Output bytes depend only on the inputs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::CausalPlanePoint;
use crate::matrix::Matrix;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const TICKS: usize = 5;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const RAMP_LOW: (u8, u8, u8) = (0xf7, 0xfb, 0xff);
const RAMP_HIGH: (u8, u8, u8) = (0x08, 0x30, 0x6b);

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
}

impl PlotSpec {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        PlotSpec {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series {
            name: name.into(),
            points,
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn num(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

#[derive(Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>) -> Axis {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo == hi {
            let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.5 };
            lo -= pad;
            hi += pad;
        }
        Axis { lo, hi }
    }

    fn at(&self, k: usize) -> f64 {
        self.lo + (self.hi - self.lo) * k as f64 / (TICKS - 1) as f64
    }
}

struct Frame {
    x: Axis,
    y: Axis,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.lo) / (self.x.hi - self.x.lo) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y.lo) / (self.y.hi - self.y.lo) * (HEIGHT - TOP - BOTTOM)
    }
}

fn open(svg: &mut String, spec: &PlotSpec) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#,
        w = WIDTH,
        h = HEIGHT
    );
    let _ = writeln!(
        svg,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        num((WIDTH - RIGHT + LEFT) / 2.0),
        escape(&spec.title)
    );
}

fn axes(svg: &mut String, frame: &Frame, spec: &PlotSpec) {
    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let (y0, y1) = (HEIGHT - BOTTOM, TOP);
    let _ = writeln!(svg, r##"<g class="axes" stroke="#333" stroke-width="1">"##);
    let _ = writeln!(
        svg,
        r#"<line x1="{}" y1="{}" x2="{}" y2="{}"/>"#,
        num(x0),
        num(y0),
        num(x1),
        num(y0)
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{}" y1="{}" x2="{}" y2="{}"/>"#,
        num(x0),
        num(y0),
        num(x0),
        num(y1)
    );
    for k in 0..TICKS {
        let px = frame.px(frame.x.at(k));
        let py = frame.py(frame.y.at(k));
        let _ = writeln!(
            svg,
            r#"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}"/>"#,
            num(px),
            num(y0),
            num(y0 + 5.0)
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}"/>"#,
            num(x0 - 5.0),
            num(py),
            num(x0)
        );
    }
    let _ = writeln!(svg, "</g>");
    for k in 0..TICKS {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            num(frame.px(frame.x.at(k))),
            num(y0 + 18.0),
            num(frame.x.at(k))
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            num(x0 - 8.0),
            num(frame.py(frame.y.at(k)) + 4.0),
            num(frame.y.at(k))
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        num((x0 + x1) / 2.0),
        num(HEIGHT - 16.0),
        escape(&spec.x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        num((y0 + y1) / 2.0),
        escape(&spec.y_label)
    );
}

fn legend(svg: &mut String, names: &[&str]) {
    let x = WIDTH - RIGHT + 16.0;
    let _ = writeln!(svg, r#"<g class="legend">"#);
    for (k, name) in names.iter().enumerate() {
        let y = TOP + 10.0 + 20.0 * k as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{}" y="{}" width="14" height="4" fill="{}"/>"#,
            num(x),
            num(y - 4.0),
            PALETTE[k % PALETTE.len()]
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}">{}</text>"#,
            num(x + 20.0),
            num(y + 2.0),
            escape(name)
        );
    }
    let _ = writeln!(svg, "</g>");
}

fn check_points<'a>(points: impl Iterator<Item = &'a (f64, f64)>) -> Result<()> {
    for &(x, y) in points {
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::Domain(format!("cannot plot non-finite point ({x}, {y})")));
        }
    }
    Ok(())
}

/// One polyline per series, with a legend when there is more than one.
pub fn line_plot_svg(series: &[Series], spec: &PlotSpec) -> Result<String> {
    if series.is_empty() || series.iter().any(|s| s.points.is_empty()) {
        return Err(Error::EmptyData("line plot series"));
    }
    check_points(series.iter().flat_map(|s| &s.points))?;
    let frame = Frame {
        x: Axis::fit(series.iter().flat_map(|s| s.points.iter().map(|p| p.0))),
        y: Axis::fit(series.iter().flat_map(|s| s.points.iter().map(|p| p.1))),
    };
    let mut svg = String::new();
    open(&mut svg, spec);
    axes(&mut svg, &frame, spec);
    for (k, s) in series.iter().enumerate() {
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{},{}", num(frame.px(x)), num(frame.py(y))))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"><title>{}</title></polyline>"#,
            PALETTE[k % PALETTE.len()],
            pts.join(" "),
            escape(&s.name)
        );
    }
    if series.len() > 1 {
        legend(&mut svg, &series.iter().map(|s| s.name.as_str()).collect::<Vec<_>>());
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn ramp(t: f64) -> String {
    let mix = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * t).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(RAMP_LOW.0, RAMP_HIGH.0),
        mix(RAMP_LOW.1, RAMP_HIGH.1),
        mix(RAMP_LOW.2, RAMP_HIGH.2)
    )
}

/// Heatmap of `values[i][j]` at `(x_values[i], y_values[j])` on a linear
/// two-colour ramp, with the minimum and maximum printed beside it.
pub fn heatmap_svg(values: &Matrix, x_values: &[f64], y_values: &[f64], spec: &PlotSpec) -> Result<String> {
    if values.rows() == 0 || values.cols() == 0 {
        return Err(Error::EmptyData("heatmap values"));
    }
    if x_values.len() != values.rows() || y_values.len() != values.cols() {
        return Err(Error::Dimension {
            context: "heatmap axis values",
            expected: values.rows() * values.cols(),
            actual: x_values.len() * y_values.len(),
        });
    }
    if !values.is_finite() || x_values.iter().chain(y_values).any(|v| !v.is_finite()) {
        return Err(Error::Domain("cannot plot non-finite heatmap values".into()));
    }
    let half = |v: &[f64]| {
        if v.len() > 1 {
            (v[v.len() - 1] - v[0]).abs() / (v.len() - 1) as f64 / 2.0
        } else {
            0.5
        }
    };
    let (hx, hy) = (half(x_values), half(y_values));
    let frame = Frame {
        x: Axis::fit(x_values.iter().flat_map(|&x| [x - hx, x + hx])),
        y: Axis::fit(y_values.iter().flat_map(|&y| [y - hy, y + hy])),
    };
    let data = values.as_slice();
    let lo = data.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };

    let mut svg = String::new();
    open(&mut svg, spec);
    let _ = writeln!(svg, r#"<g class="cells" shape-rendering="crispEdges">"#);
    for (i, &x) in x_values.iter().enumerate() {
        for (j, &y) in y_values.iter().enumerate() {
            let (x0, x1) = (frame.px(x - hx), frame.px(x + hx));
            let (y0, y1) = (frame.py(y + hy), frame.py(y - hy));
            let v = values.get(i, j);
            let _ = writeln!(
                svg,
                r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{}"><title>{}</title></rect>"#,
                num(x0.min(x1)),
                num(y0.min(y1)),
                num((x1 - x0).abs()),
                num((y1 - y0).abs()),
                ramp((v - lo) / span),
                num(v)
            );
        }
    }
    let _ = writeln!(svg, "</g>");
    axes(&mut svg, &frame, spec);
    let x = WIDTH - RIGHT + 16.0;
    let _ = writeln!(svg, r#"<g class="scale">"#);
    let _ = writeln!(
        svg,
        r##"<rect x="{}" y="{}" width="14" height="14" fill="{}" stroke="#333"/>"##,
        num(x),
        num(TOP),
        ramp(1.0)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}">max {}</text>"#,
        num(x + 20.0),
        num(TOP + 11.0),
        num(hi)
    );
    let _ = writeln!(
        svg,
        r##"<rect x="{}" y="{}" width="14" height="14" fill="{}" stroke="#333"/>"##,
        num(x),
        num(TOP + 22.0),
        ramp(0.0)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}">min {}</text>"#,
        num(x + 20.0),
        num(TOP + 33.0),
        num(lo)
    );
    let _ = writeln!(svg, "</g>");
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Causal-plane paths, one per layer, over the `y = x` nullcline. Both axes
/// share one range so the nullcline sits at 45°.
pub fn trajectory_svg(paths: &[Vec<CausalPlanePoint>], spec: &PlotSpec) -> Result<String> {
    if paths.is_empty() || paths.iter().any(|p| p.is_empty()) {
        return Err(Error::EmptyData("causal plane paths"));
    }
    let flat: Vec<(f64, f64)> = paths.iter().flatten().map(|p| (p.x, p.y)).collect();
    check_points(flat.iter())?;
    let axis = Axis::fit(flat.iter().flat_map(|&(x, y)| [x, y]).chain([0.0]));
    let frame = Frame { x: axis, y: axis };
    let mut svg = String::new();
    open(&mut svg, spec);
    axes(&mut svg, &frame, spec);
    let _ = writeln!(
        svg,
        r##"<line class="nullcline" x1="{}" y1="{}" x2="{}" y2="{}" stroke="#888" stroke-dasharray="6 4"/>"##,
        num(frame.px(axis.lo)),
        num(frame.py(axis.lo)),
        num(frame.px(axis.hi)),
        num(frame.py(axis.hi))
    );
    let mut names = Vec::with_capacity(paths.len());
    for (k, path) in paths.iter().enumerate() {
        let d: Vec<String> = path
            .iter()
            .enumerate()
            .map(|(i, p)| {
                format!(
                    "{}{},{}",
                    if i == 0 { 'M' } else { 'L' },
                    num(frame.px(p.x)),
                    num(frame.py(p.y))
                )
            })
            .collect();
        let color = PALETTE[k % PALETTE.len()];
        let name = format!("layer {}", path[0].layer_index);
        let _ = writeln!(
            svg,
            r#"<path fill="none" stroke="{color}" stroke-width="1.5" d="{}"><title>{name}</title></path>"#,
            d.join(" ")
        );
        let end = path.last().expect("non-empty path");
        let _ = writeln!(
            svg,
            r#"<circle cx="{}" cy="{}" r="3" fill="{color}"/>"#,
            num(frame.px(end.x)),
            num(frame.py(end.y))
        );
        names.push(name);
    }
    legend(&mut svg, &names.iter().map(String::as_str).collect::<Vec<_>>());
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn write(path: &Path, svg: String) -> Result<()> {
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}

pub fn emit_line_plot(series: &[Series], spec: &PlotSpec, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), line_plot_svg(series, spec)?)
}

pub fn emit_heatmap(
    values: &Matrix,
    x_values: &[f64],
    y_values: &[f64],
    spec: &PlotSpec,
    path: impl AsRef<Path>,
) -> Result<()> {
    write(path.as_ref(), heatmap_svg(values, x_values, y_values, spec)?)
}

pub fn emit_trajectory(paths: &[Vec<CausalPlanePoint>], spec: &PlotSpec, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), trajectory_svg(paths, spec)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> PlotSpec {
        PlotSpec::new("EI <w>", "w", "bits")
    }

    #[test]
    fn two_point_series_is_one_polyline() {
        let svg = line_plot_svg(&[Series::new("ei", vec![(0.0, 0.0), (1.0, 2.0)])], &spec()).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        let pts = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(pts.split_whitespace().count(), 2);
        assert!(svg.contains("EI &lt;w&gt;"));
    }

    #[test]
    fn output_is_deterministic() {
        let s = vec![
            Series::new("a", vec![(0.0, 1.0), (1.0, 0.5), (2.0, 0.25)]),
            Series::new("b", vec![(0.0, 0.0), (2.0, 1.0)]),
        ];
        assert_eq!(line_plot_svg(&s, &spec()).unwrap(), line_plot_svg(&s, &spec()).unwrap());
        assert_eq!(line_plot_svg(&s, &spec()).unwrap().matches("<polyline").count(), 2);
    }

    #[test]
    fn trajectory_has_paths_and_nullcline() {
        let paths: Vec<Vec<CausalPlanePoint>> = (0..3)
            .map(|l| {
                (0..4)
                    .map(|e| CausalPlanePoint {
                        layer_index: l,
                        epoch: e * 10,
                        x: 0.1 * e as f64,
                        y: 0.2 * (e + l) as f64,
                    })
                    .collect()
            })
            .collect();
        let svg = trajectory_svg(&paths, &spec()).unwrap();
        assert_eq!(svg.matches("<path").count(), 3);
        assert_eq!(svg.matches("class=\"nullcline\"").count(), 1);
        assert!(svg.contains("layer 2"));
    }

    #[test]
    fn heatmap_annotates_extremes() {
        let m = Matrix::from_rows(&[vec![0.0, 1.0], vec![2.0, 3.5]]).unwrap();
        let svg = heatmap_svg(&m, &[-1.0, 1.0], &[-1.0, 1.0], &spec()).unwrap();
        assert!(svg.contains("max 3.5") && svg.contains("min 0"));
        assert_eq!(svg.matches("<title>").count(), 4);
        assert!(svg.contains(&ramp(0.0)) && svg.contains(&ramp(1.0)));
    }

    #[test]
    fn empty_inputs_are_errors() {
        assert!(matches!(line_plot_svg(&[], &spec()), Err(Error::EmptyData(_))));
        assert!(matches!(
            line_plot_svg(&[Series::new("a", vec![])], &spec()),
            Err(Error::EmptyData(_))
        ));
        assert!(matches!(trajectory_svg(&[], &spec()), Err(Error::EmptyData(_))));
        assert!(matches!(
            heatmap_svg(&Matrix::zeros(0, 0), &[], &[], &spec()),
            Err(Error::EmptyData(_))
        ));
        assert!(line_plot_svg(&[Series::new("a", vec![(f64::NAN, 0.0)])], &spec()).is_err());
    }
}
