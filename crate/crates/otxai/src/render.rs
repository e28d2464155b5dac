//! SVG figures of 2-D networks and PGM images of attribution maps.

use std::fmt::Write as _;

use otxai_core::attribution::boundary_point;
use otxai_core::contour::{BBox, Polyline};
use otxai_core::data::Dataset;
use otxai_core::metrics::quantize;
use otxai_core::verify::level_set;
use otxai_core::{LipNet, Score};

use crate::error::{Error, Result};

const SIZE: f64 = 600.0;
const CLASS_COLORS: [&str; 2] = ["#1f77b4", "#ff7f0e"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotOptions {
    /// Thin contours at evenly spaced non-zero levels.
    pub levelsets: bool,
    /// `[x, x_δ]` segment per data point.
    pub segments: bool,
    /// Grid nodes per axis for the contours.
    pub resolution: usize,
    /// Non-zero levels drawn on each side of the boundary.
    pub levels_per_side: usize,
}

impl Default for PlotOptions {
    fn default() -> Self {
        PlotOptions {
            levelsets: true,
            segments: true,
            resolution: 200,
            levels_per_side: 4,
        }
    }
}

impl PlotOptions {
    /// Parses a comma-separated subset of `levelsets,segments`.
    pub fn with_layers(spec: &str) -> Result<Self> {
        let mut opts = PlotOptions {
            levelsets: false,
            segments: false,
            ..PlotOptions::default()
        };
        for layer in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match layer {
                "levelsets" => opts.levelsets = true,
                "segments" => opts.segments = true,
                other => {
                    return Err(Error::Usage(format!(
                        "unknown plot layer `{other}` (expected levelsets, segments)"
                    )))
                }
            }
        }
        Ok(opts)
    }
}

/// Square box around the data with a 10% margin.
pub fn data_bbox(data: &Dataset) -> Result<BBox> {
    if data.meta.d != 2 || data.is_empty() {
        return Err(Error::Usage("plots need a non-empty 2-D dataset".into()));
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for i in 0..data.len() {
        for (k, &v) in data.input(i).iter().enumerate() {
            lo[k] = lo[k].min(v);
            hi[k] = hi[k].max(v);
        }
    }
    let half = 0.55 * (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
    let c = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    Ok(BBox::new(c[0] - half, c[0] + half, c[1] - half, c[1] + half)?)
}

struct Canvas {
    bbox: BBox,
}

impl Canvas {
    fn px(&self, p: &[f64]) -> (f64, f64) {
        let b = &self.bbox;
        (
            SIZE * (p[0] - b.x_min) / (b.x_max - b.x_min),
            SIZE * (b.y_max - p[1]) / (b.y_max - b.y_min),
        )
    }

    fn polyline(&self, out: &mut String, line: &Polyline, style: &str) {
        let mut pts: Vec<&[f64; 2]> = line.points.iter().collect();
        if line.closed {
            pts.extend(line.points.first());
        }
        let coords: Vec<String> = pts
            .iter()
            .map(|p| {
                let (x, y) = self.px(&p[..]);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(out, r#"<polyline points="{}" {style}/>"#, coords.join(" "));
    }
}

/// Decision-boundary figure of a single-output 2-D network: class-colored
/// points, the dashed red 0-level set, optional level sets and `[x, x_δ]`
/// segments.
pub fn boundary_figure(net: &LipNet, data: &Dataset, opts: &PlotOptions) -> Result<String> {
    if net.out_dim() != 1 {
        return Err(Error::Usage("plots need a single-output network".into()));
    }
    let score = Score::Output(0);
    let bbox = data_bbox(data)?;
    let canvas = Canvas { bbox };
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{SIZE}" height="{SIZE}" fill="white"/>"#);

    if opts.levelsets {
        let max_abs = (0..data.len())
            .map(|i| net.forward_batch(data.input(i)).map(|s| s[0].abs()))
            .try_fold(0.0f64, |m, v| v.map(|v| m.max(v)))?;
        let step = max_abs / (opts.levels_per_side as f64 + 1.0);
        let _ = writeln!(svg, r#"<g id="levelsets">"#);
        for k in 1..=opts.levels_per_side {
            for level in [k as f64 * step, -(k as f64) * step] {
                for line in level_set(net, score, &bbox, opts.resolution, level)? {
                    canvas.polyline(&mut svg, &line, r##"fill="none" stroke="#999999" stroke-width="0.6""##);
                }
            }
        }
        let _ = writeln!(svg, "</g>");
    }

    let _ = writeln!(svg, r#"<g id="points">"#);
    for i in 0..data.len() {
        let (x, y) = canvas.px(data.input(i));
        let color = CLASS_COLORS[data.labels[i].min(1)];
        let _ = writeln!(svg, r#"<circle cx="{x:.2}" cy="{y:.2}" r="1.5" fill="{color}"/>"#);
    }
    let _ = writeln!(svg, "</g>");

    if opts.segments {
        let _ = writeln!(svg, r#"<g id="segments" stroke="black" stroke-width="0.5">"#);
        for i in 0..data.len() {
            let path = boundary_point(net, data.input(i), score)?;
            let (x1, y1) = canvas.px(&path.origin);
            let (x2, y2) = canvas.px(&path.endpoint);
            let _ = writeln!(svg, r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}"/>"#);
        }
        let _ = writeln!(svg, "</g>");
    }

    let _ = writeln!(svg, r#"<g id="boundary">"#);
    for line in level_set(net, score, &bbox, opts.resolution, 0.0)? {
        canvas.polyline(
            &mut svg,
            &line,
            r#"fill="none" stroke="red" stroke-width="2" stroke-dasharray="6,4""#,
        );
    }
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(svg, "</svg>");
    Ok(svg)
}

/// Binary PGM (P5) of `|values|` scaled so the largest magnitude is 255.
pub fn pgm(values: &[f64], height: usize, width: usize) -> Result<Vec<u8>> {
    if values.len() != height * width {
        return Err(Error::Usage(format!(
            "{} values do not fill a {height}x{width} image",
            values.len()
        )));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(quantize(values));
    Ok(out)
}
