//! Minimal SVG 1.1 writer for the two figures.

use std::fmt::Write as _;

use crate::partition::Partition;
use crate::torus::PlanarPoint;

const SIZE: f64 = 520.0;
const MARGIN: f64 = 40.0;
const MAX_POLYLINE_POINTS: usize = 2000;
const PALETTE: [&str; 8] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"];

struct Canvas {
    body: String,
    x_range: (f64, f64),
    y_range: (f64, f64),
}

impl Canvas {
    fn new(x_range: (f64, f64), y_range: (f64, f64)) -> Self {
        Self { body: String::new(), x_range, y_range }
    }

    fn px(&self, q: PlanarPoint) -> (f64, f64) {
        let span = SIZE - 2.0 * MARGIN;
        let sx = (q.x - self.x_range.0) / (self.x_range.1 - self.x_range.0);
        let sy = (q.y - self.y_range.0) / (self.y_range.1 - self.y_range.0);
        (MARGIN + sx * span, SIZE - MARGIN - sy * span)
    }

    fn polyline(&mut self, points: &[PlanarPoint], stroke: &str, width: f64, clip: bool) {
        if points.is_empty() {
            return;
        }
        let step = points.len().div_ceil(MAX_POLYLINE_POINTS).max(1);
        let mut coords = String::new();
        let push = |q: PlanarPoint, out: &mut String| {
            let (x, y) = self.px(q);
            let _ = write!(out, "{x:.2},{y:.2} ");
        };
        for q in points.iter().step_by(step) {
            push(*q, &mut coords);
        }
        if (points.len() - 1) % step != 0 {
            push(points[points.len() - 1], &mut coords);
        }
        let clip_attr = if clip { " clip-path=\"url(#frame)\"" } else { "" };
        let _ = writeln!(
            self.body,
            "<polyline fill=\"none\" stroke=\"{stroke}\" stroke-width=\"{width}\"{clip_attr} points=\"{}\"/>",
            coords.trim_end()
        );
    }

    fn marker(&mut self, q: PlanarPoint, label: &str) {
        let (x, y) = self.px(q);
        let _ = writeln!(self.body, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3.5\" fill=\"black\"/>");
        let _ = writeln!(self.body, "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"13\">{label}</text>", x + 5.0, y - 5.0);
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str) {
        let _ = writeln!(self.body, "<text x=\"{x:.2}\" y=\"{y:.2}\" font-size=\"12\" text-anchor=\"{anchor}\">{s}</text>");
    }

    fn finish(self, title: &str) -> String {
        let inner = SIZE - 2.0 * MARGIN;
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
             <svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n\
             <title>{title}</title>\n\
             <defs><clipPath id=\"frame\"><rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{inner}\" height=\"{inner}\"/></clipPath></defs>\n\
             <rect x=\"0\" y=\"0\" width=\"{SIZE}\" height=\"{SIZE}\" fill=\"white\"/>\n\
             <rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{inner}\" height=\"{inner}\" fill=\"none\" stroke=\"black\"/>\n\
             {}</svg>\n",
            self.body
        )
    }
}

/// The unit square with the four boundary curves and the vertices.
pub fn partition_svg(partition: &Partition) -> String {
    let mut c = Canvas::new((0.0, 1.0), (0.0, 1.0));
    c.polyline(&partition.l00().points, PALETTE[0], 1.5, true);
    c.polyline(&partition.l01().points, PALETTE[1], 1.5, true);
    c.polyline(&partition.l11().points, PALETTE[2], 1.5, true);
    c.polyline(&partition.extension().points, PALETTE[3], 1.5, true);
    c.marker(PlanarPoint::new(0.0, 0.0), "p0");
    for (i, v) in partition.vertices().iter().enumerate() {
        c.marker(*v, &format!("p{}", i + 1));
    }
    c.text(SIZE / 2.0, MARGIN - 12.0, "middle", &format!("Markov partition, p = {}", partition.p()));
    c.finish(&format!("partition p={}", partition.p()))
}

/// One curve of `(p, value)` pairs.
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// `m1_exact` against `p` overlaid with the per-β Birkhoff averages.
pub fn foliation_svg(m1: &Series, averages: &[Series]) -> String {
    let values = m1.points.iter().chain(averages.iter().flat_map(|s| s.points.iter())).map(|q| q.1);
    let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() || !hi.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.08).max(1e-4);
    let mut c = Canvas::new((0.0, 1.0), (lo - pad, hi + pad));
    for (i, s) in averages.iter().enumerate() {
        let pts: Vec<PlanarPoint> = s.points.iter().map(|&(x, y)| PlanarPoint::new(x, y)).collect();
        c.polyline(&pts, PALETTE[i % PALETTE.len()], 1.0, true);
    }
    let pts: Vec<PlanarPoint> = m1.points.iter().map(|&(x, y)| PlanarPoint::new(x, y)).collect();
    c.polyline(&pts, "black", 2.5, true);
    c.text(SIZE / 2.0, SIZE - 10.0, "middle", "p");
    c.text(MARGIN, SIZE - MARGIN + 16.0, "middle", "0");
    c.text(SIZE - MARGIN, SIZE - MARGIN + 16.0, "middle", "1");
    c.text(MARGIN - 4.0, MARGIN + 4.0, "end", &format!("{:.4}", hi + pad));
    c.text(MARGIN - 4.0, SIZE - MARGIN, "end", &format!("{:.4}", lo - pad));
    c.text(SIZE / 2.0, MARGIN - 12.0, "middle", &format!("{} (thick) and Birkhoff averages along curves", m1.label));
    c.finish("foliation averages")
}
