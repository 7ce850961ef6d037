//! Plane plots of a learned field with demonstrations and reproductions.

use std::fmt::Write as _;

use stable_ds_core::evaluation::FieldSample;

const WIDTH: f64 = 640.0;
const MARGIN: f64 = 16.0;

/// Everything drawn on one plot, in workspace units. Only 2-D data is drawn.
#[derive(Debug, Clone, Default)]
pub struct Scene<'a> {
    pub lower: [f64; 2],
    pub upper: [f64; 2],
    pub field: &'a [FieldSample],
    pub demos: Vec<&'a [Vec<f64>]>,
    pub reproductions: Vec<&'a [Vec<f64>]>,
    pub target: [f64; 2],
    pub title: String,
}

struct Frame {
    lower: [f64; 2],
    scale: f64,
    height: f64,
}

impl Frame {
    fn new(lower: [f64; 2], upper: [f64; 2]) -> Self {
        let span = [(upper[0] - lower[0]).max(1e-12), (upper[1] - lower[1]).max(1e-12)];
        let scale = (WIDTH - 2.0 * MARGIN) / span[0];
        Self {
            lower,
            scale,
            height: span[1] * scale + 2.0 * MARGIN,
        }
    }

    fn px(&self, p: &[f64]) -> (f64, f64) {
        (
            MARGIN + (p[0] - self.lower[0]) * self.scale,
            self.height - MARGIN - (p[1] - self.lower[1]) * self.scale,
        )
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn polyline(out: &mut String, frame: &Frame, points: &[Vec<f64>], style: &str) {
    if points.len() < 2 {
        return;
    }
    out.push_str("<polyline points=\"");
    for (i, p) in points.iter().enumerate() {
        let (x, y) = frame.px(p);
        let _ = write!(out, "{}{x:.2},{y:.2}", if i == 0 { "" } else { " " });
    }
    let _ = writeln!(out, "\" {style}/>");
}

pub fn render(scene: &Scene<'_>) -> String {
    let frame = Frame::new(scene.lower, scene.upper);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{h:.0}\" viewBox=\"0 0 {WIDTH} {h:.2}\">",
        h = frame.height
    );
    let _ = writeln!(out, "<title>{}</title>", escape(&scene.title));
    out.push_str(
        "<defs><marker id=\"head\" viewBox=\"0 0 6 6\" refX=\"5\" refY=\"3\" markerWidth=\"4\" markerHeight=\"4\" orient=\"auto\">\
         <path d=\"M0,0 L6,3 L0,6 z\" fill=\"#8fa3bf\"/></marker></defs>\n",
    );
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"#10141c\"/>\n");

    // arrows share one length so direction reads clearly; speed sets opacity
    let spacing = scene.field.len().max(1) as f64;
    let arrow = 0.6 * (WIDTH - 2.0 * MARGIN) / spacing.sqrt().max(2.0);
    let top = scene
        .field
        .iter()
        .filter_map(|s| s.velocity.as_ref())
        .map(|v| v.iter().map(|c| c * c).sum::<f64>().sqrt())
        .fold(0.0f64, f64::max);
    out.push_str("<g class=\"field\" stroke=\"#8fa3bf\" stroke-width=\"1\">\n");
    for s in scene.field {
        let Some(v) = &s.velocity else { continue };
        let (x, y) = frame.px(&s.x);
        let speed = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !(speed > 0.0) {
            continue;
        }
        let (dx, dy) = (arrow * v[0] / speed, -arrow * v[1] / speed);
        let _ = writeln!(
            out,
            "<line x1=\"{x:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke-opacity=\"{:.2}\" marker-end=\"url(#head)\"/>",
            x + dx,
            y + dy,
            0.35 + 0.65 * (speed / top.max(1e-300)).min(1.0)
        );
    }
    out.push_str("</g>\n<g class=\"demonstrations\">\n");
    for d in &scene.demos {
        polyline(&mut out, &frame, d, "fill=\"none\" stroke=\"#ffffff\" stroke-width=\"2\" stroke-dasharray=\"2 4\"");
    }
    out.push_str("</g>\n<g class=\"reproductions\">\n");
    for r in &scene.reproductions {
        polyline(&mut out, &frame, r, "fill=\"none\" stroke=\"#e5484d\" stroke-width=\"2\"");
    }
    out.push_str("</g>\n");
    let (tx, ty) = frame.px(&scene.target);
    let _ = writeln!(
        out,
        "<path class=\"target\" d=\"M{:.2},{:.2} L{:.2},{:.2} M{:.2},{:.2} L{:.2},{:.2}\" stroke=\"#ffd166\" stroke-width=\"3\"/>",
        tx - 7.0,
        ty - 7.0,
        tx + 7.0,
        ty + 7.0,
        tx - 7.0,
        ty + 7.0,
        tx + 7.0,
        ty - 7.0
    );
    out.push_str("</svg>\n");
    out
}
