//! Minimal SVG line plots: stacked panels sharing the time axis.

use std::fmt::Write;

const WIDTH: f64 = 900.0;
const PANEL_HEIGHT: f64 = 220.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 60.0;
const PANEL_GAP: f64 = 50.0;
const MAX_POINTS: usize = 4000;

pub const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#7f7f7f"];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub color: &'static str,
    pub dashed: bool,
}

impl Series {
    pub fn new(label: impl Into<String>, x: Vec<f64>, y: Vec<f64>, color: &'static str) -> Self {
        Series { label: label.into(), x, y, color, dashed: false }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

#[derive(Debug, Clone, Default)]
pub struct Panel {
    pub title: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

impl Panel {
    pub fn new(title: impl Into<String>, y_label: impl Into<String>) -> Self {
        Panel { title: title.into(), y_label: y_label.into(), series: Vec::new() }
    }

    pub fn with(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }
}

#[derive(Debug, Clone, Default)]
pub struct Figure {
    pub title: String,
    pub x_label: String,
    pub panels: Vec<Panel>,
}

/// Round tick step near `span / 5`.
fn tick_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let nice = if norm < 1.5 {
        1.0
    } else if norm < 3.5 {
        2.0
    } else if norm < 7.5 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn fmt_tick(v: f64, step: f64) -> String {
    let digits = (-step.log10().floor()).max(0.0) as usize;
    let s = format!("{v:.digits$}");
    if s == "-0" { "0".into() } else { s }
}

fn bounds<'a>(it: impl Iterator<Item = &'a f64>) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in it.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo > hi {
        return None;
    }
    if hi - lo < 1e-12 * hi.abs().max(1.0) {
        let pad = 0.5 * hi.abs().max(1e-9);
        return Some((lo - pad, hi + pad));
    }
    let pad = 0.05 * (hi - lo);
    Some((lo - pad, hi + pad))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Figure {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>) -> Self {
        Figure { title: title.into(), x_label: x_label.into(), panels: Vec::new() }
    }

    pub fn with(mut self, p: Panel) -> Self {
        self.panels.push(p);
        self
    }

    pub fn to_svg(&self) -> String {
        let n = self.panels.len().max(1) as f64;
        let height = MARGIN_TOP + n * (PANEL_HEIGHT + PANEL_GAP) + 10.0;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="16">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let xs = self.panels.iter().flat_map(|p| p.series.iter().flat_map(|s| s.x.iter()));
        let (x0, x1) = bounds(xs).unwrap_or((0.0, 1.0));
        for (i, p) in self.panels.iter().enumerate() {
            let top = MARGIN_TOP + i as f64 * (PANEL_HEIGHT + PANEL_GAP);
            self.panel(&mut s, p, top, (x0, x1));
        }
        s.push_str("</svg>\n");
        s
    }

    fn panel(&self, s: &mut String, p: &Panel, top: f64, (x0, x1): (f64, f64)) {
        let left = MARGIN_LEFT;
        let w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let h = PANEL_HEIGHT;
        let (y0, y1) = bounds(p.series.iter().flat_map(|s| s.y.iter())).unwrap_or((-1.0, 1.0));
        let px = |x: f64| left + (x - x0) / (x1 - x0) * w;
        let py = |y: f64| top + h - (y - y0) / (y1 - y0) * h;

        let _ = writeln!(
            s,
            r#"<rect x="{left}" y="{top}" width="{w}" height="{h}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">{}</text>"#,
            left + w / 2.0,
            top - 6.0,
            escape(&p.title)
        );
        let xstep = tick_step(x1 - x0);
        let mut t = (x0 / xstep).ceil() * xstep;
        while t <= x1 {
            let x = px(t);
            let _ = writeln!(
                s,
                r##"<line x1="{x:.1}" y1="{top}" x2="{x:.1}" y2="{}" stroke="#e0e0e0"/><text x="{x:.1}" y="{}" text-anchor="middle">{}</text>"##,
                top + h,
                top + h + 15.0,
                fmt_tick(t, xstep)
            );
            t += xstep;
        }
        let ystep = tick_step(y1 - y0);
        let mut v = (y0 / ystep).ceil() * ystep;
        while v <= y1 {
            let y = py(v);
            let _ = writeln!(
                s,
                r##"<line x1="{left}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#e0e0e0"/><text x="{}" y="{:.1}" text-anchor="end">{}</text>"##,
                left + w,
                left - 5.0,
                y + 4.0,
                fmt_tick(v, ystep)
            );
            v += ystep;
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            left + w / 2.0,
            top + h + 32.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{y}" text-anchor="middle" transform="rotate(-90 16 {y})">{}</text>"#,
            escape(&p.y_label),
            y = top + h / 2.0
        );

        for (k, series) in p.series.iter().enumerate() {
            let stride = (series.x.len() / MAX_POINTS).max(1);
            let mut pts = String::new();
            for (x, y) in series.x.iter().zip(&series.y).step_by(stride) {
                if x.is_finite() && y.is_finite() {
                    let _ = write!(pts, "{:.1},{:.1} ", px(*x), py(*y));
                }
            }
            let dash = if series.dashed { r#" stroke-dasharray="6,4""# } else { "" };
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{}" stroke-width="1.3"{dash} points="{}"/>"#,
                series.color,
                pts.trim_end()
            );
            let ly = top + 14.0 + 16.0 * k as f64;
            let lx = left + w + 10.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="2"{dash}/><text x="{}" y="{}">{}</text>"#,
                lx + 22.0,
                series.color,
                lx + 27.0,
                ly + 4.0,
                escape(&series.label)
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round() {
        assert_eq!(tick_step(100.0), 20.0);
        assert_eq!(tick_step(1.0), 0.2);
        assert!((tick_step(0.03) - 0.005).abs() < 1e-15);
        assert_eq!(fmt_tick(-0.0, 1.0), "0");
    }

    #[test]
    fn svg_has_one_polyline_per_series() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let fig = Figure::new("t", "time").with(
            Panel::new("a", "y")
                .with(Series::new("one", x.clone(), x.clone(), PALETTE[0]))
                .with(Series::new("two <b>", x.clone(), vec![3.0; 10], PALETTE[1]).dashed()),
        );
        let svg = fig.to_svg();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("two &lt;b&gt;"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn non_finite_points_skipped() {
        let fig = Figure::new("t", "x").with(Panel::new("p", "y").with(Series::new(
            "s",
            vec![0.0, 1.0, 2.0],
            vec![0.0, f64::NAN, 1.0],
            PALETTE[0],
        )));
        assert!(!fig.to_svg().contains("NaN"));
    }
}
