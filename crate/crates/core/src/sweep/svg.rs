//! Just enough SVG to draw line and grouped-bar charts.

use std::fmt::Write;

const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

pub fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

#[derive(Debug, Clone)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub series: Vec<Series>,
    /// Horizontal reference lines `(y, label)`.
    pub hlines: Vec<(f64, String)>,
    pub note: Option<String>,
}

#[derive(Debug, Clone)]
pub struct BarChart {
    pub title: String,
    pub y_label: String,
    pub categories: Vec<String>,
    /// One entry per group; each holds one value per category.
    pub groups: Vec<(String, Vec<f64>)>,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">
<rect width="{W}" height="{H}" fill="white"/>
<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>
"#,
        W / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str, log_x: bool, x_ticks: bool) {
    let (l, r, t, b) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(
        out,
        r#"<path d="M{l} {t} L{l} {b} L{r} {b}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let y = f.y0 + (f.y1 - f.y0) * i as f64 / 4.0;
        let py = f.py(y);
        let _ = writeln!(
            out,
            r##"<line x1="{l}" y1="{py:.1}" x2="{r}" y2="{py:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">{}</text>"##,
            l - 6.0,
            py + 4.0,
            tick(y)
        );
    }
    if x_ticks {
        for i in 0..=4 {
            let x = f.x0 + (f.x1 - f.x0) * i as f64 / 4.0;
            let label = if log_x { format!("1e{x:.1}") } else { tick(x) };
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{}" text-anchor="middle">{label}</text>"#,
                f.px(x),
                b + 18.0
            );
        }
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (l + r) / 2.0,
        H - 16.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        (t + b) / 2.0,
        (t + b) / 2.0,
        escape(y_label)
    );
}

fn tick(v: f64) -> String {
    if v.abs() >= 1000.0 || (v != 0.0 && v.abs() < 0.01) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

fn legend(out: &mut String, entries: &[(String, &str, bool)]) {
    for (i, (name, colour, dashed)) in entries.iter().enumerate() {
        let y = TOP + 14.0 + 18.0 * i as f64;
        let x = W - RIGHT + 14.0;
        let dash = if *dashed { r#" stroke-dasharray="5 3""# } else { "" };
        let _ = writeln!(
            out,
            r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{colour}" stroke-width="2"{dash}/><text x="{}" y="{}">{}</text>"#,
            x + 22.0,
            x + 28.0,
            y + 4.0,
            escape(name)
        );
    }
}

fn empty_note(out: &mut String) {
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle" fill="grey">no data</text>"#,
        W / 2.0,
        H / 2.0
    );
}

impl LineChart {
    pub fn render(&self) -> String {
        let tx = |x: f64| if self.log_x { x.max(1.0).log10() } else { x };
        let pts: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().map(|&(x, y)| (tx(x), y)))
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .collect();
        let mut out = String::new();
        header(&mut out, &self.title);
        let ys = pts.iter().map(|p| p.1).chain(self.hlines.iter().map(|h| h.0));
        let (y0, y1) = padded(
            ys.clone().fold(f64::INFINITY, f64::min),
            ys.fold(f64::NEG_INFINITY, f64::max),
        );
        let (x0, x1) = padded(
            pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min),
            pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max),
        );
        let f = Frame { x0, x1, y0, y1 };
        axes(&mut out, &f, &self.x_label, &self.y_label, self.log_x, !pts.is_empty());
        if pts.is_empty() {
            empty_note(&mut out);
        }
        for (y, label) in &self.hlines {
            let py = f.py(*y);
            let _ = writeln!(
                out,
                r##"<line x1="{LEFT}" y1="{py:.1}" x2="{}" y2="{py:.1}" stroke="#888" stroke-dasharray="2 3"/><text x="{}" y="{:.1}" fill="#666" text-anchor="end">{}</text>"##,
                W - RIGHT,
                W - RIGHT - 4.0,
                py - 4.0,
                escape(label)
            );
        }
        let mut entries = Vec::new();
        for (i, s) in self.series.iter().enumerate() {
            let colour = PALETTE[i % PALETTE.len()];
            let path: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y)| (tx(x), y))
                .filter(|p| p.0.is_finite() && p.1.is_finite())
                .enumerate()
                .map(|(j, (x, y))| format!("{}{:.1} {:.1}", if j == 0 { "M" } else { "L" }, f.px(x), f.py(y)))
                .collect();
            if path.is_empty() {
                continue;
            }
            let dash = if s.dashed { r#" stroke-dasharray="5 3""# } else { "" };
            let _ = writeln!(
                out,
                r#"<path d="{}" fill="none" stroke="{colour}" stroke-width="2"{dash}/>"#,
                path.join(" ")
            );
            entries.push((s.name.clone(), colour, s.dashed));
        }
        legend(&mut out, &entries);
        if let Some(note) = &self.note {
            let _ = writeln!(
                out,
                r##"<text x="{LEFT}" y="{}" fill="#555" font-size="10">{}</text>"##,
                H - 2.0,
                escape(note)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

impl BarChart {
    pub fn render(&self) -> String {
        let mut out = String::new();
        header(&mut out, &self.title);
        let vals: Vec<f64> = self.groups.iter().flat_map(|g| g.1.iter().copied()).filter(|v| v.is_finite()).collect();
        let (y0, y1) = padded(
            vals.iter().copied().fold(0.0, f64::min),
            vals.iter().copied().fold(0.0, f64::max),
        );
        let n_cat = self.categories.len().max(1) as f64;
        let f = Frame { x0: 0.0, x1: n_cat, y0, y1 };
        axes(&mut out, &f, "", &self.y_label, false, false);
        if vals.is_empty() {
            empty_note(&mut out);
        }
        let n_groups = self.groups.len().max(1) as f64;
        let slot = (f.px(1.0) - f.px(0.0)) * 0.8 / n_groups;
        for (c, cat) in self.categories.iter().enumerate() {
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
                f.px(c as f64 + 0.5),
                H - BOTTOM + 18.0,
                escape(cat)
            );
        }
        let mut entries = Vec::new();
        for (g, (name, values)) in self.groups.iter().enumerate() {
            let colour = PALETTE[g % PALETTE.len()];
            for (c, &v) in values.iter().enumerate() {
                if !v.is_finite() {
                    continue;
                }
                let x = f.px(c as f64 + 0.1) + slot * g as f64;
                let (ya, yb) = (f.py(v.max(0.0)), f.py(v.min(0.0)));
                let _ = writeln!(
                    out,
                    r#"<rect x="{x:.1}" y="{ya:.1}" width="{:.1}" height="{:.1}" fill="{colour}"/>"#,
                    slot * 0.9,
                    (yb - ya).max(0.5)
                );
            }
            entries.push((name.clone(), colour, false));
        }
        legend(&mut out, &entries);
        out.push_str("</svg>\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_are_escaped() {
        let chart = LineChart {
            title: "a < b & c".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            log_x: true,
            series: vec![Series {
                name: "\"q\"".into(),
                points: vec![(0.0, 1.0), (10.0, 2.0)],
                dashed: false,
            }],
            hlines: vec![],
            note: None,
        };
        let svg = chart.render();
        assert!(svg.contains("a &lt; b &amp; c"));
        assert!(svg.contains("&quot;q&quot;"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
