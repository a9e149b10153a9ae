//! CSV tables and SVG line plots.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

/// Full-precision decimal: 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// [`num`] or `NA` for a missing value.
pub fn opt_num(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), num)
}

/// In-memory CSV table with a header row.
#[derive(Debug, Clone)]
pub struct Table {
    text: String,
    columns: usize,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            text: format!("{}\n", header.join(",")),
            columns: header.len(),
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        debug_assert_eq!(fields.len(), self.columns);
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        fs::write(path, &self.text)
    }
}

/// One polyline; `None` values break the line.
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, Option<f64>)>,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 64.0;
const COLOURS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Static SVG line chart; the x axis is logarithmic when `log_x`.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series], log_x: bool) -> String {
    let tx = |x: f64| if log_x { x.log10() } else { x };
    let finite: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().filter_map(|&(x, y)| Some((tx(x), y?))))
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    let (x0, x1) = bounds(finite.iter().map(|p| p.0));
    let (y0, y1) = bounds(finite.iter().map(|p| p.1));
    let px = |x: f64| MARGIN + (tx(x) - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<path d="M{m} {m} V{b} H{r}" fill="none" stroke="black"/>"#,
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let label = if log_x { 10f64.powf(xv) } else { xv };
        let sx = MARGIN + f * (WIDTH - 2.0 * MARGIN);
        let _ = writeln!(
            svg,
            r#"<text x="{sx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            HEIGHT - MARGIN + 18.0,
            tick(label)
        );
        let yv = y0 + f * (y1 - y0);
        let sy = HEIGHT - MARGIN - f * (HEIGHT - 2.0 * MARGIN);
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            MARGIN - 6.0,
            sy + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 16.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    for (k, s) in series.iter().enumerate() {
        let colour = COLOURS[k % COLOURS.len()];
        let mut d = String::new();
        let mut pen_down = false;
        for &(x, y) in &s.points {
            match y.filter(|v| v.is_finite()) {
                Some(y) => {
                    let _ = write!(d, "{}{:.2} {:.2} ", if pen_down { "L" } else { "M" }, px(x), py(y));
                    pen_down = true;
                }
                None => pen_down = false,
            }
        }
        let _ = writeln!(
            svg,
            r#"<path d="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#,
            d.trim_end()
        );
        let ly = MARGIN + 16.0 * k as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{colour}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            WIDTH - MARGIN - 120.0,
            WIDTH - MARGIN - 100.0,
            WIDTH - MARGIN - 94.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
