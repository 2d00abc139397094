//! Self-contained SVG line and bar charts.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 32.0;
const BOTTOM: f64 = 48.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" style="font-family:sans-serif;font-size:11px">"#
    );
    let _ = write!(out, r#"<rect width="{W}" height="{H}" style="fill:#fff"/>"#);
    let _ = write!(out, r#"<text x="{}" y="20" style="text-anchor:middle;font-size:13px">{}</text>"#, W / 2.0, escape(title));
}

fn axes(out: &mut String, x_label: &str, y_label: &str, y_min: f64, y_max: f64) {
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    let _ = write!(out, r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" style="fill:none;stroke:#000"/>"#);
    for i in 0..=4 {
        let v = y_min + (y_max - y_min) * i as f64 / 4.0;
        let y = y0 - (y0 - y1) * i as f64 / 4.0;
        let _ = write!(out, r#"<text x="{}" y="{}" style="text-anchor:end">{}</text>"#, x0 - 4.0, y + 4.0, tick(v));
    }
    let _ = write!(out, r#"<text x="{}" y="{}" style="text-anchor:middle">{}</text>"#, (x0 + x1) / 2.0, H - 12.0, escape(x_label));
    let _ = write!(
        out,
        r#"<text x="14" y="{}" transform="rotate(-90 14 {})" style="text-anchor:middle">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e5) {
        format!("{v:.1e}")
    } else {
        format!("{:.3}", v).trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

pub struct Series<'a> {
    pub name: &'a str,
    pub points: &'a [(f64, f64)],
}

/// Line chart of several series sharing axes.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let all = series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        xmin = xmin.min(x);
        xmax = xmax.max(x);
        ymin = ymin.min(y);
        ymax = ymax.max(y);
    }
    if !xmin.is_finite() {
        (xmin, xmax, ymin, ymax) = (0.0, 1.0, 0.0, 1.0);
    }
    ymin = ymin.min(0.0);
    if xmax == xmin {
        xmax = xmin + 1.0;
    }
    if ymax == ymin {
        ymax = ymin + 1.0;
    }
    let sx = |x: f64| LEFT + (x - xmin) / (xmax - xmin) * (W - LEFT - RIGHT);
    let sy = |y: f64| H - BOTTOM - (y - ymin) / (ymax - ymin) * (H - TOP - BOTTOM);

    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, x_label, y_label, ymin, ymax);
    let _ = write!(out, r#"<text x="{LEFT}" y="{}">{}</text>"#, H - BOTTOM + 14.0, tick(xmin));
    let _ = write!(out, r#"<text x="{}" y="{}" style="text-anchor:end">{}</text>"#, W - RIGHT, H - BOTTOM + 14.0, tick(xmax));
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut d = String::new();
        for (j, &(x, y)) in s.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()).enumerate() {
            let _ = write!(d, "{}{:.2},{:.2} ", if j == 0 { "M" } else { "L" }, sx(x), sy(y));
        }
        let _ = write!(out, r#"<path d="{}" style="fill:none;stroke:{color};stroke-width:1.5"/>"#, d.trim_end());
        let ly = TOP + 12.0 * i as f64 + 8.0;
        let _ = write!(
            out,
            r#"<rect x="{}" y="{}" width="10" height="3" style="fill:{color}"/><text x="{}" y="{}">{}</text>"#,
            W - RIGHT - 150.0,
            ly - 3.0,
            W - RIGHT - 136.0,
            ly,
            escape(s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Vertical bar chart with one bar per label.
pub fn bar_chart(title: &str, y_label: &str, bars: &[(String, f64)]) -> String {
    let ymax = bars.iter().map(|b| b.1).fold(0.0f64, f64::max).max(1e-12);
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, "", y_label, 0.0, ymax);
    let slot = (W - LEFT - RIGHT) / bars.len().max(1) as f64;
    for (i, (label, v)) in bars.iter().enumerate() {
        let h = v.max(0.0) / ymax * (H - TOP - BOTTOM);
        let x = LEFT + slot * i as f64 + slot * 0.1;
        let _ = write!(
            out,
            r#"<rect x="{x:.2}" y="{:.2}" width="{:.2}" height="{h:.2}" style="fill:{}"/>"#,
            H - BOTTOM - h,
            slot * 0.8,
            PALETTE[0]
        );
        let _ = write!(
            out,
            r#"<text x="{:.2}" y="{}" style="text-anchor:middle">{}</text>"#,
            x + slot * 0.4,
            H - BOTTOM + 14.0,
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}
