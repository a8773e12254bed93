//! Minimal SVG line and step plots.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const PAD: f64 = 56.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Markers,
    Lines,
    Steps,
}

pub struct Plot<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub style: Style,
    /// Horizontal reference line, e.g. the threshold.
    pub h_line: Option<f64>,
    /// Vertical reference line, e.g. the critical flux.
    pub v_line: Option<f64>,
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * (1.0 + lo.abs()) {
        return (lo - 0.5, hi + 0.5);
    }
    let m = 0.05 * (hi - lo);
    (lo - m, hi + m)
}

impl Plot<'_> {
    pub fn render(&self, series: &[Series]) -> String {
        let all = || series.iter().flat_map(|s| s.points.iter());
        let (x0, x1) = range(all().map(|p| p.0).chain(self.v_line));
        let (y0, y1) = range(all().map(|p| p.1).chain(self.h_line));
        let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
        let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            W - 2.0 * PAD,
            H - 2.0 * PAD
        );
        let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, esc(self.title));
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, esc(self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            esc(self.y_label)
        );
        for i in 0..=4 {
            let fx = x0 + (x1 - x0) * i as f64 / 4.0;
            let fy = y0 + (y1 - y0) * i as f64 / 4.0;
            let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, sx(fx), H - PAD + 16.0, tick(fx));
            let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, PAD - 4.0, sy(fy) + 4.0, tick(fy));
        }
        if let Some(h) = self.h_line {
            let _ = writeln!(
                s,
                r##"<line x1="{PAD}" x2="{}" y1="{y:.1}" y2="{y:.1}" stroke="#888" stroke-dasharray="4 3"/>"##,
                W - PAD,
                y = sy(h)
            );
        }
        if let Some(v) = self.v_line {
            let _ = writeln!(
                s,
                r##"<line x1="{x:.1}" x2="{x:.1}" y1="{PAD}" y2="{}" stroke="#888" stroke-dasharray="4 3"/>"##,
                H - PAD,
                x = sx(v)
            );
        }
        for (i, ser) in series.iter().enumerate() {
            let c = COLORS[i % COLORS.len()];
            match self.style {
                Style::Markers => {
                    for &(x, y) in &ser.points {
                        let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{c}"/>"#, sx(x), sy(y));
                    }
                }
                Style::Lines | Style::Steps => {
                    let mut d = String::new();
                    for (j, &(x, y)) in ser.points.iter().enumerate() {
                        if j == 0 {
                            let _ = write!(d, "M{:.1} {:.1}", sx(x), sy(y));
                        } else {
                            if self.style == Style::Steps {
                                let _ = write!(d, " H{:.1}", sx(x));
                            }
                            let _ = write!(d, " L{:.1} {:.1}", sx(x), sy(y));
                        }
                    }
                    let _ = writeln!(s, r#"<path d="{d}" fill="none" stroke="{c}" stroke-width="1.5"/>"#);
                }
            }
            let ly = PAD + 16.0 + 16.0 * i as f64;
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{ly}" text-anchor="end" fill="{c}">{}</text>"#,
                W - PAD - 8.0,
                esc(&ser.label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e4).contains(&a) {
        format!("{v:.2e}")
    } else {
        format!("{v:.4}")
    }
}

fn esc(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
