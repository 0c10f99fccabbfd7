//! Minimal self-contained SVG line charts.

use std::fmt::Write;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dash {
    Solid,
    Dashed,
    DashDot,
    Dotted,
}

impl Dash {
    fn attr(self) -> &'static str {
        match self {
            Dash::Solid => "",
            Dash::Dashed => r#" stroke-dasharray="8 5""#,
            Dash::DashDot => r#" stroke-dasharray="9 4 2 4""#,
            Dash::Dotted => r#" stroke-dasharray="2 3""#,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub color: String,
    pub dash: Dash,
    pub width: f64,
}

#[derive(Debug, Clone)]
pub struct Figure {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub width: u32,
    pub height: u32,
    pub series: Vec<Series>,
}

pub const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

const LEFT: f64 = 78.0;
const RIGHT: f64 = 18.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 52.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn nice_step(range: f64, target: usize) -> f64 {
    let raw = range / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let step = if norm < 1.5 {
        1.0
    } else if norm < 3.0 {
        2.0
    } else if norm < 7.0 {
        5.0
    } else {
        10.0
    };
    step * mag
}

fn linear_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let step = nice_step(hi - lo, 6);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e5).contains(&a) {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    } else {
        format!("{v:.0e}")
    }
}

impl Figure {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>, log_y: bool) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            log_y,
            width: 720,
            height: 480,
            series: Vec::new(),
        }
    }

    fn usable(&self, y: f64) -> bool {
        y.is_finite() && (!self.log_y || y > 0.0)
    }

    fn ranges(&self) -> Option<((f64, f64), (f64, f64))> {
        let mut xr = (f64::INFINITY, f64::NEG_INFINITY);
        let mut yr = (f64::INFINITY, f64::NEG_INFINITY);
        for s in &self.series {
            for &(x, y) in &s.points {
                if x.is_finite() && self.usable(y) {
                    xr = (xr.0.min(x), xr.1.max(x));
                    yr = (yr.0.min(y), yr.1.max(y));
                }
            }
        }
        if !xr.0.is_finite() {
            return None;
        }
        if xr.0 == xr.1 {
            xr = (xr.0 - 0.5, xr.1 + 0.5);
        }
        if self.log_y {
            let lo = yr.0.log10().floor();
            let mut hi = yr.1.log10().ceil();
            if hi <= lo {
                hi = lo + 1.0;
            }
            yr = (lo, hi);
        } else {
            if yr.0 == yr.1 {
                yr = (yr.0 - 1.0, yr.1 + 1.0);
            }
            let pad = 0.05 * (yr.1 - yr.0);
            yr = (yr.0 - pad, yr.1 + pad);
        }
        Some((xr, yr))
    }

    pub fn render(&self) -> Result<String, CliError> {
        let Some(((x0, x1), (y0, y1))) = self.ranges() else {
            return Err(CliError::Runtime(format!("nothing to plot in '{}'", self.title)));
        };
        let (w, h) = (self.width as f64, self.height as f64);
        let (pw, ph) = (w - LEFT - RIGHT, h - TOP - BOTTOM);
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let ty = |y: f64| if self.log_y { y.log10() } else { y };
        let sy = |y: f64| TOP + ph - (ty(y) - y0) / (y1 - y0) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            w / 2.0,
            escape(&self.title)
        );

        for x in linear_ticks(x0, x1) {
            let px = sx(x);
            let _ = writeln!(
                s,
                r##"<line x1="{px:.2}" y1="{TOP}" x2="{px:.2}" y2="{:.2}" stroke="#e6e6e6"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
                TOP + ph,
                TOP + ph + 16.0,
                tick_label(x)
            );
        }
        let y_ticks: Vec<f64> = if self.log_y {
            let decades = (y1 - y0) as i64;
            let every = (decades / 8 + 1).max(1);
            (y0 as i64..=y1 as i64).filter(|e| (e - y0 as i64) % every == 0).map(|e| 10f64.powi(e as i32)).collect()
        } else {
            linear_ticks(y0, y1)
        };
        for y in y_ticks {
            let py = sy(y);
            let label = if self.log_y { format!("1e{}", y.log10().round() as i64) } else { tick_label(y) };
            let _ = writeln!(
                s,
                r##"<line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#e6e6e6"/><text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"##,
                LEFT + pw,
                LEFT - 6.0,
                py + 4.0
            );
        }
        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            h - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );

        let _ = writeln!(
            s,
            r#"<defs><clipPath id="plot-area"><rect x="{LEFT}" y="{TOP}" width="{pw:.2}" height="{ph:.2}"/></clipPath></defs>"#
        );
        let _ = writeln!(s, r#"<g clip-path="url(#plot-area)">"#);
        for series in &self.series {
            let mut segment: Vec<String> = Vec::new();
            let flush = |seg: &mut Vec<String>, s: &mut String| {
                if seg.len() > 1 {
                    let _ = writeln!(
                        s,
                        r#"<polyline fill="none" stroke="{}" stroke-width="{}"{} points="{}"/>"#,
                        series.color,
                        series.width,
                        series.dash.attr(),
                        seg.join(" ")
                    );
                }
                seg.clear();
            };
            for &(x, y) in &series.points {
                if x.is_finite() && self.usable(y) {
                    segment.push(format!("{:.2},{:.2}", sx(x), sy(y)));
                } else {
                    flush(&mut segment, &mut s);
                }
            }
            flush(&mut segment, &mut s);
        }
        let _ = writeln!(s, "</g>");

        let named: Vec<&Series> = self.series.iter().filter(|s| !s.name.is_empty()).collect();
        if !named.is_empty() {
            let longest = named.iter().map(|s| s.name.chars().count()).max().unwrap_or(0) as f64;
            let bw = 40.0 + 7.0 * longest;
            let bx = LEFT + pw - bw - 8.0;
            let by = TOP + 8.0;
            let _ = writeln!(
                s,
                r##"<rect x="{bx:.2}" y="{by:.2}" width="{bw:.2}" height="{:.2}" fill="white" fill-opacity="0.85" stroke="#999"/>"##,
                8.0 + 16.0 * named.len() as f64
            );
            for (i, series) in named.iter().enumerate() {
                let y = by + 14.0 + 16.0 * i as f64;
                let _ = writeln!(
                    s,
                    r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}" stroke-width="{}"{}/><text x="{:.2}" y="{:.2}">{}</text>"#,
                    bx + 6.0,
                    y - 4.0,
                    bx + 30.0,
                    y - 4.0,
                    series.color,
                    series.width,
                    series.dash.attr(),
                    bx + 34.0,
                    y,
                    escape(&series.name)
                );
            }
        }
        s.push_str("</svg>\n");
        Ok(s)
    }
}
