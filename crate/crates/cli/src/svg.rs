//! Static line charts as standalone SVG documents.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

pub struct Series {
    pub name: String,
    /// `(x, y, spread)`; the spread draws a band of `y ± spread`.
    pub points: Vec<(f64, f64, f64)>,
}

pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Labeled horizontal reference line.
    pub reference: Option<(String, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Round step for about five ticks over `span`.
fn tick_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag)
}

fn ticks(lo: f64, hi: f64) -> (f64, f64, Vec<f64>) {
    let step = tick_step((hi - lo).max(1e-9));
    let lo = (lo / step).floor() * step;
    let hi = (hi / step).ceil() * step;
    let n = ((hi - lo) / step).round() as usize;
    (lo, hi, (0..=n).map(|i| lo + i as f64 * step).collect())
}

fn label(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

impl Chart {
    pub fn render(&self) -> String {
        let pts = self.series.iter().flat_map(|s| &s.points);
        let (mut x_lo, mut x_hi, mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y, e) in pts {
            x_lo = x_lo.min(x);
            x_hi = x_hi.max(x);
            y_lo = y_lo.min(y - e);
            y_hi = y_hi.max(y + e);
        }
        if let Some((_, r)) = &self.reference {
            y_lo = y_lo.min(*r);
            y_hi = y_hi.max(*r);
        }
        if !x_lo.is_finite() {
            (x_lo, x_hi, y_lo, y_hi) = (0.0, 1.0, 0.0, 1.0);
        }
        if x_hi == x_lo {
            x_hi = x_lo + 1.0;
        }
        if y_hi == y_lo {
            y_hi = y_lo + 1.0;
        }
        let (x_lo, x_hi, x_ticks) = ticks(x_lo, x_hi);
        let (y_lo, y_hi, y_ticks) = ticks(y_lo.max(0.0), y_hi);
        let plot_w = WIDTH - LEFT - RIGHT;
        let plot_h = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
        let sy = |y: f64| TOP + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h;

        let mut out = String::new();
        let w = &mut out;
        writeln!(
            w,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        )
        .unwrap();
        writeln!(w, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
        writeln!(w, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, LEFT + plot_w / 2.0, escape(&self.title)).unwrap();
        for &t in &x_ticks {
            let x = sx(t);
            writeln!(w, r##"<line x1="{x:.1}" y1="{TOP}" x2="{x:.1}" y2="{:.1}" stroke="#e5e5e5"/>"##, TOP + plot_h).unwrap();
            writeln!(w, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, TOP + plot_h + 16.0, label(t)).unwrap();
        }
        for &t in &y_ticks {
            let y = sy(t);
            writeln!(w, r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#e5e5e5"/>"##, LEFT + plot_w).unwrap();
            writeln!(w, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, label(t)).unwrap();
        }
        writeln!(
            w,
            r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
        )
        .unwrap();
        writeln!(w, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, LEFT + plot_w / 2.0, HEIGHT - 14.0, escape(&self.x_label)).unwrap();
        writeln!(
            w,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            TOP + plot_h / 2.0,
            TOP + plot_h / 2.0,
            escape(&self.y_label)
        )
        .unwrap();

        if let Some((name, r)) = &self.reference {
            let y = sy(*r);
            writeln!(
                w,
                r#"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="black" stroke-dasharray="6 4"/>"#,
                LEFT + plot_w
            )
            .unwrap();
            writeln!(w, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, LEFT + plot_w + 8.0, y + 4.0, escape(name)).unwrap();
        }
        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            if s.points.iter().any(|p| p.2 > 0.0) {
                let upper = s.points.iter().map(|&(x, y, e)| format!("{:.1},{:.1}", sx(x), sy(y + e)));
                let lower = s.points.iter().rev().map(|&(x, y, e)| format!("{:.1},{:.1}", sx(x), sy((y - e).max(y_lo))));
                let band: Vec<String> = upper.chain(lower).collect();
                writeln!(w, r#"<polygon points="{}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#, band.join(" ")).unwrap();
            }
            let line: Vec<String> = s.points.iter().map(|&(x, y, _)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
            writeln!(w, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" ")).unwrap();
            for &(x, y, _) in &s.points {
                writeln!(w, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, sx(x), sy(y)).unwrap();
            }
            let ly = TOP + 14.0 + 20.0 * i as f64;
            let lx = LEFT + plot_w + 12.0;
            writeln!(w, r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0).unwrap();
            writeln!(w, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&s.name)).unwrap();
        }
        w.push_str("</svg>\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_cover_the_range_with_round_steps() {
        let (lo, hi, t) = ticks(100.0, 600.0);
        assert_eq!((lo, hi), (100.0, 600.0));
        assert_eq!(t, [100.0, 200.0, 300.0, 400.0, 500.0, 600.0]);
        let (lo, hi, _) = ticks(0.12, 0.87);
        assert!(lo <= 0.12 && hi >= 0.87);
        assert_eq!(tick_step(1.0), 0.2);
    }

    #[test]
    fn escapes_text_and_draws_every_series() {
        let chart = Chart {
            title: "F1 <test>".into(),
            x_label: "labels".into(),
            y_label: "F1".into(),
            series: vec![
                Series {
                    name: "MNLP+".into(),
                    points: vec![(100.0, 0.5, 0.1), (150.0, 0.6, 0.0)],
                },
                Series {
                    name: "Rand".into(),
                    points: vec![(100.0, 0.5, 0.0)],
                },
            ],
            reference: Some(("ceiling".into(), 0.9)),
        };
        let svg = chart.render();
        assert!(svg.contains("F1 &lt;test&gt;"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<polygon").count(), 1);
        assert!(svg.contains("stroke-dasharray"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
