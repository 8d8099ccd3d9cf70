//! Minimal SVG plotting: linear axes, lines, bands, points, bars.

use std::fmt::Write as _;

const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

pub const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

enum Mark {
    Line { points: Vec<(f64, f64)>, color: String, dashed: bool },
    Band { lower: Vec<(f64, f64)>, upper: Vec<(f64, f64)>, color: String },
    Points { points: Vec<(f64, f64, String)> },
    Bar { x0: f64, x1: f64, y: f64, color: String },
    ErrorBar { x: f64, lo: f64, hi: f64 },
}

pub struct Plot {
    title: String,
    x_label: String,
    y_label: String,
    marks: Vec<Mark>,
    legend: Vec<(String, String)>,
    x_ticks: Option<Vec<(f64, String)>>,
}

impl Plot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Plot {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            marks: Vec::new(),
            legend: Vec::new(),
            x_ticks: None,
        }
    }

    pub fn line(&mut self, points: Vec<(f64, f64)>, color: &str) -> &mut Self {
        self.marks.push(Mark::Line { points, color: color.into(), dashed: false });
        self
    }

    pub fn dashed(&mut self, points: Vec<(f64, f64)>, color: &str) -> &mut Self {
        self.marks.push(Mark::Line { points, color: color.into(), dashed: true });
        self
    }

    pub fn band(&mut self, lower: Vec<(f64, f64)>, upper: Vec<(f64, f64)>, color: &str) -> &mut Self {
        self.marks.push(Mark::Band { lower, upper, color: color.into() });
        self
    }

    pub fn points(&mut self, points: Vec<(f64, f64, String)>) -> &mut Self {
        self.marks.push(Mark::Points { points });
        self
    }

    pub fn bar(&mut self, x0: f64, x1: f64, y: f64, color: &str) -> &mut Self {
        self.marks.push(Mark::Bar { x0, x1, y, color: color.into() });
        self
    }

    pub fn error_bar(&mut self, x: f64, lo: f64, hi: f64) -> &mut Self {
        self.marks.push(Mark::ErrorBar { x, lo, hi });
        self
    }

    pub fn legend(&mut self, label: &str, color: &str) -> &mut Self {
        self.legend.push((label.into(), color.into()));
        self
    }

    /// Categorical tick labels replacing the numeric x axis.
    pub fn x_ticks(&mut self, ticks: Vec<(f64, String)>) -> &mut Self {
        self.x_ticks = Some(ticks);
        self
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        let mut see = |x: f64, y: f64| {
            if x.is_finite() && y.is_finite() {
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
            }
        };
        for m in &self.marks {
            match m {
                Mark::Line { points, .. } => points.iter().for_each(|&(x, y)| see(x, y)),
                Mark::Band { lower, upper, .. } => lower.iter().chain(upper).for_each(|&(x, y)| see(x, y)),
                Mark::Points { points } => points.iter().for_each(|(x, y, _)| see(*x, *y)),
                Mark::Bar { x0, x1, y, .. } => {
                    see(*x0, 0.0);
                    see(*x1, *y);
                }
                Mark::ErrorBar { x, lo, hi } => {
                    see(*x, *lo);
                    see(*x, *hi);
                }
            }
        }
        if !x0.is_finite() {
            return (0.0, 1.0, 0.0, 1.0);
        }
        if x1 == x0 {
            x1 = x0 + 1.0;
        }
        if y1 == y0 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let pad = 0.05 * (y1 - y0);
        (x0, x1, y0 - pad, y1 + pad)
    }

    pub fn render(&self) -> String {
        let (x0, x1, y0, y1) = self.bounds();
        let pw = W - LEFT - RIGHT;
        let ph = H - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;
        let path = |pts: &[(f64, f64)]| -> String {
            pts.iter()
                .filter(|p| p.0.is_finite() && p.1.is_finite())
                .enumerate()
                .map(|(i, &(x, y))| format!("{}{:.2},{:.2}", if i == 0 { "M" } else { "L" }, sx(x), sy(y)))
                .collect::<Vec<_>>()
                .join(" ")
        };

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, esc(&self.title));

        for k in 0..=5 {
            let y = y0 + (y1 - y0) * k as f64 / 5.0;
            let py = sy(y);
            let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#e0e0e0"/>"##, LEFT + pw);
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, py + 4.0, tick(y));
        }
        match &self.x_ticks {
            Some(ticks) => {
                for (x, label) in ticks {
                    let _ = writeln!(
                        s,
                        r#"<text x="{:.2}" y="{:.2}" text-anchor="end" transform="rotate(-45 {:.2} {:.2})">{}</text>"#,
                        sx(*x),
                        TOP + ph + 14.0,
                        sx(*x),
                        TOP + ph + 14.0,
                        esc(label)
                    );
                }
            }
            None => {
                for k in 0..=5 {
                    let x = x0 + (x1 - x0) * k as f64 / 5.0;
                    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, sx(x), TOP + ph + 18.0, tick(x));
                }
            }
        }
        let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 12.0, esc(&self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            esc(&self.y_label)
        );

        for m in &self.marks {
            match m {
                Mark::Band { lower, upper, color } => {
                    let mut pts = lower.clone();
                    pts.extend(upper.iter().rev());
                    let _ = writeln!(s, r#"<path d="{} Z" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, path(&pts));
                }
                Mark::Line { points, color, dashed } => {
                    let dash = if *dashed { r#" stroke-dasharray="6,4""# } else { "" };
                    let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#, path(points));
                }
                Mark::Points { points } => {
                    for (x, y, c) in points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
                        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{c}"/>"#, sx(*x), sy(*y));
                    }
                }
                Mark::Bar { x0: a, x1: b, y, color } => {
                    let base = sy(0.0f64.clamp(y0, y1));
                    let top = sy(*y);
                    let _ = writeln!(
                        s,
                        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
                        sx(*a),
                        top.min(base),
                        sx(*b) - sx(*a),
                        (base - top).abs()
                    );
                }
                Mark::ErrorBar { x, lo, hi } => {
                    let px = sx(*x);
                    let _ = writeln!(
                        s,
                        r#"<path d="M{:.2},{:.2} L{:.2},{:.2} M{:.2},{:.2} L{:.2},{:.2} M{:.2},{:.2} L{:.2},{:.2}" stroke="black" fill="none"/>"#,
                        px, sy(*lo), px, sy(*hi), px - 3.0, sy(*lo), px + 3.0, sy(*lo), px - 3.0, sy(*hi), px + 3.0, sy(*hi)
                    );
                }
            }
        }

        for (i, (label, color)) in self.legend.iter().enumerate() {
            let y = TOP + 10.0 + 18.0 * i as f64;
            let x = LEFT + pw + 12.0;
            let _ = writeln!(s, r#"<rect x="{x:.2}" y="{:.2}" width="12" height="12" fill="{color}"/>"#, y - 10.0);
            let _ = writeln!(s, r#"<text x="{:.2}" y="{y:.2}">{}</text>"#, x + 18.0, esc(label));
        }
        s.push_str("</svg>\n");
        s
    }
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-2..1e5).contains(&a) {
        format!("{v:.1e}")
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Blue-to-yellow ramp for `t` in `[0, 1]`.
pub fn ramp(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(68.0, 253.0), lerp(1.0, 231.0), lerp(84.0, 37.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_well_formed_document() {
        let mut p = Plot::new("t<1>", "x", "y");
        p.line(vec![(0.0, 1.0), (1.0, 2.0)], PALETTE[0]).legend("a & b", PALETTE[0]);
        p.bar(0.0, 0.5, -1.0, PALETTE[1]).error_bar(0.25, -1.5, -0.5);
        let svg = p.render();
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("t&lt;1&gt;") && svg.contains("a &amp; b"));
        assert_eq!(svg, p.render());
    }

    #[test]
    fn empty_plot_renders() {
        assert!(Plot::new("", "", "").render().contains("</svg>"));
    }

    #[test]
    fn ramp_endpoints() {
        assert_eq!(ramp(0.0), "#440154");
        assert_eq!(ramp(1.0), "#fde725");
    }
}
