//! Minimal log-log SVG plot for rate studies.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 440.0;
const PAD_L: f64 = 70.0;
const PAD_R: f64 = 20.0;
const PAD_T: f64 = 30.0;
const PAD_B: f64 = 55.0;

pub struct RatePlot<'a> {
    pub title: &'a str,
    pub n: &'a [usize],
    pub d: &'a [f64],
    pub ci: &'a [(f64, f64)],
    pub slope: f64,
    pub intercept: f64,
    pub reference_slope: f64,
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let pad = 0.08 * (hi - lo).max(1e-3);
    (lo - pad, hi + pad)
}

impl RatePlot<'_> {
    pub fn render(&self) -> String {
        let lx: Vec<f64> = self.n.iter().map(|n| (*n as f64).log10()).collect();
        let ly: Vec<f64> = self.d.iter().map(|d| d.log10()).collect();
        let (x0, x1) = span(lx.iter().copied());
        let (y0, y1) = span(
            ly.iter()
                .copied()
                .chain(self.ci.iter().flat_map(|(a, b)| [a.log10(), b.log10()])),
        );
        let px = |v: f64| PAD_L + (v - x0) / (x1 - x0) * (W - PAD_L - PAD_R);
        let py = |v: f64| H - PAD_B - (v - y0) / (y1 - y0) * (H - PAD_T - PAD_B);
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(self.title));
        let (bx0, bx1, by0, by1) = (PAD_L, W - PAD_R, PAD_T, H - PAD_B);
        let _ = writeln!(
            s,
            r#"<polyline points="{bx0},{by0} {bx0},{by1} {bx1},{by1}" fill="none" stroke="black"/>"#
        );
        for (k, v) in lx.iter().enumerate() {
            let x = px(*v);
            let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{by1}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, by1 + 5.0);
            let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, by1 + 18.0, self.n[k]);
        }
        for k in 0..=4 {
            let v = y0 + (y1 - y0) * k as f64 / 4.0;
            let y = py(v);
            let _ = writeln!(s, r#"<line x1="{:.2}" y1="{y:.2}" x2="{bx0}" y2="{y:.2}" stroke="black"/>"#, bx0 - 5.0);
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:.2e}</text>"#, bx0 - 8.0, y + 4.0, 10f64.powf(v));
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">N (particles)</text>"#, (bx0 + bx1) / 2.0, H - 12.0);
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">D(N)</text>"#,
            (by0 + by1) / 2.0,
            (by0 + by1) / 2.0
        );
        for ((x, (lo, hi)), y) in lx.iter().zip(self.ci).zip(&ly) {
            if lo.is_finite() && hi.is_finite() && *lo > 0.0 {
                let _ = writeln!(
                    s,
                    r##"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="#555"/>"##,
                    px(*x),
                    py(lo.log10()),
                    py(hi.log10())
                );
            }
            let _ = writeln!(s, r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="#1f5fa8"/>"##, px(*x), py(*y));
        }
        let line = |slope: f64, icpt: f64| {
            let ya = icpt + slope * lx[0] * std::f64::consts::LN_10;
            let yb = icpt + slope * lx[lx.len() - 1] * std::f64::consts::LN_10;
            (
                px(lx[0]),
                py(ya / std::f64::consts::LN_10),
                px(lx[lx.len() - 1]),
                py(yb / std::f64::consts::LN_10),
            )
        };
        let (a, b, c, d) = line(self.slope, self.intercept);
        let _ = writeln!(s, r##"<polyline points="{a:.2},{b:.2} {c:.2},{d:.2}" fill="none" stroke="#c0392b" stroke-width="2"/>"##);
        let mid_x = lx.iter().sum::<f64>() / lx.len() as f64 * std::f64::consts::LN_10;
        let mid_y = self.intercept + self.slope * mid_x;
        let (a, b, c, d) = line(self.reference_slope, mid_y - self.reference_slope * mid_x);
        let _ = writeln!(
            s,
            r##"<polyline points="{a:.2},{b:.2} {c:.2},{d:.2}" fill="none" stroke="#777" stroke-dasharray="6 4"/>"##
        );
        let _ = writeln!(
            s,
            r##"<text x="{:.2}" y="{:.2}" text-anchor="end" fill="#c0392b">fitted slope {:.3}</text>"##,
            bx1 - 6.0,
            by0 + 16.0,
            self.slope
        );
        let _ = writeln!(
            s,
            r##"<text x="{:.2}" y="{:.2}" text-anchor="end" fill="#555">reference slope {:.2}</text>"##,
            bx1 - 6.0,
            by0 + 32.0,
            self.reference_slope
        );
        s.push_str("</svg>\n");
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
