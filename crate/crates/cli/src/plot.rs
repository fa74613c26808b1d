//! Minimal static SVG plots.

use std::fmt::Write as _;
use tbloc::locality::ExponentialFit;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: (f64, f64, f64, f64) = (70.0, 20.0, 30.0, 50.0); // left, right, top, bottom

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
    svg: String,
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let p = 0.04 * (hi - lo);
        (lo - p, hi + p)
    } else {
        (lo - 1.0, hi + 1.0)
    }
}

impl Frame {
    fn new(title: &str, xlabel: &str, ylabel: &str, x: (f64, f64), y: (f64, f64)) -> Self {
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let (l, r, t, b) = MARGIN;
        let _ = writeln!(
            svg,
            r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            WIDTH - l - r,
            HEIGHT - t - b
        );
        let _ = writeln!(svg, r#"<text x="{}" y="18" text-anchor="middle">{}</text>"#, WIDTH / 2.0, escape(title));
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            (l + WIDTH - r) / 2.0,
            HEIGHT - 10.0,
            escape(xlabel)
        );
        let _ = writeln!(
            svg,
            r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
            (t + HEIGHT - b) / 2.0,
            escape(ylabel)
        );
        Self { x, y, svg }
    }

    fn px(&self, x: f64) -> f64 {
        let (l, r, _, _) = MARGIN;
        l + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - l - r)
    }

    fn py(&self, y: f64) -> f64 {
        let (_, _, t, b) = MARGIN;
        HEIGHT - b - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - t - b)
    }

    fn y_ticks(&mut self, ticks: &[(f64, String)]) {
        for (v, label) in ticks {
            let y = self.py(*v);
            let _ = writeln!(
                self.svg,
                r#"<line x1="{0}" x2="{1}" y1="{y:.2}" y2="{y:.2}" stroke="black"/><text x="{2}" y="{3:.2}" text-anchor="end">{4}</text>"#,
                MARGIN.0 - 4.0,
                MARGIN.0,
                MARGIN.0 - 6.0,
                y + 4.0,
                escape(label)
            );
        }
    }

    fn x_ticks(&mut self, ticks: &[(f64, String)], grid: bool) {
        for (v, label) in ticks {
            let x = self.px(*v);
            let bottom = HEIGHT - MARGIN.3;
            let top = if grid { MARGIN.2 } else { bottom - 4.0 };
            let _ = writeln!(
                self.svg,
                r##"<line x1="{x:.2}" x2="{x:.2}" y1="{top}" y2="{bottom}" stroke="#999"/><text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"##,
                bottom + 16.0,
                escape(label)
            );
        }
    }

    fn polyline(&mut self, pts: &[(f64, f64)], colour: &str, dash: bool) {
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y))).collect();
        let dash = if dash { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            self.svg,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.2"{dash}/>"#,
            coords.join(" ")
        );
    }

    fn dots(&mut self, pts: &[(f64, f64)], colour: &str) {
        for &(x, y) in pts {
            let _ = writeln!(
                self.svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{colour}" fill-opacity="0.5"/>"#,
                self.px(x),
                self.py(y)
            );
        }
    }

    fn label(&mut self, x: f64, y: f64, text: &str) {
        let _ = writeln!(self.svg, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, x, y, escape(text));
    }

    fn finish(mut self) -> String {
        self.svg.push_str("</svg>\n");
        self.svg
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 7.0).unwrap_or(10.0 * mag);
    let mut v = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while v <= hi + 1e-9 * step {
        out.push(if v.abs() < 1e-12 * step { 0.0 } else { v });
        v += step;
    }
    out
}

/// Band energies against path coordinate, with band-edge lines and a gap label.
pub fn bands(
    title: &str,
    xs: &[f64],
    energies: &[Vec<f64>],
    labels: &[(f64, String)],
    edges: Option<(f64, f64)>,
) -> String {
    let (lo, hi) =
        energies.iter().flatten().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &e| (a.min(e), b.max(e)));
    let x = (xs.first().copied().unwrap_or(0.0), xs.last().copied().unwrap_or(1.0));
    let mut f = Frame::new(title, "wavevector", "energy (eV)", x, padded(lo, hi));
    let ticks: Vec<(f64, String)> = nice_ticks(f.y.0, f.y.1).into_iter().map(|v| (v, format!("{v}"))).collect();
    f.y_ticks(&ticks);
    f.x_ticks(labels, true);
    let nbands = energies.first().map_or(0, Vec::len);
    for b in 0..nbands {
        let pts: Vec<(f64, f64)> = xs.iter().zip(energies).map(|(&x, e)| (x, e[b])).collect();
        f.polyline(&pts, "#1f4e9c", false);
    }
    if let Some((vbm, cbm)) = edges {
        for e in [vbm, cbm] {
            f.polyline(&[(x.0, e), (x.1, e)], "#c0392b", true);
        }
        let y = f.py(cbm) - 6.0;
        f.label(MARGIN.0 + 8.0, y, &format!("gap {:.3} eV", (cbm - vbm).max(0.0)));
    }
    f.finish()
}

/// Scatter of magnitudes on a log scale with the fitted envelope line.
pub fn decay(title: &str, points: &[(f64, f64)], fit: Option<&ExponentialFit>) -> String {
    let pts: Vec<(f64, f64)> = points.iter().filter(|p| p.1 > 0.0).map(|&(r, m)| (r, m.log10())).collect();
    let (x0, x1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (y0, y1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let (x0, x1) = if pts.is_empty() { (0.0, 1.0) } else { padded(x0, x1) };
    let (y0, y1) = if pts.is_empty() { (-1.0, 0.0) } else { padded(y0, y1) };
    let mut f = Frame::new(title, "distance (Å)", "magnitude", (x0, x1), (y0, y1));
    let yt: Vec<(f64, String)> = (y0.ceil() as i32..=y1.floor() as i32).map(|k| (k as f64, format!("1e{k}"))).collect();
    f.y_ticks(&yt);
    let xt: Vec<(f64, String)> = nice_ticks(x0, x1).into_iter().map(|v| (v, format!("{v}"))).collect();
    f.x_ticks(&xt, false);
    f.dots(&pts, "#1f4e9c");
    if let Some(fit) = fit {
        let line = |r: f64| (fit.log_prefactor - fit.exponent * r) / std::f64::consts::LN_10;
        let (a, b) = fit.window;
        f.polyline(&[(a, line(a)), (b, line(b))], "#c0392b", false);
        let text = format!("η = {:.4} /Å, R² = {:.3}", fit.exponent, fit.r_squared);
        f.label(WIDTH - MARGIN.1 - 220.0, MARGIN.2 + 18.0, &text);
    }
    f.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_cover_the_range() {
        let t = nice_ticks(-3.2, 7.9);
        assert!(t.first().unwrap() >= &-3.2 && t.last().unwrap() <= &7.9);
        assert!(t.len() >= 4 && t.len() <= 8, "{t:?}");
    }

    #[test]
    fn plots_are_well_formed() {
        let svg = bands("x", &[0.0, 1.0], &[vec![-1.0, 1.0], vec![-0.5, 0.5]], &[(0.0, "G".into())], Some((-0.5, 0.5)));
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        let svg = decay("d & e", &[(1.0, 1e-2), (2.0, 1e-4)], None);
        assert!(svg.contains("d &amp; e"));
    }
}
