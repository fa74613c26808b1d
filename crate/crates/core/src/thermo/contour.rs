//! Quadrature contours for G = -(1/2πi) ∮ g(z) Tr[(H - z)⁻¹] dz.
//!
//! * zero temperature: one circle around the occupied states crossing the real
//!   axis at mid-gap (trapezoid rule);
//! * finite temperature, μ in a gap wider than 2π/β: one circle on each side of μ;
//! * finite temperature otherwise: a rectangle pinched to a narrow waist around
//!   μ that passes between the branch points μ ± iπ/β, integrated with
//!   Gauss–Legendre panels refined towards the nearest singularity;
//! * μ on the spectrum: circles below and above μ plus a small circle around μ
//!   carrying a Taylor polynomial of g.

use super::quadrature::gauss_legendre;
use super::GrandPotential;
use crate::error::{Error, Result};
use crate::spectral::ON_SPECTRUM;
use crate::Complex64;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContourKind {
    OccupiedCircle,
    TwoCircles,
    NotchedPolygon,
    Split,
}

/// What a loop integrates against the resolvent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopRole {
    GrandPotential,
    /// Taylor polynomial of g at μ of the given degree.
    Taylor(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Circle {
        center: f64,
        radius: f64,
    },
    /// Closed polygon, vertices counter-clockwise.
    Polygon(Vec<Complex64>),
}

/// One closed, positively oriented loop with quadrature nodes and dz weights.
#[derive(Debug, Clone)]
pub struct Loop {
    pub nodes: Vec<Complex64>,
    pub weights: Vec<Complex64>,
    pub role: LoopRole,
    pub shape: Shape,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourOptions {
    /// Trapezoid nodes per circle.
    pub nodes: usize,
    /// Panel refinement level of the polygon (each level halves panel lengths).
    pub refinement: u32,
    /// Singularity margin 𝖻: the contour keeps distance 𝖻/β from the branch rays.
    pub margin_b: f64,
    /// Degree of the Taylor polynomial on the loop around μ in the split case.
    pub taylor_order: usize,
    /// Gauss–Legendre points per polygon panel.
    pub panel_order: usize,
}

impl Default for ContourOptions {
    fn default() -> Self {
        Self { nodes: 64, refinement: 0, margin_b: PI / 2.0, taylor_order: 2, panel_order: 16 }
    }
}

impl ContourOptions {
    pub fn with_nodes(nodes: usize) -> Self {
        Self { nodes, ..Self::default() }
    }

    /// Twice the resolution.
    pub fn doubled(&self) -> Self {
        Self { nodes: 2 * self.nodes, refinement: self.refinement + 1, ..*self }
    }
}

#[derive(Debug, Clone)]
pub struct Contour {
    pub kind: ContourKind,
    pub loops: Vec<Loop>,
    /// Minimum distance from the spectrum to the contour.
    pub margin_spectrum: f64,
    /// Minimum distance from the g-carrying loops to the branch rays.
    pub margin_singularity: f64,
    /// Indices of enclosed eigenvalues (winding number one).
    pub enclosed: Vec<usize>,
    /// max |g(z)| over the nodes.
    pub max_abs_g: f64,
    pub options: ContourOptions,
    pub potential: GrandPotential,
}

fn circle(center: f64, radius: f64, n: usize, role: LoopRole) -> Loop {
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for q in 0..n {
        let e = Complex64::from_polar(1.0, 2.0 * PI * (q as f64 + 0.5) / n as f64);
        nodes.push(e * radius + center);
        weights.push(Complex64::i() * e * radius * (2.0 * PI / n as f64));
    }
    Loop { nodes, weights, role, shape: Shape::Circle { center, radius } }
}

fn seg_point(a: Complex64, b: Complex64, p: Complex64) -> f64 {
    let d = b - a;
    let t = (((p - a) * d.conj()).re / d.norm_sqr()).clamp(0.0, 1.0);
    (a + d * t - p).norm()
}

fn cross(a: Complex64, b: Complex64) -> f64 {
    a.re * b.im - a.im * b.re
}

fn seg_seg(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> f64 {
    let (r, s) = (b - a, d - c);
    let den = cross(r, s);
    if den.abs() > 1e-300 {
        let t = cross(c - a, s) / den;
        let u = cross(c - a, r) / den;
        if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
            return 0.0;
        }
    }
    seg_point(a, b, c).min(seg_point(a, b, d)).min(seg_point(c, d, a)).min(seg_point(c, d, b))
}

/// Distance from a segment to the branch rays of g.
fn seg_rays(g: &GrandPotential, a: Complex64, b: Complex64) -> f64 {
    let Some(beta) = g.beta() else { return f64::INFINITY };
    let far = 1e6 + a.norm() + b.norm();
    let tip = PI / beta;
    let up = (Complex64::new(g.mu, tip), Complex64::new(g.mu, far));
    let dn = (Complex64::new(g.mu, -tip), Complex64::new(g.mu, -far));
    seg_seg(a, b, up.0, up.1).min(seg_seg(a, b, dn.0, dn.1))
}

fn winding(shape: &Shape, x: f64) -> i32 {
    match shape {
        Shape::Circle { center, radius } => ((x - center).abs() < *radius) as i32,
        Shape::Polygon(v) => {
            let p = Complex64::new(x, 0.0);
            let mut total = 0.0;
            for k in 0..v.len() {
                let a = v[k] - p;
                let b = v[(k + 1) % v.len()] - p;
                total += (b / a).arg();
            }
            (total / (2.0 * PI)).round() as i32
        }
    }
}

fn shape_distance(shape: &Shape, p: Complex64) -> f64 {
    match shape {
        Shape::Circle { center, radius } => ((p - center).norm() - radius).abs(),
        Shape::Polygon(v) => {
            (0..v.len()).map(|k| seg_point(v[k], v[(k + 1) % v.len()], p)).fold(f64::INFINITY, f64::min)
        }
    }
}

fn shape_ray_distance(g: &GrandPotential, shape: &Shape) -> f64 {
    match shape {
        Shape::Circle { center, radius } => {
            let n = 4096;
            (0..n)
                .map(|q| {
                    let z = Complex64::from_polar(*radius, 2.0 * PI * q as f64 / n as f64) + center;
                    g.singularity_distance(z)
                })
                .fold(f64::INFINITY, f64::min)
        }
        Shape::Polygon(v) => {
            (0..v.len()).map(|k| seg_rays(g, v[k], v[(k + 1) % v.len()])).fold(f64::INFINITY, f64::min)
        }
    }
}

/// Splits the edge [a, b] until each panel is at most `ratio` times its
/// distance to the nearest eigenvalue or branch ray.
fn panels(
    a: Complex64,
    b: Complex64,
    ratio: f64,
    g: &GrandPotential,
    eig: &[f64],
    out: &mut Vec<(Complex64, Complex64)>,
    depth: u32,
) -> Result<()> {
    let len = (b - a).norm();
    let d_eig = eig.iter().map(|&x| seg_point(a, b, Complex64::new(x, 0.0))).fold(f64::INFINITY, f64::min);
    let dist = d_eig.min(seg_rays(g, a, b));
    if dist <= 0.0 {
        return Err(Error::Contour("polygon edge touches a singularity".into()));
    }
    if len <= ratio * dist || depth > 60 {
        out.push((a, b));
        return Ok(());
    }
    let m = (a + b) * 0.5;
    panels(a, m, ratio, g, eig, out, depth + 1)?;
    panels(m, b, ratio, g, eig, out, depth + 1)
}

fn polygon_loop(vertices: Vec<Complex64>, opts: &ContourOptions, g: &GrandPotential, eig: &[f64]) -> Result<Loop> {
    let ratio = 2.0 / 2f64.powi(opts.refinement as i32);
    let mut pans = Vec::new();
    for k in 0..vertices.len() {
        panels(vertices[k], vertices[(k + 1) % vertices.len()], ratio, g, eig, &mut pans, 0)?;
    }
    let (x, w) = gauss_legendre(opts.panel_order);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for (a, b) in pans {
        let half = (b - a) * 0.5;
        let mid = (a + b) * 0.5;
        for (t, wt) in x.iter().zip(&w) {
            nodes.push(mid + half * *t);
            weights.push(half * *wt);
        }
    }
    Ok(Loop { nodes, weights, role: LoopRole::GrandPotential, shape: Shape::Polygon(vertices) })
}

impl Contour {
    /// Builds a contour for the eigenvalues `eig` (ascending) and grand potential `g`.
    pub fn build(eig: &[f64], g: &GrandPotential, opts: &ContourOptions) -> Result<Self> {
        if eig.is_empty() {
            return Err(Error::Contour("empty spectrum".into()));
        }
        if opts.nodes < 4 {
            return Err(Error::Contour("at least four nodes per circle".into()));
        }
        let mu = g.mu;
        let lo = eig[0];
        let hi = eig[eig.len() - 1];
        let below = eig
            .iter()
            .copied()
            .filter(|&x| x < mu - ON_SPECTRUM)
            .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))));
        let above = eig
            .iter()
            .copied()
            .filter(|&x| x > mu + ON_SPECTRUM)
            .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.min(x))));
        let on_mu = eig.iter().any(|&x| (x - mu).abs() <= ON_SPECTRUM);
        let n = opts.nodes;
        let (kind, loops) = match g.beta() {
            None => {
                if on_mu {
                    return Err(Error::NoGap { mu, distance: 0.0 });
                }
                let homo = below.ok_or_else(|| Error::Contour("no occupied states".into()))?;
                let (right, pad) = match above {
                    Some(lumo) => (0.5 * (homo + lumo), 0.5 * (lumo - homo)),
                    None => (homo + 1.0, 1.0),
                };
                let left = lo - pad;
                (
                    ContourKind::OccupiedCircle,
                    vec![circle(0.5 * (left + right), 0.5 * (right - left), n, LoopRole::GrandPotential)],
                )
            }
            Some(beta) => {
                if opts.margin_b <= 0.0 || opts.margin_b >= PI {
                    return Err(Error::Contour(format!("margin 𝖻 = {} outside (0, π)", opts.margin_b)));
                }
                let room = |d: Option<f64>| d.is_none_or(|d| d >= PI / beta);
                if on_mu {
                    let nearest_off =
                        eig.iter().map(|&x| (x - mu).abs()).filter(|&d| d > ON_SPECTRUM).fold(f64::INFINITY, f64::min);
                    let r0 = (0.5 * PI / beta).min(0.5 * nearest_off);
                    let mut loops = vec![circle(mu, r0, n, LoopRole::Taylor(opts.taylor_order))];
                    if let Some(b) = below {
                        let right = b + 0.5 * (mu - b);
                        let pad = right - b;
                        loops.push(circle(
                            0.5 * (lo - pad + right),
                            0.5 * (right - lo + pad),
                            n,
                            LoopRole::GrandPotential,
                        ));
                    }
                    if let Some(a) = above {
                        let left = a - 0.5 * (a - mu);
                        let pad = a - left;
                        loops.push(circle(
                            0.5 * (left + hi + pad),
                            0.5 * (hi + pad - left),
                            n,
                            LoopRole::GrandPotential,
                        ));
                    }
                    (ContourKind::Split, loops)
                } else if room(below.map(|b| mu - b)) && room(above.map(|a| a - mu)) && opts.margin_b <= PI / 2.0 {
                    let mut loops = Vec::new();
                    if let Some(b) = below {
                        let right = b + 0.5 * (mu - b);
                        let pad = right - b;
                        loops.push(circle(
                            0.5 * (lo - pad + right),
                            0.5 * (right - lo + pad),
                            n,
                            LoopRole::GrandPotential,
                        ));
                    }
                    if let Some(a) = above {
                        let left = a - 0.5 * (a - mu);
                        let pad = a - left;
                        loops.push(circle(
                            0.5 * (left + hi + pad),
                            0.5 * (hi + pad - left),
                            n,
                            LoopRole::GrandPotential,
                        ));
                    }
                    (ContourKind::TwoCircles, loops)
                } else {
                    if opts.margin_b > PI / 2.0 {
                        return Err(Error::Contour(format!(
                            "𝖻 = {} > π/2 leaves less than π/(2β) between the waist and the spectrum",
                            opts.margin_b
                        )));
                    }
                    let w = opts.margin_b / beta;
                    let h = (PI - opts.margin_b) / beta;
                    let pad = (0.05 * (hi - lo)).max(1.0).max(4.0 * h);
                    let xl = (lo - pad).min(mu - w - pad);
                    let xr = (hi + pad).max(mu + w + pad);
                    let top = pad;
                    let c = Complex64::new;
                    let vertices = vec![
                        c(xl, -top),
                        c(mu - w, -top),
                        c(mu - w, -h),
                        c(mu + w, -h),
                        c(mu + w, -top),
                        c(xr, -top),
                        c(xr, top),
                        c(mu + w, top),
                        c(mu + w, h),
                        c(mu - w, h),
                        c(mu - w, top),
                        c(xl, top),
                    ];
                    (ContourKind::NotchedPolygon, vec![polygon_loop(vertices, opts, g, eig)?])
                }
            }
        };
        Self::audit(kind, loops, eig, g, opts)
    }

    fn audit(
        kind: ContourKind,
        loops: Vec<Loop>,
        eig: &[f64],
        g: &GrandPotential,
        opts: &ContourOptions,
    ) -> Result<Self> {
        let mut enclosed = Vec::new();
        for (i, &x) in eig.iter().enumerate() {
            let w: i32 = loops.iter().map(|l| winding(&l.shape, x)).sum();
            if w > 1 {
                return Err(Error::Contour(format!("eigenvalue {x} enclosed {w} times")));
            }
            if w == 1 {
                enclosed.push(i);
            }
        }
        let expected: Vec<usize> = match g.beta() {
            None => (0..eig.len()).filter(|&i| eig[i] < g.mu).collect(),
            Some(_) => (0..eig.len()).collect(),
        };
        if enclosed != expected {
            return Err(Error::Contour(format!(
                "contour encloses {} eigenvalues, expected {}",
                enclosed.len(),
                expected.len()
            )));
        }
        let margin_spectrum = eig
            .iter()
            .flat_map(|&x| loops.iter().map(move |l| shape_distance(&l.shape, Complex64::new(x, 0.0))))
            .fold(f64::INFINITY, f64::min);
        let margin_singularity = loops
            .iter()
            .filter(|l| l.role == LoopRole::GrandPotential)
            .map(|l| shape_ray_distance(g, &l.shape))
            .fold(f64::INFINITY, f64::min);
        let mut max_abs_g = 0.0f64;
        for l in &loops {
            for &z in &l.nodes {
                max_abs_g = max_abs_g.max(Self::integrand(g, l.role, z)?.norm());
            }
        }
        Ok(Self {
            kind,
            loops,
            margin_spectrum,
            margin_singularity,
            enclosed,
            max_abs_g,
            options: *opts,
            potential: *g,
        })
    }

    fn integrand(g: &GrandPotential, role: LoopRole, z: Complex64) -> Result<Complex64> {
        match role {
            LoopRole::GrandPotential => g.eval(z),
            LoopRole::Taylor(k) => g.taylor_at_mu(k, z),
        }
    }

    pub fn node_count(&self) -> usize {
        self.loops.iter().map(|l| l.nodes.len()).sum()
    }

    /// Nodes z_q with effective weights c_q such that
    /// -(1/2πi) ∮ φ(z) X(z) dz ≈ Σ_q c_q X(z_q), φ being g or its Taylor polynomial.
    pub fn weighted_nodes(&self) -> Result<Vec<(Complex64, Complex64)>> {
        self.weighted_nodes_with(|role, z| Self::integrand(&self.potential, role, z))
    }

    /// As [`Contour::weighted_nodes`] with a caller-supplied scalar function.
    pub fn weighted_nodes_with<F>(&self, f: F) -> Result<Vec<(Complex64, Complex64)>>
    where
        F: Fn(LoopRole, Complex64) -> Result<Complex64>,
    {
        let scale = -1.0 / (2.0 * PI * Complex64::i());
        let mut out = Vec::with_capacity(self.node_count());
        for l in &self.loops {
            for (&z, &w) in l.nodes.iter().zip(&l.weights) {
                out.push((z, scale * w * f(l.role, z)?));
            }
        }
        Ok(out)
    }

    /// Winding number about a real point computed from the nodes alone.
    pub fn discrete_winding(&self, x: f64) -> i32 {
        let p = Complex64::new(x, 0.0);
        self.loops
            .iter()
            .map(|l| {
                let n = l.nodes.len();
                let total: f64 = (0..n).map(|q| ((l.nodes[(q + 1) % n] - p) / (l.nodes[q] - p)).arg()).sum();
                (total / (2.0 * PI)).round() as i32
            })
            .sum()
    }

    /// Tracks log(1 + e^{-β(z-μ)}) continuously along each loop, subdividing
    /// between nodes, and returns the largest deviation of the tracked g from
    /// the closed-form continuation at the nodes.
    pub fn branch_tracking_defect(&self) -> Result<f64> {
        let Some(beta) = self.potential.beta() else { return Ok(0.0) };
        let mu = self.potential.mu;
        let mut worst = 0.0f64;
        for l in self.loops.iter().filter(|l| l.role == LoopRole::GrandPotential) {
            let n = l.nodes.len();
            let w = |z: Complex64| (-(z - mu) * beta).exp() + 1.0;
            let start = l.nodes[0];
            let closed0 = self.potential.eval(start)?;
            // branch of log w at the first node chosen to match the closed form
            let mut arg = -closed0.im * beta / 2.0;
            let mut prev = w(start);
            for q in 0..n {
                let (a, b) = (l.nodes[q], l.nodes[(q + 1) % n]);
                let steps = 64;
                for s in 1..=steps {
                    let z = a + (b - a) * (s as f64 / steps as f64);
                    let cur = w(z);
                    arg += (cur / prev).arg();
                    prev = cur;
                }
                let tracked = Complex64::new(prev.norm().ln(), arg) * (-2.0 / beta);
                let closed = self.potential.eval(b)?;
                worst = worst.max((tracked - closed).norm());
            }
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spectrum() -> Vec<f64> {
        vec![-2.3, -1.7, -1.2, 0.9, 1.4, 2.8]
    }

    #[test]
    fn zero_temperature_circle_encloses_occupied() {
        let g = GrandPotential::zero(0.0);
        let c = Contour::build(&spectrum(), &g, &ContourOptions::default()).unwrap();
        assert_eq!(c.kind, ContourKind::OccupiedCircle);
        assert_eq!(c.enclosed, vec![0, 1, 2]);
        assert!(c.margin_spectrum >= 0.5 * 2.1 - 1e-12);
        for (i, &x) in spectrum().iter().enumerate() {
            assert_eq!(c.discrete_winding(x), (i < 3) as i32);
        }
    }

    #[test]
    fn gapped_finite_temperature_uses_two_circles() {
        let g = GrandPotential::finite(32.0, 0.0);
        let c = Contour::build(&spectrum(), &g, &ContourOptions::default()).unwrap();
        assert_eq!(c.kind, ContourKind::TwoCircles);
        assert!(c.margin_spectrum >= PI / (2.0 * 32.0));
        assert!(c.margin_singularity >= PI / 2.0 / 32.0 - 1e-9);
    }

    #[test]
    fn metallic_polygon_margins() {
        let eig = vec![-1.0, -0.02, 0.01, 0.5];
        for beta in [4.0, 32.0, 100.0] {
            let g = GrandPotential::finite(beta, 0.0);
            let c = Contour::build(&eig, &g, &ContourOptions::default()).unwrap();
            assert_eq!(c.kind, ContourKind::NotchedPolygon);
            assert_eq!(c.enclosed.len(), 4);
            assert!(c.margin_spectrum >= PI / (2.0 * beta) - 1e-12);
            assert!(c.margin_singularity >= PI / 2.0 / beta - 1e-12);
            for &x in &eig {
                assert_eq!(c.discrete_winding(x), 1);
            }
            assert!(c.branch_tracking_defect().unwrap() < 1e-9);
        }
    }

    #[test]
    fn large_margin_parameter_rejected_for_polygon() {
        let g = GrandPotential::finite(8.0, 0.0);
        let opts = ContourOptions { margin_b: 2.0, ..Default::default() };
        assert!(Contour::build(&[-1.0, 0.01, 1.0], &g, &opts).is_err());
    }

    #[test]
    fn scalar_contour_reproduces_sum_of_g() {
        // -(1/2πi)∮ g(z)/(λ - z) dz = g(λ) for each enclosed λ
        let eig = spectrum();
        for g in [GrandPotential::zero(0.0), GrandPotential::finite(32.0, 0.0), GrandPotential::finite(2.0, -1.25)] {
            let c = Contour::build(&eig, &g, &ContourOptions::default()).unwrap();
            let nodes = c.weighted_nodes().unwrap();
            let total: Complex64 = eig.iter().map(|&l| nodes.iter().map(|(z, w)| w / (l - z)).sum::<Complex64>()).sum();
            let exact: f64 = eig.iter().map(|&l| g.value(l)).sum();
            assert!((total.re - exact).abs() < 1e-10, "{:?}: {} vs {}", c.kind, total.re, exact);
            assert!(total.im.abs() < 1e-10);
        }
    }
}
