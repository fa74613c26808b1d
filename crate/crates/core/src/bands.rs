//! Bloch band structures of periodic cells, gaps, mid-gap μ and the isotropic
//! lattice-constant search.

use crate::error::{Error, Result};
use crate::geometry::{Configuration, Vec3};
use crate::model::{Assembly, TightBinding};
use crate::spectral;
use rayon::prelude::*;
use serde::Serialize;

/// High-symmetry points in fractional reciprocal coordinates, joined by
/// straight segments sampled `samples` times each (end points included).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KPath {
    pub points: Vec<(String, Vec3)>,
    pub samples: usize,
}

impl KPath {
    pub fn new(points: Vec<(String, Vec3)>, samples: usize) -> Result<Self> {
        if points.len() < 2 || samples < 2 {
            return Err(Error::Invalid("a k-path needs two points and two samples per segment".into()));
        }
        if points.windows(2).any(|w| (w[0].1 - w[1].1).norm() == 0.0) {
            return Err(Error::Invalid("consecutive k-points coincide".into()));
        }
        Ok(Self { points, samples })
    }

    /// L–Γ–X–W–K–Γ for the face-centred cubic primitive cell with vectors
    /// (0,a/2,a/2), (a/2,0,a/2), (a/2,a/2,0).
    pub fn fcc(samples: usize) -> Self {
        let p = |l: &str, x: f64, y: f64, z: f64| (l.to_string(), Vec3::new(x, y, z));
        Self {
            points: vec![
                p("L", 0.5, 0.5, 0.5),
                p("G", 0.0, 0.0, 0.0),
                p("X", 0.5, 0.0, 0.5),
                p("W", 0.5, 0.25, 0.75),
                p("K", 0.375, 0.375, 0.75),
                p("G", 0.0, 0.0, 0.0),
            ],
            samples,
        }
    }

    /// Γ–X along the first reciprocal vector.
    pub fn line(samples: usize) -> Self {
        Self { points: vec![("G".into(), Vec3::zeros()), ("X".into(), Vec3::new(0.5, 0.0, 0.0))], samples }
    }

    /// (segment, fraction along the segment, fractional k) for every sample.
    pub fn samples(&self) -> Vec<(usize, f64, Vec3)> {
        let mut out = Vec::new();
        for (s, w) in self.points.windows(2).enumerate() {
            for i in 0..self.samples {
                let t = i as f64 / (self.samples - 1) as f64;
                out.push((s, t, w[0].1 + (w[1].1 - w[0].1) * t));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BandStructure {
    pub path: KPath,
    /// (segment, fraction, fractional k) per sample.
    pub kpoints: Vec<(usize, f64, Vec3)>,
    /// Ascending eigenvalues per k-point (eV).
    pub bands: Vec<Vec<f64>>,
    pub occupied: usize,
    pub vbm: f64,
    pub cbm: f64,
    /// CBM - VBM, clamped at zero.
    pub gap: f64,
    pub metallic: bool,
    pub fermi_mu: f64,
}

fn cartesian_k(config: &Configuration, frac: &Vec3) -> Result<Vec3> {
    let cell = config.cell.as_ref().ok_or_else(|| Error::Invalid("band structures need a periodic cell".into()))?;
    let b = cell.reciprocal();
    Ok(b[0] * frac.x + b[1] * frac.y + b[2] * frac.z)
}

/// Eigenvalues of H(k) ψ = ε M(k) ψ at a fractional wavevector.
pub fn bloch_eigenvalues(asm: &Assembly, frac: &Vec3) -> Result<Vec<f64>> {
    let k = cartesian_k(asm.config, frac)?;
    let (h, m) = asm.bloch(&k)?;
    Ok(spectral::hermitian_eigenvalues(&h, m.as_ref())?.iter().copied().collect())
}

/// Number of doubly occupied bands per cell.
pub fn occupied_bands(model: &dyn TightBinding, config: &Configuration) -> Result<usize> {
    let electrons: f64 = config.species.iter().map(|s| model.valence_electrons(s)).sum::<Result<f64>>()?;
    let half = electrons / 2.0;
    if (half - half.round()).abs() > 1e-9 || half < 1.0 {
        return Err(Error::Invalid(format!("{electrons} electrons per cell do not fill whole bands")));
    }
    Ok(half.round() as usize)
}

pub fn band_structure(model: &dyn TightBinding, config: &Configuration, path: &KPath) -> Result<BandStructure> {
    let asm = Assembly::new(model, config, true)?;
    let occupied = occupied_bands(model, config)?;
    let kpoints = path.samples();
    let bands: Vec<Vec<f64>> = kpoints.par_iter().map(|(_, _, k)| bloch_eigenvalues(&asm, k)).collect::<Result<_>>()?;
    if bands[0].len() <= occupied {
        return Err(Error::Invalid("no empty bands".into()));
    }
    let vbm = bands.iter().map(|b| b[occupied - 1]).fold(f64::NEG_INFINITY, f64::max);
    let cbm = bands.iter().map(|b| b[occupied]).fold(f64::INFINITY, f64::min);
    Ok(BandStructure {
        path: path.clone(),
        kpoints,
        bands,
        occupied,
        vbm,
        cbm,
        gap: (cbm - vbm).max(0.0),
        metallic: cbm <= vbm,
        fermi_mu: 0.5 * (vbm + cbm),
    })
}

/// Monkhorst–Pack fractional k-points of an n×n×n grid (n×1×1 for cells
/// periodic along one axis only).
pub fn monkhorst_pack(config: &Configuration, n: usize) -> Result<Vec<Vec3>> {
    let cell = config.cell.as_ref().ok_or_else(|| Error::Invalid("k-grids need a periodic cell".into()))?;
    let counts: Vec<usize> = cell.pbc.iter().map(|&p| if p { n } else { 1 }).collect();
    let coord = |i: usize, c: usize| (2.0 * i as f64 + 1.0 - c as f64) / (2.0 * c as f64);
    let mut out = Vec::new();
    for i in 0..counts[0] {
        for j in 0..counts[1] {
            for k in 0..counts[2] {
                out.push(Vec3::new(coord(i, counts[0]), coord(j, counts[1]), coord(k, counts[2])));
            }
        }
    }
    Ok(out)
}

/// Zero-temperature band energy per cell, 2 Σ_k w_k Σ_{n<N_occ} ε_n(k).
pub fn band_energy(model: &dyn TightBinding, config: &Configuration, grid: usize) -> Result<f64> {
    let asm = Assembly::new(model, config, true)?;
    let occupied = occupied_bands(model, config)?;
    let ks = monkhorst_pack(config, grid)?;
    let sums: Vec<f64> =
        ks.par_iter().map(|k| Ok(bloch_eigenvalues(&asm, k)?[..occupied].iter().sum())).collect::<Result<_>>()?;
    Ok(2.0 * sums.iter().sum::<f64>() / ks.len() as f64)
}

/// Golden-section minimisation of `energy` over a scale in [lo, hi].
pub fn golden_section<F>(mut energy: F, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (energy(c)?, energy(d)?);
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = energy(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = energy(d)?;
        }
    }
    let x = 0.5 * (a + b);
    Ok((x, energy(x)?))
}

/// Lattice constant minimising the band energy of `build(a)` over [lo, hi].
pub fn relax_lattice<B>(model: &dyn TightBinding, build: B, lo: f64, hi: f64, grid: usize) -> Result<(f64, f64)>
where
    B: Fn(f64) -> Result<Configuration>,
{
    golden_section(|a| band_energy(model, &build(a)?, grid), lo, hi, 1e-4)
}
