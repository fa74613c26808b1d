//! Tight-binding models and Hamiltonian assembly.
//!
//! A model supplies on-site energies (possibly environment dependent through a
//! pair density) and two-centre bond blocks with their first and second
//! derivatives. [`Assembly`] turns these into dense real-space matrices, Bloch
//! matrices and sparse coordinate derivatives.

pub mod nrl;
pub mod slater_koster;
pub mod toy;

use crate::error::{Error, Result};
use crate::geometry::{Configuration, Neighbor, NeighborTable, SiteId, Vec3};
use crate::Complex64;
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;

pub use nrl::{NrlModel, NrlSpecies};
pub use toy::ToyModel;

/// A bond block and optionally its overlap counterpart.
#[derive(Debug, Clone, PartialEq)]
pub struct BondBlocks {
    pub h: DMatrix<f64>,
    pub m: Option<DMatrix<f64>>,
}

/// Bond block with derivatives with respect to the bond vector d.
/// `grad[i] = ∂/∂d_i`, `hess[3 i + j] = ∂²/∂d_i∂d_j`.
#[derive(Debug, Clone)]
pub struct BondDerivatives {
    pub value: BondBlocks,
    pub grad: Vec<BondBlocks>,
    pub hess: Vec<BondBlocks>,
}

/// Diagonal on-site energies as functions of the local pair density ρ.
#[derive(Debug, Clone)]
pub struct OnsiteTerms {
    pub energy: DVector<f64>,
    pub d_energy: DVector<f64>,
    pub d2_energy: DVector<f64>,
}

/// Declared bounds |∂^j h(ξ)| ≤ h_j e^{-γ_j |ξ|} for j = 0, 1, 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayMetadata {
    pub prefactor: [f64; 3],
    pub rate: [f64; 3],
}

/// Behaviour shared by all tight-binding models.
pub trait TightBinding: Send + Sync {
    fn label(&self) -> &str;
    fn orbitals(&self, species: &str) -> Result<usize>;
    fn valence_electrons(&self, species: &str) -> Result<f64>;
    fn cutoff(&self) -> f64;
    fn orthogonal(&self) -> bool;
    /// Highest coordinate derivative order available.
    fn max_order(&self) -> usize {
        2
    }
    fn decay(&self) -> DecayMetadata;
    /// On-site energies of a site with pair density `rho`.
    fn onsite(&self, species: &str, rho: f64) -> Result<OnsiteTerms>;
    /// Pair-density kernel φ(r) felt by `owner` from a neighbour of species `other`,
    /// with its first and second radial derivatives. Zero for density-free models.
    fn density_kernel(&self, owner: &str, other: &str, r: f64) -> [f64; 3];
    /// Bond block between orbitals of `a` (rows) and `b` (columns) for d = y_b - y_a,
    /// with derivatives up to `order`.
    fn bond(&self, a: &str, b: &str, d: &Vec3, order: usize) -> Result<BondDerivatives>;
}

/// Sparse real matrix in coordinate form, rows and columns sorted and unique.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseMatrix {
    pub dim: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    fn from_map(dim: usize, map: BTreeMap<(usize, usize), f64>) -> Self {
        Self { dim, entries: map.into_iter().filter(|(_, v)| *v != 0.0).map(|((r, c), v)| (r, c, v)).collect() }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }

    /// Frobenius inner product with a dense matrix.
    pub fn inner(&self, q: &DMatrix<f64>) -> f64 {
        self.entries.iter().map(|&(r, c, v)| q[(r, c)] * v).sum()
    }

    /// Sparse product A x returned as (index, value) pairs.
    pub fn apply(&self, x: &[Complex64]) -> Vec<(usize, Complex64)> {
        let mut out: Vec<(usize, Complex64)> = Vec::new();
        for &(r, c, v) in &self.entries {
            let add = x[c] * v;
            match out.last_mut() {
                Some((row, acc)) if *row == r => *acc += add,
                _ => out.push((r, add)),
            }
        }
        out
    }

    /// xᵀ A y without conjugation.
    pub fn bilinear(&self, x: &[Complex64], y: &[Complex64]) -> Complex64 {
        self.entries.iter().map(|&(r, c, v)| x[r] * y[c] * v).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, e| m.max(e.2.abs()))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let map: BTreeMap<(usize, usize), f64> = self.entries.iter().map(|&(r, c, v)| ((r, c), v)).collect();
        self.entries.iter().all(|&(r, c, v)| (map.get(&(c, r)).copied().unwrap_or(0.0) - v).abs() <= tol)
    }
}

/// Derivative of the (H, M) pair with respect to one or two coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDerivative {
    pub h: SparseMatrix,
    pub m: Option<SparseMatrix>,
}

/// Dense Hamiltonian and overlap with orbital offsets per site.
#[derive(Debug, Clone)]
pub struct HamiltonianPair {
    pub h: DMatrix<f64>,
    pub m: Option<DMatrix<f64>>,
    /// `offsets[l]..offsets[l + 1]` are the orbitals of site l.
    pub offsets: Vec<usize>,
}

impl HamiltonianPair {
    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn sites(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn orbitals_of(&self, site: SiteId) -> std::ops::Range<usize> {
        self.offsets[site]..self.offsets[site + 1]
    }

    /// Site owning each orbital.
    pub fn orbital_sites(&self) -> Vec<SiteId> {
        (0..self.sites()).flat_map(|l| self.orbitals_of(l).map(move |_| l)).collect()
    }
}

/// Coordinate (site, Cartesian axis).
pub type Coordinate = (SiteId, usize);

/// A model bound to a configuration and its neighbour table.
pub struct Assembly<'a> {
    pub model: &'a dyn TightBinding,
    pub config: &'a Configuration,
    pub neighbors: NeighborTable,
    pub offsets: Vec<usize>,
}

/// Bond counted once per unordered pair of (site, image).
struct Bond<'n> {
    a: SiteId,
    nb: &'n Neighbor,
}

fn image_positive(image: [i32; 3]) -> bool {
    image.iter().find(|&&t| t != 0).is_some_and(|&t| t > 0)
}

impl<'a> Assembly<'a> {
    pub fn new(model: &'a dyn TightBinding, config: &'a Configuration, multi_image: bool) -> Result<Self> {
        let neighbors = config.neighbors(model.cutoff(), multi_image)?;
        let mut offsets = vec![0];
        for s in &config.species {
            offsets.push(offsets.last().unwrap() + model.orbitals(s)?);
        }
        Ok(Self { model, config, neighbors, offsets })
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    fn species(&self, l: SiteId) -> &str {
        &self.config.species[l]
    }

    fn bonds(&self) -> impl Iterator<Item = Bond<'_>> {
        self.neighbors.lists.iter().enumerate().flat_map(|(a, list)| {
            list.iter()
                .filter(move |nb| nb.index > a || (nb.index == a && image_positive(nb.image)))
                .map(move |nb| Bond { a, nb })
        })
    }

    fn density(&self, l: SiteId) -> f64 {
        self.neighbors
            .of(l)
            .iter()
            .map(|nb| self.model.density_kernel(self.species(l), self.species(nb.index), nb.distance)[0])
            .sum()
    }

    /// Pair densities of all sites.
    pub fn densities(&self) -> Vec<f64> {
        (0..self.config.len()).map(|l| self.density(l)).collect()
    }

    /// Real-space (Γ-point) matrices.
    pub fn hamiltonian(&self) -> Result<HamiltonianPair> {
        let n = self.dim();
        let orth = self.model.orthogonal();
        let mut h = DMatrix::zeros(n, n);
        let mut m = (!orth).then(|| DMatrix::identity(n, n));
        for l in 0..self.config.len() {
            let on = self.model.onsite(self.species(l), self.density(l))?;
            for (i, e) in on.energy.iter().enumerate() {
                h[(self.offsets[l] + i, self.offsets[l] + i)] += e;
            }
        }
        for bond in self.bonds() {
            let b = bond.nb.index;
            let blk = self.model.bond(self.species(bond.a), self.species(b), &bond.nb.vector, 0)?.value;
            add_block(&mut h, self.offsets[bond.a], self.offsets[b], &blk.h);
            if let (Some(m), Some(mb)) = (m.as_mut(), blk.m.as_ref()) {
                add_block(m, self.offsets[bond.a], self.offsets[b], mb);
            }
        }
        Ok(HamiltonianPair { h, m, offsets: self.offsets.clone() })
    }

    /// Bloch matrices H(k), M(k) for a Cartesian wavevector (1/Å).
    pub fn bloch(&self, k: &Vec3) -> Result<(DMatrix<Complex64>, Option<DMatrix<Complex64>>)> {
        let n = self.dim();
        let cell = self.config.cell.as_ref();
        let mut h = DMatrix::<Complex64>::zeros(n, n);
        let mut m = (!self.model.orthogonal()).then(|| DMatrix::<Complex64>::identity(n, n));
        for l in 0..self.config.len() {
            let on = self.model.onsite(self.species(l), self.density(l))?;
            for (i, e) in on.energy.iter().enumerate() {
                h[(self.offsets[l] + i, self.offsets[l] + i)] += Complex64::from(e);
            }
        }
        for bond in self.bonds() {
            let b = bond.nb.index;
            let t = cell.map(|c| c.translation(bond.nb.image)).unwrap_or_else(Vec3::zeros);
            let phase = Complex64::from_polar(1.0, k.dot(&t));
            let blk = self.model.bond(self.species(bond.a), self.species(b), &bond.nb.vector, 0)?.value;
            add_bloch_block(&mut h, self.offsets[bond.a], self.offsets[b], &blk.h, phase);
            if let (Some(m), Some(mb)) = (m.as_mut(), blk.m.as_ref()) {
                add_bloch_block(m, self.offsets[bond.a], self.offsets[b], mb, phase);
            }
        }
        Ok((h, m))
    }

    /// First derivatives ∂(H, M)/∂y_{m,i} for every coordinate, indexed by 3 m + i.
    pub fn first_derivatives(&self) -> Result<Vec<PairDerivative>> {
        let nsites = self.config.len();
        let orth = self.model.orthogonal();
        let mut hs: Vec<BTreeMap<(usize, usize), f64>> = vec![BTreeMap::new(); 3 * nsites];
        let mut ms: Vec<BTreeMap<(usize, usize), f64>> = vec![BTreeMap::new(); 3 * nsites];
        for bond in self.bonds() {
            let (a, b) = (bond.a, bond.nb.index);
            if a == b {
                continue;
            }
            let der = self.model.bond(self.species(a), self.species(b), &bond.nb.vector, 1)?;
            for i in 0..3 {
                let g = &der.grad[i];
                for (site, sign) in [(b, 1.0), (a, -1.0)] {
                    add_sym(&mut hs[3 * site + i], self.offsets[a], self.offsets[b], &g.h, sign);
                    if let Some(gm) = &g.m {
                        add_sym(&mut ms[3 * site + i], self.offsets[a], self.offsets[b], gm, sign);
                    }
                }
            }
        }
        for l in 0..nsites {
            let on = self.model.onsite(self.species(l), self.density(l))?;
            if on.d_energy.iter().all(|&x| x == 0.0) {
                continue;
            }
            for nb in self.neighbors.of(l) {
                if nb.index == l {
                    continue;
                }
                let phi = self.model.density_kernel(self.species(l), self.species(nb.index), nb.distance);
                for i in 0..3 {
                    let drho = phi[1] * nb.vector[i] / nb.distance;
                    for (site, sign) in [(nb.index, 1.0), (l, -1.0)] {
                        let map = &mut hs[3 * site + i];
                        for (o, de) in on.d_energy.iter().enumerate() {
                            let p = self.offsets[l] + o;
                            *map.entry((p, p)).or_default() += sign * de * drho;
                        }
                    }
                }
            }
        }
        let n = self.dim();
        Ok(hs
            .into_iter()
            .zip(ms)
            .map(|(h, m)| PairDerivative {
                h: SparseMatrix::from_map(n, h),
                m: (!orth).then(|| SparseMatrix::from_map(n, m)),
            })
            .collect())
    }

    /// Derivative with respect to one coordinate.
    pub fn first_derivative(&self, c: Coordinate) -> Result<PairDerivative> {
        self.derivative(&[c])
    }

    /// Mixed derivative with respect to one or two coordinates.
    pub fn derivative(&self, coords: &[Coordinate]) -> Result<PairDerivative> {
        let order = coords.len();
        if order == 0 || order > self.model.max_order() {
            return Err(Error::Invalid(format!("derivative order {order} not available")));
        }
        let sign =
            |site: SiteId, a: SiteId, b: SiteId| -> f64 { (site == b) as i32 as f64 - (site == a) as i32 as f64 };
        let n = self.dim();
        let orth = self.model.orthogonal();
        let mut hmap = BTreeMap::new();
        let mut mmap = BTreeMap::new();
        let touched = |a: SiteId, b: SiteId| coords.iter().all(|&(s, _)| s == a || s == b);
        for bond in self.bonds() {
            let (a, b) = (bond.a, bond.nb.index);
            if a == b || !touched(a, b) {
                continue;
            }
            let der = self.model.bond(self.species(a), self.species(b), &bond.nb.vector, order)?;
            let (blk, s) = if order == 1 {
                let (site, i) = coords[0];
                (&der.grad[i], sign(site, a, b))
            } else {
                let ((s1, i1), (s2, i2)) = (coords[0], coords[1]);
                (&der.hess[3 * i1 + i2], sign(s1, a, b) * sign(s2, a, b))
            };
            add_sym(&mut hmap, self.offsets[a], self.offsets[b], &blk.h, s);
            if let Some(bm) = &blk.m {
                add_sym(&mut mmap, self.offsets[a], self.offsets[b], bm, s);
            }
        }
        for l in 0..self.config.len() {
            if !self.neighbors.of(l).iter().any(|nb| touched(l, nb.index) && nb.index != l) {
                continue;
            }
            let on = self.model.onsite(self.species(l), self.density(l))?;
            if on.d_energy.iter().all(|&x| x == 0.0) && on.d2_energy.iter().all(|&x| x == 0.0) {
                continue;
            }
            // first and second derivatives of ρ_l with respect to the requested coordinates
            let mut d1 = vec![0.0; order];
            let mut d2 = 0.0;
            for nb in self.neighbors.of(l) {
                if nb.index == l {
                    continue;
                }
                let phi = self.model.density_kernel(self.species(l), self.species(nb.index), nb.distance);
                let r = nb.distance;
                let u = nb.vector / r;
                for (q, &(s, i)) in coords.iter().enumerate() {
                    d1[q] += sign(s, l, nb.index) * phi[1] * u[i];
                }
                if order == 2 {
                    let ((s1, i1), (s2, i2)) = (coords[0], coords[1]);
                    let delta = (i1 == i2) as i32 as f64;
                    let hess = phi[2] * u[i1] * u[i2] + phi[1] / r * (delta - u[i1] * u[i2]);
                    d2 += sign(s1, l, nb.index) * sign(s2, l, nb.index) * hess;
                }
            }
            for o in 0..on.energy.len() {
                let p = self.offsets[l] + o;
                let v = if order == 1 {
                    on.d_energy[o] * d1[0]
                } else {
                    on.d2_energy[o] * d1[0] * d1[1] + on.d_energy[o] * d2
                };
                *hmap.entry((p, p)).or_default() += v;
            }
        }
        Ok(PairDerivative { h: SparseMatrix::from_map(n, hmap), m: (!orth).then(|| SparseMatrix::from_map(n, mmap)) })
    }
}

/// Adds a bond block at (r0, c0) and its transpose at (c0, r0). For a
/// self-image bond this yields blk + blkᵀ, the sum over both images.
fn add_block(target: &mut DMatrix<f64>, r0: usize, c0: usize, blk: &DMatrix<f64>) {
    for i in 0..blk.nrows() {
        for j in 0..blk.ncols() {
            target[(r0 + i, c0 + j)] += blk[(i, j)];
            target[(c0 + j, r0 + i)] += blk[(i, j)];
        }
    }
}

fn add_bloch_block(target: &mut DMatrix<Complex64>, r0: usize, c0: usize, blk: &DMatrix<f64>, phase: Complex64) {
    for i in 0..blk.nrows() {
        for j in 0..blk.ncols() {
            target[(r0 + i, c0 + j)] += phase * blk[(i, j)];
            target[(c0 + j, r0 + i)] += phase.conj() * blk[(i, j)];
        }
    }
}

fn add_sym(map: &mut BTreeMap<(usize, usize), f64>, r0: usize, c0: usize, blk: &DMatrix<f64>, scale: f64) {
    for i in 0..blk.nrows() {
        for j in 0..blk.ncols() {
            let v = scale * blk[(i, j)];
            *map.entry((r0 + i, c0 + j)).or_default() += v;
            *map.entry((c0 + j, r0 + i)).or_default() += v;
        }
    }
}

/// Largest deviation from h_ab(d) = h_ba(-d)ᵀ over the given bond vectors.
pub fn kernel_symmetry_defect(model: &dyn TightBinding, a: &str, b: &str, samples: &[Vec3]) -> Result<f64> {
    let mut worst = 0.0f64;
    for d in samples {
        let fwd = model.bond(a, b, d, 0)?.value;
        let bwd = model.bond(b, a, &(-d), 0)?.value;
        worst = worst.max((&fwd.h - bwd.h.transpose()).amax());
        if let (Some(x), Some(y)) = (fwd.m, bwd.m) {
            worst = worst.max((x - y.transpose()).amax());
        }
    }
    Ok(worst)
}
