//! Dense (generalised) symmetric eigensolves and spectral bookkeeping.

use crate::error::{Error, Result};
use crate::model::HamiltonianPair;
use crate::Complex64;
use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

/// Closed interval guaranteed to contain the spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }
}

/// Position of a chemical potential relative to the spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapInfo {
    pub mu: f64,
    /// Distance from μ to the nearest eigenvalue.
    pub distance: f64,
    /// Highest eigenvalue strictly below μ.
    pub below: Option<f64>,
    /// Lowest eigenvalue strictly above μ.
    pub above: Option<f64>,
    /// Eigenvalues within [`ON_SPECTRUM`] of μ.
    pub on_spectrum: usize,
}

/// Eigenvalues closer to μ than this count as lying on μ.
pub const ON_SPECTRUM: f64 = 1e-8;

impl GapInfo {
    /// Width of the gap containing μ, if μ is not on the spectrum.
    pub fn gap(&self) -> Option<f64> {
        match (self.below, self.above, self.on_spectrum) {
            (Some(b), Some(a), 0) => Some(a - b),
            _ => None,
        }
    }
}

/// Eigenpairs of H ψ = λ M ψ with M-orthonormal eigenvectors, ascending.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    pub eigenvalues: DVector<f64>,
    /// Columns are eigenvectors.
    pub eigenvectors: DMatrix<f64>,
    /// M Ψ, present for non-orthogonal models.
    pub overlap_vectors: Option<DMatrix<f64>>,
    pub offsets: Vec<usize>,
    pub bounds: Bounds,
}

impl SpectrumReport {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn gap_at(&self, mu: f64) -> GapInfo {
        let mut info = GapInfo { mu, distance: f64::INFINITY, below: None, above: None, on_spectrum: 0 };
        for &l in self.eigenvalues.iter() {
            info.distance = info.distance.min((l - mu).abs());
            if (l - mu).abs() < ON_SPECTRUM {
                info.on_spectrum += 1;
            } else if l < mu {
                info.below = Some(info.below.map_or(l, |b: f64| b.max(l)));
            } else {
                info.above = Some(info.above.map_or(l, |a: f64| a.min(l)));
            }
        }
        info
    }

    /// Midpoint between the highest occupied and lowest unoccupied eigenvalue when
    /// `occupied` states are filled.
    pub fn midgap(&self, occupied: usize) -> Result<f64> {
        if occupied == 0 || occupied >= self.len() {
            return Err(Error::Invalid(format!("cannot place mu with {occupied} of {} states filled", self.len())));
        }
        Ok(0.5 * (self.eigenvalues[occupied - 1] + self.eigenvalues[occupied]))
    }

    /// Mulliken weight of eigenvector s on site l: Σ_a ψ_{la} (M ψ)_{la}.
    pub fn site_weight(&self, s: usize, l: usize) -> f64 {
        let range = self.offsets[l]..self.offsets[l + 1];
        match &self.overlap_vectors {
            None => range.map(|a| self.eigenvectors[(a, s)].powi(2)).sum(),
            Some(mp) => range.map(|a| self.eigenvectors[(a, s)] * mp[(a, s)]).sum(),
        }
    }

    /// Indices of eigenvalues lying strictly inside the open interval `gap`.
    pub fn states_in(&self, gap: (f64, f64)) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.eigenvalues[i] > gap.0 && self.eigenvalues[i] < gap.1).collect()
    }
}

fn sorted(eig: SymmetricEigen<f64, nalgebra::Dyn>) -> (DVector<f64>, DMatrix<f64>) {
    let n = eig.eigenvalues.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, idx.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, idx[c])]);
    (values, vectors)
}

fn symmetrize(a: &mut DMatrix<f64>) {
    let t = a.transpose();
    *a += t;
    *a *= 0.5;
}

/// Gershgorin interval for H; with an overlap, combined with M's extremal eigenvalues.
pub fn gershgorin(pair: &HamiltonianPair) -> Result<Bounds> {
    let h = &pair.h;
    let n = h.nrows();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        let r: f64 = (0..n).filter(|&j| j != i).map(|j| h[(i, j)].abs()).sum();
        lo = lo.min(h[(i, i)] - r);
        hi = hi.max(h[(i, i)] + r);
    }
    let Some(m) = &pair.m else { return Ok(Bounds { lower: lo, upper: hi }) };
    let ev = SymmetricEigen::new(m.clone()).eigenvalues;
    let m_lo = ev.min();
    let m_hi = ev.max();
    if m_lo <= 0.0 {
        return Err(Error::OverlapNotPositive);
    }
    // λ = xᵀHx / xᵀMx with xᵀHx ∈ [lo, hi]|x|² and xᵀMx ∈ [m_lo, m_hi]|x|²
    let cands = [lo / m_lo, lo / m_hi, hi / m_lo, hi / m_hi];
    Ok(Bounds {
        lower: cands.iter().copied().fold(f64::INFINITY, f64::min),
        upper: cands.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Solves H ψ = λ M ψ (M = I when absent).
pub fn solve(pair: &HamiltonianPair) -> Result<SpectrumReport> {
    let bounds = gershgorin(pair)?;
    let mut h = pair.h.clone();
    symmetrize(&mut h);
    let (eigenvalues, eigenvectors, overlap_vectors) = match &pair.m {
        None => {
            let (v, q) = sorted(SymmetricEigen::new(h));
            (v, q, None)
        }
        Some(m) => {
            let mut m = m.clone();
            symmetrize(&mut m);
            let chol = Cholesky::new(m.clone()).ok_or(Error::OverlapNotPositive)?;
            let l = chol.l();
            let x = l.solve_lower_triangular(&h).ok_or_else(|| Error::Eigen("triangular solve failed".into()))?;
            let mut a = l
                .solve_lower_triangular(&x.transpose())
                .ok_or_else(|| Error::Eigen("triangular solve failed".into()))?;
            symmetrize(&mut a);
            let (v, q) = sorted(SymmetricEigen::new(a));
            let psi = l
                .transpose()
                .solve_upper_triangular(&q)
                .ok_or_else(|| Error::Eigen("triangular solve failed".into()))?;
            let mp = &m * &psi;
            (v, psi, Some(mp))
        }
    };
    if eigenvalues.iter().any(|x| !x.is_finite()) {
        return Err(Error::Eigen("non-finite eigenvalue".into()));
    }
    Ok(SpectrumReport { eigenvalues, eigenvectors, overlap_vectors, offsets: pair.offsets.clone(), bounds })
}

/// Eigenvalues of a Hermitian pencil (H, M), ascending.
pub fn hermitian_eigenvalues(h: &DMatrix<Complex64>, m: Option<&DMatrix<Complex64>>) -> Result<DVector<f64>> {
    let herm = |a: &DMatrix<Complex64>| (a + a.adjoint()) * Complex64::from(0.5);
    let a = match m {
        None => herm(h),
        Some(m) => {
            let chol = Cholesky::new(herm(m)).ok_or(Error::OverlapNotPositive)?;
            let l = chol.l();
            let x = l.solve_lower_triangular(&herm(h)).ok_or_else(|| Error::Eigen("triangular solve failed".into()))?;
            let a =
                l.solve_lower_triangular(&x.adjoint()).ok_or_else(|| Error::Eigen("triangular solve failed".into()))?;
            herm(&a)
        }
    };
    let mut v: Vec<f64> = SymmetricEigen::new(a).eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    Ok(DVector::from_vec(v))
}
