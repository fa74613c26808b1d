//! Site energies G_ℓ, their coordinate derivatives and forces.
//!
//! Two routes are provided. The spectral route sums over eigenpairs, using
//! divided differences of g for derivatives, which stays exact when eigenvalues
//! coincide. The contour route applies quadrature to the resolvent
//! R(z) = (H - z M)⁻¹ and never diagonalises.

use crate::error::{Error, Result};
use crate::geometry::{Configuration, SiteId, Vec3};
use crate::model::{Assembly, Coordinate, HamiltonianPair, PairDerivative, TightBinding};
use crate::spectral::{self, SpectrumReport};
use crate::thermo::{Contour, GrandPotential, LoopRole};
use crate::Complex64;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Spectral,
    Contour,
    FiniteDifference,
}

impl std::fmt::Display for Route {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Route::Spectral => "spectral",
            Route::Contour => "contour",
            Route::FiniteDifference => "fd",
        })
    }
}

#[derive(Debug, Clone)]
pub struct SiteEnergyReport {
    pub sites: Vec<SiteId>,
    pub values: Vec<f64>,
    /// Total G = Σ_s g(λ_s), available on the spectral route.
    pub total: Option<f64>,
    pub route: Route,
    pub potential: GrandPotential,
}

impl SiteEnergyReport {
    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// |Σ_ℓ G_ℓ - G| when all sites and the total are available.
    pub fn split_residual(&self, n_sites: usize) -> Option<f64> {
        (self.sites.len() == n_sites).then_some(())?;
        self.total.map(|t| (self.sum() - t).abs())
    }
}

/// G = Σ_s g(λ_s).
pub fn total_energy(spec: &SpectrumReport, g: &GrandPotential) -> f64 {
    spec.eigenvalues.iter().map(|&l| g.value(l)).sum()
}

pub fn all_sites(spec: &SpectrumReport) -> Vec<SiteId> {
    (0..spec.offsets.len() - 1).collect()
}

/// G_ℓ = Σ_s g(λ_s) w_{sℓ} with Mulliken weights w.
pub fn site_energies_spectral(spec: &SpectrumReport, g: &GrandPotential, sites: &[SiteId]) -> SiteEnergyReport {
    let gv: Vec<f64> = spec.eigenvalues.iter().map(|&l| g.value(l)).collect();
    let values = sites.iter().map(|&l| (0..spec.len()).map(|s| gv[s] * spec.site_weight(s, l)).sum()).collect();
    SiteEnergyReport {
        sites: sites.to_vec(),
        values,
        total: Some(gv.iter().sum()),
        route: Route::Spectral,
        potential: *g,
    }
}

fn shifted(pair: &HamiltonianPair, z: Complex64) -> DMatrix<Complex64> {
    let n = pair.dim();
    let mut a = pair.h.map(Complex64::from);
    match &pair.m {
        None => {
            for i in 0..n {
                a[(i, i)] -= z;
            }
        }
        Some(m) => a -= m.map(|x| Complex64::from(x) * z),
    }
    a
}

/// Unit (or overlap) right-hand sides for the orbitals of `sites`.
fn site_rhs(pair: &HamiltonianPair, sites: &[SiteId]) -> (DMatrix<Complex64>, Vec<(usize, usize)>) {
    let cols: Vec<usize> = sites.iter().flat_map(|&l| pair.orbitals_of(l)).collect();
    let n = pair.dim();
    let rhs = DMatrix::from_fn(n, cols.len(), |r, c| match &pair.m {
        None => Complex64::from((r == cols[c]) as i32 as f64),
        Some(m) => Complex64::from(m[(r, cols[c])]),
    });
    (rhs, cols.iter().copied().enumerate().collect())
}

/// Contour-route site energies: G_ℓ = Σ_q c_q Σ_a [R(z_q) M]_{ℓa,ℓa}.
pub fn site_energies_contour(pair: &HamiltonianPair, contour: &Contour, sites: &[SiteId]) -> Result<SiteEnergyReport> {
    let nodes = contour.weighted_nodes()?;
    let (rhs, cols) = site_rhs(pair, sites);
    let per_node: Vec<Vec<Complex64>> = nodes
        .par_iter()
        .map(|&(z, c)| {
            let x = shifted(pair, z).lu().solve(&rhs).ok_or_else(|| Error::Singular(format!("H - zM at z = {z}")))?;
            Ok(cols.iter().map(|&(k, orb)| c * x[(orb, k)]).collect())
        })
        .collect::<Result<_>>()?;
    let mut acc = vec![Complex64::from(0.0); cols.len()];
    for v in &per_node {
        for (a, b) in acc.iter_mut().zip(v) {
            *a += b;
        }
    }
    let mut values = vec![0.0; sites.len()];
    let mut k = 0;
    for (i, &l) in sites.iter().enumerate() {
        for _ in pair.orbitals_of(l) {
            values[i] += acc[k].re;
            k += 1;
        }
    }
    Ok(SiteEnergyReport {
        sites: sites.to_vec(),
        values,
        total: None,
        route: Route::Contour,
        potential: contour.potential,
    })
}

/// Contour site energies with node doubling until the largest per-site change
/// drops below `tol`. Returns the finer result, its contour and the last change.
pub fn site_energies_contour_converged(
    pair: &HamiltonianPair,
    eigenvalues: &[f64],
    g: &GrandPotential,
    opts: &crate::thermo::ContourOptions,
    sites: &[SiteId],
    tol: f64,
    max_nodes: usize,
) -> Result<(SiteEnergyReport, Contour, f64)> {
    let mut opts = *opts;
    let mut coarse = site_energies_contour(pair, &Contour::build(eigenvalues, g, &opts)?, sites)?;
    loop {
        opts = opts.doubled();
        let finer_contour = Contour::build(eigenvalues, g, &opts)?;
        let finer = site_energies_contour(pair, &finer_contour, sites)?;
        let change = coarse.values.iter().zip(&finer.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if change < tol {
            return Ok((finer, finer_contour, change));
        }
        if finer_contour.node_count() > max_nodes {
            return Err(Error::Quadrature { change, tol, nodes: finer_contour.node_count() });
        }
        coarse = finer;
    }
}

/// Site energies split by loop, e.g. 𝒞⁻, 𝒞₀ and 𝒞⁺ of a split contour.
pub fn site_energies_by_loop(
    pair: &HamiltonianPair,
    contour: &Contour,
    sites: &[SiteId],
) -> Result<Vec<(LoopRole, SiteEnergyReport)>> {
    contour
        .loops
        .iter()
        .map(|l| {
            let single = Contour { loops: vec![l.clone()], ..contour.clone() };
            Ok((l.role, site_energies_contour(pair, &single, sites)?))
        })
        .collect()
}

/// Spectral form of the 𝒞₀ contribution when μ lies on the spectrum: the
/// order-`order` Taylor polynomial of g at μ evaluated on the eigenvalues within
/// `ON_SPECTRUM` of μ, weighted by their site weights. Zero when no eigenvalue sits at μ.
pub fn mu_on_spectrum_correction(
    spec: &SpectrumReport,
    g: &GrandPotential,
    order: usize,
    sites: &[SiteId],
) -> Result<Vec<f64>> {
    let cluster: Vec<usize> =
        (0..spec.len()).filter(|&s| (spec.eigenvalues[s] - g.mu).abs() < spectral::ON_SPECTRUM).collect();
    let t: Vec<f64> = cluster
        .iter()
        .map(|&s| Ok(g.taylor_at_mu(order, Complex64::from(spec.eigenvalues[s]))?.re))
        .collect::<Result<_>>()?;
    Ok(sites.iter().map(|&l| cluster.iter().zip(&t).map(|(&s, v)| v * spec.site_weight(s, l)).sum()).collect())
}

/// -(1/2πi) ∮ f(z) (H - z)⁻¹ dz with f ≡ 1, which equals the projector onto the
/// enclosed eigenvectors (the identity when the whole spectrum is enclosed).
pub fn resolvent_identity(pair: &HamiltonianPair, contour: &Contour) -> Result<DMatrix<Complex64>> {
    let nodes = contour.weighted_nodes_with(|_, _| Ok(Complex64::from(1.0)))?;
    let n = pair.dim();
    let parts: Vec<DMatrix<Complex64>> = nodes
        .par_iter()
        .map(|&(z, c)| {
            let r = shifted(pair, z).lu().try_inverse().ok_or_else(|| Error::Singular(format!("z = {z}")))?;
            let r = match &pair.m {
                None => r,
                Some(m) => r * m.map(Complex64::from),
            };
            Ok(r * c)
        })
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().fold(DMatrix::zeros(n, n), |a, b| a + b))
}

/// [`resolvent_identity`] with node doubling until the largest entry change
/// drops below `tol`.
pub fn resolvent_identity_converged(
    pair: &HamiltonianPair,
    eigenvalues: &[f64],
    g: &GrandPotential,
    opts: &crate::thermo::ContourOptions,
    tol: f64,
    max_nodes: usize,
) -> Result<(DMatrix<Complex64>, Contour)> {
    let mut opts = *opts;
    let mut coarse = resolvent_identity(pair, &Contour::build(eigenvalues, g, &opts)?)?;
    loop {
        opts = opts.doubled();
        let contour = Contour::build(eigenvalues, g, &opts)?;
        let finer = resolvent_identity(pair, &contour)?;
        let change = (&finer - &coarse).iter().fold(0.0f64, |m, x| m.max(x.norm()));
        if change < tol {
            return Ok((finer, contour));
        }
        if contour.node_count() > max_nodes {
            return Err(Error::Quadrature { change, tol, nodes: contour.node_count() });
        }
        coarse = finer;
    }
}

fn require_orthogonal(spec: &SpectrumReport, what: &str) -> Result<()> {
    if spec.overlap_vectors.is_some() {
        return Err(Error::Unsupported(format!("{what} with a non-orthogonal basis; use finite differences")));
    }
    Ok(())
}

/// Matrix of first divided differences g[λ_s, λ_t].
fn dd_matrix(spec: &SpectrumReport, g: &GrandPotential) -> DMatrix<f64> {
    let n = spec.len();
    let l = &spec.eigenvalues;
    let mut d = DMatrix::zeros(n, n);
    for s in 0..n {
        for t in s..n {
            let v = g.divided_difference(&[l[s], l[t]]);
            d[(s, t)] = v;
            d[(t, s)] = v;
        }
    }
    d
}

/// Site weight matrix W_st = Σ_a ψ_{s,ℓa} ψ_{t,ℓa}.
fn weight_matrix(spec: &SpectrumReport, l: SiteId) -> DMatrix<f64> {
    let rows = spec.offsets[l]..spec.offsets[l + 1];
    let p = spec.eigenvectors.rows(rows.start, rows.len());
    p.transpose() * p
}

/// ∂G_ℓ/∂y for every coordinate (indexed like `derivs`) and each requested site.
///
/// With an overlap, F = Ψ g(Λ) Ψᵀ and G_ℓ = Σ_{a∈ℓ} (F M)_aa, so
/// ∂G_ℓ = ⟨∂H, Ψ(g[s,t]∘W)Ψᵀ⟩ - ⟨∂M, Ψ((λg)[s,t]∘W)Ψᵀ - F_ℓ⟩ where W is the
/// symmetrised Mulliken weight matrix and F_ℓ the columns of F on ℓ.
pub fn site_gradients_spectral(
    spec: &SpectrumReport,
    derivs: &[PairDerivative],
    g: &GrandPotential,
    sites: &[SiteId],
) -> Result<Vec<Vec<f64>>> {
    let dd = dd_matrix(spec, g);
    let psi = &spec.eigenvectors;
    let Some(mp) = &spec.overlap_vectors else {
        return sites
            .par_iter()
            .map(|&l| {
                let d = dd.component_mul(&weight_matrix(spec, l));
                let q = psi * d * psi.transpose();
                Ok(derivs.iter().map(|dh| dh.h.inner(&q)).collect())
            })
            .collect();
    };
    let lam = &spec.eigenvalues;
    let n = spec.len();
    // (λg)[s,t] = λ_s g[s,t] + g(λ_t)
    let dd_lg = DMatrix::from_fn(n, n, |s, t| lam[s] * dd[(s, t)] + g.value(lam[t]));
    let gv = DMatrix::from_diagonal(&lam.map(|x| g.value(x)));
    let f = psi * gv * psi.transpose();
    sites
        .par_iter()
        .map(|&l| {
            let rows = spec.offsets[l]..spec.offsets[l + 1];
            let w = psi.rows(rows.start, rows.len()).transpose() * mp.rows(rows.start, rows.len());
            let w = (&w + w.transpose()) * 0.5;
            let q = psi * dd.component_mul(&w) * psi.transpose();
            let mut qm = psi * dd_lg.component_mul(&w) * psi.transpose();
            for a in rows {
                for b in 0..n {
                    qm[(a, b)] -= 0.5 * f[(a, b)];
                    qm[(b, a)] -= 0.5 * f[(a, b)];
                }
            }
            Ok(derivs.iter().map(|d| d.h.inner(&q) - d.m.as_ref().map_or(0.0, |dm| dm.inner(&qm))).collect())
        })
        .collect()
}

/// Eigenbasis representations Ψᵀ ∂H_c Ψ of the first derivatives.
fn eigenbasis_derivatives(spec: &SpectrumReport, asm: &Assembly, coords: &[Coordinate]) -> Result<Vec<DMatrix<f64>>> {
    let psi = &spec.eigenvectors;
    coords
        .par_iter()
        .map(|&c| {
            let d = asm.first_derivative(c)?.h;
            let mut hp = DMatrix::zeros(psi.nrows(), psi.ncols());
            for &(r, col, v) in &d.entries {
                for j in 0..psi.ncols() {
                    hp[(r, j)] += v * psi[(col, j)];
                }
            }
            Ok(psi.transpose() * hp)
        })
        .collect()
}

/// Hessian of G_ℓ over `coords` on the spectral route:
/// Σ_{s,t,u} g[λ_s,λ_t,λ_u] p_s p_u (X_st Y_tu + Y_st X_tu) + Σ_{s,u} g[λ_s,λ_u] p_s p_u C_su,
/// summed over the orbitals of ℓ, with p the eigenvector entries on that orbital.
pub fn site_hessian_spectral(
    spec: &SpectrumReport,
    asm: &Assembly,
    g: &GrandPotential,
    site: SiteId,
    coords: &[Coordinate],
) -> Result<DMatrix<f64>> {
    require_orthogonal(spec, "analytic site-energy Hessians")?;
    let n = spec.len();
    let lam = &spec.eigenvalues;
    let psi = &spec.eigenvectors;
    let mut dd3 = vec![0.0; n * n * n];
    for s in 0..n {
        for t in s..n {
            for u in t..n {
                let v = g.divided_difference(&[lam[s], lam[t], lam[u]]);
                for (i, j, k) in [(s, t, u), (s, u, t), (t, s, u), (t, u, s), (u, s, t), (u, t, s)] {
                    dd3[(i * n + j) * n + k] = v;
                }
            }
        }
    }
    let x = eigenbasis_derivatives(spec, asm, coords)?;
    let dd = dd_matrix(spec, g);
    let k = coords.len();
    let mut out = DMatrix::<f64>::zeros(k, k);
    for orb in spec.offsets[site]..spec.offsets[site + 1] {
        let p: Vec<f64> = psi.row(orb).iter().copied().collect();
        // Z_c[t,u] = Σ_s p_s X^c_st g[s,t,u], then scaled by p_u
        let z: Vec<DMatrix<f64>> = x
            .par_iter()
            .map(|xc: &DMatrix<f64>| {
                let mut zc = DMatrix::zeros(n, n);
                for s in 0..n {
                    if p[s] == 0.0 {
                        continue;
                    }
                    for t in 0..n {
                        let f = p[s] * xc[(s, t)];
                        let base = (s * n + t) * n;
                        for u in 0..n {
                            zc[(t, u)] += f * dd3[base + u] * p[u];
                        }
                    }
                }
                zc
            })
            .collect();
        let d = DMatrix::from_fn(n, n, |s, u| dd[(s, u)] * p[s] * p[u]);
        let q = psi * d * psi.transpose();
        let rows: Vec<Vec<f64>> = (0..k)
            .into_par_iter()
            .map(|a| {
                (0..k)
                    .map(|b| {
                        if b < a {
                            return 0.0;
                        }
                        let c = asm.derivative(&[coords[a], coords[b]]).map(|c| c.h.inner(&q)).unwrap_or(f64::NAN);
                        z[a].dot(&x[b]) + z[b].dot(&x[a]) + c
                    })
                    .collect()
            })
            .collect();
        for a in 0..k {
            for b in a..k {
                out[(a, b)] += rows[a][b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            out[(a, b)] = out[(b, a)];
        }
    }
    if out.iter().any(|v: &f64| v.is_nan()) {
        return Err(Error::Model("second derivative assembly failed".into()));
    }
    Ok(out)
}

/// Hessian of the total G over `coords`:
/// Σ_{s,t} g'[λ_s,λ_t] X_st Y_ts + ⟨ρ, ∂²H⟩ (orthogonal models), using
/// g'[a,b] = g[a,a,b] + g[a,b,b].
pub fn energy_hessian_spectral(
    spec: &SpectrumReport,
    asm: &Assembly,
    g: &GrandPotential,
    coords: &[Coordinate],
) -> Result<DMatrix<f64>> {
    require_orthogonal(spec, "analytic energy Hessians")?;
    let x = eigenbasis_derivatives(spec, asm, coords)?;
    let n = spec.len();
    let lam = &spec.eigenvalues;
    let dd = DMatrix::from_fn(n, n, |s, t| {
        g.divided_difference(&[lam[s], lam[s], lam[t]]) + g.divided_difference(&[lam[s], lam[t], lam[t]])
    });
    let (rho, _) = density_matrices(spec, g);
    let weighted: Vec<DMatrix<f64>> = x.iter().map(|xa| xa.component_mul(&dd)).collect();
    let k = coords.len();
    let rows: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|a| {
            (a..k)
                .map(|b| Ok(weighted[a].dot(&x[b]) + asm.derivative(&[coords[a], coords[b]])?.h.inner(&rho)))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;
    let mut out = DMatrix::zeros(k, k);
    for a in 0..k {
        for (j, v) in rows[a].iter().enumerate() {
            out[(a, a + j)] = *v;
            out[(a + j, a)] = *v;
        }
    }
    Ok(out)
}

/// ∂G_ℓ/∂y for every coordinate on the contour route (orthogonal models).
pub fn site_gradients_contour(
    pair: &HamiltonianPair,
    derivs: &[PairDerivative],
    contour: &Contour,
    sites: &[SiteId],
) -> Result<Vec<Vec<f64>>> {
    if pair.m.is_some() {
        return Err(Error::Unsupported("contour derivatives with a non-orthogonal basis".into()));
    }
    let nodes = contour.weighted_nodes()?;
    let (rhs, cols) = site_rhs(pair, sites);
    let per_node: Vec<Vec<Complex64>> = nodes
        .par_iter()
        .map(|&(z, c)| {
            let x = shifted(pair, z).lu().solve(&rhs).ok_or_else(|| Error::Singular(format!("H - z at z = {z}")))?;
            let mut out = vec![Complex64::from(0.0); sites.len() * derivs.len()];
            let mut k = 0;
            for (i, &l) in sites.iter().enumerate() {
                for _ in pair.orbitals_of(l) {
                    let col: Vec<Complex64> = x.column(cols[k].0).iter().copied().collect();
                    for (j, d) in derivs.iter().enumerate() {
                        out[i * derivs.len() + j] -= c * d.h.bilinear(&col, &col);
                    }
                    k += 1;
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut acc = vec![Complex64::from(0.0); sites.len() * derivs.len()];
    for v in &per_node {
        for (a, b) in acc.iter_mut().zip(v) {
            *a += b;
        }
    }
    Ok((0..sites.len()).map(|i| (0..derivs.len()).map(|j| acc[i * derivs.len() + j].re).collect()).collect())
}

/// Hessian of G_ℓ over `coords` on the contour route (orthogonal models).
pub fn site_hessian_contour(
    pair: &HamiltonianPair,
    asm: &Assembly,
    contour: &Contour,
    site: SiteId,
    coords: &[Coordinate],
) -> Result<DMatrix<f64>> {
    if pair.m.is_some() {
        return Err(Error::Unsupported("contour derivatives with a non-orthogonal basis".into()));
    }
    let k = coords.len();
    let first: Vec<PairDerivative> = coords.iter().map(|&c| asm.first_derivative(c)).collect::<Result<_>>()?;
    let mut second = Vec::with_capacity(k * (k + 1) / 2);
    for a in 0..k {
        for b in a..k {
            second.push(asm.derivative(&[coords[a], coords[b]])?);
        }
    }
    let nodes = contour.weighted_nodes()?;
    let orbs: Vec<usize> = pair.orbitals_of(site).collect();
    let per_node: Vec<Vec<Complex64>> = nodes
        .par_iter()
        .map(|&(z, c)| {
            let r = shifted(pair, z).lu().try_inverse().ok_or_else(|| Error::Singular(format!("z = {z}")))?;
            let mut out = vec![Complex64::from(0.0); k * (k + 1) / 2];
            for &o in &orbs {
                let x: Vec<Complex64> = r.column(o).iter().copied().collect();
                let ax: Vec<Vec<(usize, Complex64)>> = first.iter().map(|d| d.h.apply(&x)).collect();
                let mut p = 0;
                for a in 0..k {
                    for b in a..k {
                        let mut rab = Complex64::from(0.0);
                        for &(i, ui) in &ax[a] {
                            for &(j, vj) in &ax[b] {
                                rab += ui * r[(i, j)] * vj;
                            }
                        }
                        out[p] += c * (rab * 2.0 - second[p].h.bilinear(&x, &x));
                        p += 1;
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut acc = vec![Complex64::from(0.0); k * (k + 1) / 2];
    for v in &per_node {
        for (a, b) in acc.iter_mut().zip(v) {
            *a += b;
        }
    }
    let mut out = DMatrix::zeros(k, k);
    let mut p = 0;
    for a in 0..k {
        for b in a..k {
            out[(a, b)] = acc[p].re;
            out[(b, a)] = acc[p].re;
            p += 1;
        }
    }
    Ok(out)
}

/// Density matrix ρ = Σ g'(λ_s) ψ_s ψ_sᵀ and energy-weighted ρ_E = Σ g'(λ_s) λ_s ψ_s ψ_sᵀ.
pub fn density_matrices(spec: &SpectrumReport, g: &GrandPotential) -> (DMatrix<f64>, DMatrix<f64>) {
    let psi = &spec.eigenvectors;
    let occ = DVector::from_iterator(spec.len(), spec.eigenvalues.iter().map(|&l| g.first(l)));
    let weighted = psi * DMatrix::from_diagonal(&occ);
    let rho = &weighted * psi.transpose();
    let en = DVector::from_iterator(spec.len(), spec.eigenvalues.iter().zip(occ.iter()).map(|(l, o)| l * o));
    let rho_e = psi * DMatrix::from_diagonal(&en) * psi.transpose();
    (rho, rho_e)
}

/// ∂G/∂y_c = ⟨ρ, ∂H_c⟩ - ⟨ρ_E, ∂M_c⟩ for each coordinate derivative.
pub fn energy_gradient(spec: &SpectrumReport, derivs: &[PairDerivative], g: &GrandPotential) -> Vec<f64> {
    let (rho, rho_e) = density_matrices(spec, g);
    derivs.iter().map(|d| d.h.inner(&rho) - d.m.as_ref().map_or(0.0, |m| m.inner(&rho_e))).collect()
}

/// Forces f_m = -∂G/∂y_m.
pub fn forces(spec: &SpectrumReport, derivs: &[PairDerivative], g: &GrandPotential) -> Vec<Vec3> {
    let grad = energy_gradient(spec, derivs, g);
    (0..grad.len() / 3).map(|m| -Vec3::new(grad[3 * m], grad[3 * m + 1], grad[3 * m + 2])).collect()
}

/// Site energies and forces of one configuration in one generalised solve.
pub struct Snapshot {
    pub site_energies: Vec<f64>,
    pub forces: Vec<Vec3>,
    pub total: f64,
}

/// Central finite differences of site energies and forces with respect to every
/// coordinate, at step `h`. Entry `[3m+i]` holds (∂G_ℓ/∂y_mi for all ℓ, ∂f_ℓ/∂y_mi for all ℓ).
pub fn fd_snapshot_derivatives(
    model: &dyn TightBinding,
    config: &Configuration,
    g: &GrandPotential,
    h: f64,
) -> Result<Vec<(Vec<f64>, Vec<Vec3>)>> {
    let coords: Vec<Coordinate> = (0..config.len()).flat_map(|m| (0..3).map(move |i| (m, i))).collect();
    coords
        .par_iter()
        .map(|&(m, i)| {
            let p = snapshot(model, &config.nudged(m, i, h), g)?;
            let q = snapshot(model, &config.nudged(m, i, -h), g)?;
            let de = p.site_energies.iter().zip(&q.site_energies).map(|(a, b)| (a - b) / (2.0 * h)).collect();
            let df = p.forces.iter().zip(&q.forces).map(|(a, b)| (a - b) / (2.0 * h)).collect();
            Ok((de, df))
        })
        .collect()
}

/// Site Hessians from central differences of the analytic site gradients, one
/// symmetrised 3n×3n matrix per requested site. Works with an overlap.
pub fn fd_site_hessians(
    model: &dyn TightBinding,
    config: &Configuration,
    g: &GrandPotential,
    sites: &[SiteId],
    h: f64,
) -> Result<Vec<DMatrix<f64>>> {
    let n = 3 * config.len();
    let gradients = |c: &Configuration| -> Result<Vec<Vec<f64>>> {
        let asm = Assembly::new(model, c, true)?;
        let spec = spectral::solve(&asm.hamiltonian()?)?;
        site_gradients_spectral(&spec, &asm.first_derivatives()?, g, sites)
    };
    let columns: Vec<Vec<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|c| {
            let (m, i) = (c / 3, c % 3);
            let p = gradients(&config.nudged(m, i, h))?;
            let q = gradients(&config.nudged(m, i, -h))?;
            Ok(p.iter().zip(&q).map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) / (2.0 * h)).collect()).collect())
        })
        .collect::<Result<_>>()?;
    Ok((0..sites.len())
        .map(|k| {
            let m = DMatrix::from_fn(n, n, |r, c| columns[c][k][r]);
            (&m + m.transpose()) * 0.5
        })
        .collect())
}

pub fn snapshot(model: &dyn TightBinding, config: &Configuration, g: &GrandPotential) -> Result<Snapshot> {
    let asm = Assembly::new(model, config, true)?;
    let pair = asm.hamiltonian()?;
    let spec = spectral::solve(&pair)?;
    let derivs = asm.first_derivatives()?;
    let rep = site_energies_spectral(&spec, g, &all_sites(&spec));
    Ok(Snapshot { site_energies: rep.values, forces: forces(&spec, &derivs, g), total: total_energy(&spec, g) })
}

/// Richardson-extrapolated central differences.
#[derive(Debug, Clone)]
pub struct FdEstimate {
    pub step: f64,
    pub values: Vec<f64>,
}

/// For each step h returns (4 D(h/2) - D(h)) / 3 with D(h) = (f(h) - f(-h)) / 2h.
pub fn richardson<F>(f: F, steps: &[f64]) -> Result<Vec<FdEstimate>>
where
    F: Fn(f64) -> Result<Vec<f64>> + Sync,
{
    steps
        .iter()
        .map(|&h| {
            let d = |h: f64| -> Result<Vec<f64>> {
                let (p, m) = (f(h)?, f(-h)?);
                Ok(p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect())
            };
            let (full, half) = (d(h)?, d(0.5 * h)?);
            Ok(FdEstimate { step: h, values: full.iter().zip(&half).map(|(a, b)| (4.0 * b - a) / 3.0).collect() })
        })
        .collect()
}

/// Smallest over steps of max|estimate - exact| / max|exact|.
pub fn min_relative_error(estimates: &[FdEstimate], exact: &[f64]) -> f64 {
    let scale = exact.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
    estimates
        .iter()
        .map(|e| e.values.iter().zip(exact).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale)
        .fold(f64::INFINITY, f64::min)
}

/// Default step ladder in Å.
pub const DEFAULT_STEPS: [f64; 3] = [1e-4, 1e-5, 1e-6];

/// Central-difference step for finite-difference derivative datasets, Å.
pub const FD_STEP: f64 = 1e-5;
