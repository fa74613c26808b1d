//! Point defects: builders, the extended index set Λ ∪ Λ^ref, the split
//! H_def = H_ref + P₁ + P₂ and Woodbury resolvent updates.

use crate::error::{Error, Result};
use crate::geometry::{Configuration, SiteId, Vec3};
use crate::locality::{DecayDataset, DecayKind, DecayPoint, FitOptions};
use crate::model::{Assembly, TightBinding};
use crate::spectral::{self, SpectrumReport};
use crate::Complex64;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DefectKind {
    Interstitial { species: String, position: [f64; 3] },
    Vacancy { site: SiteId },
    Displacement { site: SiteId, offset: [f64; 3] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefectSpec {
    #[serde(flatten)]
    pub kind: DefectKind,
    /// R_def (Å).
    pub radius: f64,
}

/// A defective configuration with its correspondence to the reference.
#[derive(Debug, Clone)]
pub struct Defect {
    pub config: Configuration,
    /// Reference site of each defective site, `None` for inserted atoms.
    pub origin: Vec<Option<SiteId>>,
    pub center: Vec3,
    pub spec: DefectSpec,
}

impl Defect {
    /// Sites of the defective configuration without a reference counterpart.
    pub fn inserted(&self) -> Vec<SiteId> {
        (0..self.origin.len()).filter(|&i| self.origin[i].is_none()).collect()
    }
}

pub fn build_defect(reference: &Configuration, spec: &DefectSpec) -> Result<Defect> {
    let mut species = reference.species.clone();
    let mut positions = reference.positions.clone();
    let mut origin: Vec<Option<SiteId>> = (0..reference.len()).map(Some).collect();
    let check_site = |s: SiteId| {
        if s < reference.len() {
            Ok(())
        } else {
            Err(Error::Defect(format!("site {s} out of range")))
        }
    };
    let center = match &spec.kind {
        DefectKind::Interstitial { species: sp, position } => {
            let p = Vec3::from(*position);
            species.push(sp.clone());
            positions.push(p);
            origin.push(None);
            p
        }
        DefectKind::Vacancy { site } => {
            check_site(*site)?;
            species.remove(*site);
            positions.remove(*site);
            origin.remove(*site);
            reference.positions[*site]
        }
        DefectKind::Displacement { site, offset } => {
            check_site(*site)?;
            positions[*site] += Vec3::from(*offset);
            reference.positions[*site]
        }
    };
    let config = Configuration::new(species, positions, reference.cell.clone(), reference.m_min)
        .map_err(|e| Error::Defect(format!("inadmissible defect: {e}")))?;
    let defect = Defect { config, origin, center, spec: spec.clone() };
    // sites away from the defect must coincide with the reference
    for (i, o) in defect.origin.iter().enumerate() {
        if let Some(r) = o {
            let moved = (defect.config.positions[i] - reference.positions[*r]).norm() > 0.0;
            if moved && reference.distance_to_point(&center, *r) > spec.radius {
                return Err(Error::Defect(format!("site {r} changes outside the defect radius")));
            }
        }
    }
    Ok(defect)
}

/// Result of placing an interstitial so that a gap eigenvalue sits at a target energy.
#[derive(Debug, Clone)]
pub struct TweakResult {
    pub defect: Defect,
    pub offset: f64,
    pub level: f64,
    pub spectrum: SpectrumReport,
}

/// Eigenvalue inside `gap` nearest to `target`.
fn gap_level(spec: &SpectrumReport, gap: (f64, f64), target: f64) -> Option<f64> {
    spec.states_in(gap)
        .into_iter()
        .map(|i| spec.eigenvalues[i])
        .min_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs()))
}

/// Moves an interstitial along `start + t·direction`, t ∈ [0, 1], scanning
/// `samples` points for a sign change of λ_def(t) - target and bisecting it.
#[allow(clippy::too_many_arguments)]
pub fn tweak_interstitial(
    model: &dyn TightBinding,
    reference: &Configuration,
    species: &str,
    start: Vec3,
    direction: Vec3,
    radius: f64,
    gap: (f64, f64),
    target: f64,
    samples: usize,
) -> Result<TweakResult> {
    let eval = |t: f64| -> Result<(Defect, SpectrumReport, Option<f64>)> {
        let p = start + direction * t;
        let spec = DefectSpec {
            kind: DefectKind::Interstitial { species: species.to_string(), position: [p.x, p.y, p.z] },
            radius,
        };
        let d = build_defect(reference, &spec)?;
        let s = spectral::solve(&Assembly::new(model, &d.config, true)?.hamiltonian()?)?;
        let level = gap_level(&s, gap, target);
        Ok((d, s, level))
    };
    let ts: Vec<f64> = (0..=samples).map(|i| i as f64 / samples as f64).collect();
    let values: Vec<Option<f64>> =
        ts.par_iter().map(|&t| Ok(eval(t).ok().and_then(|e| e.2).map(|l| l - target))).collect::<Result<_>>()?;
    let bracket = (0..samples).find(|&i| matches!((values[i], values[i + 1]), (Some(a), Some(b)) if a * b <= 0.0));
    let Some(i) = bracket else {
        return Err(Error::Defect(format!("no gap level crosses {target} along the scan")));
    };
    let (mut lo, mut hi) = (ts[i], ts[i + 1]);
    let mut f_lo = values[i].unwrap_or(0.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let Some(f) = eval(mid)?.2.map(|l| l - target) else { break };
        if f * f_lo <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
            f_lo = f;
        }
        if f.abs() < 1e-12 || hi - lo < 1e-14 {
            break;
        }
    }
    let t = 0.5 * (lo + hi);
    let (defect, spectrum, level) = eval(t)?;
    let level = level.ok_or_else(|| Error::Defect("gap level vanished after bisection".into()))?;
    Ok(TweakResult { defect, offset: t, level, spectrum })
}

/// H_ref and H_def on the common index set Λ ∪ Λ^ref. Reference sites come
/// first, then inserted sites; rows of absent sites are zero. Present rows are
/// shifted by `shift` (z₀) so the padding zeros can be moved away from the
/// spectrum of interest.
#[derive(Debug, Clone)]
pub struct ExtendedPair {
    pub reference: DMatrix<f64>,
    pub defect: DMatrix<f64>,
    pub offsets: Vec<usize>,
    pub positions: Vec<Vec3>,
    pub shift: f64,
}

impl ExtendedPair {
    pub fn new(model: &dyn TightBinding, reference: &Configuration, defect: &Defect, shift: f64) -> Result<Self> {
        let ref_pair = Assembly::new(model, reference, true)?.hamiltonian()?;
        let def_pair = Assembly::new(model, &defect.config, true)?.hamiltonian()?;
        if ref_pair.m.is_some() || def_pair.m.is_some() {
            return Err(Error::Unsupported("extended pairs need an orthogonal model".into()));
        }
        // union index of each defect site
        let inserted = defect.inserted();
        let union_of = |d: SiteId| match defect.origin[d] {
            Some(r) => r,
            None => reference.len() + inserted.iter().position(|&x| x == d).unwrap_or(0),
        };
        let n_union = reference.len() + inserted.len();
        let mut norb = vec![0usize; n_union];
        let mut positions = vec![Vec3::zeros(); n_union];
        for r in 0..reference.len() {
            norb[r] = model.orbitals(&reference.species[r])?;
            positions[r] = reference.positions[r];
        }
        for d in 0..defect.config.len() {
            norb[union_of(d)] = model.orbitals(&defect.config.species[d])?;
            if defect.origin[d].is_none() {
                positions[union_of(d)] = defect.config.positions[d];
            }
        }
        let mut offsets = vec![0];
        for n in &norb {
            offsets.push(offsets.last().copied().unwrap_or(0) + n);
        }
        let dim = offsets[n_union];
        let embed = |pair: &crate::model::HamiltonianPair, map: &dyn Fn(SiteId) -> SiteId| {
            let mut out = DMatrix::zeros(dim, dim);
            for a in 0..pair.sites() {
                for b in 0..pair.sites() {
                    let (ra, rb) = (pair.orbitals_of(a), pair.orbitals_of(b));
                    let (ua, ub) = (offsets[map(a)], offsets[map(b)]);
                    for (i, oi) in ra.clone().enumerate() {
                        for (j, oj) in rb.clone().enumerate() {
                            out[(ua + i, ub + j)] = pair.h[(oi, oj)];
                        }
                    }
                }
                for o in offsets[map(a)]..offsets[map(a) + 1] {
                    out[(o, o)] += shift;
                }
            }
            out
        };
        let reference_m = embed(&ref_pair, &|r| r);
        let defect_m = embed(&def_pair, &union_of);
        Ok(Self { reference: reference_m, defect: defect_m, offsets, positions, shift })
    }

    pub fn difference(&self) -> DMatrix<f64> {
        &self.defect - &self.reference
    }
}

/// H_def = H_ref + P₁ + U V with ‖P₁‖_F ≤ δ and U, V supported on sites within R_δ.
#[derive(Debug, Clone)]
pub struct RankDecomposition {
    pub p1: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub delta: f64,
    pub p1_norm: f64,
    pub rank: usize,
    pub radius: f64,
    pub support: Vec<SiteId>,
    /// max |H_def - H_ref - P₁ - U V|
    pub residual: f64,
}

/// Singular values below this are dropped from P₂.
pub const RANK_CUTOFF: f64 = 1e-12;

/// Grows the support ball about `center` through the union-site distances until
/// the remainder outside the ball has Frobenius norm ≤ δ.
pub fn decompose_hamiltonian(
    ext: &ExtendedPair,
    center: &Vec3,
    distance: impl Fn(&Vec3, &Vec3) -> f64,
    delta: f64,
) -> Result<RankDecomposition> {
    if !(delta >= 0.0) {
        return Err(Error::Invalid(format!("delta must be non-negative, got {delta}")));
    }
    let diff = ext.difference();
    let n_sites = ext.offsets.len() - 1;
    let mut order: Vec<(f64, SiteId)> = (0..n_sites).map(|s| (distance(center, &ext.positions[s]), s)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut in_ball = vec![false; diff.nrows()];
    let mut support = Vec::new();
    let mut radius = 0.0;
    let outside_norm = |mask: &[bool]| {
        let mut s = 0.0;
        for i in 0..diff.nrows() {
            for j in 0..diff.ncols() {
                if !(mask[i] && mask[j]) {
                    s += diff[(i, j)].powi(2);
                }
            }
        }
        s.sqrt()
    };
    let mut k = 0;
    while outside_norm(&in_ball) > delta {
        // add every site at the next distance
        let r = order[k].0;
        while k < order.len() && order[k].0 <= r + 1e-12 {
            let s = order[k].1;
            support.push(s);
            in_ball[ext.offsets[s]..ext.offsets[s + 1]].fill(true);
            k += 1;
        }
        radius = r;
    }
    let idx: Vec<usize> = (0..diff.nrows()).filter(|&i| in_ball[i]).collect();
    let mut p1 = diff.clone();
    for &i in &idx {
        for &j in &idx {
            p1[(i, j)] = 0.0;
        }
    }
    let dim = diff.nrows();
    let (u, v, rank) = if idx.is_empty() {
        (DMatrix::zeros(dim, 0), DMatrix::zeros(0, dim), 0)
    } else {
        let block = DMatrix::from_fn(idx.len(), idx.len(), |a, b| diff[(idx[a], idx[b])]);
        let svd = block.svd(true, true);
        let (bu, bv) = (svd.u.ok_or(Error::Singular("svd".into()))?, svd.v_t.ok_or(Error::Singular("svd".into()))?);
        let keep: Vec<usize> =
            (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > RANK_CUTOFF).collect();
        let mut u = DMatrix::zeros(dim, keep.len());
        let mut v = DMatrix::zeros(keep.len(), dim);
        for (c, &i) in keep.iter().enumerate() {
            for (a, &row) in idx.iter().enumerate() {
                u[(row, c)] = bu[(a, i)] * svd.singular_values[i];
                v[(c, row)] = bv[(i, a)];
            }
        }
        (u, v, keep.len())
    };
    let residual = (&diff - &p1 - &u * &v).amax();
    let p1_norm = p1.norm();
    Ok(RankDecomposition { p1, u, v, delta, p1_norm, rank, radius, support, residual })
}

#[derive(Debug, Clone)]
pub struct WoodburySolution {
    pub columns: DMatrix<Complex64>,
    /// 2-norm condition number of the capacitance matrix I + V R_ref U.
    pub capacitance_condition: f64,
}

/// (H_ref + U V - z)⁻¹ rhs = R rhs - R U (I + V R U)⁻¹ V R rhs with R = (H_ref - z)⁻¹.
pub fn woodbury_resolvent(
    h_ref: &DMatrix<f64>,
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    z: Complex64,
    rhs: &DMatrix<Complex64>,
) -> Result<WoodburySolution> {
    let n = h_ref.nrows();
    let k = u.ncols();
    let mut a = h_ref.map(Complex64::from);
    for i in 0..n {
        a[(i, i)] -= z;
    }
    let lu = a.lu();
    let singular = || Error::Singular(format!("H_ref - z at z = {z}"));
    let r_rhs = lu.solve(rhs).ok_or_else(singular)?;
    if k == 0 {
        return Ok(WoodburySolution { columns: r_rhs, capacitance_condition: 1.0 });
    }
    let uc = u.map(Complex64::from);
    let vc = v.map(Complex64::from);
    let r_u = lu.solve(&uc).ok_or_else(singular)?;
    let cap = DMatrix::<Complex64>::identity(k, k) + &vc * &r_u;
    let sv = cap.clone().svd(false, false).singular_values;
    let condition = sv.max() / sv.min();
    let y = cap.lu().solve(&(&vc * &r_rhs)).ok_or_else(|| Error::Singular(format!("capacitance matrix at z = {z}")))?;
    Ok(WoodburySolution { columns: r_rhs - r_u * y, capacitance_condition: condition })
}

/// Orbital-block magnitudes |R_{ℓk}(z)| of the resolvent columns of `source`.
pub fn resolvent_decay(
    h: &DMatrix<f64>,
    offsets: &[usize],
    config: &Configuration,
    z: Complex64,
    source: SiteId,
) -> Result<DecayDataset> {
    let n = h.nrows();
    let cols: Vec<usize> = (offsets[source]..offsets[source + 1]).collect();
    let rhs = DMatrix::from_fn(n, cols.len(), |r, c| Complex64::from((r == cols[c]) as i32 as f64));
    let mut a = h.map(Complex64::from);
    for i in 0..n {
        a[(i, i)] -= z;
    }
    let x = a.lu().solve(&rhs).ok_or_else(|| Error::Singular(format!("z = {z}")))?;
    let points = (0..config.len())
        .filter(|&k| k != source)
        .map(|k| {
            let mag = (offsets[k]..offsets[k + 1])
                .flat_map(|r| x.row(r).iter().map(|v| v.norm_sqr()).collect::<Vec<_>>())
                .sum::<f64>()
                .sqrt();
            DecayPoint {
                distance: config.distance(source, k),
                magnitude: mag,
                site: source,
                partners: vec![k],
                kind: DecayKind::Resolvent,
                near_defect: false,
            }
        })
        .collect();
    Ok(DecayDataset::new(points))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CombesThomasAudit {
    /// dist(z, σ)
    pub distance: f64,
    pub exponent: f64,
    pub r_squared: f64,
    /// Fitted log-prefactor minus log(2/𝔡); non-positive when the bound holds.
    pub intercept_excess: f64,
    /// γ̂ / min(1, 𝔡)
    pub exponent_ratio: f64,
}

/// Fits the decay of one resolvent column and compares with (2/𝔡) e^{-γ r}.
pub fn combes_thomas_audit(
    h: &DMatrix<f64>,
    offsets: &[usize],
    config: &Configuration,
    z: Complex64,
    source: SiteId,
    opts: &FitOptions,
) -> Result<(DecayDataset, CombesThomasAudit)> {
    let eig = h.clone().symmetric_eigenvalues();
    let distance = eig.iter().map(|&l| (Complex64::from(l) - z).norm()).fold(f64::INFINITY, f64::min);
    let data = resolvent_decay(h, offsets, config, z, source)?.fitted(opts)?;
    let fit = data.fit.ok_or_else(|| Error::Fit("no fit".into()))?;
    let audit = CombesThomasAudit {
        distance,
        exponent: fit.exponent,
        r_squared: fit.r_squared,
        intercept_excess: fit.log_prefactor - (2.0 / distance).ln(),
        exponent_ratio: fit.exponent / distance.min(1.0),
    };
    Ok((data, audit))
}

/// Magnitudes of the Woodbury correction R_ref U (I + V R_ref U)⁻¹ V R_ref on
/// site pairs, against |y(ℓ) - c| + |y(k) - c| for the defect centre c.
pub fn correction_decay(
    ext: &ExtendedPair,
    decomposition: &RankDecomposition,
    center: &Vec3,
    distance: impl Fn(&Vec3, &Vec3) -> f64,
    z: Complex64,
) -> Result<DecayDataset> {
    let n = ext.reference.nrows();
    let id = DMatrix::<Complex64>::identity(n, n);
    let updated = woodbury_resolvent(&ext.reference, &decomposition.u, &decomposition.v, z, &id)?.columns;
    let plain = woodbury_resolvent(&ext.reference, &DMatrix::zeros(n, 0), &DMatrix::zeros(0, n), z, &id)?.columns;
    let corr = plain - updated;
    let sites = ext.offsets.len() - 1;
    let mut points = Vec::new();
    for a in 0..sites {
        for b in a..sites {
            let mut s = 0.0;
            for i in ext.offsets[a]..ext.offsets[a + 1] {
                for j in ext.offsets[b]..ext.offsets[b + 1] {
                    s += corr[(i, j)].norm_sqr();
                }
            }
            points.push(DecayPoint {
                distance: distance(center, &ext.positions[a]) + distance(center, &ext.positions[b]),
                magnitude: s.sqrt(),
                site: a,
                partners: vec![b],
                kind: DecayKind::Correction,
                near_defect: false,
            });
        }
    }
    Ok(DecayDataset::new(points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build;
    use crate::model::ToyModel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chain_with(model: &ToyModel) -> (Configuration, ExtendedPair, Defect) {
        let reference = build::chain(20, 1.0, &["A", "B"], false, 0.4).unwrap();
        let spec = DefectSpec {
            kind: DefectKind::Interstitial { species: "A".into(), position: [9.5, 0.8, 0.0] },
            radius: 1.0,
        };
        let defect = build_defect(&reference, &spec).unwrap();
        let ext = ExtendedPair::new(model, &reference, &defect, 0.0).unwrap();
        (reference, ext, defect)
    }

    #[test]
    fn vacancy_removes_one_site() {
        let reference = build::diamond_cubic("Si", 5.43, [2, 2, 2]).unwrap();
        let d = build_defect(&reference, &DefectSpec { kind: DefectKind::Vacancy { site: 5 }, radius: 1.0 }).unwrap();
        assert_eq!(d.config.len(), 63);
        assert_eq!(d.origin[5], Some(6));
        assert_eq!(d.config.positions[5], reference.positions[6]);
    }

    #[test]
    fn tetrahedral_interstitial_is_admissible() {
        let a = 5.43;
        let mut reference = build::diamond_cubic("Si", a, [2, 2, 2]).unwrap();
        reference.m_min = 0.7 * a * 3f64.sqrt() / 4.0;
        let spec = DefectSpec {
            kind: DefectKind::Interstitial { species: "Si".into(), position: [a / 2.0, a / 2.0, a / 2.0] },
            radius: 3.0,
        };
        let d = build_defect(&reference, &spec).unwrap();
        let nearest = (0..64).map(|s| d.config.distance(64, s)).fold(f64::INFINITY, f64::min);
        assert!((nearest - a * 3f64.sqrt() / 4.0).abs() < 1e-9);
    }

    #[test]
    fn overlapping_interstitial_rejected() {
        let reference = build::chain(6, 1.0, &["A"], false, 0.4).unwrap();
        let spec = DefectSpec {
            kind: DefectKind::Interstitial { species: "A".into(), position: [2.1, 0.0, 0.0] },
            radius: 1.0,
        };
        assert!(matches!(build_defect(&reference, &spec), Err(Error::Defect(_))));
    }

    #[test]
    fn no_defect_gives_empty_split() {
        let model = ToyModel::binary_chain(0.5);
        let reference = build::chain(10, 1.0, &["A", "B"], false, 0.4).unwrap();
        let d = build_defect(
            &reference,
            &DefectSpec { kind: DefectKind::Displacement { site: 3, offset: [0.0; 3] }, radius: 1.0 },
        )
        .unwrap();
        let ext = ExtendedPair::new(&model, &reference, &d, 0.0).unwrap();
        let dec = decompose_hamiltonian(&ext, &d.center, |a, b| (a - b).norm(), 1e-3).unwrap();
        assert_eq!(dec.rank, 0);
        assert_eq!(dec.p1_norm, 0.0);
    }

    #[test]
    fn interstitial_decomposition_is_exact_and_localised() {
        let model = ToyModel::binary_chain(0.5);
        let (_, ext, defect) = chain_with(&model);
        for delta in [1.0, 1e-3, 0.0] {
            let dec = decompose_hamiltonian(&ext, &defect.center, |a, b| (a - b).norm(), delta).unwrap();
            assert!(dec.residual < 1e-13);
            assert!(dec.p1_norm <= delta);
            for i in 0..ext.reference.nrows() {
                let site = (0..ext.offsets.len() - 1).find(|&s| ext.offsets[s + 1] > i).unwrap();
                if !dec.support.contains(&site) {
                    assert!(dec.u.row(i).amax() == 0.0 && dec.v.column(i).amax() == 0.0);
                }
            }
        }
        // δ = 0 needs every coupled site: the interstitial plus its neighbours within the cutoff
        let dec = decompose_hamiltonian(&ext, &defect.center, |a, b| (a - b).norm(), 0.0).unwrap();
        assert!(dec.radius <= 1.5 + 1.0);
    }

    #[test]
    fn sherman_morrison_rank_one() {
        let h = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0, 3.0]));
        let mut u = DMatrix::zeros(3, 1);
        u[(1, 0)] = 0.5;
        let v = u.transpose();
        let z = Complex64::new(0.3, 0.2);
        let rhs = DMatrix::from_fn(3, 1, |r, _| Complex64::from((r == 1) as i32 as f64));
        let sol = woodbury_resolvent(&h, &u, &v, z, &rhs).unwrap();
        let exact = Complex64::from(1.0) / (Complex64::from(2.25) - z);
        assert!((sol.columns[(1, 0)] - exact).norm() < 1e-14);
        assert!(sol.columns[(0, 0)].norm() < 1e-15);
    }

    #[test]
    fn woodbury_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100;
        let k = 6;
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let h_ref = (&b + b.transpose()) * 0.5;
        let w = DMatrix::from_fn(n, k, |_, _| rng.random_range(-0.5..0.5));
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0)));
        let u = &w * &s;
        let v = w.transpose();
        let full = &h_ref + &u * &v;
        let eig = full.clone().symmetric_eigenvalues();
        let rhs = DMatrix::<Complex64>::identity(n, n);
        let mut tested = 0;
        while tested < 20 {
            let z = Complex64::new(rng.random_range(-8.0..8.0), rng.random_range(-0.5..0.5));
            let margin = eig.iter().map(|&l| (Complex64::from(l) - z).norm()).fold(f64::INFINITY, f64::min);
            if margin < 1e-3 {
                continue;
            }
            let sol = woodbury_resolvent(&h_ref, &u, &v, z, &rhs).unwrap();
            let mut a = full.map(Complex64::from);
            for i in 0..n {
                a[(i, i)] -= z;
            }
            let direct = a.lu().try_inverse().unwrap();
            let err = (sol.columns - direct).iter().fold(0.0f64, |m, x| m.max(x.norm()));
            assert!(err < 1e-10, "z = {z}, err = {err}");
            tested += 1;
        }
    }

    #[test]
    fn diagonal_resolvent_has_no_off_diagonal_decay() {
        let reference = build::chain(8, 1.0, &["A"], false, 0.4).unwrap();
        let h = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(8, |i, _| i as f64));
        let offsets: Vec<usize> = (0..=8).collect();
        let d = resolvent_decay(&h, &offsets, &reference, Complex64::new(0.5, 0.1), 3).unwrap();
        assert!(d.points.iter().all(|p| p.magnitude == 0.0));
    }

    #[test]
    fn combes_thomas_exponent_grows_with_gap() {
        let mut last = 0.0;
        for delta in [0.25, 0.5, 1.0] {
            let model = ToyModel::binary_chain(delta);
            let reference = build::chain(60, 1.0, &["A", "B"], false, 0.4).unwrap();
            let pair = Assembly::new(&model, &reference, false).unwrap().hamiltonian().unwrap();
            let opts = FitOptions { window: (2.0, 25.0), bin_width: 2.0, floor: 1e-12 };
            let (_, audit) =
                combes_thomas_audit(&pair.h, &pair.offsets, &reference, Complex64::from(0.0), 30, &opts).unwrap();
            assert!(audit.r_squared > 0.95, "{audit:?}");
            assert!(audit.exponent >= last);
            assert!(audit.intercept_excess <= 0.5);
            last = audit.exponent;
        }
    }
}
