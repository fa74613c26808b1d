//! NRL tight-binding model: density-dependent on-site terms, polynomial times
//! exponential bond integrals and a non-orthogonal overlap.
//!
//! All stored parameters are in eV and Å. The native NRL text format (Rydberg,
//! bohr, exponents stored as square roots) is converted on load.

use super::slater_koster::{block, BondIntegrals};
use super::{BondBlocks, BondDerivatives, DecayMetadata, OnsiteTerms, TightBinding};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use nalgebra::{DMatrix, DVector, SVector};
use num_dual::{gradient, hessian, second_derivative, DualNum};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Rydberg in eV.
pub const RYDBERG: f64 = 13.605693122994;
/// Bohr radius in Å.
pub const BOHR: f64 = 0.529177210903;
/// Offset L_c in the logistic cutoff.
const CUTOFF_SHIFT: f64 = 5.0;

/// Channel order used for hopping and overlap tables.
pub const CHANNELS: [&str; 10] =
    ["ss_sigma", "sp_sigma", "pp_sigma", "pp_pi", "sd_sigma", "pd_sigma", "pd_pi", "dd_sigma", "dd_pi", "dd_delta"];
/// Channels whose overlap tends to 1 at zero separation in the new-style form.
const SAME_ORBITAL: [bool; 10] = [true, false, true, true, false, false, false, true, true, true];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlapStyle {
    /// S(r) = (δ + p r + q r² + s r³) e^{-h r} f_c(r)
    New,
    /// S(r) = (e + f r + f̄ r²) e^{-h r} f_c(r)
    Old,
}

/// Parameters for one element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NrlSpecies {
    /// 1, 4 or 9 orbitals.
    pub orbitals: usize,
    /// Valence electrons per atom.
    pub valence: f64,
    /// Exponent of the pair density kernel e^{-λ r} (1/Å).
    pub density_exponent: f64,
    /// (a, b, c, d) for s, p, t2g, eg in eV.
    pub onsite: [[f64; 4]; 4],
    /// (e, f, f̄, h) per channel: eV, eV/Å, eV/Å², 1/Å.
    pub hopping: [[f64; 4]; 10],
    /// Four coefficients per channel (see [`OverlapStyle`]), powers of 1/Å, and h in 1/Å.
    pub overlap: [[f64; 4]; 10],
}

/// NRL model for a single element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NrlModel {
    /// Cutoff radius R_c (Å).
    pub cutoff: f64,
    /// Logistic screening length l_c (Å).
    pub screening: f64,
    pub overlap_style: OverlapStyle,
    pub species: BTreeMap<String, NrlSpecies>,
}

fn parse_value(line: &str, lineno: usize) -> Result<f64> {
    line.split_whitespace()
        .next()
        .and_then(|t| t.replace(['D', 'd'], "E").parse::<f64>().ok())
        .ok_or_else(|| Error::Params { line: lineno, message: format!("expected a number, found `{line}`") })
}

impl NrlModel {
    /// Reads the native single-element NRL format. The element symbol is taken
    /// from the parenthesised token on the title line unless `symbol` is given.
    pub fn from_native(text: &str, symbol: Option<&str>) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        let need = 7 + 97;
        if lines.len() < need {
            return Err(Error::Params { line: lines.len(), message: format!("expected {need} lines") });
        }
        let style = match lines[0].split_whitespace().next() {
            Some("NN00001") => OverlapStyle::New,
            Some("NN00000") => OverlapStyle::Old,
            other => return Err(Error::Params { line: 1, message: format!("unknown format tag {other:?}") }),
        };
        let name = match symbol {
            Some(s) => s.to_string(),
            None => {
                let t = lines[1];
                match (t.find('('), t.find(')')) {
                    (Some(a), Some(b)) if b > a + 1 => t[a + 1..b].trim().to_string(),
                    _ => return Err(Error::Params { line: 2, message: "no element symbol on title line".into() }),
                }
            }
        };
        let ntypes = parse_value(lines[2], 3)?;
        if ntypes != 1.0 {
            return Err(Error::Params { line: 3, message: "only single-element files are supported".into() });
        }
        let mut head = lines[3].split_whitespace();
        let mut next = |lineno| -> Result<f64> {
            head.next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::Params { line: lineno, message: "expected RCUT and SCREENL".into() })
        };
        let rcut = next(4)? * BOHR;
        let screening = next(4)? * BOHR;
        let orbitals = parse_value(lines[4], 5)? as usize;
        if ![1, 4, 9].contains(&orbitals) {
            return Err(Error::Params { line: 5, message: format!("unsupported orbital count {orbitals}") });
        }
        let occupancy: Vec<f64> = lines[6].split_whitespace().take(3).filter_map(|t| t.parse().ok()).collect();
        if occupancy.len() != 3 {
            return Err(Error::Params { line: 7, message: "expected three occupancies".into() });
        }
        let v: Vec<f64> = (0..97).map(|i| parse_value(lines[7 + i], 8 + i)).collect::<Result<_>>()?;
        let lambda = v[0];
        let mut onsite = [[0.0; 4]; 4];
        for (k, row) in onsite.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = v[1 + 4 * k + j] * RYDBERG;
            }
        }
        let convert = |base: usize, energy: bool| -> [[f64; 4]; 10] {
            let mut t = [[0.0; 4]; 10];
            for (c, row) in t.iter_mut().enumerate() {
                let p = &v[base + 4 * c..base + 4 * c + 4];
                let e = if energy { RYDBERG } else { 1.0 };
                let new_overlap = !energy && style == OverlapStyle::New;
                if new_overlap {
                    *row = [p[0] / BOHR, p[1] / BOHR.powi(2), p[2] / BOHR.powi(3), p[3] * p[3] / BOHR];
                } else {
                    *row = [p[0] * e, p[1] * e / BOHR, p[2] * e / BOHR.powi(2), p[3] * p[3] / BOHR];
                }
            }
            t
        };
        let sp = NrlSpecies {
            orbitals,
            valence: occupancy.iter().sum(),
            density_exponent: lambda * lambda / BOHR,
            onsite,
            hopping: convert(17, true),
            overlap: convert(57, false),
        };
        let model = Self { cutoff: rcut, screening, overlap_style: style, species: [(name, sp)].into() };
        model.validate()?;
        Ok(model)
    }

    /// Reads the TOML representation (eV, Å) with an `[nrl]` table.
    pub fn from_toml(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct File {
            nrl: NrlModel,
        }
        let f: File = toml::from_str(text).map_err(|e| super::toy::params_error(&e, text))?;
        f.nrl.validate()?;
        Ok(f.nrl)
    }

    pub fn to_toml(&self) -> String {
        #[derive(Serialize)]
        struct File<'a> {
            nrl: &'a NrlModel,
        }
        toml::to_string(&File { nrl: self }).expect("NRL parameters serialise")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff > 0.0 && self.screening > 0.0) {
            return Err(Error::Model("NRL cutoff and screening must be positive".into()));
        }
        if self.species.len() != 1 {
            return Err(Error::Model("NRL model supports exactly one element".into()));
        }
        for (name, s) in &self.species {
            if ![1, 4, 9].contains(&s.orbitals) {
                return Err(Error::Model(format!("{name}: orbitals must be 1, 4 or 9")));
            }
        }
        Ok(())
    }

    fn get(&self, species: &str) -> Result<&NrlSpecies> {
        self.species.get(species).ok_or_else(|| Error::UnknownSpecies(species.to_string()))
    }

    fn cutoff_fn<D: DualNum<Primitive = f64> + Copy>(&self, r: D) -> D {
        if r.re() >= self.cutoff {
            return D::from(0.0);
        }
        let u = ((r - self.cutoff) / self.screening + CUTOFF_SHIFT).exp();
        (u + 1.0).recip()
    }

    /// Hopping and overlap integrals per channel at distance r.
    fn integrals<D: DualNum<Primitive = f64> + Copy>(
        &self,
        s: &NrlSpecies,
        r: D,
    ) -> (BondIntegrals<D>, BondIntegrals<D>) {
        let fc = self.cutoff_fn(r);
        let mut h = [D::from(0.0); 10];
        let mut m = [D::from(0.0); 10];
        for c in 0..10 {
            let [e, f, fb, g] = s.hopping[c];
            h[c] = (r * fb + f) * r + e;
            h[c] = h[c] * (r * (-g)).exp() * fc;
            let [p, q, t, g] = s.overlap[c];
            m[c] = match self.overlap_style {
                OverlapStyle::New => {
                    let delta = if SAME_ORBITAL[c] { 1.0 } else { 0.0 };
                    ((r * t + q) * r + p) * r + delta
                }
                OverlapStyle::Old => (r * t + q) * r + p,
            };
            m[c] = m[c] * (r * (-g)).exp() * fc;
        }
        let pack = |x: [D; 10]| BondIntegrals {
            ss_sigma: x[0],
            sp_sigma: x[1],
            pp_sigma: x[2],
            pp_pi: x[3],
            sd_sigma: x[4],
            pd_sigma: x[5],
            pd_pi: x[6],
            dd_sigma: x[7],
            dd_pi: x[8],
            dd_delta: x[9],
        };
        (pack(h), pack(m))
    }

    /// Hamiltonian entries followed by overlap entries, both row-major.
    fn entries<D: DualNum<Primitive = f64> + Copy>(&self, s: &NrlSpecies, d: [D; 3]) -> Vec<D> {
        let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        let n = [d[0] / r, d[1] / r, d[2] / r];
        let (h, m) = self.integrals(s, r);
        let mut out = block(s.orbitals, n, &h);
        out.extend(block(s.orbitals, n, &m));
        out
    }
}

fn split(norb: usize, v: impl Iterator<Item = f64>) -> BondBlocks {
    let all: Vec<f64> = v.collect();
    let k = norb * norb;
    BondBlocks {
        h: DMatrix::from_row_slice(norb, norb, &all[..k]),
        m: Some(DMatrix::from_row_slice(norb, norb, &all[k..])),
    }
}

/// Diagonal index → on-site class (s, p, t2g, eg).
const ONSITE_CLASS: [usize; 9] = [0, 1, 1, 1, 2, 2, 2, 3, 3];

impl TightBinding for NrlModel {
    fn label(&self) -> &str {
        "nrl"
    }

    fn orbitals(&self, species: &str) -> Result<usize> {
        Ok(self.get(species)?.orbitals)
    }

    fn valence_electrons(&self, species: &str) -> Result<f64> {
        Ok(self.get(species)?.valence)
    }

    fn cutoff(&self) -> f64 {
        self.cutoff
    }

    fn orthogonal(&self) -> bool {
        false
    }

    fn decay(&self) -> DecayMetadata {
        // slowest exponent among active channels, prefactors sampled along a bond axis
        let (_, s) = self.species.iter().next().expect("validated: one species");
        let active = |c: usize| s.hopping[c].iter().take(3).any(|&x| x.abs() > 1e-6);
        let rate =
            (0..10).filter(|&c| active(c)).map(|c| s.hopping[c][3].min(s.overlap[c][3])).fold(f64::INFINITY, f64::min);
        let mut pre = [0.0f64; 3];
        let steps = 400;
        for i in 1..steps {
            let r = 0.5 + (self.cutoff - 0.5) * i as f64 / steps as f64;
            if let Ok(b) = self.bond_species(s, &Vec3::new(0.0, 0.0, r), 2) {
                let w = (rate * r).exp();
                let f0 = b.value.h.norm() + b.value.m.as_ref().map_or(0.0, |m| m.norm());
                let f1: f64 = b.grad.iter().map(|g| g.h.norm_squared()).sum::<f64>().sqrt();
                let f2: f64 = b.hess.iter().map(|g| g.h.norm_squared()).sum::<f64>().sqrt();
                pre = [pre[0].max(f0 * w), pre[1].max(f1 * w), pre[2].max(f2 * w)];
            }
        }
        DecayMetadata { prefactor: pre, rate: [rate; 3] }
    }

    fn onsite(&self, species: &str, rho: f64) -> Result<OnsiteTerms> {
        let s = self.get(species)?;
        let n = s.orbitals;
        let mut e = DVector::zeros(n);
        let mut de = DVector::zeros(n);
        let mut d2e = DVector::zeros(n);
        for i in 0..n {
            let [a, b, c, d] = s.onsite[ONSITE_CLASS[i]];
            let p = rho.max(0.0);
            e[i] = a + b * p.powf(2.0 / 3.0) + c * p.powf(4.0 / 3.0) + d * p * p;
            if p > 0.0 {
                de[i] = 2.0 / 3.0 * b * p.powf(-1.0 / 3.0) + 4.0 / 3.0 * c * p.cbrt() + 2.0 * d * p;
                d2e[i] = -2.0 / 9.0 * b * p.powf(-4.0 / 3.0) + 4.0 / 9.0 * c * p.powf(-2.0 / 3.0) + 2.0 * d;
            }
        }
        Ok(OnsiteTerms { energy: e, d_energy: de, d2_energy: d2e })
    }

    fn density_kernel(&self, owner: &str, _other: &str, r: f64) -> [f64; 3] {
        let Ok(s) = self.get(owner) else { return [0.0; 3] };
        let lam = s.density_exponent;
        let (v, d1, d2) = second_derivative(|x| (x * (-lam)).exp() * self.cutoff_fn(x), r);
        [v, d1, d2]
    }

    fn bond(&self, a: &str, b: &str, d: &Vec3, order: usize) -> Result<BondDerivatives> {
        if a != b {
            return Err(Error::Model(format!("no NRL parameters for the pair {a}-{b}")));
        }
        let s = self.get(a)?;
        self.bond_species(s, d, order)
    }
}

impl NrlModel {
    fn bond_species(&self, s: &NrlSpecies, d: &Vec3, order: usize) -> Result<BondDerivatives> {
        let x = SVector::<f64, 3>::new(d.x, d.y, d.z);
        let n = s.orbitals;
        Ok(match order {
            0 => BondDerivatives {
                value: split(n, self.entries(s, [d.x, d.y, d.z]).into_iter()),
                grad: vec![],
                hess: vec![],
            },
            1 => {
                let out = gradient(|p| self.entries(s, [p[0], p[1], p[2]]), &x);
                BondDerivatives {
                    value: split(n, out.iter().map(|e| e.0)),
                    grad: (0..3).map(|i| split(n, out.iter().map(|e| e.1[i]))).collect(),
                    hess: vec![],
                }
            }
            _ => {
                let out = hessian(|p| self.entries(s, [p[0], p[1], p[2]]), &x);
                BondDerivatives {
                    value: split(n, out.iter().map(|e| e.0)),
                    grad: (0..3).map(|i| split(n, out.iter().map(|e| e.1[i]))).collect(),
                    hess: (0..9).map(|k| split(n, out.iter().map(|e| e.2[(k / 3, k % 3)]))).collect(),
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn silicon() -> NrlModel {
        NrlModel::from_native(include_str!("../../../../params/si_sp.par"), None).unwrap()
    }

    #[test]
    fn native_units_converted() {
        let m = silicon();
        let s = &m.species["Si"];
        assert_eq!(s.orbitals, 4);
        assert_eq!(s.valence, 4.0);
        assert!((m.cutoff - 12.5 * BOHR).abs() < 1e-12);
        assert!((s.onsite[0][0] - (-0.0532334619024 * RYDBERG)).abs() < 1e-12);
        assert!((s.hopping[0][0] - 219.560813651 * RYDBERG).abs() < 1e-9);
        assert!((s.hopping[0][3] - 1.26439940008f64.powi(2) / BOHR).abs() < 1e-12);
        assert!((s.density_exponent - 1.10356625153f64.powi(2) / BOHR).abs() < 1e-12);
    }

    #[test]
    fn ss_sigma_matches_direct_formula() {
        let m = silicon();
        let s = &m.species["Si"];
        let r = 2.35;
        let rb = r / BOHR;
        let fc = 1.0 / (1.0 + ((rb - 12.5) / 0.5 + 5.0).exp());
        let (e, f, fb, g) = (219.560813651, -16.2132459618, -15.5048968097, 1.26439940008f64);
        let expected = (e + f * rb + fb * rb * rb) * (-g * g * rb).exp() * fc * RYDBERG;
        let b = m.bond("Si", "Si", &Vec3::new(0.0, 0.0, r), 0).unwrap();
        assert!((b.value.h[(0, 0)] - expected).abs() < 1e-10 * expected.abs().max(1.0));
        let _ = s;
    }

    #[test]
    fn cutoff_is_exactly_zero() {
        let m = silicon();
        let b = m.bond("Si", "Si", &Vec3::new(m.cutoff, 0.0, 0.0), 2).unwrap();
        assert_eq!(b.value.h.amax(), 0.0);
        assert_eq!(b.grad[0].h.amax(), 0.0);
    }

    #[test]
    fn toml_round_trip() {
        let m = silicon();
        let back = NrlModel::from_toml(&m.to_toml()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn density_kernel_derivative_by_differences() {
        let m = silicon();
        let h = 1e-5;
        let k = |r| m.density_kernel("Si", "Si", r);
        let fd = (k(3.0 + h)[0] - k(3.0 - h)[0]) / (2.0 * h);
        assert!((fd - k(3.0)[1]).abs() < 1e-8);
    }
}
