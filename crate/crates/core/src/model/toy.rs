//! Single s-orbital model with exponential hopping and a hard cutoff.

use super::{BondBlocks, BondDerivatives, DecayMetadata, OnsiteTerms, TightBinding};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use nalgebra::{DMatrix, DVector, SVector};
use num_dual::{gradient, hessian, DualNum};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

fn one() -> f64 {
    1.0
}

/// h(ξ) = t₀ e^{-κ|ξ|} (1 + α ξ_x) for |ξ| ≤ cutoff, orthogonal basis.
///
/// `asymmetry` (α) is a fixture knob that breaks h(ξ) = h(-ξ); it must be zero
/// for physical use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyModel {
    /// On-site energy per species (eV).
    pub onsite: BTreeMap<String, f64>,
    /// Hopping amplitude t₀ (eV).
    pub hopping: f64,
    /// Decay rate κ (1/Å).
    pub decay: f64,
    /// Hard cutoff (Å).
    pub cutoff: f64,
    #[serde(default = "one")]
    pub electrons_per_site: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub asymmetry: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl ToyModel {
    pub fn new(onsite: &[(&str, f64)], hopping: f64, decay: f64, cutoff: f64) -> Self {
        Self {
            onsite: onsite.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            hopping,
            decay,
            cutoff,
            electrons_per_site: 1.0,
            asymmetry: 0.0,
        }
    }

    /// Two-species alternating chain model: on-site ±Δ, t(1 Å) = -1 eV, κ = 1/Å,
    /// nearest-neighbour cutoff 1.5 Å. The gap of the dimerised chain is 2Δ.
    pub fn binary_chain(delta: f64) -> Self {
        Self::new(&[("A", delta), ("B", -delta)], -std::f64::consts::E, 1.0, 1.5)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct File {
            toy: ToyModel,
        }
        let f: File = toml::from_str(text).map_err(|e| params_error(&e, text))?;
        f.toy.validate()?;
        Ok(f.toy)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.decay > 0.0 && self.cutoff > 0.0) {
            return Err(Error::Model("toy model needs positive decay and cutoff".into()));
        }
        Ok(())
    }

    fn amplitude<D: DualNum<Primitive = f64> + Copy>(&self, d: [D; 3]) -> D {
        let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        if r.re() > self.cutoff {
            return D::from(0.0);
        }
        (r * (-self.decay)).exp() * self.hopping * (D::from(1.0) + d[0] * self.asymmetry)
    }
}

pub(crate) fn params_error(e: &toml::de::Error, text: &str) -> Error {
    let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1).unwrap_or(0);
    Error::Params { line, message: e.message().to_string() }
}

fn scalar(x: f64) -> BondBlocks {
    BondBlocks { h: DMatrix::from_element(1, 1, x), m: None }
}

impl TightBinding for ToyModel {
    fn label(&self) -> &str {
        "toy"
    }

    fn orbitals(&self, species: &str) -> Result<usize> {
        if self.onsite.contains_key(species) {
            Ok(1)
        } else {
            Err(Error::UnknownSpecies(species.to_string()))
        }
    }

    fn valence_electrons(&self, species: &str) -> Result<f64> {
        self.orbitals(species).map(|_| self.electrons_per_site)
    }

    fn cutoff(&self) -> f64 {
        self.cutoff
    }

    fn orthogonal(&self) -> bool {
        true
    }

    fn decay(&self) -> DecayMetadata {
        let t = self.hopping.abs();
        let k = self.decay;
        // second-derivative bound assumes bonds no shorter than 0.5 Å
        DecayMetadata { prefactor: [t, t * k, t * k * k.max(2.0)], rate: [k; 3] }
    }

    fn onsite(&self, species: &str, _rho: f64) -> Result<OnsiteTerms> {
        let e = *self.onsite.get(species).ok_or_else(|| Error::UnknownSpecies(species.to_string()))?;
        Ok(OnsiteTerms {
            energy: DVector::from_element(1, e),
            d_energy: DVector::zeros(1),
            d2_energy: DVector::zeros(1),
        })
    }

    fn density_kernel(&self, _owner: &str, _other: &str, _r: f64) -> [f64; 3] {
        [0.0; 3]
    }

    fn bond(&self, a: &str, b: &str, d: &Vec3, order: usize) -> Result<BondDerivatives> {
        self.orbitals(a)?;
        self.orbitals(b)?;
        let x = SVector::<f64, 3>::new(d.x, d.y, d.z);
        Ok(match order {
            0 => BondDerivatives { value: scalar(self.amplitude([d.x, d.y, d.z])), grad: vec![], hess: vec![] },
            1 => {
                let (v, g) = gradient(|p| self.amplitude([p[0], p[1], p[2]]), &x);
                BondDerivatives { value: scalar(v), grad: (0..3).map(|i| scalar(g[i])).collect(), hess: vec![] }
            }
            _ => {
                let (v, g, h) = hessian(|p| self.amplitude([p[0], p[1], p[2]]), &x);
                BondDerivatives {
                    value: scalar(v),
                    grad: (0..3).map(|i| scalar(g[i])).collect(),
                    hess: (0..9).map(|k| scalar(h[(k / 3, k % 3)])).collect(),
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hopping_and_derivatives_closed_form() {
        let m = ToyModel::new(&[("A", 0.0)], -2.0, 0.8, 5.0);
        let d = Vec3::new(0.6, -0.8, 1.2);
        let r = d.norm();
        let t = -2.0 * (-0.8 * r).exp();
        let dt = -0.8 * t;
        let d2t = 0.64 * t;
        let b = m.bond("A", "A", &d, 2).unwrap();
        assert!((b.value.h[(0, 0)] - t).abs() < 1e-14);
        for i in 0..3 {
            assert!((b.grad[i].h[(0, 0)] - dt * d[i] / r).abs() < 1e-14);
            for j in 0..3 {
                let delta = if i == j { 1.0 } else { 0.0 };
                let e = d2t * d[i] * d[j] / (r * r) + dt / r * (delta - d[i] * d[j] / (r * r));
                assert!((b.hess[3 * i + j].h[(0, 0)] - e).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn toml_round_trip_and_unknown_keys() {
        let text = "[toy]\nhopping = -1.0\ndecay = 1.0\ncutoff = 1.5\n[toy.onsite]\nA = 0.5\n";
        let m = ToyModel::from_toml(text).unwrap();
        assert_eq!(m.onsite["A"], 0.5);
        let bad = "[toy]\nhopping = -1.0\ndecay = 1.0\ncutoff = 1.5\nfoo = 2\n[toy.onsite]\nA = 0.5\n";
        assert!(matches!(ToyModel::from_toml(bad), Err(Error::Params { line: 5, .. })));
    }
}
