//! Run configuration: one TOML file per experiment.

use crate::error::CliError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use tbloc::defects::DefectKind;
use tbloc::model::ToyModel;

/// Inverse temperature in 1/eV, or zero temperature.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Beta {
    Finite(f64),
    #[default]
    Infinite,
}

impl FromStr for Beta {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "inf" | "infinity" | "∞" => Ok(Beta::Infinite),
            t => match t.parse::<f64>() {
                Ok(b) if b > 0.0 && b.is_finite() => Ok(Beta::Finite(b)),
                Ok(b) if b == f64::INFINITY => Ok(Beta::Infinite),
                _ => Err(format!("beta must be a positive number or \"inf\", got `{t}`")),
            },
        }
    }
}

impl fmt::Display for Beta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Beta::Finite(b) => write!(f, "{b}"),
            Beta::Infinite => f.write_str("inf"),
        }
    }
}

/// Chemical potential: explicit in eV, or midway between the highest occupied
/// and lowest empty eigenvalue of the configured system.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Mu {
    #[default]
    Midgap,
    Value(f64),
}

impl FromStr for Mu {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "midgap" => Ok(Mu::Midgap),
            t => t
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .map(Mu::Value)
                .ok_or_else(|| format!("mu must be a number or \"midgap\", got `{t}`")),
        }
    }
}

impl fmt::Display for Mu {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mu::Midgap => f.write_str("midgap"),
            Mu::Value(m) => write!(f, "{m}"),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NumberOrWord {
    Number(f64),
    Word(String),
}

impl Serialize for Beta {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Beta::Finite(b) => s.serialize_f64(*b),
            Beta::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Beta {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match NumberOrWord::deserialize(d)? {
            NumberOrWord::Number(x) => x.to_string().parse().map_err(serde::de::Error::custom),
            NumberOrWord::Word(w) => w.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl Serialize for Mu {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Mu::Value(m) => s.serialize_f64(*m),
            Mu::Midgap => s.serialize_str("midgap"),
        }
    }
}

impl<'de> Deserialize<'de> for Mu {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match NumberOrWord::deserialize(d)? {
            NumberOrWord::Number(x) => Ok(Mu::Value(x)),
            NumberOrWord::Word(w) => w.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Toy,
    Nrl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// NRL native parameter file, or a toy model TOML with a `[toy]` table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<PathBuf>,
    /// Element symbol for NRL files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub species: Option<String>,
    /// Inline toy model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub toy: Option<ToyModel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Builder {
    /// `size[0]` sites along x with spacing `lattice`, species cycling through `species`.
    Chain,
    /// Simple-cubic grid of `size` sites with spacing `lattice`, two alternating species.
    RockSalt,
    DiamondPrimitive,
    /// Conventional 8-atom cubic cell repeated `size` times.
    DiamondCubic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builder: Option<Builder>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub species: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<f64>,
    #[serde(default = "unit_size")]
    pub size: [usize; 3],
    #[serde(default = "yes")]
    pub periodic: bool,
    #[serde(default = "default_m_min")]
    pub m_min: f64,
}

fn unit_size() -> [usize; 3] {
    [1, 1, 1]
}
fn yes() -> bool {
    true
}
fn default_m_min() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermoConfig {
    #[serde(default)]
    pub beta: Beta,
    #[serde(default)]
    pub mu: Mu,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContourConfig {
    pub nodes: usize,
    /// Largest per-site change accepted between successive node doublings (eV).
    pub tolerance: f64,
    pub max_nodes: usize,
}

impl Default for ContourConfig {
    fn default() -> Self {
        Self { nodes: 64, tolerance: 1e-9, max_nodes: 16384 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TweakConfig {
    /// Start of the interstitial scan line (Å).
    pub start: [f64; 3],
    /// Scan displacement; positions are start + t·direction for t ∈ [0, 1].
    pub direction: [f64; 3],
    /// Target defect level relative to μ (eV).
    pub level_above_mu: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefectConfig {
    pub site: DefectKind,
    /// R_def (Å).
    pub radius: f64,
    /// Frobenius budget δ for the far part P₁.
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Random spectral parameters used to check the Woodbury update.
    #[serde(default = "default_z_samples")]
    pub z_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tweak: Option<TweakConfig>,
}

fn default_delta() -> f64 {
    1e-3
}
fn default_z_samples() -> usize {
    20
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RouteName {
    Spectral,
    Contour,
    Fd,
}

impl From<RouteName> for tbloc::sites::Route {
    fn from(r: RouteName) -> Self {
        match r {
            RouteName::Spectral => tbloc::sites::Route::Spectral,
            RouteName::Contour => tbloc::sites::Route::Contour,
            RouteName::Fd => tbloc::sites::Route::FiniteDifference,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalityConfig {
    pub route: RouteName,
    /// Site ℓ whose derivatives are sampled.
    pub site: usize,
    pub forces: bool,
    pub second: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_width: Option<f64>,
    pub floor: f64,
}

impl Default for LocalityConfig {
    fn default() -> Self {
        Self {
            route: RouteName::Spectral,
            site: 0,
            forces: true,
            second: false,
            window: None,
            bin_width: None,
            floor: tbloc::locality::DEFAULT_FLOOR,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathName {
    Fcc,
    Line,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelaxConfig {
    pub lo: f64,
    pub hi: f64,
    /// Monkhorst–Pack grid used for the band energy.
    pub grid: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandsConfig {
    pub path: PathName,
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relax: Option<RelaxConfig>,
}

impl Default for BandsConfig {
    fn default() -> Self {
        Self { path: PathName::Fcc, samples: 40, relax: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CtConfig {
    /// Imaginary parts of z = μ + iη at which resolvent columns are audited (eV).
    pub imag: Vec<f64>,
}

impl Default for CtConfig {
    fn default() -> Self {
        Self { imag: vec![0.05, 0.1, 0.2, 0.5, 1.0] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// |Σ_ℓ G_ℓ - G| / |G|
    pub split: f64,
    /// max_ℓ |G_ℓ^spectral - G_ℓ^contour| (eV)
    pub routes: f64,
    pub identity: f64,
    pub woodbury: f64,
    pub symmetry: f64,
    /// |Σ_ℓ f_ℓ| (eV/Å)
    pub force_sum: f64,
    /// max |Ψᵀ M Ψ - I|
    pub orthonormality: f64,
    /// Exponent error of the fit on exact exponential data (1/Å).
    pub fit: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            split: 1e-9,
            routes: 1e-8,
            identity: 1e-8,
            woodbury: 1e-10,
            symmetry: 1e-12,
            force_sum: 1e-8,
            orthonormality: 1e-10,
            fit: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub model: ModelConfig,
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub thermo: ThermoConfig,
    #[serde(default)]
    pub contour: ContourConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defect: Option<DefectConfig>,
    #[serde(default)]
    pub locality: LocalityConfig,
    #[serde(default)]
    pub bands: BandsConfig,
    #[serde(default)]
    pub ct: CtConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_seed() -> u64 {
    7
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(config_diagnostic(&e, text)))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configurations always serialise")
    }

    /// Makes relative file references absolute with respect to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.model.params.as_mut() {
            fix(p);
        }
        if let Some(p) = self.geometry.file.as_mut() {
            fix(p);
        }
    }
}

fn config_diagnostic(e: &toml::de::Error, text: &str) -> String {
    match e.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            format!("line {line}, column {column}: {}", e.message())
        }
        None => e.message().to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
seed = 11
out = "runs/chain"

[model]
kind = "toy"

[model.toy]
hopping = -2.718281828459045
decay = 1.0
cutoff = 1.5

[model.toy.onsite]
A = 0.5
B = -0.5
X = -0.4

[geometry]
builder = "chain"
species = ["A", "B"]
lattice = 1.0
size = [64, 1, 1]

[thermo]
beta = "inf"
mu = "midgap"

[defect]
radius = 2.0

[defect.site]
kind = "interstitial"
species = "X"
position = [31.5, 1.0, 0.0]

[defect.tweak]
start = [31.125, 1.0, 0.0]
direction = [0.75, 0.0, 0.0]
level_above_mu = 0.005

[locality]
route = "spectral"
site = 31
forces = true
second = false
window = [2.0, 28.8]
bin_width = 2.0
floor = 1e-11
"#;

    #[test]
    fn round_trip_is_idempotent() {
        let a = RunConfig::parse(FULL).unwrap();
        let once = a.to_toml();
        let b = RunConfig::parse(&once).unwrap();
        assert_eq!(a, b);
        assert_eq!(once, b.to_toml());
    }

    #[test]
    fn finite_beta_and_explicit_mu_round_trip() {
        let text = FULL.replace("beta = \"inf\"", "beta = 32.0").replace("mu = \"midgap\"", "mu = -0.25");
        let a = RunConfig::parse(&text).unwrap();
        assert_eq!(a.thermo.beta, Beta::Finite(32.0));
        assert_eq!(a.thermo.mu, Mu::Value(-0.25));
        assert_eq!(RunConfig::parse(&a.to_toml()).unwrap(), a);
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_position() {
        for (needle, replacement) in [
            ("seed = 11", "seed = 11\ncolour = 3"),
            ("size = [64, 1, 1]", "size = [64, 1, 1]\nwidth = 2"),
            ("kind = \"interstitial\"", "kind = \"interstitial\"\nspin = 1"),
            ("level_above_mu = 0.005", "level_above_mu = 0.005\nsteps = 4"),
        ] {
            let err = RunConfig::parse(&FULL.replace(needle, replacement)).unwrap_err();
            let CliError::Config(msg) = err else { panic!("wrong error kind") };
            assert!(msg.starts_with("line "), "{msg}");
        }
    }

    #[test]
    fn cli_overrides_parse() {
        assert_eq!("inf".parse::<Beta>().unwrap(), Beta::Infinite);
        assert_eq!("16".parse::<Beta>().unwrap(), Beta::Finite(16.0));
        assert!("-1".parse::<Beta>().is_err());
        assert_eq!("midgap".parse::<Mu>().unwrap(), Mu::Midgap);
        assert_eq!("0.25".parse::<Mu>().unwrap(), Mu::Value(0.25));
        assert!("fermi".parse::<Mu>().is_err());
    }

    #[test]
    fn relative_paths_resolve_against_the_config_directory() {
        let mut cfg = RunConfig::parse(&FULL.replace("kind = \"toy\"", "kind = \"nrl\"\nparams = \"si.par\"")).unwrap();
        cfg.resolve_paths(Path::new("/data/runs"));
        assert_eq!(cfg.model.params.as_deref(), Some(Path::new("/data/runs/si.par")));
    }
}
