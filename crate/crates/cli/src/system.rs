//! Turns a [`RunConfig`] into a model, a configuration and a grand potential.

use crate::config::{Beta, Builder, GeometryConfig, ModelConfig, ModelKind, Mu, RunConfig};
use crate::error::{CliError, CliResult};
use tbloc::bands::occupied_bands;
use tbloc::geometry::{build, Configuration, Vec3};
use tbloc::model::{Assembly, HamiltonianPair, NrlModel, TightBinding, ToyModel};
use tbloc::spectral::{self, SpectrumReport};
use tbloc::thermo::{GrandPotential, Temperature};

/// Everything a command needs about the physical system.
pub struct System {
    pub model: Box<dyn TightBinding>,
    pub config: Configuration,
    pub pair: HamiltonianPair,
    pub spectrum: SpectrumReport,
    pub potential: GrandPotential,
}

impl System {
    pub fn new(run: &RunConfig) -> CliResult<Self> {
        let model = load_model(&run.model)?;
        let config = load_geometry(&run.geometry, None)?;
        Self::with(model, config, run.thermo.beta, run.thermo.mu)
    }

    pub fn with(model: Box<dyn TightBinding>, config: Configuration, beta: Beta, mu: Mu) -> CliResult<Self> {
        let pair = Assembly::new(model.as_ref(), &config, true)?.hamiltonian()?;
        let spectrum = spectral::solve(&pair)?;
        let mu = match mu {
            Mu::Value(m) => m,
            Mu::Midgap => spectrum.midgap(occupied_bands(model.as_ref(), &config)?)?,
        };
        let temperature = match beta {
            Beta::Finite(b) => Temperature::Finite(b),
            Beta::Infinite => Temperature::Zero,
        };
        let potential = GrandPotential::new(temperature, mu)?;
        Ok(Self { model, config, pair, spectrum, potential })
    }

    pub fn model(&self) -> &dyn TightBinding {
        self.model.as_ref()
    }
}

/// Distance between two points, using the minimum image along periodic axes.
pub fn min_image(config: &Configuration, a: &Vec3, b: &Vec3) -> f64 {
    let d = b - a;
    let Some(cell) = &config.cell else { return d.norm() };
    let mut f = cell.fractional(&d);
    for i in 0..3 {
        if cell.pbc[i] {
            f[i] -= f[i].round();
        }
    }
    cell.cartesian(&f).norm()
}

pub fn load_model(cfg: &ModelConfig) -> CliResult<Box<dyn TightBinding>> {
    let read = |p: &std::path::Path| {
        std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))
    };
    match cfg.kind {
        ModelKind::Toy => {
            let model = match (&cfg.toy, &cfg.params) {
                (Some(t), None) => {
                    t.validate()?;
                    t.clone()
                }
                (None, Some(p)) => ToyModel::from_toml(&read(p)?)?,
                _ => return Err(CliError::Config("toy models need exactly one of [model.toy] or params".into())),
            };
            Ok(Box::new(model))
        }
        ModelKind::Nrl => {
            let path = cfg.params.as_ref().ok_or_else(|| CliError::Config("nrl models need params".into()))?;
            if cfg.toy.is_some() {
                return Err(CliError::Config("[model.toy] given for an nrl model".into()));
            }
            let text = read(path)?;
            let model = if path.extension().is_some_and(|e| e == "toml") {
                NrlModel::from_toml(&text)?
            } else {
                NrlModel::from_native(&text, cfg.species.as_deref())?
            };
            Ok(Box::new(model))
        }
    }
}

/// Builds the geometry; `lattice` overrides the configured lattice constant.
pub fn load_geometry(cfg: &GeometryConfig, lattice: Option<f64>) -> CliResult<Configuration> {
    match (&cfg.file, cfg.builder) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            Ok(Configuration::from_toml(&text)?)
        }
        (None, Some(builder)) => {
            let a = lattice.or(cfg.lattice).ok_or_else(|| CliError::Config("geometry builders need lattice".into()))?;
            let species: Vec<&str> = cfg.species.iter().map(String::as_str).collect();
            let first = *species.first().ok_or_else(|| CliError::Config("geometry builders need species".into()))?;
            let config = match builder {
                Builder::Chain => build::chain(cfg.size[0], a, &species, cfg.periodic, cfg.m_min)?,
                Builder::RockSalt => {
                    let second = species.get(1).copied().unwrap_or(first);
                    build::rock_salt(cfg.size, a, [first, second], cfg.periodic, cfg.m_min)?
                }
                Builder::DiamondPrimitive => build::diamond_primitive(first, a)?,
                Builder::DiamondCubic => build::diamond_cubic(first, a, cfg.size)?,
            };
            Ok(config)
        }
        _ => Err(CliError::Config("geometry needs exactly one of file or builder".into())),
    }
}
