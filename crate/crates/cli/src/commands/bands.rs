use super::Context;
use crate::config::{Mu, PathName};
use crate::error::{CliError, CliResult};
use crate::output::{num, FileEntry};
use crate::plot;
use crate::system::{load_geometry, load_model};
use serde::Serialize;
use tbloc::bands::{band_structure, relax_lattice, KPath};

#[derive(Serialize)]
#[allow(non_snake_case)]
struct Summary {
    model: String,
    lattice_constant_A: Option<f64>,
    relaxed: bool,
    sites_per_cell: usize,
    occupied_bands: usize,
    vbm_eV: f64,
    cbm_eV: f64,
    gap_eV: f64,
    metallic: bool,
    mu_eV: f64,
    path: Vec<String>,
}

pub fn run(ctx: &Context) -> CliResult<Vec<FileEntry>> {
    let run = &ctx.run;
    let model = load_model(&run.model)?;
    let mut lattice = run.geometry.lattice;
    if let Some(r) = run.bands.relax {
        if run.geometry.builder.is_none() {
            return Err(CliError::Config("[bands.relax] needs a geometry builder".into()));
        }
        let build = |a: f64| load_geometry(&run.geometry, Some(a)).map_err(|e| tbloc::Error::Invalid(e.to_string()));
        lattice = Some(relax_lattice(model.as_ref(), build, r.lo, r.hi, r.grid)?.0);
    }
    let config = load_geometry(&run.geometry, lattice)?;
    if config.cell.as_ref().is_none_or(|c| !c.pbc.iter().any(|&p| p)) {
        return Err(CliError::Config("band structures need a periodic geometry".into()));
    }
    let path = match run.bands.path {
        PathName::Fcc => KPath::fcc(run.bands.samples),
        PathName::Line => KPath::line(run.bands.samples),
    };
    let bs = band_structure(model.as_ref(), &config, &path)?;

    let mut art = ctx.artifacts()?;
    let mut rows = Vec::new();
    for ((segment, fraction, _), energies) in bs.kpoints.iter().zip(&bs.bands) {
        for (b, e) in energies.iter().enumerate() {
            rows.push(vec![segment.to_string(), num(*fraction), b.to_string(), num(*e)]);
        }
    }
    art.write_csv("bands.csv", &["segment", "k_fraction", "band", "energy_eV"], &rows)?;

    let xs: Vec<f64> = bs.kpoints.iter().map(|(s, t, _)| *s as f64 + t).collect();
    let labels: Vec<(f64, String)> = path.points.iter().enumerate().map(|(i, (l, _))| (i as f64, l.clone())).collect();
    let title = format!("{} bands", model.label());
    let svg = plot::bands(&title, &xs, &bs.bands, &labels, (!bs.metallic).then_some((bs.vbm, bs.cbm)));
    art.write("bands.svg", svg.as_bytes())?;

    let summary = Summary {
        model: model.label().to_string(),
        lattice_constant_A: lattice,
        relaxed: run.bands.relax.is_some(),
        sites_per_cell: config.len(),
        occupied_bands: bs.occupied,
        vbm_eV: bs.vbm,
        cbm_eV: bs.cbm,
        gap_eV: bs.gap,
        metallic: bs.metallic,
        mu_eV: match run.thermo.mu {
            Mu::Value(m) => m,
            Mu::Midgap => bs.fermi_mu,
        },
        path: path.points.iter().map(|p| p.0.clone()).collect(),
    };
    art.write_json("summary.json", &summary)?;
    println!("gap {:.6} eV (VBM {:.6}, CBM {:.6}) at a = {:?}", bs.gap, bs.vbm, bs.cbm, lattice);
    art.finish()
}
