use super::{fit_options, write_dataset, Context};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{num, FileEntry};
use crate::system::System;
use serde::Serialize;
use std::collections::BTreeMap;
use tbloc::defects::Defect;
use tbloc::geometry::Configuration;
use tbloc::locality::{
    compare_defect_prefactor, DecayDataset, DecaySource, ExponentialFit, PrefactorComparison, SiteSelection,
};
use tbloc::model::TightBinding;
use tbloc::thermo::{ContourOptions, GrandPotential};

/// Datasets of one system and site selection, keyed by kind tag.
struct Sampled {
    label: &'static str,
    data: BTreeMap<&'static str, DecayDataset>,
}

#[derive(Serialize)]
#[allow(non_snake_case)]
struct Fits {
    route: String,
    beta: String,
    mu_eV: f64,
    fits: BTreeMap<String, BTreeMap<String, Option<ExponentialFit>>>,
    defect: Option<PrefactorComparison>,
}

#[allow(clippy::too_many_arguments)]
fn sample(
    run: &RunConfig,
    label: &'static str,
    model: &dyn TightBinding,
    config: &Configuration,
    g: GrandPotential,
    selection: SiteSelection,
    defect: Option<&Defect>,
) -> CliResult<Sampled> {
    let mut source = DecaySource::new(model, config, g, run.locality.route.into());
    source.contour = ContourOptions::with_nodes(run.contour.nodes);
    source.defect = defect.map(|d| (d.center, d.spec.radius));
    let opts = fit_options(run, config);
    let fit = |d: DecayDataset| -> DecayDataset {
        let fit = tbloc::locality::fit_exponential(&d.points, &opts).ok();
        DecayDataset { fit, ..d }
    };
    let mut data = BTreeMap::new();
    data.insert("dE", fit(source.site_gradients(&selection)?));
    if run.locality.forces {
        data.insert("dF", fit(source.force_jacobian(&selection)?));
    }
    if run.locality.second {
        data.insert("d2E", fit(source.site_hessians(&selection)?));
    }
    Ok(Sampled { label, data })
}

pub fn run(ctx: &Context) -> CliResult<Vec<FileEntry>> {
    let run = &ctx.run;
    let sys = System::new(run)?;
    let g = sys.potential;
    if run.locality.site >= sys.config.len() {
        return Err(CliError::Config(format!("locality.site {} out of range", run.locality.site)));
    }
    let mut sets =
        vec![sample(run, "bulk", sys.model(), &sys.config, g, SiteSelection::Site(run.locality.site), None)?];
    let defect = super::defect::build(run, &sys)?;
    if let Some(d) = &defect {
        let d = &d.defect;
        sets.push(sample(run, "near", sys.model(), &d.config, g, SiteSelection::NearestTo(d.center), Some(d))?);
        sets.push(sample(run, "far", sys.model(), &d.config, g, SiteSelection::FarthestFrom(d.center), Some(d))?);
    }

    let mut art = ctx.artifacts()?;
    let mut fits = BTreeMap::new();
    let mut ratio_rows = Vec::new();
    for s in &sets {
        let mut row = BTreeMap::new();
        for (kind, data) in &s.data {
            write_dataset(&mut art, &format!("decay_{}_{kind}", s.label), &format!("{} {kind}", s.label), data)?;
            row.insert(kind.to_string(), data.fit);
            if let Some(f) = data.fit {
                println!(
                    "{:<5} {:<4} η = {:.5} /Å  R² = {:.4}  bins {}",
                    s.label, kind, f.exponent, f.r_squared, f.bins
                );
            }
        }
        fits.insert(s.label.to_string(), row);
        let eta = |k: &str| s.data.get(k).and_then(|d| d.exponent());
        for other in ["dF", "d2E"] {
            if let (Some(a), Some(b)) = (eta(other), eta("dE")) {
                ratio_rows.push(vec![s.label.into(), other.into(), "dE".into(), num(a), num(b), num(a / b)]);
            }
        }
        if let (Some(a), Some(b)) = (eta("dF"), eta("d2E")) {
            ratio_rows.push(vec![s.label.into(), "dF".into(), "d2E".into(), num(a), num(b), num(a / b)]);
        }
    }
    art.write_csv("ratios.csv", &["system", "numerator", "denominator", "eta_num", "eta_den", "ratio"], &ratio_rows)?;
    let comparison = if sets.len() == 3 {
        let get = |i: usize| &sets[i].data["dE"];
        Some(compare_defect_prefactor(get(0), get(2), get(1))?)
    } else {
        None
    };
    if let Some(c) = &comparison {
        println!(
            "defect: near deviation {:.3}, far deviation {:.3}",
            c.near_exponent_deviation, c.far_exponent_deviation
        );
    }
    let summary = Fits {
        route: tbloc::sites::Route::from(run.locality.route).to_string(),
        beta: run.thermo.beta.to_string(),
        mu_eV: g.mu,
        fits,
        defect: comparison,
    };
    art.write_json("fits.json", &summary)?;
    if let Some(d) = &defect {
        art.write("defect_geometry.toml", d.defect.config.to_toml().as_bytes())?;
    }
    art.finish()
}
