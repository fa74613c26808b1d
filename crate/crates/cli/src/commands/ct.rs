use super::{fit_options, write_dataset, Context};
use crate::error::{CliError, CliResult};
use crate::output::{num, FileEntry};
use crate::system::System;
use serde::Serialize;
use tbloc::defects::{combes_thomas_audit, CombesThomasAudit};
use tbloc::Complex64;

#[derive(Serialize)]
struct Row {
    imag: f64,
    #[serde(flatten)]
    audit: CombesThomasAudit,
}

/// Fits the decay of one resolvent column at z = μ + iη for each configured η
/// and compares with the (2/𝔡) e^{-γ r} form.
pub fn run(ctx: &Context) -> CliResult<Vec<FileEntry>> {
    let run = &ctx.run;
    let sys = System::new(run)?;
    if sys.pair.m.is_some() {
        return Err(tbloc::Error::Unsupported("resolvent audits need an orthogonal model".into()).into());
    }
    let source = run.locality.site;
    if source >= sys.config.len() {
        return Err(CliError::Config(format!("locality.site {source} out of range")));
    }
    let opts = fit_options(run, &sys.config);
    let mu = sys.potential.mu;
    let mut art = ctx.artifacts()?;
    let mut rows = Vec::new();
    let mut audits = Vec::new();
    for &eta in &run.ct.imag {
        let z = Complex64::new(mu, eta);
        let (data, audit) = combes_thomas_audit(&sys.pair.h, &sys.pair.offsets, &sys.config, z, source, &opts)?;
        write_dataset(&mut art, &format!("resolvent_eta_{eta}"), &format!("|R(μ + {eta}i)|"), &data)?;
        println!(
            "η_im = {eta}: dist {:.4}, γ̂ = {:.4}, R² = {:.4}, intercept excess {:.3}",
            audit.distance, audit.exponent, audit.r_squared, audit.intercept_excess
        );
        rows.push(vec![
            num(eta),
            num(audit.distance),
            num(audit.exponent),
            num(audit.r_squared),
            num(audit.intercept_excess),
            num(audit.exponent_ratio),
        ]);
        audits.push(Row { imag: eta, audit });
    }
    art.write_csv(
        "ct.csv",
        &["imag_eV", "distance_eV", "exponent_per_A", "r_squared", "intercept_excess", "exponent_ratio"],
        &rows,
    )?;
    art.write_json("ct.json", &audits)?;
    art.finish()
}
