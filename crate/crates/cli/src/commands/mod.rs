//! Subcommand implementations. Each writes its artifacts and a manifest into
//! the output directory and returns the files written.

pub mod bands;
pub mod ct;
pub mod defect;
pub mod locality;
pub mod sites;
pub mod verify;

use crate::config::RunConfig;
use crate::error::CliResult;
use crate::output::{num, Artifacts};
use crate::plot;
use serde::Serialize;
use std::path::PathBuf;
use tbloc::geometry::Configuration;
use tbloc::locality::{nearest_neighbor_distance, DecayDataset, FitOptions};

pub struct Context {
    pub run: RunConfig,
    pub out: PathBuf,
    pub command: &'static str,
}

impl Context {
    /// Output sink; the recorded configuration omits the output directory so
    /// manifests of identical runs compare equal.
    pub fn artifacts(&self) -> CliResult<Artifacts> {
        let recorded = RunConfig { out: None, ..self.run.clone() };
        Artifacts::create(&self.out, self.command, self.run.seed, recorded.to_toml())
    }
}

/// Fit options for `config`, with configured overrides applied.
pub fn fit_options(run: &RunConfig, config: &Configuration) -> FitOptions {
    let mut opts = FitOptions::for_config(config, nearest_neighbor_distance(config));
    if let Some([a, b]) = run.locality.window {
        opts.window = (a, b);
    }
    if let Some(w) = run.locality.bin_width {
        opts.bin_width = w;
    }
    opts.floor = run.locality.floor;
    opts
}

/// Writes `<stem>.csv` and `<stem>.svg` for a decay dataset.
pub fn write_dataset(art: &mut Artifacts, stem: &str, title: &str, data: &DecayDataset) -> CliResult<()> {
    let rows: Vec<Vec<String>> = data
        .points
        .iter()
        .map(|p| {
            let partners: Vec<String> = p.partners.iter().map(usize::to_string).collect();
            vec![
                p.kind.tag().to_string(),
                p.site.to_string(),
                partners.join(" "),
                num(p.distance),
                num(p.magnitude),
                p.near_defect.to_string(),
            ]
        })
        .collect();
    art.write_csv(
        &format!("{stem}.csv"),
        &["kind", "site", "partners", "distance_A", "magnitude", "near_defect"],
        &rows,
    )?;
    let pts: Vec<(f64, f64)> = data.points.iter().map(|p| (p.distance, p.magnitude)).collect();
    art.write(&format!("{stem}.svg"), plot::decay(title, &pts, data.fit.as_ref()).as_bytes())
}

/// One measured invariant.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    /// Passes when `value < tolerance`.
    pub fn below(name: &str, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, tolerance, pass: value < tolerance, note: None }
    }

    pub fn failed(name: &str, tolerance: f64, note: String) -> Self {
        Self { name: name.into(), value: f64::NAN, tolerance, pass: false, note: Some(note) }
    }

    pub fn line(&self) -> String {
        let status = if self.pass { "PASS" } else { "FAIL" };
        match &self.note {
            Some(n) => format!("[{status}] {}: {n}", self.name),
            None => format!("[{status}] {}: {:.3e} (tolerance {:.1e})", self.name, self.value, self.tolerance),
        }
    }
}

pub fn check_rows(checks: &[Check]) -> Vec<Vec<String>> {
    checks
        .iter()
        .map(|c| {
            vec![c.name.clone(), num(c.value), num(c.tolerance), c.pass.to_string(), c.note.clone().unwrap_or_default()]
        })
        .collect()
}

pub const CHECK_HEADER: [&str; 5] = ["invariant", "value", "tolerance", "pass", "note"];

/// Turns failed checks into an invariant error after the report is written.
pub fn require(checks: &[Check]) -> CliResult<()> {
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(crate::error::CliError::Invariant(format!("invariants failed: {}", failed.join(", "))))
    }
}
