use super::{check_rows, defect::woodbury_check, require, Check, Context, CHECK_HEADER};
use crate::config::RunConfig;
use crate::error::CliResult;
use crate::output::FileEntry;
use crate::system::System;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use tbloc::geometry::Vec3;
use tbloc::locality::{fit_exponential, DecayKind, DecayPoint, FitOptions};
use tbloc::model::{kernel_symmetry_defect, Assembly};
use tbloc::nalgebra::{DMatrix, DVector};
use tbloc::sites::{self, all_sites, resolvent_identity_converged, site_energies_contour_converged};
use tbloc::thermo::ContourOptions;
use tbloc::Complex64;

/// Suite run when no configuration is given: a 64-site two-species toy cluster
/// at β = 32 /eV with mid-gap μ.
pub const DEFAULT_SUITE: &str = r#"
[model]
kind = "toy"

[model.toy]
hopping = -2.718281828459045
decay = 1.0
cutoff = 1.2

[model.toy.onsite]
A = 1.0
B = -1.0

[geometry]
builder = "rock_salt"
species = ["A", "B"]
lattice = 1.0
size = [4, 4, 4]
periodic = false

[thermo]
beta = 32.0
mu = "midgap"
"#;

fn guarded(name: &str, tol: f64, f: impl FnOnce() -> CliResult<Check>) -> Check {
    f().unwrap_or_else(|e| Check::failed(name, tol, e.to_string()))
}

fn bond_samples(cutoff: f64) -> Vec<Vec3> {
    let dirs =
        [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.3, -0.8, 0.5), Vec3::new(-0.2, 0.1, 0.9), Vec3::new(1.0, 1.0, 1.0)];
    let mut out = Vec::new();
    for d in dirs {
        for s in [0.3, 0.6, 0.9] {
            out.push(d.normalize() * (s * cutoff));
        }
    }
    out
}

pub fn checks(run: &RunConfig) -> Vec<Check> {
    let tol = run.tolerances;
    let mut out = Vec::new();
    let sys = match System::new(run) {
        Ok(s) => s,
        Err(e) => return vec![Check::failed("system setup", 0.0, e.to_string())],
    };
    let model = sys.model();
    let g = sys.potential;

    out.push(guarded("kernel symmetry", tol.symmetry, || {
        let species: BTreeSet<&str> = sys.config.species.iter().map(String::as_str).collect();
        let samples = bond_samples(model.cutoff());
        let mut worst = 0.0f64;
        for a in &species {
            for b in &species {
                worst = worst.max(kernel_symmetry_defect(model, a, b, &samples)?);
            }
        }
        Ok(Check::below("kernel symmetry", worst, tol.symmetry))
    }));

    let h = &sys.pair.h;
    let mut asym = (h - h.transpose()).amax();
    if let Some(m) = &sys.pair.m {
        asym = asym.max((m - m.transpose()).amax());
    }
    out.push(Check::below("hamiltonian symmetry", asym, tol.symmetry));

    let psi = &sys.spectrum.eigenvectors;
    let gram = match &sys.spectrum.overlap_vectors {
        Some(mpsi) => psi.transpose() * mpsi,
        None => psi.transpose() * psi,
    };
    let n = gram.nrows();
    out.push(Check::below("orthonormality", (gram - DMatrix::identity(n, n)).amax(), tol.orthonormality));

    let adm = sys.config.admissibility();
    out.push(Check {
        pass: adm.pass,
        ..Check::below("admissibility (min distance vs m_min)", adm.m_min, adm.min_distance.max(f64::MIN_POSITIVE))
    });

    let all = all_sites(&sys.spectrum);
    let spectral = sites::site_energies_spectral(&sys.spectrum, &g, &all);
    let total = spectral.total.unwrap_or(f64::NAN);
    out.push(Check::below("split", (spectral.sum() - total).abs() / total.abs(), tol.split));

    let eig = sys.spectrum.eigenvalues.as_slice();
    let opts = ContourOptions::with_nodes(run.contour.nodes);
    out.push(guarded("route agreement", tol.routes, || {
        let (rep, _, _) = site_energies_contour_converged(
            &sys.pair,
            eig,
            &g,
            &opts,
            &all,
            run.contour.tolerance,
            run.contour.max_nodes,
        )?;
        let gap = spectral.values.iter().zip(&rep.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        Ok(Check::below("route agreement", gap, tol.routes))
    }));

    out.push(guarded("resolution of identity", tol.identity, || {
        let (x, _) =
            resolvent_identity_converged(&sys.pair, eig, &g, &opts, 0.1 * tol.identity, run.contour.max_nodes)?;
        let d = x.nrows();
        let err = (x - DMatrix::<Complex64>::identity(d, d)).iter().fold(0.0f64, |m, v| m.max(v.norm()));
        Ok(Check::below("resolution of identity", err, tol.identity))
    }));

    out.push(guarded("force sum", tol.force_sum, || {
        let derivs = Assembly::new(model, &sys.config, true)?.first_derivatives()?;
        let f = sites::forces(&sys.spectrum, &derivs, &g);
        let sum = f.iter().fold(Vec3::zeros(), |a, x| a + x).norm();
        Ok(Check::below("force sum", sum, tol.force_sum))
    }));

    out.push(guarded("woodbury N=100", tol.woodbury, || {
        let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
        let n = 100;
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let h_ref = (&b + b.transpose()) * 0.5;
        let w = DMatrix::from_fn(n, 6, |_, _| rng.random_range(-0.5..0.5));
        let s = DMatrix::from_diagonal(&DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0)));
        let err = woodbury_check(&h_ref, &(&w * &s), &w.transpose(), 20, run.seed)?;
        Ok(Check::below("woodbury N=100", err, tol.woodbury))
    }));

    out.push(guarded("fit exactness", tol.fit, || {
        let eta = 0.73;
        let points: Vec<DecayPoint> = (0..120)
            .map(|i| {
                let r = 1.0 + 0.25 * i as f64;
                DecayPoint {
                    distance: r,
                    magnitude: 3.0 * (-eta * r).exp(),
                    site: 0,
                    partners: vec![i],
                    kind: DecayKind::SiteGradient,
                    near_defect: false,
                }
            })
            .collect();
        let fit = fit_exponential(&points, &FitOptions { window: (2.0, 28.0), bin_width: 1.0, floor: 0.0 })?;
        Ok(Check::below("fit exactness", (fit.exponent - eta).abs(), tol.fit))
    }));
    out
}

pub fn run(ctx: &Context) -> CliResult<Vec<FileEntry>> {
    let checks = checks(&ctx.run);
    for c in &checks {
        println!("{}", c.line());
    }
    let mut art = ctx.artifacts()?;
    art.write_csv("verify.csv", &CHECK_HEADER, &check_rows(&checks))?;
    art.write_json("verify.json", &checks)?;
    let files = art.finish()?;
    let failed = checks.iter().filter(|c| !c.pass).count();
    println!("verify: {} of {} invariants hold", checks.len() - failed, checks.len());
    require(&checks)?;
    Ok(files)
}
