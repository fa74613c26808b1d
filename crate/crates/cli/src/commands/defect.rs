use super::{check_rows, fit_options, require, write_dataset, Check, Context, CHECK_HEADER};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{num, FileEntry};
use crate::system::{min_image, System};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use tbloc::defects::{
    build_defect, correction_decay, decompose_hamiltonian, tweak_interstitial, woodbury_resolvent, Defect, DefectKind,
    DefectSpec, ExtendedPair,
};
use tbloc::geometry::Vec3;
use tbloc::nalgebra::DMatrix;
use tbloc::spectral::{self, SpectrumReport};
use tbloc::Complex64;

pub struct BuiltDefect {
    pub defect: Defect,
    /// Gap level and scan parameter when the interstitial was tuned.
    pub tweak: Option<(f64, f64)>,
    pub spectrum: Option<SpectrumReport>,
}

/// Builds the configured defect, tuning an interstitial onto its target level if requested.
pub fn build(run: &RunConfig, sys: &System) -> CliResult<Option<BuiltDefect>> {
    let Some(cfg) = &run.defect else { return Ok(None) };
    let Some(t) = &cfg.tweak else {
        let spec = DefectSpec { kind: cfg.site.clone(), radius: cfg.radius };
        return Ok(Some(BuiltDefect { defect: build_defect(&sys.config, &spec)?, tweak: None, spectrum: None }));
    };
    let DefectKind::Interstitial { species, .. } = &cfg.site else {
        return Err(CliError::Config("[defect.tweak] needs an interstitial defect".into()));
    };
    let gap = sys.spectrum.gap_at(sys.potential.mu);
    let (Some(lo), Some(hi)) = (gap.below, gap.above) else {
        return Err(tbloc::Error::NoGap { mu: gap.mu, distance: gap.distance }.into());
    };
    let r = tweak_interstitial(
        sys.model(),
        &sys.config,
        species,
        Vec3::from(t.start),
        Vec3::from(t.direction),
        cfg.radius,
        (lo, hi),
        sys.potential.mu + t.level_above_mu,
        t.samples,
    )?;
    Ok(Some(BuiltDefect { defect: r.defect, tweak: Some((r.level, r.offset)), spectrum: Some(r.spectrum) }))
}

/// Largest elementwise |Woodbury - direct| over `samples` random z at least
/// 10⁻³ from both spectra.
pub fn woodbury_check(
    h_ref: &DMatrix<f64>,
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    samples: usize,
    seed: u64,
) -> CliResult<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = h_ref.nrows();
    let full = h_ref + u * v;
    let mut eig: Vec<f64> = full.clone().symmetric_eigenvalues().iter().copied().collect();
    eig.extend(h_ref.clone().symmetric_eigenvalues().iter());
    let (lo, hi) = eig.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let rhs = DMatrix::<Complex64>::identity(n, n);
    let mut worst = 0.0f64;
    let mut tested = 0;
    while tested < samples {
        let z = Complex64::new(rng.random_range(lo - 1.0..hi + 1.0), rng.random_range(-0.3..0.3));
        if eig.iter().any(|&l| (Complex64::from(l) - z).norm() < 1e-3) {
            continue;
        }
        let sol = woodbury_resolvent(h_ref, u, v, z, &rhs)?;
        let mut a = full.map(Complex64::from);
        for i in 0..n {
            a[(i, i)] -= z;
        }
        let direct = a.lu().try_inverse().ok_or_else(|| tbloc::Error::Singular(format!("H - z at z = {z}")))?;
        worst = worst.max((sol.columns - direct).iter().fold(0.0, |m, x| m.max(x.norm())));
        tested += 1;
    }
    Ok(worst)
}

#[derive(Serialize)]
#[allow(non_snake_case)]
struct Summary {
    kind: String,
    center: [f64; 3],
    radius_A: f64,
    delta: f64,
    p1_frobenius: f64,
    rank: usize,
    support_radius_A: f64,
    support_sites: usize,
    reconstruction_residual: f64,
    woodbury_max_error: f64,
    woodbury_samples: usize,
    mu_eV: f64,
    tuned_level_eV: Option<f64>,
    scan_offset: Option<f64>,
    gap_states_eV: Vec<f64>,
    checks: Vec<Check>,
}

pub fn run(ctx: &Context) -> CliResult<Vec<FileEntry>> {
    let run = &ctx.run;
    let cfg =
        run.defect.as_ref().ok_or_else(|| CliError::Config("the defect command needs a [defect] table".into()))?;
    let sys = System::new(run)?;
    let built = build(run, &sys)?.expect("defect table present");
    let defect = &built.defect;
    let ext = ExtendedPair::new(sys.model(), &sys.config, defect, 0.0)?;
    let dist = |a: &Vec3, b: &Vec3| min_image(&sys.config, a, b);
    let dec = decompose_hamiltonian(&ext, &defect.center, dist, cfg.delta)?;
    let woodbury = woodbury_check(&ext.reference, &dec.u, &dec.v, cfg.z_samples, run.seed)?;

    let mu = sys.potential.mu;
    let def_spec = match built.spectrum {
        Some(s) => s,
        None => spectral::solve(&tbloc::model::Assembly::new(sys.model(), &defect.config, true)?.hamiltonian()?)?,
    };
    let gap = sys.spectrum.gap_at(mu);
    let states: Vec<f64> = match (gap.below, gap.above) {
        (Some(lo), Some(hi)) => def_spec.states_in((lo, hi)).into_iter().map(|i| def_spec.eigenvalues[i]).collect(),
        _ => Vec::new(),
    };

    let z = Complex64::new(mu, run.ct.imag.first().copied().unwrap_or(0.1));
    let mut correction = correction_decay(&ext, &dec, &defect.center, dist, z)?;
    let opts = fit_options(run, &sys.config);
    correction.fit = tbloc::locality::fit_exponential(&correction.points, &opts).ok();

    let tol = &run.tolerances;
    let checks = vec![
        Check::below("woodbury vs direct", woodbury, tol.woodbury),
        Check::below("reconstruction", dec.residual, 1e-12),
        Check { pass: dec.p1_norm <= cfg.delta, ..Check::below("far part norm", dec.p1_norm, cfg.delta) },
    ];

    let mut art = ctx.artifacts()?;
    let rows: Vec<Vec<String>> = states.iter().map(|&e| vec![num(e), num(e - mu)]).collect();
    art.write_csv("defect_states.csv", &["energy_eV", "minus_mu_eV"], &rows)?;
    write_dataset(&mut art, "correction", "Woodbury correction", &correction)?;
    art.write("defect_geometry.toml", defect.config.to_toml().as_bytes())?;
    art.write_csv("checks.csv", &CHECK_HEADER, &check_rows(&checks))?;
    let summary = Summary {
        kind: match &cfg.site {
            DefectKind::Interstitial { .. } => "interstitial",
            DefectKind::Vacancy { .. } => "vacancy",
            DefectKind::Displacement { .. } => "displacement",
        }
        .into(),
        center: [defect.center.x, defect.center.y, defect.center.z],
        radius_A: cfg.radius,
        delta: cfg.delta,
        p1_frobenius: dec.p1_norm,
        rank: dec.rank,
        support_radius_A: dec.radius,
        support_sites: dec.support.len(),
        reconstruction_residual: dec.residual,
        woodbury_max_error: woodbury,
        woodbury_samples: cfg.z_samples,
        mu_eV: mu,
        tuned_level_eV: built.tweak.map(|t| t.0),
        scan_offset: built.tweak.map(|t| t.1),
        gap_states_eV: states,
        checks: checks.clone(),
    };
    art.write_json("summary.json", &summary)?;
    println!("rank {} within {:.3} Å, ‖P1‖_F = {:.3e}", dec.rank, dec.radius, dec.p1_norm);
    for c in &checks {
        println!("{}", c.line());
    }
    let files = art.finish()?;
    require(&checks)?;
    Ok(files)
}
