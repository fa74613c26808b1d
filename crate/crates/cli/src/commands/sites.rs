use super::{check_rows, require, Check, Context, CHECK_HEADER};
use crate::error::CliResult;
use crate::output::{num, FileEntry};
use crate::system::System;
use serde::Serialize;
use tbloc::model::Assembly;
use tbloc::sites::{self, all_sites, site_energies_contour_converged, site_energies_spectral};
use tbloc::thermo::{ContourKind, ContourOptions};

#[derive(Serialize)]
#[allow(non_snake_case)]
struct Summary {
    sites: usize,
    beta: String,
    mu_eV: f64,
    total_eV: f64,
    site_sum_spectral_eV: f64,
    site_sum_contour_eV: f64,
    contour_kind: String,
    contour_nodes: usize,
    margin_spectrum_eV: f64,
    margin_singularity_eV: f64,
    last_doubling_change_eV: f64,
    force_sum_eV_per_A: f64,
    checks: Vec<Check>,
}

pub fn run(ctx: &Context) -> CliResult<Vec<FileEntry>> {
    let run = &ctx.run;
    let sys = System::new(run)?;
    let g = sys.potential;
    let all = all_sites(&sys.spectrum);
    let spectral = site_energies_spectral(&sys.spectrum, &g, &all);
    let total = spectral.total.unwrap_or(f64::NAN);
    let opts = ContourOptions::with_nodes(run.contour.nodes);
    let (contour_rep, contour, change) = site_energies_contour_converged(
        &sys.pair,
        sys.spectrum.eigenvalues.as_slice(),
        &g,
        &opts,
        &all,
        run.contour.tolerance,
        run.contour.max_nodes,
    )?;
    let asm = Assembly::new(sys.model(), &sys.config, true)?;
    let derivs = asm.first_derivatives()?;
    let forces = sites::forces(&sys.spectrum, &derivs, &g);
    let focus = run.locality.site.min(sys.config.len() - 1);
    let gradient = sites::site_gradients_spectral(&sys.spectrum, &derivs, &g, &[focus])?.remove(0);

    let scale = total.abs().max(f64::MIN_POSITIVE);
    let route_gap = spectral.values.iter().zip(&contour_rep.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let force_sum = forces.iter().fold(tbloc::geometry::Vec3::zeros(), |a, f| a + f).norm();
    let tol = &run.tolerances;
    let checks = vec![
        Check::below("split (spectral)", (spectral.sum() - total).abs() / scale, tol.split),
        Check::below("split (contour)", (contour_rep.sum() - total).abs() / scale, tol.split),
        Check::below("route agreement", route_gap, tol.routes),
        Check::below("force sum", force_sum, tol.force_sum),
    ];

    let mut art = ctx.artifacts()?;
    let mut rows = Vec::new();
    for (route, rep) in [("spectral", &spectral), ("contour", &contour_rep)] {
        for (&l, v) in rep.sites.iter().zip(&rep.values) {
            let p = sys.config.positions[l];
            rows.push(vec![l.to_string(), num(p.x), num(p.y), num(p.z), num(*v), route.into()]);
        }
    }
    art.write_csv("sites.csv", &["site", "x", "y", "z", "G_site_eV", "route"], &rows)?;

    let rows: Vec<Vec<String>> =
        forces.iter().enumerate().map(|(m, f)| vec![m.to_string(), num(f.x), num(f.y), num(f.z)]).collect();
    art.write_csv("forces.csv", &["site", "fx_eV_per_A", "fy_eV_per_A", "fz_eV_per_A"], &rows)?;

    let rows: Vec<Vec<String>> = (0..sys.config.len())
        .map(|m| {
            let r = sys.config.distance(focus, m);
            vec![
                focus.to_string(),
                m.to_string(),
                num(r),
                num(gradient[3 * m]),
                num(gradient[3 * m + 1]),
                num(gradient[3 * m + 2]),
            ]
        })
        .collect();
    art.write_csv("derivatives.csv", &["site", "atom", "distance_A", "dG_dx", "dG_dy", "dG_dz"], &rows)?;

    let weighted = contour.weighted_nodes()?;
    let mut rows = Vec::new();
    let mut q = 0;
    for (li, l) in contour.loops.iter().enumerate() {
        for (&z, &w) in l.nodes.iter().zip(&l.weights) {
            let gz = g.eval(z).map(|v| v.norm()).unwrap_or(f64::NAN);
            let margin_spec = sys.spectrum.eigenvalues.iter().map(|&e| (z - e).norm()).fold(f64::INFINITY, f64::min);
            let c = weighted[q].1;
            rows.push(vec![
                li.to_string(),
                q.to_string(),
                num(z.re),
                num(z.im),
                num(w.re),
                num(w.im),
                num(c.norm()),
                num(gz),
                num(margin_spec),
                num(g.singularity_distance(z)),
            ]);
            q += 1;
        }
    }
    art.write_csv(
        "contour.csv",
        &[
            "loop",
            "node",
            "re_z",
            "im_z",
            "re_dz",
            "im_dz",
            "abs_weight",
            "abs_g",
            "margin_spectrum",
            "margin_singularity",
        ],
        &rows,
    )?;
    art.write_csv("checks.csv", &CHECK_HEADER, &check_rows(&checks))?;

    let summary = Summary {
        sites: sys.config.len(),
        beta: run.thermo.beta.to_string(),
        mu_eV: g.mu,
        total_eV: total,
        site_sum_spectral_eV: spectral.sum(),
        site_sum_contour_eV: contour_rep.sum(),
        contour_kind: kind_name(contour.kind).into(),
        contour_nodes: contour.node_count(),
        margin_spectrum_eV: contour.margin_spectrum,
        margin_singularity_eV: contour.margin_singularity,
        last_doubling_change_eV: change,
        force_sum_eV_per_A: force_sum,
        checks: checks.clone(),
    };
    art.write_json("summary.json", &summary)?;
    for c in &checks {
        println!("{}", c.line());
    }
    let files = art.finish()?;
    require(&checks)?;
    Ok(files)
}

pub fn kind_name(k: ContourKind) -> &'static str {
    match k {
        ContourKind::OccupiedCircle => "occupied_circle",
        ContourKind::TwoCircles => "two_circles",
        ContourKind::NotchedPolygon => "notched_polygon",
        ContourKind::Split => "split",
    }
}
