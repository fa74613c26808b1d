//! Decay datasets of derivative magnitudes against interatomic distance, and
//! binned upper-envelope exponential fits.

use crate::error::{Error, Result};
use crate::geometry::{Configuration, SiteId, Vec3};
use crate::model::{Assembly, Coordinate, TightBinding};
use crate::sites::{self, Route};
use crate::spectral;
use crate::thermo::{Contour, ContourOptions, GrandPotential};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecayKind {
    /// |∂G_ℓ/∂y(m)|
    SiteGradient,
    /// |∂²G_ℓ/∂y(m₁)∂y(m₂)|
    SiteHessian,
    /// |∂f_ℓ/∂y(j)|
    ForceJacobian,
    /// |R_{ℓk}(z)|
    Resolvent,
    /// Woodbury correction |[R - R_ref]_{ℓk}|
    Correction,
}

impl DecayKind {
    pub fn tag(&self) -> &'static str {
        match self {
            DecayKind::SiteGradient => "dE",
            DecayKind::SiteHessian => "d2E",
            DecayKind::ForceJacobian => "dF",
            DecayKind::Resolvent => "R",
            DecayKind::Correction => "dR",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayPoint {
    pub distance: f64,
    pub magnitude: f64,
    pub site: SiteId,
    pub partners: Vec<SiteId>,
    pub kind: DecayKind,
    pub near_defect: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentialFit {
    pub log_prefactor: f64,
    /// Fitted η̂ (1/Å); positive for decaying data.
    pub exponent: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub bins: usize,
}

impl ExponentialFit {
    pub fn prefactor(&self) -> f64 {
        self.log_prefactor.exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub window: (f64, f64),
    pub bin_width: f64,
    /// Bins whose envelope lies below `floor` times the largest envelope in the
    /// window are dropped, keeping round-off out of the fit.
    pub floor: f64,
}

pub const DEFAULT_FLOOR: f64 = 1e-11;

impl FitOptions {
    /// Window [2 r_nn, 0.45 extent] with one bin per nearest-neighbour spacing.
    pub fn for_config(config: &Configuration, nearest: f64) -> Self {
        Self { window: (2.0 * nearest, 0.45 * extent(config)), bin_width: nearest, floor: DEFAULT_FLOOR }
    }
}

/// Largest periodic width, or the diameter of a finite cluster.
pub fn extent(config: &Configuration) -> f64 {
    if let Some(cell) = &config.cell {
        let w = cell.widths();
        let periodic = (0..3).filter(|&i| cell.pbc[i]).map(|i| w[i]).fold(0.0, f64::max);
        if periodic > 0.0 {
            return periodic;
        }
    }
    let mut d = 0.0f64;
    for a in 0..config.len() {
        for b in a + 1..config.len() {
            d = d.max((config.positions[a] - config.positions[b]).norm());
        }
    }
    d
}

/// Smallest interatomic distance.
pub fn nearest_neighbor_distance(config: &Configuration) -> f64 {
    let mut d = f64::INFINITY;
    for a in 0..config.len() {
        for b in a + 1..config.len() {
            d = d.min(config.distance(a, b));
        }
    }
    d
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct DecayDataset {
    pub points: Vec<DecayPoint>,
    pub fit: Option<ExponentialFit>,
}

impl DecayDataset {
    pub fn new(points: Vec<DecayPoint>) -> Self {
        Self { points, fit: None }
    }

    pub fn fitted(mut self, opts: &FitOptions) -> Result<Self> {
        self.fit = Some(fit_exponential(&self.points, opts)?);
        Ok(self)
    }

    pub fn exponent(&self) -> Option<f64> {
        self.fit.map(|f| f.exponent)
    }

    /// Upper envelope per bin as (distance of the maximal point, magnitude).
    pub fn envelope(&self, opts: &FitOptions) -> Vec<(f64, f64)> {
        envelope(&self.points, opts)
    }
}

fn envelope(points: &[DecayPoint], opts: &FitOptions) -> Vec<(f64, f64)> {
    let (lo, hi) = opts.window;
    let mut bins: std::collections::BTreeMap<i64, (f64, f64)> = Default::default();
    for p in points.iter().filter(|p| p.distance >= lo && p.distance <= hi && p.magnitude > 0.0) {
        let k = ((p.distance - lo) / opts.bin_width).floor() as i64;
        let e = bins.entry(k).or_insert((p.distance, p.magnitude));
        if p.magnitude > e.1 {
            *e = (p.distance, p.magnitude);
        }
    }
    let top = bins.values().map(|b| b.1).fold(0.0, f64::max);
    bins.into_values().filter(|b| b.1 > opts.floor * top).collect()
}

/// Least-squares line through log envelope values; η̂ = -slope.
pub fn fit_exponential(points: &[DecayPoint], opts: &FitOptions) -> Result<ExponentialFit> {
    if !(opts.window.1 > opts.window.0 && opts.bin_width > 0.0) {
        return Err(Error::Fit(format!("degenerate window {:?}", opts.window)));
    }
    if points.iter().any(|p| !(p.magnitude >= 0.0 && p.distance >= 0.0)) {
        return Err(Error::Fit("negative or non-finite data".into()));
    }
    let env = envelope(points, opts);
    if env.len() < 4 {
        return Err(Error::Fit(format!("{} usable bins in window {:?}, need 4", env.len(), opts.window)));
    }
    let n = env.len() as f64;
    let xs: Vec<f64> = env.iter().map(|e| e.0).collect();
    let ys: Vec<f64> = env.iter().map(|e| e.1.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all bins at one distance".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(ExponentialFit { log_prefactor: intercept, exponent: -slope, r_squared, window: opts.window, bins: env.len() })
}

#[derive(Debug, Clone, PartialEq)]
pub enum SiteSelection {
    All,
    Site(SiteId),
    FarthestFrom(Vec3),
    NearestTo(Vec3),
}

impl SiteSelection {
    pub fn resolve(&self, config: &Configuration) -> Result<Vec<SiteId>> {
        let by_distance = |p: &Vec3| {
            let mut v: Vec<(f64, SiteId)> = (0..config.len()).map(|s| (config.distance_to_point(p, s), s)).collect();
            v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            v
        };
        let out = match self {
            SiteSelection::All => (0..config.len()).collect(),
            SiteSelection::Site(s) if *s < config.len() => vec![*s],
            SiteSelection::Site(s) => return Err(Error::Invalid(format!("site {s} out of range"))),
            SiteSelection::FarthestFrom(p) => vec![by_distance(p).last().map(|x| x.1).unwrap_or(0)],
            SiteSelection::NearestTo(p) => vec![by_distance(p)[0].1],
        };
        if out.is_empty() {
            return Err(Error::Invalid("empty site selection".into()));
        }
        Ok(out)
    }
}

/// A system whose derivatives are sampled.
pub struct DecaySource<'a> {
    pub model: &'a dyn TightBinding,
    pub config: &'a Configuration,
    pub potential: GrandPotential,
    pub route: Route,
    /// Defect centre and radius used for the near-defect tag.
    pub defect: Option<(Vec3, f64)>,
    pub contour: ContourOptions,
}

impl<'a> DecaySource<'a> {
    pub fn new(
        model: &'a dyn TightBinding,
        config: &'a Configuration,
        potential: GrandPotential,
        route: Route,
    ) -> Self {
        Self { model, config, potential, route, defect: None, contour: ContourOptions::default() }
    }

    fn near(&self, l: SiteId) -> bool {
        self.defect.is_some_and(|(c, r)| self.config.distance_to_point(&c, l) <= r)
    }

    fn coords(&self) -> Vec<Coordinate> {
        (0..self.config.len()).flat_map(|m| (0..3).map(move |i| (m, i))).collect()
    }

    fn point(&self, l: SiteId, partners: Vec<SiteId>, distance: f64, magnitude: f64, kind: DecayKind) -> DecayPoint {
        DecayPoint { distance, magnitude, site: l, partners, kind, near_defect: self.near(l) }
    }

    fn gradient_points(&self, sites: &[SiteId], grads: &[Vec<f64>]) -> Vec<DecayPoint> {
        let mut out = Vec::new();
        for (&l, g) in sites.iter().zip(grads) {
            for m in (0..self.config.len()).filter(|&m| m != l) {
                let v = Vec3::new(g[3 * m], g[3 * m + 1], g[3 * m + 2]);
                out.push(self.point(l, vec![m], self.config.distance(l, m), v.norm(), DecayKind::SiteGradient));
            }
        }
        out
    }

    fn jacobian_points(&self, sites: &[SiteId], block: impl Fn(SiteId, SiteId) -> f64) -> Vec<DecayPoint> {
        let mut out = Vec::new();
        for &l in sites {
            for j in (0..self.config.len()).filter(|&j| j != l) {
                out.push(self.point(l, vec![j], self.config.distance(l, j), block(l, j), DecayKind::ForceJacobian));
            }
        }
        out
    }

    /// First site-energy derivatives for the selected sites.
    pub fn site_gradients(&self, selection: &SiteSelection) -> Result<DecayDataset> {
        let sites = selection.resolve(self.config)?;
        let grads = match self.route {
            Route::FiniteDifference => return Ok(self.finite_differences(selection)?.0),
            route => {
                let asm = Assembly::new(self.model, self.config, true)?;
                let pair = asm.hamiltonian()?;
                let derivs = asm.first_derivatives()?;
                let spec = spectral::solve(&pair)?;
                if route == Route::Spectral {
                    sites::site_gradients_spectral(&spec, &derivs, &self.potential, &sites)?
                } else {
                    let contour = Contour::build(spec.eigenvalues.as_slice(), &self.potential, &self.contour)?;
                    sites::site_gradients_contour(&pair, &derivs, &contour, &sites)?
                }
            }
        };
        Ok(DecayDataset::new(self.gradient_points(&sites, &grads)))
    }

    /// Second site-energy derivatives over all coordinate pairs, plotted against
    /// r_{ℓm₁} + r_{ℓm₂}. The finite-difference route differentiates analytic
    /// gradients; the contour route is not supported.
    pub fn site_hessians(&self, selection: &SiteSelection) -> Result<DecayDataset> {
        let sites = selection.resolve(self.config)?;
        let hessians = match self.route {
            Route::Contour => return Err(Error::Unsupported("second derivatives on the contour route".into())),
            Route::FiniteDifference => {
                sites::fd_site_hessians(self.model, self.config, &self.potential, &sites, sites::FD_STEP)?
            }
            Route::Spectral => {
                let asm = Assembly::new(self.model, self.config, true)?;
                let spec = spectral::solve(&asm.hamiltonian()?)?;
                let coords = self.coords();
                sites
                    .iter()
                    .map(|&l| sites::site_hessian_spectral(&spec, &asm, &self.potential, l, &coords))
                    .collect::<Result<Vec<_>>>()?
            }
        };
        let n = self.config.len();
        let mut out = Vec::new();
        for (&l, h) in sites.iter().zip(&hessians) {
            for m1 in 0..n {
                for m2 in m1..n {
                    let r = self.config.distance(l, m1) + self.config.distance(l, m2);
                    if r == 0.0 {
                        continue;
                    }
                    let mag = h.view((3 * m1, 3 * m2), (3, 3)).norm();
                    out.push(self.point(l, vec![m1, m2], r, mag, DecayKind::SiteHessian));
                }
            }
        }
        Ok(DecayDataset::new(out))
    }

    /// Force Jacobian blocks ∂f_ℓ/∂y(j).
    pub fn force_jacobian(&self, selection: &SiteSelection) -> Result<DecayDataset> {
        if self.route != Route::Spectral {
            return Ok(self.finite_differences(selection)?.1);
        }
        let sites = selection.resolve(self.config)?;
        let asm = Assembly::new(self.model, self.config, true)?;
        let spec = spectral::solve(&asm.hamiltonian()?)?;
        let coords = self.coords();
        let h = sites::energy_hessian_spectral(&spec, &asm, &self.potential, &coords)?;
        Ok(DecayDataset::new(self.jacobian_points(&sites, |l, j| h.view((3 * l, 3 * j), (3, 3)).norm())))
    }

    /// Site-gradient and force-Jacobian datasets from central differences of
    /// site energies and forces (step [`sites::FD_STEP`]).
    pub fn finite_differences(&self, selection: &SiteSelection) -> Result<(DecayDataset, DecayDataset)> {
        let sites = selection.resolve(self.config)?;
        let fd = sites::fd_snapshot_derivatives(self.model, self.config, &self.potential, sites::FD_STEP)?;
        let n = self.config.len();
        let grads: Vec<Vec<f64>> = sites.iter().map(|&l| (0..3 * n).map(|c| fd[c].0[l]).collect()).collect();
        let jac = |l: SiteId, j: SiteId| DMatrix::from_fn(3, 3, |a, b| fd[3 * j + b].1[l][a]).norm();
        Ok((
            DecayDataset::new(self.gradient_points(&sites, &grads)),
            DecayDataset::new(self.jacobian_points(&sites, jac)),
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrefactorComparison {
    /// |η̂_far - η̂_bulk| / η̂_bulk
    pub far_exponent_deviation: f64,
    /// |η̂_near - η̂_bulk| / η̂_bulk
    pub near_exponent_deviation: f64,
    pub far_prefactor_ratio: f64,
    pub near_prefactor_ratio: f64,
    pub near_exceeds_bulk: bool,
}

/// Compares fitted exponents and prefactors of defect datasets with the bulk.
pub fn compare_defect_prefactor(
    bulk: &DecayDataset,
    far: &DecayDataset,
    near: &DecayDataset,
) -> Result<PrefactorComparison> {
    let get = |d: &DecayDataset, what: &str| d.fit.ok_or_else(|| Error::Fit(format!("{what} dataset has no fit")));
    let (b, f, n) = (get(bulk, "bulk")?, get(far, "far")?, get(near, "near")?);
    for other in [f, n] {
        if other.window.0 >= b.window.1 || b.window.0 >= other.window.1 {
            return Err(Error::Fit(format!("windows {:?} and {:?} do not overlap", b.window, other.window)));
        }
    }
    let ratio = |x: ExponentialFit| (x.log_prefactor - b.log_prefactor).exp();
    Ok(PrefactorComparison {
        far_exponent_deviation: (f.exponent - b.exponent).abs() / b.exponent.abs(),
        near_exponent_deviation: (n.exponent - b.exponent).abs() / b.exponent.abs(),
        far_prefactor_ratio: ratio(f),
        near_prefactor_ratio: ratio(n),
        near_exceeds_bulk: ratio(n) > 1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub parameter: f64,
    pub fit: ExponentialFit,
}

/// Fits one dataset per inverse temperature.
pub fn beta_sweep<F>(betas: &[f64], opts: &FitOptions, mut dataset: F) -> Result<Vec<SweepRow>>
where
    F: FnMut(f64) -> Result<DecayDataset>,
{
    betas.iter().map(|&b| Ok(SweepRow { parameter: b, fit: fit_exponential(&dataset(b)?.points, opts)? })).collect()
}

/// Relative spread (max - min) / max of the fitted exponents.
pub fn exponent_spread(rows: &[SweepRow]) -> f64 {
    let max = rows.iter().map(|r| r.fit.exponent).fold(f64::NEG_INFINITY, f64::max);
    let min = rows.iter().map(|r| r.fit.exponent).fold(f64::INFINITY, f64::min);
    (max - min) / max
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build;
    use crate::model::ToyModel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn synthetic(c: f64, eta: f64, noise: impl Fn(usize) -> f64) -> Vec<DecayPoint> {
        (0..400)
            .map(|i| {
                let r = 0.5 + 0.05 * i as f64;
                DecayPoint {
                    distance: r,
                    magnitude: c * (-eta * r).exp() * noise(i),
                    site: 0,
                    partners: vec![i],
                    kind: DecayKind::SiteGradient,
                    near_defect: false,
                }
            })
            .collect()
    }

    #[test]
    fn exact_exponential_recovered() {
        let pts = synthetic(3.5, 1.7, |_| 1.0);
        let opts = FitOptions { window: (1.0, 15.0), bin_width: 1.0, floor: 0.0 };
        let fit = fit_exponential(&pts, &opts).unwrap();
        assert!((fit.exponent - 1.7).abs() < 1e-8);
        assert!((fit.log_prefactor - 3.5f64.ln()).abs() < 1e-8);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn envelope_fit_tolerates_multiplicative_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noise: Vec<f64> = (0..400).map(|_| rng.random_range(0.3..1.0)).collect();
        let pts = synthetic(2.0, 0.9, |i| noise[i]);
        let fit = fit_exponential(&pts, &FitOptions { window: (1.0, 19.0), bin_width: 1.0, floor: 0.0 }).unwrap();
        assert!((fit.exponent - 0.9).abs() < 0.09, "{}", fit.exponent);
    }

    #[test]
    fn too_few_bins_is_an_error() {
        let pts = synthetic(1.0, 1.0, |_| 1.0);
        let opts = FitOptions { window: (1.0, 3.5), bin_width: 1.0, floor: 0.0 };
        assert!(matches!(fit_exponential(&pts, &opts), Err(Error::Fit(_))));
    }

    #[test]
    fn identical_datasets_compare_equal() {
        let d = DecayDataset::new(synthetic(1.0, 1.0, |_| 1.0))
            .fitted(&FitOptions { window: (1.0, 10.0), bin_width: 1.0, floor: 0.0 })
            .unwrap();
        let c = compare_defect_prefactor(&d, &d, &d).unwrap();
        assert_eq!(c.far_exponent_deviation, 0.0);
        assert_eq!(c.far_prefactor_ratio, 1.0);
    }

    #[test]
    fn homogeneous_chain_sites_are_equivalent() {
        let model = ToyModel::new(&[("A", 0.0)], -1.0, 1.0, 1.5);
        let config = build::chain(24, 1.0, &["A"], true, 0.5).unwrap();
        let src = DecaySource::new(&model, &config, GrandPotential::finite(4.0, 0.3), Route::Spectral);
        let a = src.site_gradients(&SiteSelection::Site(0)).unwrap();
        let b = src.site_gradients(&SiteSelection::Site(5)).unwrap();
        let mut ma: Vec<(i64, i64)> =
            a.points.iter().map(|p| ((p.distance * 1e6).round() as i64, (p.magnitude * 1e9).round() as i64)).collect();
        let mut mb: Vec<(i64, i64)> =
            b.points.iter().map(|p| ((p.distance * 1e6).round() as i64, (p.magnitude * 1e9).round() as i64)).collect();
        ma.sort();
        mb.sort();
        assert_eq!(ma, mb);
    }

    #[test]
    fn gapped_chain_decays_exponentially() {
        let model = ToyModel::binary_chain(0.5);
        let config = build::chain(48, 1.0, &["A", "B"], true, 0.5).unwrap();
        let src = DecaySource::new(&model, &config, GrandPotential::zero(0.0), Route::Spectral);
        let d =
            src.site_gradients(&SiteSelection::Site(0)).unwrap().fitted(&FitOptions::for_config(&config, 1.0)).unwrap();
        let fit = d.fit.unwrap();
        assert!(fit.exponent > 0.0 && fit.r_squared > 0.9, "{fit:?}");
    }
}
