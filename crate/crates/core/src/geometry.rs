//! Atomic configurations, periodic cells, neighbour tables and displacement fields.

use crate::error::{Error, Result};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;

/// Dense site identifier in `0..N`.
pub type SiteId = usize;

/// Simulation cell. `vectors[i]` is the i-th lattice vector in Å.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub vectors: [[f64; 3]; 3],
    pub pbc: [bool; 3],
}

impl Cell {
    pub fn new(vectors: [Vec3; 3], pbc: [bool; 3]) -> Self {
        Self { vectors: vectors.map(|v| [v.x, v.y, v.z]), pbc }
    }

    pub fn vector(&self, i: usize) -> Vec3 {
        Vec3::from(self.vectors[i])
    }

    /// Matrix whose columns are the lattice vectors.
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_columns(&[self.vector(0), self.vector(1), self.vector(2)])
    }

    pub fn volume(&self) -> f64 {
        self.matrix().determinant().abs()
    }

    /// Distance between opposite faces along each lattice direction.
    pub fn widths(&self) -> [f64; 3] {
        let a = [self.vector(0), self.vector(1), self.vector(2)];
        let v = self.volume();
        [0, 1, 2].map(|i| v / a[(i + 1) % 3].cross(&a[(i + 2) % 3]).norm())
    }

    /// Reciprocal vectors b_i with a_i · b_j = 2π δ_ij.
    pub fn reciprocal(&self) -> [Vec3; 3] {
        let inv = self.matrix().try_inverse().expect("cell matrix must be invertible");
        let b = inv.transpose() * (2.0 * std::f64::consts::PI);
        [b.column(0).into(), b.column(1).into(), b.column(2).into()]
    }

    pub fn cartesian(&self, frac: &Vec3) -> Vec3 {
        self.matrix() * frac
    }

    pub fn fractional(&self, cart: &Vec3) -> Vec3 {
        self.matrix().try_inverse().expect("cell matrix must be invertible") * cart
    }

    pub fn translation(&self, image: [i32; 3]) -> Vec3 {
        (0..3).fold(Vec3::zeros(), |acc, i| acc + self.vector(i) * image[i] as f64)
    }

    fn validate(&self) -> Result<()> {
        if self.volume() < 1e-10 {
            return Err(Error::Geometry("cell vectors are linearly dependent".into()));
        }
        Ok(())
    }
}

/// A finite or periodic atomic configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub species: Vec<String>,
    pub positions: Vec<Vec3>,
    pub cell: Option<Cell>,
    /// Minimum admissible inter-site distance (Å).
    pub m_min: f64,
}

/// On-disk geometry: positions row-major in Å, optional cell rows and periodicity flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryFile {
    pub species: Vec<String>,
    pub positions: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell: Option<[[f64; 3]; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pbc: Option<[bool; 3]>,
    pub m_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Admissibility {
    pub min_distance: f64,
    pub pair: Option<(SiteId, SiteId)>,
    pub m_min: f64,
    pub pass: bool,
}

/// Entry of a neighbour list: site `index` seen through periodic `image`.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub index: SiteId,
    pub image: [i32; 3],
    /// y_index + T(image) - y_owner
    pub vector: Vec3,
    pub distance: f64,
}

#[derive(Debug, Clone)]
pub struct NeighborTable {
    pub cutoff: f64,
    pub lists: Vec<Vec<Neighbor>>,
}

impl NeighborTable {
    pub fn of(&self, site: SiteId) -> &[Neighbor] {
        &self.lists[site]
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }
}

impl Configuration {
    /// Builds and validates a configuration.
    pub fn new(species: Vec<String>, positions: Vec<Vec3>, cell: Option<Cell>, m_min: f64) -> Result<Self> {
        if species.len() != positions.len() {
            return Err(Error::Geometry(format!("{} species for {} positions", species.len(), positions.len())));
        }
        if positions.is_empty() {
            return Err(Error::Geometry("configuration has no sites".into()));
        }
        if !(m_min > 0.0) {
            return Err(Error::Geometry("m_min must be positive".into()));
        }
        if positions.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::Geometry("non-finite coordinate".into()));
        }
        if let Some(c) = &cell {
            c.validate()?;
        }
        let cfg = Self { species, positions, cell, m_min };
        cfg.check_non_degenerate()?;
        Ok(cfg)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    fn periodic_cell(&self) -> Option<&Cell> {
        self.cell.as_ref().filter(|c| c.pbc.iter().any(|&p| p))
    }

    /// Reduces `d` to the periodic cell, returning the reduced vector and the
    /// integer image added.
    fn reduce(&self, d: Vec3) -> (Vec3, [i32; 3]) {
        match self.periodic_cell() {
            None => (d, [0; 3]),
            Some(cell) => {
                let f = cell.fractional(&d);
                let mut shift = [0i32; 3];
                for i in 0..3 {
                    if cell.pbc[i] {
                        shift[i] = -(f[i].round() as i32);
                    }
                }
                (d + cell.translation(shift), shift)
            }
        }
    }

    /// Minimum-image separation vector from site `a` to site `b`.
    pub fn separation(&self, a: SiteId, b: SiteId) -> Vec3 {
        let (d, _) = self.reduce(self.positions[b] - self.positions[a]);
        match self.periodic_cell() {
            None => d,
            Some(cell) => {
                let mut best = d;
                let range = |i: usize| if cell.pbc[i] { -1..=1 } else { 0..=0 };
                for i in range(0) {
                    for j in range(1) {
                        for k in range(2) {
                            let c = d + cell.translation([i, j, k]);
                            if c.norm() < best.norm() {
                                best = c;
                            }
                        }
                    }
                }
                best
            }
        }
    }

    pub fn distance(&self, a: SiteId, b: SiteId) -> f64 {
        self.separation(a, b).norm()
    }

    /// Distance from a point to site `b`, using the minimum image.
    pub fn distance_to_point(&self, point: &Vec3, b: SiteId) -> f64 {
        let (d, _) = self.reduce(self.positions[b] - point);
        match self.periodic_cell() {
            None => d.norm(),
            Some(cell) => {
                let mut best = d.norm();
                let range = |i: usize| if cell.pbc[i] { -1..=1 } else { 0..=0 };
                for i in range(0) {
                    for j in range(1) {
                        for k in range(2) {
                            best = best.min((d + cell.translation([i, j, k])).norm());
                        }
                    }
                }
                best
            }
        }
    }

    /// Smallest pairwise (minimum-image) distance and the pair realising it.
    pub fn admissibility(&self) -> Admissibility {
        let mut report = Admissibility { min_distance: f64::INFINITY, pair: None, m_min: self.m_min, pass: true };
        for a in 0..self.len() {
            for b in (a + 1)..self.len() {
                let d = self.distance(a, b);
                if d < report.min_distance {
                    report.min_distance = d;
                    report.pair = Some((a, b));
                }
            }
        }
        report.pass = report.min_distance >= self.m_min;
        report
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let f: GeometryFile = toml::from_str(text).map_err(|e| crate::model::toy::params_error(&e, text))?;
        let cell = match (f.cell, f.pbc) {
            (Some(v), pbc) => Some(Cell { vectors: v, pbc: pbc.unwrap_or([true; 3]) }),
            (None, Some(_)) => return Err(Error::Geometry("pbc given without a cell".into())),
            (None, None) => None,
        };
        Self::new(f.species, f.positions.into_iter().map(Vec3::from).collect(), cell, f.m_min)
    }

    pub fn to_toml(&self) -> String {
        let f = GeometryFile {
            species: self.species.clone(),
            positions: self.positions.iter().map(|p| [p.x, p.y, p.z]).collect(),
            cell: self.cell.as_ref().map(|c| c.vectors),
            pbc: self.cell.as_ref().map(|c| c.pbc),
            m_min: self.m_min,
        };
        toml::to_string(&f).unwrap_or_default()
    }

    pub fn check_non_degenerate(&self) -> Result<()> {
        let n = self.len();
        for a in 0..n {
            for b in (a + 1)..n {
                let d = self.distance(a, b);
                if d < self.m_min {
                    return Err(Error::NonDegeneracy { a, b, distance: d, m_min: self.m_min });
                }
            }
        }
        if let Some(cell) = self.periodic_cell() {
            for (i, w) in cell.widths().iter().enumerate() {
                if cell.pbc[i] && *w < self.m_min {
                    return Err(Error::NonDegeneracy { a: 0, b: 0, distance: *w, m_min: self.m_min });
                }
            }
        }
        Ok(())
    }

    /// Neighbour table with all pairs (including periodic images) within `cutoff`.
    ///
    /// Without `multi_image` the cutoff must not exceed half the width of the
    /// periodic cell, so that each pair is seen through at most one image.
    pub fn neighbors(&self, cutoff: f64, multi_image: bool) -> Result<NeighborTable> {
        let n = self.len();
        let mut lists = vec![Vec::new(); n];
        let cell = self.periodic_cell();
        let mut shells = [0i32; 3];
        if let Some(cell) = cell {
            let w = cell.widths();
            for i in 0..3 {
                if cell.pbc[i] {
                    if !multi_image && cutoff > 0.5 * w[i] {
                        return Err(Error::CutoffTooLarge { cutoff, half_width: 0.5 * w[i] });
                    }
                    shells[i] = (cutoff / w[i] + 0.5).ceil() as i32;
                }
            }
        }
        for (a, list) in lists.iter_mut().enumerate() {
            for b in 0..n {
                let (d0, base) = self.reduce(self.positions[b] - self.positions[a]);
                for i in -shells[0]..=shells[0] {
                    for j in -shells[1]..=shells[1] {
                        for k in -shells[2]..=shells[2] {
                            let t = [i, j, k];
                            let v = match cell {
                                Some(c) => d0 + c.translation(t),
                                None => d0,
                            };
                            let r = v.norm();
                            if r > cutoff || (a == b && r < 1e-12) {
                                continue;
                            }
                            list.push(Neighbor {
                                index: b,
                                image: [base[0] + i, base[1] + j, base[2] + k],
                                vector: v,
                                distance: r,
                            });
                        }
                    }
                }
            }
            list.sort_by_key(|x| (x.index, x.image));
        }
        Ok(NeighborTable { cutoff, lists })
    }

    /// Returns a displaced copy; periodic cells are kept as they are.
    pub fn displaced(&self, u: &DisplacementField) -> Result<Self> {
        if u.0.len() != self.len() {
            return Err(Error::Invalid("displacement length mismatch".into()));
        }
        let positions = self.positions.iter().zip(&u.0).map(|(y, d)| y + d).collect();
        Ok(Self { positions, ..self.clone() })
    }

    /// Copy with one coordinate shifted, without validation (for finite differences).
    pub fn nudged(&self, site: SiteId, axis: usize, h: f64) -> Self {
        let mut c = self.clone();
        c.positions[site][axis] += h;
        c
    }

    /// Repeats a periodic configuration `reps` times along each lattice vector.
    pub fn supercell(&self, reps: [usize; 3]) -> Result<Self> {
        let cell =
            self.cell.as_ref().ok_or_else(|| Error::Geometry("supercell of a configuration without a cell".into()))?;
        let mut species = Vec::new();
        let mut positions = Vec::new();
        for i in 0..reps[0] {
            for j in 0..reps[1] {
                for k in 0..reps[2] {
                    let t = cell.translation([i as i32, j as i32, k as i32]);
                    for (s, y) in self.species.iter().zip(&self.positions) {
                        species.push(s.clone());
                        positions.push(y + t);
                    }
                }
            }
        }
        let vectors = [0, 1, 2].map(|i| cell.vector(i) * reps[i] as f64);
        Self::new(species, positions, Some(Cell::new(vectors, cell.pbc)), self.m_min)
    }

    /// Geometric centre of the sites.
    pub fn centroid(&self) -> Vec3 {
        self.positions.iter().sum::<Vec3>() / self.len() as f64
    }
}

/// Displacement field u: Λ → R³ relative to a reference configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField(pub Vec<Vec3>);

impl DisplacementField {
    pub fn zeros(n: usize) -> Self {
        Self(vec![Vec3::zeros(); n])
    }

    /// Weighted finite-difference seminorm with weights e^{-2Υ|ρ|} over all ordered
    /// pairs of the reference configuration (minimum image for periodic cells).
    pub fn seminorm(&self, reference: &Configuration, upsilon: f64) -> Result<f64> {
        if !(upsilon > 0.0) {
            return Err(Error::Invalid("Υ must be positive".into()));
        }
        if self.0.len() != reference.len() {
            return Err(Error::Invalid("displacement length mismatch".into()));
        }
        let n = reference.len();
        let mut sum = 0.0;
        for l in 0..n {
            for k in 0..n {
                if k == l {
                    continue;
                }
                let rho = reference.distance(l, k);
                sum += (-2.0 * upsilon * rho).exp() * (self.0[k] - self.0[l]).norm_squared();
            }
        }
        Ok(sum.sqrt())
    }
}

/// Ready-made configurations.
pub mod build {
    use super::*;

    /// Linear chain along x with spacing `a`, species cycling through `pattern`.
    /// A periodic chain gets a cell `n a` long in x and 50 Å wide laterally.
    pub fn chain(n: usize, a: f64, pattern: &[&str], periodic: bool, m_min: f64) -> Result<Configuration> {
        let species = (0..n).map(|i| pattern[i % pattern.len()].to_string()).collect();
        let positions = (0..n).map(|i| Vec3::new(i as f64 * a, 0.0, 0.0)).collect();
        let cell = periodic.then(|| {
            Cell::new(
                [Vec3::new(n as f64 * a, 0.0, 0.0), Vec3::new(0.0, 50.0, 0.0), Vec3::new(0.0, 0.0, 50.0)],
                [true, false, false],
            )
        });
        Configuration::new(species, positions, cell, m_min)
    }

    /// Two-atom primitive cell of the diamond lattice with cubic constant `a`.
    pub fn diamond_primitive(species: &str, a: f64) -> Result<Configuration> {
        let h = 0.5 * a;
        let cell = Cell::new([Vec3::new(0.0, h, h), Vec3::new(h, 0.0, h), Vec3::new(h, h, 0.0)], [true; 3]);
        Configuration::new(
            vec![species.to_string(); 2],
            vec![Vec3::zeros(), Vec3::repeat(0.25 * a)],
            Some(cell),
            0.5 * a * 3f64.sqrt() / 4.0,
        )
    }

    /// Conventional eight-atom cubic diamond cell repeated `reps` times.
    pub fn diamond_cubic(species: &str, a: f64, reps: [usize; 3]) -> Result<Configuration> {
        let fcc = [[0.0, 0.0, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]];
        let mut positions = Vec::new();
        for f in fcc {
            let p = Vec3::from(f) * a;
            positions.push(p);
            positions.push(p + Vec3::repeat(0.25 * a));
        }
        let unit = Configuration::new(
            vec![species.to_string(); 8],
            positions,
            Some(Cell::new([Vec3::new(a, 0.0, 0.0), Vec3::new(0.0, a, 0.0), Vec3::new(0.0, 0.0, a)], [true; 3])),
            0.5 * a * 3f64.sqrt() / 4.0,
        )?;
        unit.supercell(reps)
    }

    /// Simple cubic block of n₀×n₁×n₂ sites with spacing `a`; species alternate
    /// by the parity of i+j+k (rock-salt ordering).
    pub fn rock_salt(n: [usize; 3], a: f64, pattern: [&str; 2], periodic: bool, m_min: f64) -> Result<Configuration> {
        let mut species = Vec::new();
        let mut positions = Vec::new();
        for i in 0..n[0] {
            for j in 0..n[1] {
                for k in 0..n[2] {
                    species.push(pattern[(i + j + k) % 2].to_string());
                    positions.push(Vec3::new(i as f64, j as f64, k as f64) * a);
                }
            }
        }
        let cell = periodic.then(|| {
            Cell::new(
                [
                    Vec3::new(n[0] as f64 * a, 0.0, 0.0),
                    Vec3::new(0.0, n[1] as f64 * a, 0.0),
                    Vec3::new(0.0, 0.0, n[2] as f64 * a),
                ],
                [true; 3],
            )
        });
        Configuration::new(species, positions, cell, m_min)
    }

    /// Drops the cell, leaving a finite cluster with the same positions.
    pub fn open(config: &Configuration) -> Configuration {
        Configuration { cell: None, ..config.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn neighbor_table_is_symmetric_with_opposite_images() {
        let c = build::diamond_cubic("Si", 5.43, [1, 1, 1]).unwrap();
        let t = c.neighbors(6.6, true).unwrap();
        for (a, list) in t.lists.iter().enumerate() {
            for nb in list {
                let back = [-nb.image[0], -nb.image[1], -nb.image[2]];
                let found = t.of(nb.index).iter().find(|x| x.index == a && x.image == back).unwrap();
                assert!((found.vector + nb.vector).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn diamond_coordination_shells() {
        let c = build::diamond_primitive("Si", 5.43).unwrap();
        let t = c.neighbors(2.5, true).unwrap();
        assert!(t.lists.iter().all(|l| l.len() == 4));
        let nn = 5.43 * 3f64.sqrt() / 4.0;
        assert!(t.lists[0].iter().all(|x| (x.distance - nn).abs() < 1e-12));
        let t = c.neighbors(4.0, true).unwrap();
        assert!(t.lists.iter().all(|l| l.len() == 16));
    }

    #[test]
    fn min_image_rejects_long_cutoff() {
        let c = build::diamond_cubic("Si", 5.43, [1, 1, 1]).unwrap();
        assert!(matches!(c.neighbors(3.0, false), Err(Error::CutoffTooLarge { .. })));
    }

    #[test]
    fn degenerate_sites_rejected() {
        let r =
            Configuration::new(vec!["A".into(), "A".into()], vec![Vec3::zeros(), Vec3::new(0.1, 0.0, 0.0)], None, 0.5);
        assert!(matches!(r, Err(Error::NonDegeneracy { .. })));
    }

    #[test]
    fn three_site_seminorm_closed_form() {
        let c = build::chain(3, 1.0, &["A"], false, 0.5).unwrap();
        let delta = 0.3;
        let mut u = DisplacementField::zeros(3);
        u.0[1].x = delta;
        let ups = 0.7;
        let expected = 2.0 * delta * (-ups * 1.0f64).exp();
        assert!((u.seminorm(&c, ups).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn periodic_image_sets_the_minimum_distance() {
        let cell = Cell::new([Vec3::new(3.0, 0.0, 0.0), Vec3::new(0.0, 9.0, 0.0), Vec3::new(0.0, 0.0, 9.0)], [true; 3]);
        let c = Configuration::new(vec!["A".into(); 2], vec![Vec3::zeros(), Vec3::new(2.2, 0.0, 0.0)], Some(cell), 0.5)
            .unwrap();
        let mut brute = f64::INFINITY;
        for i in -1..=1 {
            for j in -1..=1 {
                for k in -1..=1 {
                    let t = Vec3::new(3.0 * i as f64, 9.0 * j as f64, 9.0 * k as f64);
                    brute = brute.min((Vec3::new(2.2, 0.0, 0.0) + t).norm());
                }
            }
        }
        let r = c.admissibility();
        assert!((r.min_distance - brute).abs() < 1e-12 && r.pass && r.pair == Some((0, 1)));
    }

    #[test]
    fn geometry_file_round_trip() {
        let c = build::chain(4, 1.0, &["A", "B"], true, 0.5).unwrap();
        let back = Configuration::from_toml(&c.to_toml()).unwrap();
        assert_eq!(c, back);
        let bad = "species = [\"A\"]\npositions = [[0.0, 0.0, 0.0]]\nm_min = 0.5\ncolour = 1\n";
        assert!(matches!(Configuration::from_toml(bad), Err(Error::Params { line: 4, .. })));
    }

    #[test]
    fn reciprocal_is_dual() {
        let c = build::diamond_primitive("Si", 5.43).unwrap();
        let cell = c.cell.unwrap();
        let b = cell.reciprocal();
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 2.0 * std::f64::consts::PI } else { 0.0 };
                assert!((cell.vector(i).dot(&b[j]) - e).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn seminorm_weights_are_equivalent(
            d in proptest::collection::vec(-0.2f64..0.2, 15),
            u1 in 0.2f64..2.0,
            u2 in 0.2f64..2.0,
        ) {
            let c = build::chain(5, 1.1, &["A"], false, 0.5).unwrap();
            let u = DisplacementField((0..5).map(|i| Vec3::new(d[3 * i], d[3 * i + 1], d[3 * i + 2])).collect());
            let n1 = u.seminorm(&c, u1).unwrap();
            let n2 = u.seminorm(&c, u2).unwrap();
            let rmax = 4.0 * 1.1;
            let rmin = 1.1;
            let (lo, hi) = [((u1 - u2) * rmin).exp(), ((u1 - u2) * rmax).exp()]
                .iter()
                .fold((f64::INFINITY, 0.0f64), |(lo, hi), x| (lo.min(*x), hi.max(*x)));
            if n1 > 1e-12 {
                let ratio = n2 / n1;
                prop_assert!(ratio >= lo * (1.0 - 1e-9) && ratio <= hi * (1.0 + 1e-9));
            }
        }

        #[test]
        fn translation_leaves_distances(t in proptest::array::uniform3(-5.0f64..5.0)) {
            let c = build::chain(6, 1.2, &["A", "B"], true, 0.5).unwrap();
            let shift = DisplacementField(vec![Vec3::from(t); 6]);
            let d = c.displaced(&shift).unwrap();
            for a in 0..6 {
                for b in 0..6 {
                    prop_assert!((c.distance(a, b) - d.distance(a, b)).abs() < 1e-10);
                }
            }
        }
    }
}
