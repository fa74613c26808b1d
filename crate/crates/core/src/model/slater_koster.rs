//! Two-centre Slater–Koster blocks for s, p and d orbitals.
//!
//! Orbital order: s; px, py, pz; dxy, dyz, dzx, dx²-y², d3z²-r².
//! Rows belong to the first atom, columns to the second, and the direction
//! cosines point from the first atom to the second.

use num_dual::DualNum;

/// Bond integrals for one pair of species.
#[derive(Debug, Clone, Copy)]
pub struct BondIntegrals<D> {
    pub ss_sigma: D,
    pub sp_sigma: D,
    pub pp_sigma: D,
    pub pp_pi: D,
    pub sd_sigma: D,
    pub pd_sigma: D,
    pub pd_pi: D,
    pub dd_sigma: D,
    pub dd_pi: D,
    pub dd_delta: D,
}

/// Angular momentum of each orbital slot.
pub const ORBITAL_L: [u8; 9] = [0, 1, 1, 1, 2, 2, 2, 2, 2];

/// Element ⟨α|H|β⟩ with α ≤ β in angular momentum.
fn element<D: DualNum<Primitive = f64> + Copy>(a: usize, b: usize, n: [D; 3], v: &BondIntegrals<D>) -> D {
    let [l, m, nn] = n;
    let one = D::from(1.0);
    let s3 = 3f64.sqrt();
    let c = |i: usize| n[i];
    match (a, b) {
        (0, 0) => v.ss_sigma,
        (0, 1..=3) => c(b - 1) * v.sp_sigma,
        (0, 4) => l * m * v.sd_sigma * s3,
        (0, 5) => m * nn * v.sd_sigma * s3,
        (0, 6) => nn * l * v.sd_sigma * s3,
        (0, 7) => (l * l - m * m) * v.sd_sigma * (0.5 * s3),
        (0, 8) => (nn * nn - (l * l + m * m) * 0.5) * v.sd_sigma,
        (1..=3, 1..=3) => {
            let (i, j) = (a - 1, b - 1);
            let delta = if i == j { one } else { D::from(0.0) };
            c(i) * c(j) * (v.pp_sigma - v.pp_pi) + delta * v.pp_pi
        }
        (1..=3, 4..=6) => {
            // d orbital spanned by axes (p, q)
            let (p, q) = [(0, 1), (1, 2), (2, 0)][b - 4];
            let i = a - 1;
            let dip = if i == p { one } else { D::from(0.0) };
            let diq = if i == q { one } else { D::from(0.0) };
            c(i) * c(p) * c(q) * v.pd_sigma * s3 + (dip * c(q) + diq * c(p) - c(i) * c(p) * c(q) * 2.0) * v.pd_pi
        }
        (1..=3, 7) => {
            let i = a - 1;
            let lm = l * l - m * m;
            let pi = match i {
                0 => l * (one - lm),
                1 => -(m * (one + lm)),
                _ => -(nn * lm),
            };
            c(i) * lm * v.pd_sigma * (0.5 * s3) + pi * v.pd_pi
        }
        (1..=3, 8) => {
            let i = a - 1;
            let w = nn * nn - (l * l + m * m) * 0.5;
            let pi = match i {
                0 | 1 => -(c(i) * nn * nn * s3),
                _ => nn * (l * l + m * m) * s3,
            };
            c(i) * w * v.pd_sigma + pi * v.pd_pi
        }
        (4..=8, 4..=8) => dd(a, b, n, v),
        _ => unreachable!("orbital pair out of range"),
    }
}

fn dd<D: DualNum<Primitive = f64> + Copy>(a: usize, b: usize, n: [D; 3], v: &BondIntegrals<D>) -> D {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    let [l, m, nn] = n;
    let one = D::from(1.0);
    let s3 = 3f64.sqrt();
    let (sg, pi, de) = (v.dd_sigma, v.dd_pi, v.dd_delta);
    match (a, b) {
        // t2g diagonal by cyclic permutation of (l, m, n)
        (4, 4) | (5, 5) | (6, 6) => {
            let (x, y, z) = match a {
                4 => (l, m, nn),
                5 => (m, nn, l),
                _ => (nn, l, m),
            };
            x * x * y * y * sg * 3.0 + (x * x + y * y - x * x * y * y * 4.0) * pi + (z * z + x * x * y * y) * de
        }
        (4, 5) => l * m * m * nn * sg * 3.0 + l * nn * (one - m * m * 4.0) * pi + l * nn * (m * m - one) * de,
        (5, 6) => m * nn * nn * l * sg * 3.0 + m * l * (one - nn * nn * 4.0) * pi + m * l * (nn * nn - one) * de,
        (4, 6) => nn * l * l * m * sg * 3.0 + nn * m * (one - l * l * 4.0) * pi + nn * m * (l * l - one) * de,
        (4, 7) => {
            let lm = l * l - m * m;
            l * m * lm * sg * 1.5 - l * m * lm * pi * 2.0 + l * m * lm * de * 0.5
        }
        (5, 7) => {
            let lm = l * l - m * m;
            m * nn * lm * sg * 1.5 - m * nn * (one + lm * 2.0) * pi + m * nn * (one + lm * 0.5) * de
        }
        (6, 7) => {
            let lm = l * l - m * m;
            nn * l * lm * sg * 1.5 + nn * l * (one - lm * 2.0) * pi - nn * l * (one - lm * 0.5) * de
        }
        (4, 8) => {
            let w = nn * nn - (l * l + m * m) * 0.5;
            l * m * w * sg * s3 - l * m * nn * nn * pi * (2.0 * s3) + l * m * (one + nn * nn) * de * (0.5 * s3)
        }
        (5, 8) | (6, 8) => {
            let x = if a == 5 { m } else { l };
            let w = nn * nn - (l * l + m * m) * 0.5;
            let lm2 = l * l + m * m;
            x * nn * w * sg * s3 + x * nn * (lm2 - nn * nn) * pi * s3 - x * nn * lm2 * de * (0.5 * s3)
        }
        (7, 7) => {
            let lm = l * l - m * m;
            lm * lm * sg * 0.75 + (l * l + m * m - lm * lm) * pi + (nn * nn + lm * lm * 0.25) * de
        }
        (7, 8) => {
            let lm = l * l - m * m;
            let w = nn * nn - (l * l + m * m) * 0.5;
            lm * w * sg * (0.5 * s3) - nn * nn * lm * pi * s3 + (one + nn * nn) * lm * de * (0.25 * s3)
        }
        (8, 8) => {
            let w = nn * nn - (l * l + m * m) * 0.5;
            let lm2 = l * l + m * m;
            w * w * sg + nn * nn * lm2 * pi * 3.0 + lm2 * lm2 * de * 0.75
        }
        _ => unreachable!(),
    }
}

/// Row-major `norb × norb` block for unit direction `n`.
pub fn block<D: DualNum<Primitive = f64> + Copy>(norb: usize, n: [D; 3], v: &BondIntegrals<D>) -> Vec<D> {
    let mut out = Vec::with_capacity(norb * norb);
    for a in 0..norb {
        for b in 0..norb {
            let e = if ORBITAL_L[a] <= ORBITAL_L[b] {
                element(a, b, n, v)
            } else {
                let parity = if (ORBITAL_L[a] + ORBITAL_L[b]).is_multiple_of(2) { 1.0 } else { -1.0 };
                element(b, a, n, v) * parity
            };
            out.push(e);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn integrals(x: [f64; 10]) -> BondIntegrals<f64> {
        BondIntegrals {
            ss_sigma: x[0],
            sp_sigma: x[1],
            pp_sigma: x[2],
            pp_pi: x[3],
            sd_sigma: x[4],
            pd_sigma: x[5],
            pd_pi: x[6],
            dd_sigma: x[7],
            dd_pi: x[8],
            dd_delta: x[9],
        }
    }

    fn unit(v: [f64; 3]) -> [f64; 3] {
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        v.map(|x| x / r)
    }

    #[test]
    fn bond_along_z_is_diagonal_in_m() {
        // along z only σ couples s, pz, d3z²-r²; π couples px/py with dzx/dyz; δ couples dxy/dx²-y²
        let v = integrals([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]);
        let b = block(9, [0.0, 0.0, 1.0], &v);
        let e = |i: usize, j: usize| b[9 * i + j];
        assert_eq!(e(0, 0), 1.0);
        assert_eq!(e(0, 3), 2.0);
        assert_eq!(e(3, 0), -2.0);
        assert_eq!(e(3, 3), 3.0);
        assert_eq!(e(1, 1), 4.0);
        assert_eq!(e(0, 8), 5.0);
        assert_eq!(e(3, 8), 6.0);
        assert_eq!(e(1, 6), 7.0);
        assert_eq!(e(2, 5), 7.0);
        assert_eq!(e(8, 8), 8.0);
        assert_eq!(e(5, 5), 9.0);
        assert_eq!(e(6, 6), 9.0);
        assert_eq!(e(4, 4), 10.0);
        assert_eq!(e(7, 7), 10.0);
        assert_eq!(e(0, 1), 0.0);
        assert_eq!(e(4, 7), 0.0);
    }

    proptest! {
        #[test]
        fn reversing_the_bond_transposes_the_block(
            x in proptest::array::uniform10(-3.0f64..3.0),
            v in proptest::array::uniform3(-1.0f64..1.0),
        ) {
            prop_assume!(v.iter().map(|a| a * a).sum::<f64>() > 1e-2);
            let ints = integrals(x);
            let n = unit(v);
            let fwd = block(9, n, &ints);
            let bwd = block(9, n.map(|c| -c), &ints);
            for i in 0..9 {
                for j in 0..9 {
                    prop_assert!((fwd[9 * i + j] - bwd[9 * j + i]).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn block_invariants_under_rotation(
            x in proptest::array::uniform10(-3.0f64..3.0),
            v in proptest::array::uniform3(-1.0f64..1.0),
        ) {
            // the spectrum of the s-p-d block only depends on the bond length, so its
            // Frobenius norm is direction independent
            prop_assume!(v.iter().map(|a| a * a).sum::<f64>() > 1e-2);
            let ints = integrals(x);
            let fz: f64 = block(9, [0.0, 0.0, 1.0], &ints).iter().map(|e| e * e).sum();
            let fn_: f64 = block(9, unit(v), &ints).iter().map(|e| e * e).sum();
            prop_assert!((fz - fn_).abs() < 1e-9 * fz.max(1.0));
        }
    }
}
