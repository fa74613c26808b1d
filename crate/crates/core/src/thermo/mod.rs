//! The grand potential g(z), its analytic continuation and divided differences.

pub mod contour;
pub mod quadrature;

use crate::error::{Error, Result};
use crate::Complex64;
use std::f64::consts::PI;

pub use contour::{Contour, ContourKind, ContourOptions, Loop, LoopRole};

/// Electronic temperature as inverse temperature β (1/eV), or zero temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Temperature {
    Finite(f64),
    Zero,
}

impl Temperature {
    pub fn beta(&self) -> Option<f64> {
        match self {
            Temperature::Finite(b) => Some(*b),
            Temperature::Zero => None,
        }
    }
}

impl std::fmt::Display for Temperature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Temperature::Finite(b) => write!(f, "{b}"),
            Temperature::Zero => write!(f, "inf"),
        }
    }
}

/// g^β(z) = (2/β) log(1 - f_β(z - μ)), or its β → ∞ limit 2 (z - μ)₋.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrandPotential {
    pub temperature: Temperature,
    pub mu: f64,
}

fn ln1p_complex(w: Complex64) -> Complex64 {
    if w.norm() < 1e-4 {
        // series keeps full relative precision for tiny w
        w - w * w / 2.0 + w * w * w / 3.0 - w * w * w * w / 4.0
    } else {
        (w + 1.0).ln()
    }
}

impl GrandPotential {
    pub fn new(temperature: Temperature, mu: f64) -> Result<Self> {
        if let Temperature::Finite(b) = temperature {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::Invalid(format!("β must be positive and finite, got {b}")));
            }
        }
        if !mu.is_finite() {
            return Err(Error::Invalid("μ must be finite".into()));
        }
        Ok(Self { temperature, mu })
    }

    pub fn finite(beta: f64, mu: f64) -> Self {
        Self::new(Temperature::Finite(beta), mu).expect("valid temperature")
    }

    pub fn zero(mu: f64) -> Self {
        Self { temperature: Temperature::Zero, mu }
    }

    pub fn beta(&self) -> Option<f64> {
        self.temperature.beta()
    }

    /// g on the real axis.
    pub fn value(&self, e: f64) -> f64 {
        let x = e - self.mu;
        match self.temperature {
            Temperature::Zero => 2.0 * x.min(0.0),
            Temperature::Finite(b) => {
                if x >= 0.0 {
                    -2.0 / b * (-b * x).exp().ln_1p()
                } else {
                    2.0 * x - 2.0 / b * (b * x).exp().ln_1p()
                }
            }
        }
    }

    /// Fermi–Dirac occupation f_β(e - μ) of a spin orbital.
    pub fn fermi(&self, e: f64) -> f64 {
        let x = e - self.mu;
        match self.temperature {
            Temperature::Zero => {
                if x < 0.0 {
                    1.0
                } else if x > 0.0 {
                    0.0
                } else {
                    0.5
                }
            }
            Temperature::Finite(b) => {
                if x >= 0.0 {
                    let t = (-b * x).exp();
                    t / (1.0 + t)
                } else {
                    1.0 / (1.0 + (b * x).exp())
                }
            }
        }
    }

    /// Derivatives g^{(k)}(e) for k = 1..=4 (index k - 1).
    pub fn derivatives(&self, e: f64) -> [f64; 4] {
        match self.temperature {
            Temperature::Zero => [2.0 * self.fermi(e), 0.0, 0.0, 0.0],
            Temperature::Finite(b) => {
                let f = self.fermi(e);
                let s = f * (1.0 - f);
                [2.0 * f, -2.0 * b * s, 2.0 * b * b * s * (1.0 - 2.0 * f), -2.0 * b.powi(3) * s * (1.0 - 6.0 * s)]
            }
        }
    }

    pub fn first(&self, e: f64) -> f64 {
        2.0 * self.fermi(e)
    }

    pub fn second(&self, e: f64) -> f64 {
        self.derivatives(e)[1]
    }

    /// Analytic continuation of g off the real axis.
    ///
    /// At finite β the continuation is single valued on C minus the rays
    /// {μ + i r : |r| ≥ π/β}; points on those rays are rejected. At zero
    /// temperature this returns 2 (z - μ), the continuation from the occupied side.
    pub fn eval(&self, z: Complex64) -> Result<Complex64> {
        let x = z - self.mu;
        match self.temperature {
            Temperature::Zero => Ok(x * 2.0),
            Temperature::Finite(b) => {
                if x.re == 0.0 && x.im.abs() >= PI / b {
                    return Err(Error::BranchCut(format!("{z}")));
                }
                if x.re >= 0.0 {
                    Ok(ln1p_complex((-x * b).exp()) * (-2.0 / b))
                } else {
                    Ok(x * 2.0 - ln1p_complex((x * b).exp()) * (2.0 / b))
                }
            }
        }
    }

    /// Distance from z to the excluded rays (infinite at zero temperature).
    pub fn singularity_distance(&self, z: Complex64) -> f64 {
        match self.temperature {
            Temperature::Zero => f64::INFINITY,
            Temperature::Finite(b) => {
                let x = z - self.mu;
                let tip = PI / b;
                let dy = (x.im.abs() - tip).max(0.0);
                (x.re * x.re + dy * dy).sqrt()
            }
        }
    }

    /// Taylor polynomial of g at μ of degree `order` (0, 1 or 2), evaluated at z.
    pub fn taylor_at_mu(&self, order: usize, z: Complex64) -> Result<Complex64> {
        let b = self.beta().ok_or_else(|| Error::Invalid("Taylor expansion at μ requires finite β".into()))?;
        let x = z - self.mu;
        let mut p = Complex64::from(-2.0 / b * 2f64.ln());
        if order >= 1 {
            p += x;
        }
        if order >= 2 {
            p -= x * x * (b / 4.0);
        }
        if order > 2 {
            return Err(Error::Invalid("Taylor order above 2".into()));
        }
        Ok(p)
    }

    /// Divided difference g[x₀, …, x_k] for k ≤ 2, stable for coincident points.
    pub fn divided_difference(&self, pts: &[f64]) -> f64 {
        let mut p = pts.to_vec();
        p.sort_by(f64::total_cmp);
        match p.len() {
            1 => self.value(p[0]),
            2 | 3 => {
                let spread = p[p.len() - 1] - p[0];
                match self.temperature {
                    Temperature::Zero => self.piecewise_linear_dd(&p),
                    Temperature::Finite(b) => {
                        if spread * b <= 0.25 {
                            self.dd_by_circle(&p, b)
                        } else if p.len() == 2 {
                            (self.value(p[1]) - self.value(p[0])) / spread
                        } else {
                            (self.divided_difference(&p[1..]) - self.divided_difference(&p[..2])) / spread
                        }
                    }
                }
            }
            _ => panic!("divided differences above second order are not used"),
        }
    }

    fn piecewise_linear_dd(&self, p: &[f64]) -> f64 {
        let slope = |a: f64, b: f64| {
            if (b - a).abs() < 1e-300 || (a < self.mu) == (b < self.mu) {
                if a < self.mu {
                    2.0
                } else {
                    0.0
                }
            } else {
                (self.value(b) - self.value(a)) / (b - a)
            }
        };
        if p.len() == 2 {
            slope(p[0], p[1])
        } else {
            let spread = p[2] - p[0];
            if spread == 0.0 || ((p[0] < self.mu) == (p[2] < self.mu)) {
                0.0
            } else {
                (slope(p[1], p[2]) - slope(p[0], p[1])) / spread
            }
        }
    }

    /// (1/2πi) ∮ g(z) / Π (z - x_i) dz on a circle of radius 0.5/β about the mean.
    fn dd_by_circle(&self, p: &[f64], beta: f64) -> f64 {
        let c = p.iter().sum::<f64>() / p.len() as f64;
        let r = 0.5 / beta;
        let n = 48;
        let mut acc = Complex64::from(0.0);
        for q in 0..n {
            let e = Complex64::from_polar(1.0, 2.0 * PI * (q as f64 + 0.5) / n as f64);
            let z = e * r + c;
            let g = self.eval(z).expect("circle stays inside the analytic strip");
            let denom: Complex64 = p.iter().map(|&x| z - x).product();
            acc += g / denom * e * r;
        }
        (acc / n as f64).re
    }
}
