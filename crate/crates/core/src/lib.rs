//! Site energies, their derivatives and locality of interaction for linear
//! tight-binding models at finite and zero electronic temperature.

pub mod bands;
pub mod defects;
pub mod error;
pub mod geometry;
pub mod locality;
pub mod model;
pub mod sites;
pub mod spectral;
pub mod thermo;

pub use error::{Error, Result};
pub use nalgebra;
pub use nalgebra::Complex;

pub type Complex64 = Complex<f64>;
