//! Numerical toolkit for the normalized Ricci flow on surfaces with conical
//! singularities, `∂ₜu = e^{−2u}Δ̃u + r/2 − e^{−2u}K̃`, on surfaces of revolution
//! whose poles are cone points of order β.

pub mod cli;
pub mod config;
pub mod domain;
pub mod elliptic;
pub mod error;
pub mod expansion;
pub mod field;
pub mod flow;
pub mod geometry;
pub mod grid;
pub mod linear;
pub mod presets;
pub mod quad;
pub mod scalar;

pub use error::{Error, Result};
pub use field::Trig;
pub use scalar::Real;

pub type ConeSurface = geometry::ConeSurface<f64>;
pub type RadialGrid = grid::RadialGrid<f64>;
pub type Domain = domain::Domain<f64>;
pub type SpectralField = field::SpectralField<f64>;
pub type Samples = field::Samples<f64>;
