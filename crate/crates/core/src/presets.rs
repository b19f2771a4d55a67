//! Initial-data presets on the surfaces.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Perturbation {
    None,
    Constant,
    Bump,
    Mixed,
    Random,
}

impl Perturbation {
    pub fn key(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Constant => "constant",
            Self::Bump => "bump",
            Self::Mixed => "mixed",
            Self::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "none" => Self::None,
            "constant" => Self::Constant,
            "bump" => Self::Bump,
            "mixed" => Self::Mixed,
            "random" => Self::Random,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct InitialData {
    pub kind: Perturbation,
    pub amplitude: f64,
    pub mode: usize,
    pub seed: u64,
}

impl Default for InitialData {
    fn default() -> Self {
        Self {
            kind: Perturbation::Mixed,
            amplitude: 0.05,
            mode: 1,
            seed: 0,
        }
    }
}

/// `sin(πρ/L)^{l/(β+1)}`, regular at every pole of the surface.
fn pole_profile<T: Real>(domain: &Domain<T>, l: usize, rho: T) -> T {
    let s = T::PI() * rho / domain.surface.length;
    let s = if domain.surface.is_closed() {
        s
    } else {
        T::lit(0.5) * s
    };
    s.sin().max(T::zero()).powf(domain.surface.mode_exponent(l))
}

/// Builds the field `u₀` for the preset.
pub fn initial_field<T: Real>(domain: &Domain<T>, data: &InitialData) -> Result<SpectralField<T>> {
    let amp = T::lit(data.amplitude);
    let bump = |rho: T| (T::PI() * rho / domain.surface.length).cos();
    match data.kind {
        Perturbation::None => Ok(domain.zeros()),
        Perturbation::Constant => Ok(domain.constant(amp)),
        Perturbation::Bump => Ok(domain.analyze_fn(|r, _| amp * bump(r))),
        Perturbation::Mixed => {
            let m = data.mode;
            if m == 0 || m > domain.l_max {
                return Err(Error::Precondition(format!(
                    "mode {m} must lie in 1..={}",
                    domain.l_max
                )));
            }
            let mf = T::from_usize_lossy(m);
            Ok(domain
                .analyze_fn(|r, th| amp * (bump(r) + pole_profile(domain, m, r) * (mf * th).cos())))
        }
        Perturbation::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(data.seed);
            let top = domain.l_max.min(4);
            let mut terms = Vec::new();
            let mut total = 0.0f64;
            for l in 0..=top {
                let c: f64 = rng.gen_range(-1.0..1.0);
                let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let w = 1.0 / (1.0 + l as f64).powi(2);
                total += c.abs() * w;
                terms.push((l, c * w, phase));
            }
            let norm = if total > 0.0 { 1.0 / total } else { 0.0 };
            Ok(domain.analyze_fn(|r, th| {
                let mut v = T::zero();
                for &(l, c, phase) in &terms {
                    let radial = if l == 0 {
                        bump(r)
                    } else {
                        pole_profile(domain, l, r)
                    };
                    let lf = T::from_usize_lossy(l);
                    v += T::lit(c * norm) * radial * (lf * th - T::lit(phase)).cos();
                }
                amp * v
            }))
        }
    }
}
