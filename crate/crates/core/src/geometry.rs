//! Background surfaces of revolution `dρ² + f(ρ)² dθ²` with cone points.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quad::integrate_gl;
use crate::scalar::Real;

/// Default width of the flat-cap blend region.
pub const DEFAULT_BLEND_WIDTH: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SurfaceKind {
    /// `f = (β+1) sin ρ` on `[0, π]`, constant curvature one.
    FootballConstantCurvature,
    /// Exact cones near both poles joined by a smooth blend.
    FootballFlatCap,
    /// Flat cone `f = (β+1) ρ` on `[0, 1]` with an outer boundary circle.
    ConeDisk,
}

impl SurfaceKind {
    pub fn key(&self) -> &'static str {
        match self {
            SurfaceKind::FootballConstantCurvature => "football-cc",
            SurfaceKind::FootballFlatCap => "football-flatcap",
            SurfaceKind::ConeDisk => "conedisk",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "football-cc" => Some(SurfaceKind::FootballConstantCurvature),
            "football-flatcap" => Some(SurfaceKind::FootballFlatCap),
            "conedisk" => Some(SurfaceKind::ConeDisk),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ConeSurface<T> {
    pub kind: SurfaceKind,
    pub beta: T,
    pub length: T,
    pub blend_width: T,
}

impl<T: Real> ConeSurface<T> {
    pub fn football_cc(beta: T) -> Result<Self> {
        Self::new(SurfaceKind::FootballConstantCurvature, beta, T::lit(1.0))
    }

    pub fn football_flatcap(beta: T, blend_width: T) -> Result<Self> {
        Self::new(SurfaceKind::FootballFlatCap, beta, blend_width)
    }

    pub fn cone_disk(beta: T) -> Result<Self> {
        Self::new(SurfaceKind::ConeDisk, beta, T::lit(1.0))
    }

    pub fn new(kind: SurfaceKind, beta: T, blend_width: T) -> Result<Self> {
        if !(beta > -T::one()) || !beta.is_finite() {
            return Err(Error::Surface(format!("beta = {beta} must exceed -1")));
        }
        let length = match kind {
            SurfaceKind::ConeDisk => T::one(),
            _ => T::PI(),
        };
        if kind == SurfaceKind::FootballFlatCap
            && !(blend_width > T::zero() && blend_width < length - T::lit(0.2))
        {
            return Err(Error::Surface(format!(
                "blend width {blend_width} must lie in (0, L - 0.2)"
            )));
        }
        Ok(Self {
            kind,
            beta,
            length,
            blend_width,
        })
    }

    pub fn is_closed(&self) -> bool {
        self.kind != SurfaceKind::ConeDisk
    }

    pub fn pole_count(&self) -> usize {
        if self.is_closed() {
            2
        } else {
            1
        }
    }

    /// `c_l = l/(β+1)`, the exponent of the regular harmonic of mode `l`.
    pub fn mode_exponent(&self, l: usize) -> T {
        T::from_usize_lossy(l) / (self.beta + T::one())
    }

    /// Radius below which `f` is exactly conical about the north pole.
    pub fn cone_radius(&self) -> T {
        match self.kind {
            SurfaceKind::ConeDisk => self.length,
            SurfaceKind::FootballFlatCap => T::lit(0.5) * (self.length - self.blend_width),
            SurfaceKind::FootballConstantCurvature => T::zero(),
        }
    }

    fn blend(&self, rho: T) -> (T, T, T) {
        let w = self.blend_width;
        let s = (rho - (T::lit(0.5) * self.length - T::lit(0.5) * w)) / w;
        if s <= T::zero() {
            return (T::zero(), T::zero(), T::zero());
        }
        if s >= T::one() {
            return (T::one(), T::zero(), T::zero());
        }
        let bump = |s: T| -> (T, T, T) {
            let p = (-T::one() / s).exp();
            let s2 = s * s;
            (
                p,
                p / s2,
                p * (T::one() / (s2 * s2) - T::lit(2.0) / (s2 * s)),
            )
        };
        let (p, p1, p2) = bump(s);
        let (q, q1m, q2) = bump(T::one() - s);
        let q1 = -q1m;
        let den = p + q;
        let num = p1 * q - p * q1;
        let d1 = num / (den * den);
        let num1 = p2 * q - p * q2;
        let dden = T::lit(2.0) * den * (p1 + q1);
        let d2 = (num1 * den * den - num * dden) / (den * den * den * den);
        (p / den, d1 / w, d2 / (w * w))
    }

    /// Warp profile and its first two derivatives.
    pub fn warp_derivatives(&self, rho: T) -> (T, T, T) {
        let b1 = self.beta + T::one();
        match self.kind {
            SurfaceKind::FootballConstantCurvature => {
                (b1 * rho.sin(), b1 * rho.cos(), -b1 * rho.sin())
            }
            SurfaceKind::ConeDisk => (b1 * rho, b1, T::zero()),
            SurfaceKind::FootballFlatCap => {
                let (b, db, d2b) = self.blend(rho);
                let span = self.length - T::lit(2.0) * rho;
                (
                    b1 * (rho + b * span),
                    b1 * (T::one() + db * span - T::lit(2.0) * b),
                    b1 * (d2b * span - T::lit(4.0) * db),
                )
            }
        }
    }

    pub fn warp(&self, rho: T) -> T {
        self.warp_derivatives(rho).0
    }

    /// Background curvature `K̃ = −f″/f`.
    pub fn background_curvature(&self, rho: T) -> T {
        match self.kind {
            SurfaceKind::FootballConstantCurvature => T::one(),
            SurfaceKind::ConeDisk => T::zero(),
            SurfaceKind::FootballFlatCap => {
                let (f, _, f2) = self.warp_derivatives(rho);
                if f2 == T::zero() {
                    T::zero()
                } else {
                    -f2 / f
                }
            }
        }
    }

    /// Volume density `f(ρ)`: `dṼ = f dρ dθ`.
    pub fn volume_weight(&self, rho: T) -> Result<T> {
        if !(rho >= T::zero() && rho <= self.length) {
            return Err(Error::OutOfDomain {
                rho: rho.to_f64_lossy(),
                length: self.length.to_f64_lossy(),
            });
        }
        Ok(self.warp(rho))
    }

    /// Euler number with cone orders, `χ(S) + Σβᵢ`; `1 + β` for the disk.
    pub fn euler_characteristic(&self) -> T {
        match self.kind {
            SurfaceKind::ConeDisk => T::one() + self.beta,
            _ => T::lit(2.0) + T::lit(2.0) * self.beta,
        }
    }

    /// `∫_a^b dρ / f` for `0 < a ≤ b < L`.
    pub fn inverse_warp_integral(&self, a: T, b: T) -> T {
        let b1 = self.beta + T::one();
        match self.kind {
            SurfaceKind::ConeDisk => (b / a).ln() / b1,
            SurfaceKind::FootballConstantCurvature => {
                let half = T::lit(0.5);
                ((b * half).tan() / (a * half).tan()).ln() / b1
            }
            SurfaceKind::FootballFlatCap => {
                let lo = self.cone_radius();
                let hi = self.length - lo;
                let mut acc = T::zero();
                if a < lo {
                    acc += (b.min(lo) / a).ln() / b1;
                }
                let (m0, m1) = (a.max(lo), b.min(hi));
                if m1 > m0 {
                    let pieces = ((m1 - m0) / T::lit(0.02))
                        .ceil()
                        .to_usize()
                        .unwrap_or(1)
                        .max(1);
                    acc += integrate_gl(|r| T::one() / self.warp(r), m0, m1, pieces, 8);
                }
                if b > hi {
                    let a2 = a.max(hi);
                    acc += ((self.length - a2) / (self.length - b)).ln() / b1;
                }
                acc
            }
        }
    }
}

/// `ρ = r^{β+1}/(β+1)`: distance to the cone point from the conformal radius.
pub fn conformal_radius_map<T: Real>(beta: T, r: T) -> T {
    let b1 = beta + T::one();
    r.powf(b1) / b1
}

/// Inverse of [`conformal_radius_map`].
pub fn conformal_radius_inverse<T: Real>(beta: T, rho: T) -> T {
    let b1 = beta + T::one();
    (b1 * rho).powf(T::one() / b1)
}
