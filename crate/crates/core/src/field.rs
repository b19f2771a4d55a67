//! Fields stored as angular Fourier modes over radial nodes, and their point samples.

use serde::Serialize;

use crate::scalar::Real;

/// Shortest round-trip text for a number, in exponent form outside `[1e-4, 1e15)`.
pub fn format_number(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Trig {
    #[serde(rename = "cos")]
    Cos,
    #[serde(rename = "sin")]
    Sin,
}

impl Trig {
    pub fn name(&self) -> &'static str {
        match self {
            Trig::Cos => "cos",
            Trig::Sin => "sin",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cos" => Some(Trig::Cos),
            "sin" => Some(Trig::Sin),
            _ => None,
        }
    }

    pub fn eval<T: Real>(&self, l: usize, theta: T) -> T {
        let a = T::from_usize_lossy(l) * theta;
        match self {
            Trig::Cos => a.cos(),
            Trig::Sin => a.sin(),
        }
    }
}

/// Slot index of a mode: 0 for l = 0, `2l − 1` for cos, `2l` for sin.
pub fn slot(l: usize, trig: Trig) -> usize {
    match (l, trig) {
        (0, _) => 0,
        (l, Trig::Cos) => 2 * l - 1,
        (l, Trig::Sin) => 2 * l,
    }
}

/// Inverse of [`slot`].
pub fn slot_mode(s: usize) -> (usize, Trig) {
    if s == 0 {
        (0, Trig::Cos)
    } else if s % 2 == 1 {
        (s.div_ceil(2), Trig::Cos)
    } else {
        (s / 2, Trig::Sin)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField<T> {
    pub n_rho: usize,
    pub l_max: usize,
    /// Radial coefficient arrays, indexed by [`slot`].
    pub slots: Vec<Vec<T>>,
}

impl<T: Real> SpectralField<T> {
    pub fn zeros(n_rho: usize, l_max: usize) -> Self {
        Self {
            n_rho,
            l_max,
            slots: vec![vec![T::zero(); n_rho]; 2 * l_max + 1],
        }
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self::zeros(other.n_rho, other.l_max)
    }

    /// Field with a single rotationally symmetric mode.
    pub fn radial(values: Vec<T>, l_max: usize) -> Self {
        let mut f = Self::zeros(values.len(), l_max);
        f.slots[0] = values;
        f
    }

    pub fn mode(&self, l: usize, trig: Trig) -> &[T] {
        &self.slots[slot(l, trig)]
    }

    pub fn mode_mut(&mut self, l: usize, trig: Trig) -> &mut Vec<T> {
        &mut self.slots[slot(l, trig)]
    }

    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.n_rho == other.n_rho && self.l_max == other.l_max
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|v| v * c)
    }

    pub fn map(&self, op: impl Fn(T) -> T) -> Self {
        Self {
            n_rho: self.n_rho,
            l_max: self.l_max,
            slots: self
                .slots
                .iter()
                .map(|v| v.iter().map(|&x| op(x)).collect())
                .collect(),
        }
    }

    pub fn zip(&self, other: &Self, op: impl Fn(T, T) -> T) -> Self {
        assert!(self.same_shape(other), "field shape mismatch");
        Self {
            n_rho: self.n_rho,
            l_max: self.l_max,
            slots: self
                .slots
                .iter()
                .zip(&other.slots)
                .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| op(x, y)).collect())
                .collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a - b)
    }

    /// `self + c·other`.
    pub fn axpy(&self, c: T, other: &Self) -> Self {
        self.zip(other, |a, b| a + c * b)
    }

    pub fn add_constant(&self, c: T) -> Self {
        let mut out = self.clone();
        for v in out.slots[0].iter_mut() {
            *v += c;
        }
        out
    }

    /// Largest coefficient magnitude over all slots.
    pub fn max_coefficient(&self) -> T {
        self.slots
            .iter()
            .flat_map(|v| v.iter())
            .fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    /// Returns the sub-range of radial nodes `start..start+len`.
    pub fn radial_slice(&self, start: usize, len: usize) -> Self {
        Self {
            n_rho: len,
            l_max: self.l_max,
            slots: self
                .slots
                .iter()
                .map(|v| v[start..start + len].to_vec())
                .collect(),
        }
    }
}

/// Point values on the tensor grid (ρᵢ, θⱼ), θⱼ = 2πj/n_theta.
#[derive(Clone, Debug, PartialEq)]
pub struct Samples<T> {
    pub n_rho: usize,
    pub n_theta: usize,
    pub data: Vec<T>,
}

impl<T: Real> Samples<T> {
    pub fn filled(n_rho: usize, n_theta: usize, value: T) -> Self {
        Self {
            n_rho,
            n_theta,
            data: vec![value; n_rho * n_theta],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n_theta + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n_theta + j] = v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n_theta..(i + 1) * self.n_theta]
    }

    pub fn map(&self, op: impl Fn(T) -> T) -> Self {
        Self {
            n_rho: self.n_rho,
            n_theta: self.n_theta,
            data: self.data.iter().map(|&x| op(x)).collect(),
        }
    }

    pub fn zip(&self, other: &Self, op: impl Fn(T, T) -> T) -> Self {
        assert_eq!(self.data.len(), other.data.len(), "sample shape mismatch");
        Self {
            n_rho: self.n_rho,
            n_theta: self.n_theta,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| op(a, b))
                .collect(),
        }
    }

    pub fn max(&self) -> T {
        self.data.iter().fold(T::neg_infinity(), |m, &x| m.max(x))
    }

    pub fn min(&self) -> T {
        self.data.iter().fold(T::infinity(), |m, &x| m.min(x))
    }

    pub fn sup_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    /// Maximum over θ at each radial node.
    pub fn row_max(&self) -> Vec<T> {
        (0..self.n_rho)
            .map(|i| self.row(i).iter().fold(T::neg_infinity(), |m, &x| m.max(x)))
            .collect()
    }
}
