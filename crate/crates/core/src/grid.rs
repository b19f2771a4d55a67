//! Graded radial grids.
//!
//! Nodes are uniform in the stretched coordinate
//! `x(ρ) = ln ρ − ln(L − ρ) + ρ/ρ_c` (closed surfaces) or `x(ρ) = ln ρ + ρ/ρ_c`
//! (disk), so the spacing is geometric with ratio `g = e^{Δx}` near a pole and
//! close to uniform away from it.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::ConeSurface;
use crate::scalar::Real;

/// Octaves between the innermost node and the full radial extent.
pub const POLE_OCTAVES: usize = 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum EndKind {
    Pole,
    Neumann,
}

#[derive(Clone, Copy, Debug)]
struct StretchMap<T> {
    closed: bool,
    length: T,
    rho_c: T,
}

impl<T: Real> StretchMap<T> {
    fn x_of(&self, rho: T) -> T {
        let mut x = rho.ln() + rho / self.rho_c;
        if self.closed {
            x -= (self.length - rho).ln();
        }
        x
    }

    fn dx_drho(&self, rho: T) -> T {
        let mut d = T::one() / rho + T::one() / self.rho_c;
        if self.closed {
            d += T::one() / (self.length - rho);
        }
        d
    }

    fn rho_of(&self, x: T) -> T {
        let mut lo = T::zero();
        let mut hi = if self.closed {
            self.length
        } else {
            self.length * T::lit(4.0) + T::one()
        };
        let mut guess = T::lit(0.5) * (lo + hi);
        for _ in 0..200 {
            guess = T::lit(0.5) * (lo + hi);
            if guess <= lo || guess >= hi {
                break;
            }
            if self.x_of(guess) < x {
                lo = guess;
            } else {
                hi = guess;
            }
        }
        for _ in 0..2 {
            let step = (self.x_of(guess) - x) / self.dx_drho(guess);
            let next = guess - step;
            if next > T::zero() && (!self.closed || next < self.length) {
                guess = next;
            }
        }
        guess
    }
}

#[derive(Clone, Debug)]
pub struct RadialGrid<T> {
    pub nodes: Vec<T>,
    /// `dρ/dx` at the nodes.
    pub jacobian: Vec<T>,
    /// ρ at the half-integer points between consecutive nodes.
    pub midpoints: Vec<T>,
    pub mid_jacobian: Vec<T>,
    pub dx: T,
    pub left: EndKind,
    pub right: EndKind,
    pub length: T,
    /// Index of the first node within the parent grid (non-zero for truncated grids).
    pub offset: usize,
    map: StretchMap<T>,
    x0: T,
}

impl<T: Real> RadialGrid<T> {
    /// Grid with `n` nodes and pole ratio `grading` for the given surface.
    pub fn new(surface: &ConeSurface<T>, n: usize, grading: T) -> Result<Self> {
        Self::with_octaves(surface, n, grading, None)
    }

    /// As [`RadialGrid::new`], with the innermost node at `L·2^{−octaves}` when given.
    pub fn with_octaves(
        surface: &ConeSurface<T>,
        n: usize,
        grading: T,
        octaves: Option<usize>,
    ) -> Result<Self> {
        if n < 16 {
            return Err(Error::Unresolved(format!("n_rho = {n} (need at least 16)")));
        }
        if !(grading > T::one() && grading < T::lit(2.0)) {
            return Err(Error::Unresolved(format!(
                "grading {grading} outside (1, 2)"
            )));
        }
        let closed = surface.is_closed();
        let poles = surface.pole_count();
        let length = surface.length;
        let dx = grading.ln();
        let span = dx * T::from_usize_lossy(n - 1);
        let ln2 = T::LN_2();
        let max_oct = (T::lit(0.7) * span / (T::from_usize_lossy(poles) * ln2))
            .floor()
            .to_usize()
            .unwrap_or(0);
        let octaves = match octaves {
            Some(k) if k < 2 || k > max_oct.max(3) => {
                return Err(Error::Unresolved(format!(
                    "{k} pole octaves with {n} nodes (allowed 2..={})",
                    max_oct.max(3)
                )))
            }
            Some(k) => k,
            None => POLE_OCTAVES.min(max_oct).max(3),
        };
        let rho0 = length * T::lit(2.0).powi(-(octaves as i32));
        let rho_c = if closed {
            (length - T::lit(2.0) * rho0) / (span - T::lit(2.0) * ((length - rho0) / rho0).ln())
        } else {
            (length - rho0) / (span - (length / rho0).ln())
        };
        if !(rho_c > T::zero()) {
            return Err(Error::Unresolved(
                "pole clustering leaves no interior".into(),
            ));
        }
        let map = StretchMap {
            closed,
            length,
            rho_c,
        };
        Ok(Self::build(map, map.x_of(rho0), dx, n, closed))
    }

    fn build(map: StretchMap<T>, x0: T, dx: T, n: usize, closed: bool) -> Self {
        let at = |k: T| map.rho_of(x0 + k * dx);
        let half = T::lit(0.5);
        let mut nodes: Vec<T> = (0..n).map(|i| at(T::from_usize_lossy(i))).collect();
        let mut midpoints: Vec<T> = (0..n - 1)
            .map(|i| at(T::from_usize_lossy(i) + half))
            .collect();
        if closed {
            for i in 0..n / 2 {
                nodes[n - 1 - i] = map.length - nodes[i];
            }
            if n % 2 == 1 {
                nodes[n / 2] = half * map.length;
            }
            for i in 0..(n - 1) / 2 {
                midpoints[n - 2 - i] = map.length - midpoints[i];
            }
            if (n - 1) % 2 == 1 {
                midpoints[(n - 1) / 2] = half * map.length;
            }
        } else {
            nodes[n - 1] = map.length;
        }
        let jac = |r: T| T::one() / map.dx_drho(r);
        let jacobian = nodes.iter().map(|&r| jac(r)).collect();
        let mid_jacobian = midpoints.iter().map(|&r| jac(r)).collect();
        Self {
            nodes,
            jacobian,
            midpoints,
            mid_jacobian,
            dx,
            left: EndKind::Pole,
            right: if closed {
                EndKind::Pole
            } else {
                EndKind::Neumann
            },
            length: map.length,
            offset: 0,
            map,
            x0,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Geometric ratio of consecutive spacings at the poles.
    pub fn grading(&self) -> T {
        self.dx.exp()
    }

    pub fn rho_c(&self) -> T {
        self.map.rho_c
    }

    /// Same map with half the spacing in `x`: `2n − 1` nested nodes.
    pub fn refine(&self) -> Self {
        assert_eq!(self.offset, 0, "refine a full grid");
        Self::build(
            self.map,
            self.x0,
            self.dx * T::lit(0.5),
            2 * self.len() - 1,
            self.map.closed,
        )
    }

    /// Grid restricted to nodes with `ρ ≥ rho_min`, with a Neumann inner boundary.
    pub fn truncate_inner(&self, rho_min: T) -> Result<Self> {
        let start = self
            .nodes
            .iter()
            .position(|&r| r >= rho_min)
            .ok_or_else(|| Error::Unresolved(format!("inner radius {rho_min}")))?;
        if self.len() - start < 8 {
            return Err(Error::Unresolved(format!("annulus from {rho_min}")));
        }
        let mut g = self.clone();
        g.nodes = self.nodes[start..].to_vec();
        g.jacobian = self.jacobian[start..].to_vec();
        g.midpoints = self.midpoints[start..].to_vec();
        g.mid_jacobian = self.mid_jacobian[start..].to_vec();
        g.left = EndKind::Neumann;
        g.offset = self.offset + start;
        Ok(g)
    }

    /// Stretched coordinate of a radius (used for interpolation).
    pub fn x_of(&self, rho: T) -> T {
        self.map.x_of(rho)
    }

    /// Index `i` with `nodes[i] ≤ rho < nodes[i+1]`, clamped to the valid range.
    pub fn locate(&self, rho: T) -> usize {
        match self
            .nodes
            .binary_search_by(|v| v.partial_cmp(&rho).unwrap_or(std::cmp::Ordering::Less))
        {
            Ok(i) => i.min(self.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.len() - 2),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn football_grid_is_symmetric_and_graded() {
        let s = ConeSurface::football_cc(1.0f64).unwrap();
        let g = RadialGrid::new(&s, 256, 1.15).unwrap();
        assert_eq!(g.len(), 256);
        for i in 0..256 {
            assert!((g.nodes[i] + g.nodes[255 - i] - std::f64::consts::PI).abs() < 1e-13);
        }
        for w in g.nodes.windows(2) {
            assert!(w[1] > w[0]);
        }
        let r = (g.nodes[2] - g.nodes[1]) / (g.nodes[1] - g.nodes[0]);
        assert!((r - 1.15).abs() < 1e-2);
    }

    #[test]
    fn disk_grid_ends_on_boundary() {
        let s = ConeSurface::cone_disk(0.5f64).unwrap();
        let g = RadialGrid::new(&s, 256, 1.15).unwrap();
        assert_eq!(*g.nodes.last().unwrap(), 1.0);
        assert!(g.nodes[0] > 0.0 && g.nodes[0] < 1e-4);
        let f = g.refine();
        assert_eq!(f.len(), 511);
        for i in 0..256 {
            assert!((f.nodes[2 * i] - g.nodes[i]).abs() < 1e-12 * g.nodes[i].max(1e-3));
        }
    }

    #[test]
    fn dyadic_annuli_hold_several_nodes() {
        let s = ConeSurface::cone_disk(0.0f64).unwrap();
        let g = RadialGrid::new(&s, 256, 1.15).unwrap();
        for k in 3..12 {
            let (a, b) = (0.5f64.powi(k + 1), 0.5f64.powi(k));
            let count = g.nodes.iter().filter(|&&r| r > a && r < b).count();
            assert!(count >= 4, "annulus {k} has {count}");
        }
    }
}
