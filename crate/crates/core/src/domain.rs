//! A discretized surface: radial grid, angular modes, the cone Laplacian,
//! quadrature and energy.
//!
//! The radial operator is written in flux form in the stretched coordinate.
//! For modes `l ≥ 1` the zeroth-order term is fitted so that the regular
//! harmonic `exp(±l ∫ dρ/f)` is annihilated exactly; on an exact cone these are
//! the powers `ρ^{±l/(β+1)}`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::field::{format_number, slot, slot_mode, Samples, SpectralField, Trig};
use crate::geometry::ConeSurface;
use crate::grid::{EndKind, RadialGrid};
use crate::quad::{lagrange, stencil_start, Tridiag};
use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct Domain<T> {
    pub surface: ConeSurface<T>,
    pub grid: RadialGrid<T>,
    pub l_max: usize,
    pub n_theta: usize,
    /// `f(ρᵢ)`.
    pub warp: Vec<T>,
    /// `K̃(ρᵢ)`.
    pub curvature: Vec<T>,
    /// Quadrature weights for rotationally symmetric integrands, including 2π.
    pub weights: Vec<T>,
    stencils: Vec<Tridiag<T>>,
    basis: Vec<Vec<T>>,
}

fn harmonic_ratio<T: Real>(surface: &ConeSurface<T>, l: usize, from: T, to: T) -> T {
    let lf = T::from_usize_lossy(l);
    if from <= to {
        (lf * surface.inverse_warp_integral(from, to)).exp()
    } else {
        (-lf * surface.inverse_warp_integral(to, from)).exp()
    }
}

impl<T: Real> Domain<T> {
    pub fn new(surface: ConeSurface<T>, grid: RadialGrid<T>, l_max: usize) -> Self {
        let n = grid.len();
        let warp: Vec<T> = grid.nodes.iter().map(|&r| surface.warp(r)).collect();
        let curvature = grid
            .nodes
            .iter()
            .map(|&r| surface.background_curvature(r))
            .collect();
        let g2 = grid.grading() * grid.grading();
        let tail = g2 / (g2 - T::one());
        let half = T::lit(0.5);
        let end_factor = |kind: EndKind| match kind {
            EndKind::Pole => tail,
            EndKind::Neumann => half,
        };
        let mut factor = vec![T::one(); n];
        factor[0] = end_factor(grid.left);
        factor[n - 1] = end_factor(grid.right);
        let two_pi = T::lit(2.0) * T::PI();
        let weights = (0..n)
            .map(|i| two_pi * warp[i] * grid.jacobian[i] * grid.dx * factor[i])
            .collect();
        let n_theta = 2 * l_max + 2;
        let basis = Self::basis_table(l_max, n_theta);
        let mut d = Self {
            surface,
            grid,
            l_max,
            n_theta,
            warp,
            curvature,
            weights,
            stencils: Vec::new(),
            basis,
        };
        d.stencils = (0..=l_max).map(|l| d.build_stencil(l)).collect();
        d
    }

    /// Domain for `surface` with `n_rho` nodes, modes up to `l_max` and pole ratio `grading`.
    pub fn with_resolution(
        surface: ConeSurface<T>,
        n_rho: usize,
        l_max: usize,
        grading: T,
    ) -> Result<Self> {
        let grid = RadialGrid::new(&surface, n_rho, grading)?;
        Ok(Self::new(surface, grid, l_max))
    }

    /// As [`Domain::with_resolution`] with the innermost node at `L·2^{−octaves}`.
    pub fn with_octaves(
        surface: ConeSurface<T>,
        n_rho: usize,
        l_max: usize,
        grading: T,
        octaves: Option<usize>,
    ) -> Result<Self> {
        let grid = RadialGrid::with_octaves(&surface, n_rho, grading, octaves)?;
        Ok(Self::new(surface, grid, l_max))
    }

    /// Reference resolution: 256 nodes, 16 modes, ratio 1.15.
    pub fn reference(surface: ConeSurface<T>) -> Result<Self> {
        Self::with_resolution(surface, 256, 16, T::lit(1.15))
    }

    /// Same surface and modes on the nested grid with halved spacing.
    pub fn refine(&self) -> Self {
        Self::new(self.surface.clone(), self.grid.refine(), self.l_max)
    }

    /// Annulus `ρ ≥ rho_min` with a Neumann inner boundary.
    pub fn truncate_inner(&self, rho_min: T) -> Result<Self> {
        let grid = self.grid.truncate_inner(rho_min)?;
        Ok(Self::new(self.surface.clone(), grid, self.l_max))
    }

    fn basis_table(l_max: usize, n_theta: usize) -> Vec<Vec<T>> {
        let two_pi = T::lit(2.0) * T::PI();
        (0..2 * l_max + 1)
            .map(|s| {
                let (l, trig) = slot_mode(s);
                (0..n_theta)
                    .map(|j| {
                        let th = two_pi * T::from_usize_lossy(j) / T::from_usize_lossy(n_theta);
                        trig.eval(l, th)
                    })
                    .collect()
            })
            .collect()
    }

    pub fn n_rho(&self) -> usize {
        self.grid.len()
    }

    pub fn nodes(&self) -> &[T] {
        &self.grid.nodes
    }

    pub fn theta(&self, j: usize) -> T {
        T::lit(2.0) * T::PI() * T::from_usize_lossy(j) / T::from_usize_lossy(self.n_theta)
    }

    pub fn zeros(&self) -> SpectralField<T> {
        SpectralField::zeros(self.n_rho(), self.l_max)
    }

    pub fn constant(&self, c: T) -> SpectralField<T> {
        SpectralField::radial(vec![c; self.n_rho()], self.l_max)
    }

    fn flux(&self, mid: usize) -> T {
        let r = self.grid.midpoints[mid];
        self.surface.warp(r) / self.grid.mid_jacobian[mid]
    }

    /// `1 − g^{−(2+2c)}`: inverse tail volume of the pole cell in the weight `f φ_l²`.
    fn pole_factor(&self, l: usize) -> T {
        let c = self.surface.mode_exponent(l);
        let g = self.grid.grading();
        T::one() - g.powf(-(T::lit(2.0) + T::lit(2.0) * c))
    }

    fn build_stencil(&self, l: usize) -> Tridiag<T> {
        let g = &self.grid;
        let n = g.len();
        let dx2 = g.dx * g.dx;
        let mut st = Tridiag::zeros(n);
        let lf = T::from_usize_lossy(l);
        let centre = T::lit(0.5) * (g.nodes[0] + g.nodes[n - 1]);
        for i in 0..n {
            let base = self.warp[i] * g.jacobian[i] * dx2;
            let first = i == 0;
            let last = i == n - 1;
            let kind = if first {
                Some(g.left)
            } else if last {
                Some(g.right)
            } else {
                None
            };
            let vol = match kind {
                Some(EndKind::Neumann) => base * T::lit(0.5),
                Some(EndKind::Pole) if l == 0 => {
                    let g2 = g.grading() * g.grading();
                    base * g2 / (g2 - T::one())
                }
                _ => base,
            };
            let lo = if first {
                T::zero()
            } else {
                self.flux(i - 1) / vol
            };
            let up = if last { T::zero() } else { self.flux(i) / vol };
            st.lower[i] = lo;
            st.upper[i] = up;
            st.diag[i] = if l == 0 {
                -(lo + up)
            } else if kind == Some(EndKind::Neumann) {
                let f = self.warp[i];
                -(lo + up) - lf * lf / (f * f)
            } else {
                let r = g.nodes[i];
                let north = (self.surface.is_closed() && r <= centre) || !self.surface.is_closed();
                let ratio = |j: usize| {
                    let q = harmonic_ratio(&self.surface, l, r, g.nodes[j]);
                    if north {
                        q
                    } else {
                        T::one() / q
                    }
                };
                let mut d = T::zero();
                if !first {
                    d -= lo * ratio(i - 1);
                }
                if !last {
                    d -= up * ratio(i + 1);
                }
                if kind == Some(EndKind::Pole) {
                    let s = self.pole_factor(l);
                    st.lower[i] *= s;
                    st.upper[i] *= s;
                    d *= s;
                }
                d
            };
        }
        st
    }

    /// Radial operator of mode `l` (acting on homogeneous-Neumann data at Neumann ends).
    pub fn stencil(&self, l: usize) -> &Tridiag<T> {
        &self.stencils[l]
    }

    /// Contribution of unit outward Neumann data at the outer boundary node.
    pub fn neumann_gain(&self) -> Option<T> {
        let g = &self.grid;
        (g.right == EndKind::Neumann).then(|| {
            let i = g.len() - 1;
            T::lit(2.0) / (g.jacobian[i] * g.dx)
        })
    }

    /// Values of the discrete regular harmonic of mode `l`, normalised like `ρ^{l/(β+1)}`
    /// at the innermost node.
    pub fn harmonic_profile(&self, l: usize) -> Vec<T> {
        let c = self.surface.mode_exponent(l);
        let r0 = self.grid.nodes[0];
        let start = match self.surface.kind {
            crate::geometry::SurfaceKind::FootballConstantCurvature => {
                (T::lit(2.0) * (T::lit(0.5) * r0).tan()).powf(c)
            }
            _ => r0.powf(c),
        };
        let mut out = Vec::with_capacity(self.n_rho());
        let mut v = start;
        out.push(v);
        for w in self.grid.nodes.windows(2) {
            v *= harmonic_ratio(&self.surface, l, w[0], w[1]);
            out.push(v);
        }
        out
    }

    /// Point samples at the domain's collocation angles.
    pub fn synthesize(&self, field: &SpectralField<T>) -> Samples<T> {
        self.synthesize_on(field, None)
    }

    /// Point samples on `n_theta` equispaced angles (or the collocation set).
    pub fn synthesize_on(&self, field: &SpectralField<T>, n_theta: Option<usize>) -> Samples<T> {
        let owned;
        let (nt, basis) = match n_theta {
            Some(m) if m != self.n_theta => {
                owned = Self::basis_table(field.l_max, m);
                (m, &owned)
            }
            _ => (self.n_theta, &self.basis),
        };
        let n = field.n_rho;
        let mut out = Samples::filled(n, nt, T::zero());
        for s in 0..field.slot_count().min(basis.len()) {
            let coeff = &field.slots[s];
            if coeff.iter().all(|&c| c == T::zero()) {
                continue;
            }
            let b = &basis[s];
            for i in 0..n {
                let c = coeff[i];
                let row = &mut out.data[i * nt..(i + 1) * nt];
                for (x, &bv) in row.iter_mut().zip(b) {
                    *x += c * bv;
                }
            }
        }
        out
    }

    /// Discrete Fourier analysis of point samples on equispaced angles.
    pub fn analyze(&self, samples: &Samples<T>) -> Result<SpectralField<T>> {
        let nt = samples.n_theta;
        if nt < 2 * self.l_max + 2 {
            return Err(Error::AngularResolution {
                samples: nt,
                l_max: self.l_max,
            });
        }
        let owned;
        let basis = if nt == self.n_theta {
            &self.basis
        } else {
            owned = Self::basis_table(self.l_max, nt);
            &owned
        };
        let n = samples.n_rho;
        let mut field = SpectralField::zeros(n, self.l_max);
        let inv = T::one() / T::from_usize_lossy(nt);
        for s in 0..2 * self.l_max + 1 {
            let scale = if s == 0 { inv } else { T::lit(2.0) * inv };
            let b = &basis[s];
            for i in 0..n {
                let row = samples.row(i);
                let mut acc = T::zero();
                for (x, &bv) in row.iter().zip(b) {
                    acc += *x * bv;
                }
                field.slots[s][i] = acc * scale;
            }
        }
        Ok(field)
    }

    /// Samples `g(ρ, θ)` on the collocation grid and analyses it.
    pub fn analyze_fn(&self, g: impl Fn(T, T) -> T) -> SpectralField<T> {
        let mut s = Samples::filled(self.n_rho(), self.n_theta, T::zero());
        for i in 0..self.n_rho() {
            let r = self.grid.nodes[i];
            for j in 0..self.n_theta {
                s.set(i, j, g(r, self.theta(j)));
            }
        }
        self.analyze(&s).expect("collocation set resolves l_max")
    }

    /// Field with a single mode given by a radial profile.
    pub fn single_mode(&self, l: usize, trig: Trig, g: impl Fn(T) -> T) -> SpectralField<T> {
        let mut f = self.zeros();
        *f.mode_mut(l, trig) = self.grid.nodes.iter().map(|&r| g(r)).collect();
        f
    }

    /// Pointwise map through physical space.
    pub fn pointwise(&self, field: &SpectralField<T>, op: impl Fn(T) -> T) -> SpectralField<T> {
        self.from_samples(&self.synthesize(field).map(op))
    }

    pub fn multiply(&self, a: &SpectralField<T>, b: &SpectralField<T>) -> SpectralField<T> {
        let sa = self.synthesize(a);
        let sb = self.synthesize(b);
        self.from_samples(&sa.zip(&sb, |x, y| x * y))
    }

    pub fn from_samples(&self, s: &Samples<T>) -> SpectralField<T> {
        self.analyze(s).expect("collocation set resolves l_max")
    }

    /// Samples of the background curvature.
    pub fn curvature_samples(&self) -> Samples<T> {
        let mut s = Samples::filled(self.n_rho(), self.n_theta, T::zero());
        for i in 0..self.n_rho() {
            for j in 0..self.n_theta {
                s.set(i, j, self.curvature[i]);
            }
        }
        s
    }

    pub fn laplacian_mode(&self, l: usize, values: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); values.len()];
        self.stencils[l].apply(values, &mut out);
        out
    }

    /// Discrete cone Laplacian, mode by mode.
    pub fn laplacian(&self, field: &SpectralField<T>) -> SpectralField<T> {
        let mut out = SpectralField::zeros_like(field);
        for s in 0..field.slot_count() {
            let (l, _) = slot_mode(s);
            self.stencils[l].apply(&field.slots[s], &mut out.slots[s]);
        }
        out
    }

    /// `∫ u dṼ`; only the rotationally symmetric mode contributes.
    pub fn integrate(&self, field: &SpectralField<T>) -> T {
        self.integrate_radial(&field.slots[0])
    }

    pub fn integrate_radial(&self, values: &[T]) -> T {
        values
            .iter()
            .zip(&self.weights)
            .fold(T::zero(), |acc, (&v, &w)| acc + v * w)
    }

    /// Total background volume `Ṽ`.
    pub fn volume(&self) -> T {
        self.weights.iter().copied().sum()
    }

    /// `∫ u v dṼ`.
    pub fn inner(&self, u: &SpectralField<T>, v: &SpectralField<T>) -> T {
        let half = T::lit(0.5);
        let mut acc = T::zero();
        for s in 0..u.slot_count() {
            let m = if s == 0 { T::one() } else { half };
            acc += m * u.slots[s]
                .iter()
                .zip(&v.slots[s])
                .zip(&self.weights)
                .fold(T::zero(), |a, ((&x, &y), &w)| a + x * y * w);
        }
        acc
    }

    /// Discrete Dirichlet energy `∫ |∇̃u|² dṼ`, the form paired with the Laplacian.
    pub fn dirichlet_energy(&self, field: &SpectralField<T>) -> T {
        self.energy_form(field, field)
    }

    /// Symmetric form `∫ ∇̃u·∇̃v dṼ` (equals `−∫ v Δ̃u dṼ` for this discretization).
    pub fn energy_form(&self, u: &SpectralField<T>, v: &SpectralField<T>) -> T {
        let lap = self.laplacian(u);
        let e = -self.inner(v, &lap);
        if std::ptr::eq(u, v) {
            e.max(T::zero())
        } else {
            e
        }
    }

    /// Distance from node `i` to the nearest pole.
    pub fn pole_distance(&self, i: usize) -> T {
        let r = self.grid.nodes[i];
        if self.surface.is_closed() {
            r.min(self.surface.length - r)
        } else {
            r
        }
    }

    /// Sup of `|s|` over the nodes at distance at least `floor` from every pole.
    pub fn sup_beyond(&self, s: &Samples<T>, floor: T) -> T {
        let mut m = T::zero();
        for i in 0..s.n_rho {
            if self.pole_distance(i) < floor {
                continue;
            }
            for &v in s.row(i) {
                m = m.max(v.abs());
            }
        }
        m
    }

    /// Supremum of `|u|` over the collocation points.
    pub fn sup_abs(&self, field: &SpectralField<T>) -> T {
        self.synthesize(field).sup_abs()
    }

    /// Four-point interpolation of a radial profile in the stretched coordinate.
    pub fn interpolate_radial(&self, values: &[T], rho: T) -> T {
        let n = self.n_rho();
        let i = self.grid.locate(rho);
        let s = stencil_start(i, 4, n);
        let xs: Vec<T> = (s..s + 4)
            .map(|k| self.grid.x_of(self.grid.nodes[k]))
            .collect();
        lagrange(&xs, &values[s..s + 4], self.grid.x_of(rho))
    }

    /// Sup of `|u|` over each dyadic annulus `2^{−k−1} < ρ < 2^{−k}` about the north pole.
    pub fn dyadic_sup_profile(&self, field: &SpectralField<T>) -> Result<Vec<(usize, T)>> {
        let nodes = &self.grid.nodes;
        let half_extent = T::lit(0.5) * self.surface.length;
        let nt = 4 * self.n_theta;
        let basis = Self::basis_table(field.l_max, nt);
        let eval_at = |coeffs: &[T]| -> T {
            let mut m = T::zero();
            for j in 0..nt {
                let mut v = T::zero();
                for (s, c) in coeffs.iter().enumerate() {
                    v += *c * basis[s][j];
                }
                m = m.max(v.abs());
            }
            m
        };
        let mut out = Vec::new();
        let mut k = 1usize;
        loop {
            let outer = T::lit(0.5).powi(k as i32);
            let inner = outer * T::lit(0.5);
            if inner < nodes[0] {
                break;
            }
            if outer <= half_extent && self.grid.left == EndKind::Pole {
                let mut sup = T::zero();
                for edge in [inner, outer] {
                    let coeffs: Vec<T> = field
                        .slots
                        .iter()
                        .map(|v| self.interpolate_radial(v, edge))
                        .collect();
                    sup = sup.max(eval_at(&coeffs));
                }
                for (i, &r) in nodes.iter().enumerate() {
                    if r > inner && r < outer {
                        let coeffs: Vec<T> = field.slots.iter().map(|v| v[i]).collect();
                        sup = sup.max(eval_at(&coeffs));
                    }
                }
                out.push((k, sup));
            }
            k += 1;
        }
        if out.is_empty() {
            return Err(Error::Unresolved("no dyadic annulus".into()));
        }
        Ok(out)
    }

    /// CSV dump with columns `l,trig,rho_index,rho,value`.
    pub fn field_csv(&self, field: &SpectralField<T>) -> String {
        let mut s = String::from("l,trig,rho_index,rho,value\n");
        for sl in 0..field.slot_count() {
            let (l, trig) = slot_mode(sl);
            for (i, v) in field.slots[sl].iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{}",
                    l,
                    trig.name(),
                    i,
                    format_number(self.grid.nodes[i].to_f64_lossy()),
                    format_number(v.to_f64_lossy())
                );
            }
        }
        s
    }

    /// Parses a field CSV written by [`Domain::field_csv`] for this grid.
    pub fn parse_field_csv(&self, text: &str) -> Result<SpectralField<T>> {
        let mut field = self.zeros();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (ln == 0 && line.starts_with('l')) {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            let bad = || Error::Parse(format!("field csv line {}: {line}", ln + 1));
            if parts.len() != 5 {
                return Err(bad());
            }
            let l: usize = parts[0].parse().map_err(|_| bad())?;
            let trig = Trig::parse(parts[1]).ok_or_else(bad)?;
            let i: usize = parts[2].parse().map_err(|_| bad())?;
            let v: f64 = parts[4].parse().map_err(|_| bad())?;
            if l > self.l_max || i >= self.n_rho() || (l == 0 && trig == Trig::Sin) {
                return Err(Error::Shape(format!(
                    "mode ({l}, {}) at node {i} outside the domain",
                    trig.name()
                )));
            }
            field.slots[slot(l, trig)][i] = T::lit(v);
        }
        Ok(field)
    }
}
