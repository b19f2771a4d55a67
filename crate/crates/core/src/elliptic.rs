//! Poisson solves `Δ̃u = f` and the potentials `h₀`, `φ₀`.

use serde::Serialize;

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::field::{slot_mode, SpectralField};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Gauge {
    MeanZero,
    OuterBoundaryZero,
}

/// Outer boundary data on the disk, one value per mode slot.
#[derive(Clone, Debug)]
pub enum OuterCondition<T> {
    /// Prescribed `∂_ρ u` at the outer circle.
    Neumann(Vec<T>),
    /// Prescribed boundary values.
    Dirichlet(Vec<T>),
}

#[derive(Clone, Debug)]
pub struct PoissonProblem<'a, T> {
    pub domain: &'a Domain<T>,
    pub rhs: SpectralField<T>,
    pub gauge: Gauge,
    pub outer: Option<OuterCondition<T>>,
}

#[derive(Clone, Debug)]
pub struct PoissonSolution<T> {
    pub u: SpectralField<T>,
    /// `‖Δ̃u − f‖∞ / ‖f‖∞` over interior rows after defect correction.
    pub relative_residual: T,
    /// Compatibility defect `∫ f dṼ − boundary flux` that was projected out.
    pub mean_defect: T,
}

/// Relative tolerance on the solvability condition.
pub const MEAN_TOLERANCE: f64 = 1e-8;

impl<'a, T: Real> PoissonProblem<'a, T> {
    pub fn new(domain: &'a Domain<T>, rhs: SpectralField<T>, gauge: Gauge) -> Self {
        Self {
            domain,
            rhs,
            gauge,
            outer: None,
        }
    }

    pub fn with_outer(mut self, outer: OuterCondition<T>) -> Self {
        self.outer = Some(outer);
        self
    }
}

fn sup<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

pub fn solve_poisson<T: Real>(problem: &PoissonProblem<'_, T>) -> Result<PoissonSolution<T>> {
    let d = problem.domain;
    let n = d.n_rho();
    if problem.rhs.n_rho != n || problem.rhs.l_max != d.l_max {
        return Err(Error::Shape("rhs does not match the domain".into()));
    }
    let slots = problem.rhs.slot_count();
    let check_len = |v: &Vec<T>| {
        if v.len() != slots {
            Err(Error::Shape(format!(
                "{} boundary values for {slots} modes",
                v.len()
            )))
        } else {
            Ok(())
        }
    };
    let (neumann, dirichlet) = match &problem.outer {
        None => (None, None),
        Some(OuterCondition::Neumann(g)) => {
            check_len(g)?;
            (Some(g), None)
        }
        Some(OuterCondition::Dirichlet(g)) => {
            check_len(g)?;
            (None, Some(g))
        }
    };
    if problem.outer.is_some() && d.neumann_gain().is_none() {
        return Err(Error::Precondition(
            "outer boundary data on a closed surface".into(),
        ));
    }
    let mut u = SpectralField::zeros_like(&problem.rhs);
    let mut mean_defect = T::zero();
    let mut resid_sup = T::zero();
    let rhs_sup = problem.rhs.max_coefficient();
    for s in 0..slots {
        let (l, _) = slot_mode(s);
        let op = d.stencil(l);
        let mut b = problem.rhs.slots[s].clone();
        if let (Some(g), Some(gain)) = (neumann, d.neumann_gain()) {
            b[n - 1] -= gain * g[s];
        }
        let mut sys = op.clone();
        let singular = l == 0 && dirichlet.is_none();
        if let Some(g) = dirichlet {
            sys.diag[n - 1] = T::one();
            sys.lower[n - 1] = T::zero();
            b[n - 1] = g[s];
        }
        if singular {
            let total = d.integrate_radial(&b);
            let scale = rhs_sup.max(sup(&b)) * d.volume();
            if total.abs() > T::lit(MEAN_TOLERANCE) * scale {
                return Err(Error::NonzeroMean {
                    mean: (total / d.volume()).to_f64_lossy(),
                    tolerance: MEAN_TOLERANCE * (scale / d.volume()).to_f64_lossy(),
                });
            }
            mean_defect = total;
            let shift = total / d.volume();
            for v in b.iter_mut() {
                *v -= shift;
            }
            sys.diag[0] = T::one();
            sys.upper[0] = T::zero();
        }
        let residual_of = |x: &[T]| -> Vec<T> {
            let mut ax = vec![T::zero(); n];
            op.apply(x, &mut ax);
            let mut r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
            if dirichlet.is_some() {
                r[n - 1] = b[n - 1] - x[n - 1];
            }
            r
        };
        let pinned = |mut r: Vec<T>| -> Vec<T> {
            if singular {
                let shift = d.integrate_radial(&r) / d.volume();
                for v in r.iter_mut() {
                    *v -= shift;
                }
                r[0] = T::zero();
            }
            r
        };
        let mut rhs0 = b.clone();
        if singular {
            rhs0[0] = T::zero();
        }
        let mut x = sys.solve(&rhs0).ok_or(Error::Singular { mode: l })?;
        let corr = sys
            .solve(&pinned(residual_of(&x)))
            .ok_or(Error::Singular { mode: l })?;
        for (xi, ci) in x.iter_mut().zip(&corr) {
            *xi += *ci;
        }
        let r = residual_of(&x);
        let rows = if dirichlet.is_some() { n - 1 } else { n };
        resid_sup = resid_sup.max(sup(&r[..rows]));
        if singular && problem.gauge == Gauge::MeanZero {
            let mean = d.integrate_radial(&x) / d.volume();
            for v in x.iter_mut() {
                *v -= mean;
            }
        } else if singular && problem.gauge == Gauge::OuterBoundaryZero {
            let last = x[n - 1];
            for v in x.iter_mut() {
                *v -= last;
            }
        }
        u.slots[s] = x;
    }
    let denom = if rhs_sup > T::zero() {
        rhs_sup
    } else {
        T::one()
    };
    Ok(PoissonSolution {
        u,
        relative_residual: resid_sup / denom,
        mean_defect,
    })
}

/// `h₀` with `Δ̃h₀ = rV₀/(2Ṽ) − K̃`, mean zero.
pub fn potential_h0<T: Real>(domain: &Domain<T>, r: T, v0: T) -> Result<SpectralField<T>> {
    let target = T::lit(2.0) * T::PI() * domain.surface.euler_characteristic();
    let lhs = T::lit(0.5) * r * v0;
    if (lhs - target).abs() > T::lit(1e-8) * target.abs().max(T::one()) {
        return Err(Error::Precondition(format!(
            "r V0 / 2 = {lhs} differs from 2 pi chi = {target}"
        )));
    }
    let c = domain.integrate_radial(&domain.curvature) / domain.volume();
    let values = domain.curvature.iter().map(|&k| c - k).collect();
    let rhs = SpectralField::radial(values, domain.l_max);
    Ok(solve_poisson(&PoissonProblem::new(domain, rhs, Gauge::MeanZero))?.u)
}

/// `φ₀` with `Δ̃φ₀ = e^{2u₀} − V₀/Ṽ`, mean zero.
pub fn potential_phi0<T: Real>(
    domain: &Domain<T>,
    u0: &SpectralField<T>,
    v0: T,
) -> Result<SpectralField<T>> {
    let e2u = domain.pointwise(u0, |x| (T::lit(2.0) * x).exp());
    let vol = domain.integrate(&e2u);
    if (vol - v0).abs() > T::lit(1e-8) * v0.abs() {
        return Err(Error::Precondition(format!(
            "V0 = {v0} but the volume of u0 is {vol}"
        )));
    }
    let level = vol / domain.volume();
    let rhs = e2u.add_constant(-level);
    if rhs.max_coefficient() <= T::lit(64.0) * T::epsilon() * level {
        return Ok(domain.zeros());
    }
    Ok(solve_poisson(&PoissonProblem::new(domain, rhs, Gauge::MeanZero))?.u)
}
