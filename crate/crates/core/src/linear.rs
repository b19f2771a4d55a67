//! Linear parabolic problems `∂ₜu = a Δ̃u + b u + f`.

use serde::Serialize;

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::field::{slot_mode, Samples, SpectralField};
use crate::scalar::Real;

/// Coefficients sampled at one time on the collocation grid.
#[derive(Clone, Debug)]
pub struct CoefficientSample<T> {
    pub a: Samples<T>,
    pub b: Option<Samples<T>>,
    pub f: Option<Samples<T>>,
}

/// Time-dependent coefficient fields for the linear problem.
pub trait LinearCoefficients<T: Real> {
    fn sample(&self, domain: &Domain<T>, t: T) -> CoefficientSample<T>;
    /// Lower bound `λ` with `a ≥ λ`.
    fn lambda_floor(&self) -> T;
    /// Bound on `|∂ₜa|`.
    fn time_lipschitz(&self) -> T;
    /// Bound on `|b|`.
    fn b_sup(&self) -> T;
    /// Bound on `|f|`.
    fn f_sup(&self) -> T;
}

type PointFn<T> = Box<dyn Fn(T, T, T) -> T + Send + Sync>;

/// Coefficients given by closures of `(ρ, θ, t)` together with declared bounds.
pub struct FnCoefficients<T> {
    pub a: PointFn<T>,
    pub b: Option<PointFn<T>>,
    pub f: Option<PointFn<T>>,
    pub lambda: T,
    pub a_lipschitz: T,
    pub b_bound: T,
    pub f_bound: T,
}

impl<T: Real> FnCoefficients<T> {
    /// Pure diffusion with constant coefficient `a`.
    pub fn heat(a: T) -> Self {
        Self {
            a: Box::new(move |_, _, _| a),
            b: None,
            f: None,
            lambda: a,
            a_lipschitz: T::zero(),
            b_bound: T::zero(),
            f_bound: T::zero(),
        }
    }
}

fn sample_fn<T: Real>(d: &Domain<T>, g: &PointFn<T>, t: T) -> Samples<T> {
    let mut s = Samples::filled(d.n_rho(), d.n_theta, T::zero());
    for i in 0..d.n_rho() {
        let r = d.grid.nodes[i];
        for j in 0..d.n_theta {
            s.set(i, j, g(r, d.theta(j), t));
        }
    }
    s
}

impl<T: Real> LinearCoefficients<T> for FnCoefficients<T> {
    fn sample(&self, domain: &Domain<T>, t: T) -> CoefficientSample<T> {
        CoefficientSample {
            a: sample_fn(domain, &self.a, t),
            b: self.b.as_ref().map(|g| sample_fn(domain, g, t)),
            f: self.f.as_ref().map(|g| sample_fn(domain, g, t)),
        }
    }

    fn lambda_floor(&self) -> T {
        self.lambda
    }

    fn time_lipschitz(&self) -> T {
        self.a_lipschitz
    }

    fn b_sup(&self) -> T {
        self.b_bound
    }

    fn f_sup(&self) -> T {
        self.f_bound
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TimeScheme {
    /// First-order semi-implicit Euler.
    Euler,
    /// Richardson combination `2·E(dt/2)∘E(dt/2) − E(dt)` of Euler steps.
    Extrapolated,
}

/// One semi-implicit Euler step with frozen coefficients.
///
/// Solves `(1 − dt·ā L_l) u⁺ = u + dt[(a − ā)Δ̃u + b u + f]` mode by mode,
/// where `ā(ρ)` is the maximum of `a` over θ.
pub fn semi_implicit_euler<T: Real>(
    domain: &Domain<T>,
    u: &SpectralField<T>,
    coeffs: &CoefficientSample<T>,
    dt: T,
) -> Result<SpectralField<T>> {
    let n = domain.n_rho();
    let a_bar = coeffs.a.row_max();
    let symmetric = (0..n).all(|i| coeffs.a.row(i).iter().all(|&x| x == a_bar[i]));
    let mut forcing: Option<Samples<T>> = None;
    let mut add = |s: Samples<T>| {
        forcing = Some(match forcing.take() {
            None => s,
            Some(f) => f.zip(&s, |x, y| x + y),
        });
    };
    if !symmetric {
        let lap = domain.synthesize(&domain.laplacian(u));
        let mut s = lap.clone();
        for i in 0..n {
            for j in 0..domain.n_theta {
                s.set(i, j, (coeffs.a.get(i, j) - a_bar[i]) * lap.get(i, j));
            }
        }
        add(s);
    }
    if let Some(b) = &coeffs.b {
        let us = domain.synthesize(u);
        add(us.zip(b, |x, y| x * y));
    }
    if let Some(f) = &coeffs.f {
        add(f.clone());
    }
    let rhs = match forcing {
        Some(s) => u.axpy(dt, &domain.from_samples(&s)),
        None => u.clone(),
    };
    let mut out = SpectralField::zeros_like(u);
    for s in 0..u.slot_count() {
        let (l, _) = slot_mode(s);
        let op = domain.stencil(l);
        if rhs.slots[s].iter().all(|&x| x == T::zero()) {
            continue;
        }
        let mut sys = op.clone();
        for i in 0..n {
            let w = dt * a_bar[i];
            sys.lower[i] = -w * op.lower[i];
            sys.upper[i] = -w * op.upper[i];
            sys.diag[i] = T::one() - w * op.diag[i];
        }
        out.slots[s] = sys
            .solve(&rhs.slots[s])
            .ok_or(Error::Singular { mode: l })?;
    }
    Ok(out)
}

/// Advances with the chosen scheme; `coeffs_at` supplies coefficients at a time and state.
pub fn advance<T: Real, F>(
    domain: &Domain<T>,
    u: &SpectralField<T>,
    t: T,
    dt: T,
    scheme: TimeScheme,
    mut coeffs_at: F,
) -> Result<SpectralField<T>>
where
    F: FnMut(T, &SpectralField<T>) -> Result<CoefficientSample<T>>,
{
    match scheme {
        TimeScheme::Euler => {
            let c = coeffs_at(t, u)?;
            semi_implicit_euler(domain, u, &c, dt)
        }
        TimeScheme::Extrapolated => {
            let half = T::lit(0.5) * dt;
            let c0 = coeffs_at(t, u)?;
            let full = semi_implicit_euler(domain, u, &c0, dt)?;
            let h1 = semi_implicit_euler(domain, u, &c0, half)?;
            let c1 = coeffs_at(t + half, &h1)?;
            let h2 = semi_implicit_euler(domain, &h1, &c1, half)?;
            Ok(h2.scale(T::lit(2.0)).sub(&full))
        }
    }
}

fn check_floor<T: Real>(c: &CoefficientSample<T>, lambda: T, t: T) -> Result<()> {
    let m = c.a.min();
    if !(m >= lambda) {
        return Err(Error::Precondition(format!(
            "a = {m} drops below the floor {lambda} at t = {t}"
        )));
    }
    Ok(())
}

/// One step of the linear problem from time `t`.
pub fn step_linear<T: Real>(
    domain: &Domain<T>,
    u: &SpectralField<T>,
    coeffs: &dyn LinearCoefficients<T>,
    t: T,
    dt: T,
    scheme: TimeScheme,
) -> Result<SpectralField<T>> {
    if !(dt > T::zero()) {
        return Err(Error::Precondition(format!("dt = {dt} must be positive")));
    }
    advance(domain, u, t, dt, scheme, |s, _| {
        let c = coeffs.sample(domain, s);
        check_floor(&c, coeffs.lambda_floor(), s)?;
        Ok(c)
    })
}

/// `h(t) = e^{C₁t}(‖u₀‖ + ∫₀ᵗ e^{−C₁s} C₂ ds)` in closed form.
pub fn c0_comparison_bound<T: Real>(b_sup: T, f_sup: T, u0_sup: T, t: T) -> T {
    let c1 = b_sup;
    if c1 == T::zero() {
        return u0_sup + f_sup * t;
    }
    let growth = (c1 * t).exp();
    growth * u0_sup + f_sup * (c1 * t).exp_m1() / c1
}

#[derive(Clone, Debug, Serialize)]
pub struct MonitorRow {
    pub t: f64,
    pub sup_u: f64,
    pub energy: f64,
    pub dt_energy: f64,
    pub bound_h: f64,
    pub slack: f64,
}

#[derive(Clone, Debug)]
pub struct LinearRun<T> {
    pub times: Vec<T>,
    pub states: Vec<SpectralField<T>>,
    pub monitors: Vec<MonitorRow>,
    /// Maximum of `u` over the collocation points and all steps.
    pub max_u: T,
    /// Largest violation `sup|u(t)| − h(t)` of the comparison bound (negative when it holds).
    pub worst_bound_excess: T,
    pub lipschitz_a: T,
}

/// Runs the linear problem to `t_end` with fixed `dt`, recording monitors every step.
pub fn run_linear<T: Real>(
    domain: &Domain<T>,
    u0: &SpectralField<T>,
    coeffs: &dyn LinearCoefficients<T>,
    t_end: T,
    dt: T,
    scheme: TimeScheme,
    keep_states: bool,
) -> Result<LinearRun<T>> {
    let steps = (t_end / dt).round().to_usize().unwrap_or(0).max(1);
    let u0_sup = domain.sup_abs(u0);
    let mut u = u0.clone();
    let mut t = T::zero();
    let mut cum = T::zero();
    let s0 = domain.synthesize(u0);
    let mut max_u = s0.max();
    let mut worst = u0_sup - u0_sup;
    let mut times = vec![t];
    let mut states = if keep_states {
        vec![u.clone()]
    } else {
        Vec::new()
    };
    let row = |t: T, sup: T, e: T, cum: T, h: T| MonitorRow {
        t: t.to_f64_lossy(),
        sup_u: sup.to_f64_lossy(),
        energy: e.to_f64_lossy(),
        dt_energy: cum.to_f64_lossy(),
        bound_h: h.to_f64_lossy(),
        slack: (h - sup).to_f64_lossy(),
    };
    let mut monitors = vec![row(t, u0_sup, domain.dirichlet_energy(u0), cum, u0_sup)];
    for k in 0..steps {
        let next = step_linear(domain, &u, coeffs, t, dt, scheme)?;
        t = dt * T::from_usize_lossy(k + 1);
        let diff = next.sub(&u);
        cum += domain.inner(&diff, &diff) / dt;
        u = next;
        let s = domain.synthesize(&u);
        max_u = max_u.max(s.max());
        let sup = s.sup_abs();
        let h = c0_comparison_bound(coeffs.b_sup(), coeffs.f_sup(), u0_sup, t);
        worst = worst.max(sup - h);
        monitors.push(row(t, sup, domain.dirichlet_energy(&u), cum, h));
        times.push(t);
        if keep_states {
            states.push(u.clone());
        }
    }
    if !keep_states {
        states.push(u);
    }
    Ok(LinearRun {
        times,
        states,
        monitors,
        max_u,
        worst_bound_excess: worst,
        lipschitz_a: coeffs.time_lipschitz(),
    })
}

/// Per-step Dirichlet energy and cumulative `∫∫|∂ₜu|² dṼ dt` (backward differences).
pub fn energy_monitor<T: Real>(
    domain: &Domain<T>,
    times: &[T],
    states: &[SpectralField<T>],
) -> Vec<(T, T)> {
    let mut cum = T::zero();
    let mut out = Vec::with_capacity(states.len());
    for (k, u) in states.iter().enumerate() {
        if k > 0 {
            let dt = times[k] - times[k - 1];
            let d = u.sub(&states[k - 1]);
            cum += domain.inner(&d, &d) / dt;
        }
        out.push((domain.dirichlet_energy(u), cum));
    }
    out
}

/// The radius map `η_ε`: constant `1/k` near the inner circle, identity beyond `1/k + 2ε`.
pub fn eta<T: Real>(rho: T, k: usize, eps: T) -> T {
    let a = T::one() / T::from_usize_lossy(k);
    if rho <= a + eps {
        return a;
    }
    if rho >= a + T::lit(2.0) * eps {
        return rho;
    }
    let s = (rho - a - eps) / eps;
    a + eps * s * s * (T::lit(5.0) - T::lit(3.0) * s)
}

/// `u_{0,k}(ρ, θ) = u₀(η_ε(ρ), θ)`, compatible with Neumann data on `ρ = 1/k`.
pub fn modify_initial_data<T: Real>(
    domain: &Domain<T>,
    u0: &SpectralField<T>,
    k: usize,
    eps: T,
) -> Result<SpectralField<T>> {
    let inner = T::one() / T::from_usize_lossy(k.max(1));
    if k == 0 || !(eps > T::zero()) || !(inner + T::lit(2.0) * eps < domain.surface.length) {
        return Err(Error::Precondition(format!(
            "1/k + 2 eps = {} must be below {}",
            inner + T::lit(2.0) * eps,
            domain.surface.length
        )));
    }
    let mut out = u0.clone();
    for (i, &r) in domain.grid.nodes.iter().enumerate() {
        let e = eta(r, k, eps);
        if e == r {
            continue;
        }
        for s in 0..u0.slot_count() {
            out.slots[s][i] = domain.interpolate_radial(&u0.slots[s], e);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct NeumannRun<T> {
    pub k: usize,
    pub domain: Domain<T>,
    pub run: LinearRun<T>,
}

/// Solves the linear problem on `S_k = {ρ ≥ 1/k}` with Neumann data on both circles.
pub fn solve_neumann_disk<T: Real>(
    domain: &Domain<T>,
    u0: &SpectralField<T>,
    coeffs: &dyn LinearCoefficients<T>,
    k: usize,
    t_end: T,
    dt: T,
) -> Result<NeumannRun<T>> {
    let eps = T::one() / T::from_usize_lossy(4 * k.max(1));
    let u0k = modify_initial_data(domain, u0, k, eps)?;
    let sub = domain.truncate_inner(T::one() / T::from_usize_lossy(k))?;
    let start = sub.grid.offset - domain.grid.offset;
    let restricted = u0k.radial_slice(start, sub.n_rho());
    let run = run_linear(
        &sub,
        &restricted,
        coeffs,
        t_end,
        dt,
        TimeScheme::Euler,
        true,
    )?;
    Ok(NeumannRun {
        k,
        domain: sub,
        run,
    })
}

/// Space-time sup gap between two annulus runs on common nodes with `ρ ≥ rho_min`.
pub fn neumann_gap<T: Real>(a: &NeumannRun<T>, b: &NeumannRun<T>, rho_min: T) -> T {
    let start = a.domain.grid.offset.max(b.domain.grid.offset);
    let mut gap = T::zero();
    for (ua, ub) in a.run.states.iter().zip(&b.run.states) {
        let n_common = a.domain.grid.offset + a.domain.n_rho() - start;
        let sa = a
            .domain
            .synthesize(&ua.radial_slice(start - a.domain.grid.offset, n_common));
        let sb = b
            .domain
            .synthesize(&ub.radial_slice(start - b.domain.grid.offset, n_common));
        for i in 0..n_common {
            if a.domain.grid.nodes[start - a.domain.grid.offset + i] < rho_min {
                continue;
            }
            for j in 0..sa.n_theta {
                gap = gap.max((sa.get(i, j) - sb.get(i, j)).abs());
            }
        }
    }
    gap
}
