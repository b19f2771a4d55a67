//! Asymptotic expansions at the north cone point.
//!
//! Model terms are `ρ^{2j + k/(β+1)}·trig(lθ)` with `l ≤ k`, `k ≡ l (mod 2)`.
//! Harmonic terms have `j = 0, k = l`; products stay in the family with
//! `j = 0`, and inverting the Laplacian raises `j`.

use serde::Serialize;

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::field::{slot, slot_mode, SpectralField, Trig};
use crate::quad::{gauss_legendre, lagrange, stencil_start, weighted_least_squares, Tridiag};
use crate::scalar::Real;

/// Exponent tolerance for term identity.
pub const EXPONENT_TOLERANCE: f64 = 1e-9;
/// Distance from `2 + q` below which a mode exponent counts as resonant.
pub const RESONANCE_TOLERANCE: f64 = 1e-6;
/// Shift applied to an order that collides with a resonance.
pub const RESONANCE_SHIFT: f64 = 1e-4;
/// Radial band used to read off harmonic coefficients.
pub const HARMONIC_BAND: (f64, f64) = (1.0 / 512.0, 1.0 / 32.0);
/// Outer radius of the least-squares fitting region.
pub const FIT_RADIUS: f64 = 0.25;
/// Allowed variation of `u_l ρ^{−c_l}` across the harmonic band.
pub const HARMONIC_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ExpansionTerm {
    pub j: usize,
    pub k: usize,
    pub l: usize,
    pub trig: Trig,
}

impl ExpansionTerm {
    pub fn new(j: usize, k: usize, l: usize, trig: Trig) -> Result<Self> {
        if l > k || (k - l) % 2 != 0 {
            return Err(Error::Precondition(format!(
                "term with k = {k}, l = {l} needs l <= k and k - l even"
            )));
        }
        if trig == Trig::Sin && l == 0 {
            return Err(Error::Precondition("sin term needs l >= 1".into()));
        }
        Ok(Self { j, k, l, trig })
    }

    pub fn constant() -> Self {
        Self {
            j: 0,
            k: 0,
            l: 0,
            trig: Trig::Cos,
        }
    }

    /// Regular harmonic `ρ^{l/(β+1)} trig(lθ)`.
    pub fn harmonic(l: usize, trig: Trig) -> Self {
        let trig = if l == 0 { Trig::Cos } else { trig };
        Self {
            j: 0,
            k: l,
            l,
            trig,
        }
    }

    pub fn is_admissible(&self) -> bool {
        self.l <= self.k && (self.k - self.l) % 2 == 0 && !(self.trig == Trig::Sin && self.l == 0)
    }

    pub fn is_harmonic(&self) -> bool {
        self.j == 0 && self.k == self.l
    }

    pub fn exponent<T: Real>(&self, beta: T) -> T {
        T::from_usize_lossy(2 * self.j) + T::from_usize_lossy(self.k) / (beta + T::one())
    }

    pub fn slot(&self) -> usize {
        slot(self.l, self.trig)
    }

    pub fn eval<T: Real>(&self, beta: T, rho: T, theta: T) -> T {
        rho.powf(self.exponent(beta)) * self.trig.eval(self.l, theta)
    }
}

fn same_function<T: Real>(a: &ExpansionTerm, b: &ExpansionTerm, beta: T) -> bool {
    a.l == b.l
        && a.trig == b.trig
        && (a.exponent(beta) - b.exponent(beta)).abs() < T::lit(EXPONENT_TOLERANCE)
}

fn trig_rank(t: Trig) -> u8 {
    match t {
        Trig::Cos => 0,
        Trig::Sin => 1,
    }
}

/// Every distinct term `ρ^σ trig(lθ)` with `σ < q`, sorted by `(σ, l, trig)`.
///
/// Coinciding exponents (rational β) are listed once, under the smallest `j`.
pub fn enumerate_terms<T: Real>(beta: T, q: T) -> Vec<ExpansionTerm> {
    let mut out: Vec<ExpansionTerm> = Vec::new();
    if !(q > T::zero()) || !(beta > -T::one()) {
        return out;
    }
    let mut j = 0usize;
    while T::from_usize_lossy(2 * j) < q {
        let mut k = 0usize;
        loop {
            let t0 = ExpansionTerm {
                j,
                k,
                l: k,
                trig: Trig::Cos,
            };
            if t0.exponent(beta) >= q {
                break;
            }
            for l in (k % 2..=k).step_by(2) {
                for trig in [Trig::Cos, Trig::Sin] {
                    let t = ExpansionTerm { j, k, l, trig };
                    if !t.is_admissible() {
                        continue;
                    }
                    if !out.iter().any(|o| same_function(o, &t, beta)) {
                        out.push(t);
                    }
                }
            }
            k += 1;
        }
        j += 1;
    }
    out.sort_by(|a, b| {
        let (ea, eb) = (a.exponent(beta), b.exponent(beta));
        if (ea - eb).abs() >= T::lit(EXPONENT_TOLERANCE) {
            return ea.partial_cmp(&eb).unwrap_or(std::cmp::Ordering::Equal);
        }
        (a.l, trig_rank(a.trig)).cmp(&(b.l, trig_rank(b.trig)))
    });
    out
}

/// Product of two terms by the product-to-sum identities.
pub fn multiply_terms<T: Real>(t1: &ExpansionTerm, t2: &ExpansionTerm) -> Vec<(ExpansionTerm, T)> {
    let j = t1.j + t2.j;
    let k = t1.k + t2.k;
    let (l1, l2) = (t1.l, t2.l);
    let sum = l1 + l2;
    let diff = l1.abs_diff(l2);
    let half = T::lit(0.5);
    let mut raw: Vec<(usize, Trig, T)> = Vec::with_capacity(2);
    match (t1.trig, t2.trig) {
        (Trig::Cos, Trig::Cos) => {
            raw.push((diff, Trig::Cos, half));
            raw.push((sum, Trig::Cos, half));
        }
        (Trig::Sin, Trig::Sin) => {
            raw.push((diff, Trig::Cos, half));
            raw.push((sum, Trig::Cos, -half));
        }
        (a, _) => {
            raw.push((sum, Trig::Sin, half));
            if diff > 0 {
                let sin_first = a == Trig::Sin;
                let sign = if (l1 > l2) == sin_first { half } else { -half };
                raw.push((diff, Trig::Sin, sign));
            }
        }
    }
    let mut out: Vec<(ExpansionTerm, T)> = Vec::with_capacity(2);
    for (l, trig, c) in raw {
        if trig == Trig::Sin && l == 0 {
            continue;
        }
        let t = ExpansionTerm { j, k, l, trig };
        match out.iter_mut().find(|(o, _)| *o == t) {
            Some((_, acc)) => *acc += c,
            None => out.push((t, c)),
        }
    }
    out.retain(|(_, c)| *c != T::zero());
    out
}

/// `σ² − l²/(β+1)²`: the factor `Δ̃` produces on a term.
pub fn laplacian_coefficient<T: Real>(t: &ExpansionTerm, beta: T) -> T {
    let s = t.exponent(beta);
    let c = T::from_usize_lossy(t.l) / (beta + T::one());
    s * s - c * c
}

/// `Δ̃` of a single term: `None` for harmonic terms.
pub fn laplacian_term<T: Real>(t: &ExpansionTerm, beta: T) -> Result<Option<(ExpansionTerm, T)>> {
    if t.is_harmonic() {
        return Ok(None);
    }
    if t.j == 0 {
        return Err(Error::Precondition(format!(
            "Laplacian of rho^{} trig({}θ) leaves the term family",
            t.exponent(beta).to_f64_lossy(),
            t.l
        )));
    }
    let out = ExpansionTerm { j: t.j - 1, ..*t };
    Ok(Some((out, laplacian_coefficient(t, beta))))
}

#[derive(Clone, Debug)]
pub struct Expansion<T> {
    pub beta: T,
    pub order_q: T,
    pub terms: Vec<(ExpansionTerm, T)>,
    pub remainder: Option<SpectralField<T>>,
}

impl<T: Real> Expansion<T> {
    pub fn new(beta: T, order_q: T) -> Self {
        Self {
            beta,
            order_q,
            terms: Vec::new(),
            remainder: None,
        }
    }

    /// Adds `c·t`, merging with an existing term of the same exponent and mode.
    pub fn push(&mut self, t: ExpansionTerm, c: T) {
        let beta = self.beta;
        match self
            .terms
            .iter_mut()
            .find(|(o, _)| same_function(o, &t, beta))
        {
            Some((_, acc)) => *acc += c,
            None => self.terms.push((t, c)),
        }
    }

    pub fn coefficient(&self, t: &ExpansionTerm) -> T {
        self.terms
            .iter()
            .filter(|(o, _)| same_function(o, t, self.beta))
            .fold(T::zero(), |a, (_, c)| a + *c)
    }

    /// Drops terms with exponent `≥ order_q` and sorts the rest.
    pub fn truncate(&mut self) {
        let (beta, q) = (self.beta, self.order_q);
        self.terms.retain(|(t, _)| t.exponent(beta) < q);
        self.sort();
    }

    pub fn sort(&mut self) {
        let beta = self.beta;
        self.terms.sort_by(|(a, _), (b, _)| {
            let (ea, eb) = (a.exponent(beta), b.exponent(beta));
            if (ea - eb).abs() >= T::lit(EXPONENT_TOLERANCE) {
                return ea.partial_cmp(&eb).unwrap_or(std::cmp::Ordering::Equal);
            }
            (a.l, trig_rank(a.trig)).cmp(&(b.l, trig_rank(b.trig)))
        });
    }

    /// `Σ a_v v` as a field on the domain.
    pub fn synthesize(&self, domain: &Domain<T>) -> Result<SpectralField<T>> {
        let mut out = domain.zeros();
        for (t, c) in &self.terms {
            if t.l > domain.l_max {
                return Err(Error::Shape(format!(
                    "term with l = {} beyond l_max = {}",
                    t.l, domain.l_max
                )));
            }
            let s = t.exponent(self.beta);
            let slot = &mut out.slots[t.slot()];
            for (v, &r) in slot.iter_mut().zip(domain.nodes()) {
                *v += *c * r.powf(s);
            }
        }
        Ok(out)
    }

    pub fn without_remainder(&self) -> Self {
        Self {
            remainder: None,
            ..self.clone()
        }
    }
}

/// Termwise `Δ̃` of a finite combination.
pub fn laplacian_span<T: Real>(e: &Expansion<T>) -> Result<Expansion<T>> {
    let mut out = Expansion::new(e.beta, e.order_q - T::lit(2.0));
    for (t, c) in &e.terms {
        if let Some((t2, f)) = laplacian_term(t, e.beta)? {
            out.push(t2, *c * f);
        }
    }
    Ok(out)
}

/// Termwise inverse of `Δ̃`: `ρ^σ trig ↦ ρ^{σ+2} trig / ((σ+2)² − c²)`.
pub fn invert_laplacian_span<T: Real>(e: &Expansion<T>) -> Expansion<T> {
    let mut out = Expansion::new(e.beta, e.order_q + T::lit(2.0));
    for (t, c) in &e.terms {
        let up = ExpansionTerm { j: t.j + 1, ..*t };
        out.push(up, *c / laplacian_coefficient(&up, e.beta));
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayEstimate {
    pub order: f64,
    /// `(k, sup)` over the annuli `2^{−k−1} < ρ < 2^{−k}`.
    pub annuli: Vec<(usize, f64)>,
    /// Ratios of consecutive annulus sups, outer over inner.
    pub ratios: Vec<f64>,
}

fn fit_decay(profile: Vec<(usize, f64)>) -> Result<DecayEstimate> {
    if profile.len() < 5 {
        return Err(Error::Unresolved(format!(
            "{} dyadic annuli (need at least 5)",
            profile.len()
        )));
    }
    let ratios = profile
        .windows(2)
        .map(|w| {
            if w[1].1 > 0.0 {
                w[0].1 / w[1].1
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let start = if profile.len() >= 6 {
        profile.len() - 5
    } else {
        0
    };
    let used = &profile[start..];
    let top = used.iter().fold(0.0f64, |m, p| m.max(p.1));
    if top == 0.0 {
        return Ok(DecayEstimate {
            order: f64::INFINITY,
            annuli: profile,
            ratios,
        });
    }
    let floor = top * 1e-300;
    let pts: Vec<(f64, f64)> = used
        .iter()
        .map(|&(k, s)| (-(k as f64) * std::f64::consts::LN_2, s.max(floor).ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(DecayEstimate {
        order: sxy / sxx,
        annuli: profile,
        ratios,
    })
}

/// Decay slope of a field at the north pole from its dyadic sup profile.
pub fn decay_order_estimate<T: Real>(
    domain: &Domain<T>,
    field: &SpectralField<T>,
) -> Result<DecayEstimate> {
    let profile = domain
        .dyadic_sup_profile(field)?
        .into_iter()
        .map(|(k, s)| (k, s.to_f64_lossy()))
        .collect();
    fit_decay(profile)
}

/// Decay slope of a radial profile sampled on increasing positive nodes.
pub fn radial_decay_order<T: Real>(nodes: &[T], values: &[T]) -> Result<DecayEstimate> {
    let n = nodes.len();
    if n < 4 || values.len() != n {
        return Err(Error::Shape("radial profile too short".into()));
    }
    let xs: Vec<T> = nodes.iter().map(|r| r.ln()).collect();
    let interp = |rho: T| -> T {
        let x = rho.ln();
        let i = locate(&xs, x);
        let s = stencil_start(i, 4, n);
        lagrange(&xs[s..s + 4], &values[s..s + 4], x)
    };
    let mut profile = Vec::new();
    let mut k = 0usize;
    loop {
        let outer = T::lit(0.5).powi(k as i32);
        let inner = outer * T::lit(0.5);
        if inner < nodes[0] {
            break;
        }
        if outer <= nodes[n - 1] {
            let mut sup = interp(inner).abs().max(interp(outer).abs());
            for (r, v) in nodes.iter().zip(values) {
                if *r > inner && *r < outer {
                    sup = sup.max(v.abs());
                }
            }
            profile.push((k, sup.to_f64_lossy()));
        }
        k += 1;
    }
    fit_decay(profile)
}

fn locate<T: Real>(xs: &[T], x: T) -> usize {
    let n = xs.len();
    match xs.binary_search_by(|v| v.partial_cmp(&x).unwrap_or(std::cmp::Ordering::Less)) {
        Ok(i) => i.min(n - 2),
        Err(i) => i.saturating_sub(1).min(n - 2),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum OdeCase {
    /// `c > 2 + q`: the inner antiderivative vanishes at the outer radius.
    Outer,
    /// `c < 2 + q`: integrated from the pole.
    Inner,
}

/// Solution of `L_l A = a` on a radial node set, evaluable between nodes.
///
/// Works in `x = ln ρ` with the scaled quantities
/// `J = ρ^{−(p+1)}∫₀^ρ a s^{c+1} ds` (`p = q + c + 1`) and
/// `K = ρ^{−m}∫ s^{m−1}J ds` (`m = q + 2 − c`), so `A = ±ρ^{q+2}K`.
#[derive(Clone, Debug)]
pub struct RadialOdeSolution<T> {
    pub l: usize,
    pub c: T,
    pub q: T,
    pub case: OdeCase,
    pub nodes: Vec<T>,
    pub values: Vec<T>,
    xs: Vec<T>,
    smooth: Vec<T>,
    curv: Vec<T>,
    j: Vec<T>,
    k: Vec<T>,
    gl: (Vec<T>, Vec<T>),
}

impl<T: Real> RadialOdeSolution<T> {
    fn p1(&self) -> T {
        self.q + self.c + T::lit(2.0)
    }

    fn m(&self) -> T {
        self.q + T::lit(2.0) - self.c
    }

    fn smooth_at(&self, x: T) -> T {
        let i = locate(&self.xs, x);
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = T::one() - a;
        let six = T::lit(6.0);
        a * self.smooth[i]
            + b * self.smooth[i + 1]
            + ((a * a * a - a) * self.curv[i] + (b * b * b - b) * self.curv[i + 1]) * h * h / six
    }

    fn gauss(&self, a: T, b: T, g: impl Fn(T) -> T) -> T {
        let half = T::lit(0.5) * (b - a);
        let mid = T::lit(0.5) * (a + b);
        let (x, w) = &self.gl;
        x.iter()
            .zip(w)
            .map(|(&xi, &wi)| wi * g(mid + half * xi))
            .sum::<T>()
            * half
    }

    fn j_at(&self, i: usize, y: T) -> T {
        let p1 = self.p1();
        let x0 = self.xs[i];
        self.j[i] * (-p1 * (y - x0)).exp()
            + self.gauss(x0, y, |z| self.smooth_at(z) * (p1 * (z - y)).exp())
    }

    fn k_at(&self, i: usize, y: T) -> T {
        let m = self.m();
        match self.case {
            OdeCase::Inner => {
                let x0 = self.xs[i];
                self.k[i] * (-m * (y - x0)).exp()
                    + self.gauss(x0, y, |z| self.j_at(i, z) * (m * (z - y)).exp())
            }
            OdeCase::Outer => {
                let x1 = self.xs[i + 1];
                self.k[i + 1] * (m * (x1 - y)).exp()
                    + self.gauss(y, x1, |z| self.j_at(i, z) * (m * (z - y)).exp())
            }
        }
    }

    /// `A(ρ)` for `ρ` within the node range.
    pub fn eval(&self, rho: T) -> T {
        let y = rho.ln();
        let i = locate(&self.xs, y);
        let sign = match self.case {
            OdeCase::Inner => T::one(),
            OdeCase::Outer => -T::one(),
        };
        sign * rho.powf(self.q + T::lit(2.0)) * self.k_at(i, y)
    }

    /// `‖L_l A − a‖∞ / ‖a‖∞` over the inner half of the nodes, with `L_l` applied
    /// by a fourth-order difference in `ln ρ` with step `eps`.
    pub fn relative_residual(&self, a: &[T], eps: T) -> T {
        let n = self.nodes.len();
        let mut num = T::zero();
        let mut den = T::zero();
        let two = T::lit(2.0);
        for i in 1..n / 2 {
            let x = self.xs[i];
            if x - two * eps < self.xs[0] {
                continue;
            }
            let f = |h: T| self.eval((x + h).exp());
            let a0 = f(T::zero());
            let d1 = (f(eps) - two * a0 + f(-eps)) / (eps * eps);
            let d2 = (f(two * eps) - two * a0 + f(-two * eps)) / (T::lit(4.0) * eps * eps);
            let dxx = (T::lit(4.0) * d1 - d2) / T::lit(3.0);
            let rho = self.nodes[i];
            let lap = (dxx - self.c * self.c * a0) / (rho * rho);
            num = num.max((lap - a[i]).abs());
            den = den.max(a[i].abs());
        }
        if den > T::zero() {
            num / den
        } else {
            num
        }
    }
}

/// Second derivatives of the natural cubic spline through `(xs, ys)`.
fn spline_curvature<T: Real>(xs: &[T], ys: &[T]) -> Vec<T> {
    let n = xs.len();
    let mut sys = Tridiag::zeros(n);
    let mut rhs = vec![T::zero(); n];
    sys.diag[0] = T::one();
    sys.diag[n - 1] = T::one();
    let six = T::lit(6.0);
    for i in 1..n - 1 {
        let h0 = xs[i] - xs[i - 1];
        let h1 = xs[i + 1] - xs[i];
        sys.lower[i] = h0 / six;
        sys.diag[i] = (h0 + h1) / T::lit(3.0);
        sys.upper[i] = h1 / six;
        rhs[i] = (ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0;
    }
    sys.solve(&rhs).unwrap_or_else(|| vec![T::zero(); n])
}

/// Solves `A'' + A'/ρ − c²A/ρ² = a` with `c = l/(β+1)` for `a` decaying like `ρ^q`.
///
/// For `c < 2 + q` the solution is integrated out from the pole; for `c > 2 + q`
/// the inner antiderivative is pinned to zero at the last node.
pub fn radial_ode_solve<T: Real>(
    l: usize,
    beta: T,
    nodes: &[T],
    a: &[T],
    q: T,
) -> Result<RadialOdeSolution<T>> {
    let n = nodes.len();
    if n < 8 || a.len() != n {
        return Err(Error::Shape(format!("{} nodes, {} samples", n, a.len())));
    }
    let c = T::from_usize_lossy(l) / (beta + T::one());
    let two = T::lit(2.0);
    if (c - (two + q)).abs() < T::lit(RESONANCE_TOLERANCE) {
        return Err(Error::Resonance {
            c: c.to_f64_lossy(),
            target: (two + q).to_f64_lossy(),
        });
    }
    let zero = a.iter().all(|v| *v == T::zero());
    if !zero {
        let est = radial_decay_order(nodes, a)?;
        if est.order < (q - T::lit(0.1)).to_f64_lossy() {
            return Err(Error::InsufficientDecay {
                measured: est.order,
                required: (q - T::lit(0.1)).to_f64_lossy(),
            });
        }
    }
    let case = if c > two + q {
        OdeCase::Outer
    } else {
        OdeCase::Inner
    };
    let xs: Vec<T> = nodes.iter().map(|r| r.ln()).collect();
    let smooth: Vec<T> = nodes.iter().zip(a).map(|(&r, &v)| v * r.powf(-q)).collect();
    let mut sol = RadialOdeSolution {
        l,
        c,
        q,
        case,
        nodes: nodes.to_vec(),
        values: vec![T::zero(); n],
        curv: spline_curvature(&xs, &smooth),
        xs,
        smooth,
        j: vec![T::zero(); n],
        k: vec![T::zero(); n],
        gl: gauss_legendre(8),
    };
    if zero {
        return Ok(sol);
    }
    let p1 = sol.p1();
    let m = sol.m();
    sol.j[0] = sol.smooth[0] / p1;
    for i in 0..n - 1 {
        sol.j[i + 1] = sol.j_at(i, sol.xs[i + 1]);
    }
    match case {
        OdeCase::Inner => {
            sol.k[0] = sol.j[0] / m;
            for i in 0..n - 1 {
                sol.k[i + 1] = sol.k_at(i, sol.xs[i + 1]);
            }
        }
        OdeCase::Outer => {
            sol.k[n - 1] = T::zero();
            for i in (0..n - 1).rev() {
                sol.k[i] = sol.k_at(i, sol.xs[i]);
            }
        }
    }
    let sign = match case {
        OdeCase::Inner => T::one(),
        OdeCase::Outer => -T::one(),
    };
    for i in 0..n {
        sol.values[i] = sign * nodes[i].powf(q + two) * sol.k[i];
    }
    Ok(sol)
}

/// Number of leading nodes inside the exactly conical region about the north pole
/// (capped at `ρ = 1`).
pub fn cone_node_count<T: Real>(domain: &Domain<T>) -> Result<usize> {
    let limit = domain.surface.cone_radius().min(T::one());
    let count = domain.nodes().iter().take_while(|&&r| r <= limit).count();
    if count < 16 {
        return Err(Error::Precondition(format!(
            "surface has no resolved conical region about the pole (radius {limit})"
        )));
    }
    Ok(count)
}

#[derive(Clone, Debug)]
pub struct RemainderSolution<T> {
    pub w: SpectralField<T>,
    /// `(l, l²·sup|A_l|)` per angular mode.
    pub mode_bounds: Vec<(usize, T)>,
    pub max_relative_residual: T,
}

/// Assembles `w_o = Σ A_l cos lθ + B_l sin lθ` with `Δ̃w_o = f_o` on the conical region.
/// Values beyond that region are zero.
pub fn solve_remainder<T: Real>(
    domain: &Domain<T>,
    f_o: &SpectralField<T>,
    q: T,
) -> Result<RemainderSolution<T>> {
    let orders = vec![q; f_o.slot_count()];
    solve_remainder_modes(domain, f_o, &orders)
}

fn solve_remainder_modes<T: Real>(
    domain: &Domain<T>,
    f_o: &SpectralField<T>,
    orders: &[T],
) -> Result<RemainderSolution<T>> {
    let m = cone_node_count(domain)?;
    let nodes = &domain.nodes()[..m];
    let beta = domain.surface.beta;
    let mut w = SpectralField::zeros_like(f_o);
    let mut bounds = vec![T::zero(); f_o.l_max + 1];
    let mut worst = T::zero();
    for s in 0..f_o.slot_count() {
        let (l, _) = slot_mode(s);
        let a = &f_o.slots[s][..m];
        if a.iter().all(|v| *v == T::zero()) {
            continue;
        }
        let sol = radial_ode_solve(l, beta, nodes, a, orders[s])?;
        worst = worst.max(sol.relative_residual(a, T::lit(1e-3)));
        let sup = sol.values.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
        let l2 = T::from_usize_lossy(l * l).max(T::one());
        bounds[l] = bounds[l].max(l2 * sup);
        w.slots[s][..m].copy_from_slice(&sol.values);
    }
    Ok(RemainderSolution {
        w,
        mode_bounds: bounds.into_iter().enumerate().collect(),
        max_relative_residual: worst,
    })
}

/// Reads off `u = a₀ + Σ (a_l cos lθ + b_l sin lθ) ρ^{l/(β+1)}` on the harmonic band.
pub fn harmonic_expand<T: Real>(
    domain: &Domain<T>,
    u: &SpectralField<T>,
    q: T,
) -> Result<Expansion<T>> {
    let beta = domain.surface.beta;
    let (lo, hi) = (T::lit(HARMONIC_BAND.0), T::lit(HARMONIC_BAND.1));
    if domain.surface.cone_radius() < hi || domain.nodes()[0] > lo {
        return Err(Error::Precondition(
            "harmonic band outside the conical region".into(),
        ));
    }
    let band: Vec<usize> = (0..domain.n_rho())
        .filter(|&i| domain.nodes()[i] >= lo && domain.nodes()[i] <= hi)
        .collect();
    let scale = band
        .iter()
        .flat_map(|&i| u.slots.iter().map(move |v| v[i].abs()))
        .fold(T::zero(), |a, b| a.max(b));
    let mut e = Expansion::new(beta, q);
    let mut fits = Vec::with_capacity(u.slot_count());
    for s in 0..u.slot_count() {
        let (l, trig) = slot_mode(s);
        let c = domain.surface.mode_exponent(l);
        let mut num = T::zero();
        let mut den = T::zero();
        for &i in &band {
            let p = domain.nodes()[i].powf(c);
            num += p * u.slots[s][i];
            den += p * p;
        }
        let a = num / den;
        let dev = band.iter().fold(T::zero(), |m, &i| {
            m.max((u.slots[s][i] - a * domain.nodes()[i].powf(c)).abs())
        });
        if scale > T::zero() && dev > T::lit(HARMONIC_TOLERANCE) * scale {
            return Err(Error::NotHarmonic {
                l,
                trig: trig.name(),
                variation: (dev / scale).to_f64_lossy(),
            });
        }
        fits.push((ExpansionTerm::harmonic(l, trig), a));
    }
    for (t, a) in fits {
        if t.exponent(beta) < q && a != T::zero() {
            e.push(t, a);
        }
    }
    e.sort();
    e.remainder = Some(u.sub(&e.synthesize(domain)?));
    Ok(e)
}

fn fit_nodes<T: Real>(domain: &Domain<T>) -> Result<Vec<usize>> {
    let m = cone_node_count(domain)?;
    Ok((0..m)
        .filter(|&i| domain.nodes()[i] < T::lit(FIT_RADIUS))
        .collect())
}

/// Weighted least-squares projection of `f` onto the span of the terms with `σ < q`.
pub fn project_onto_terms<T: Real>(
    domain: &Domain<T>,
    f: &SpectralField<T>,
    q: T,
) -> Result<Expansion<T>> {
    let beta = domain.surface.beta;
    let mut e = Expansion::new(beta, q);
    let terms = enumerate_terms(beta, q);
    let idx = fit_nodes(domain)?;
    let rho: Vec<f64> = idx
        .iter()
        .map(|&i| domain.nodes()[i].to_f64_lossy())
        .collect();
    let qf = q.to_f64_lossy();
    let w: Vec<f64> = rho.iter().map(|r| r.powf(-qf)).collect();
    for s in 0..f.slot_count() {
        let (l, trig) = slot_mode(s);
        let basis: Vec<&ExpansionTerm> = terms
            .iter()
            .filter(|t| t.l == l && (l == 0 || t.trig == trig))
            .collect();
        if basis.is_empty() || l > f.l_max {
            continue;
        }
        let y: Vec<f64> = idx.iter().map(|&i| f.slots[s][i].to_f64_lossy()).collect();
        let rows: Vec<Vec<f64>> = rho
            .iter()
            .map(|&r| {
                basis
                    .iter()
                    .map(|t| r.powf(t.exponent(beta.to_f64_lossy())))
                    .collect()
            })
            .collect();
        let fit = weighted_least_squares(&rows, &y, &w)
            .ok_or_else(|| Error::Unresolved("term projection".into()))?;
        for (t, c) in basis.iter().zip(fit.coefficients) {
            e.push(**t, T::lit(c));
        }
    }
    e.sort();
    Ok(e)
}

/// `w − η` where `Δ̃_h η = Δ̃_h w` on the first `m` nodes, with `η` started from
/// zero at the pole.
fn remove_grid_defect<T: Real>(
    domain: &Domain<T>,
    w: &SpectralField<T>,
    m: usize,
) -> SpectralField<T> {
    let mut out = w.clone();
    for s in 0..w.slot_count() {
        let (l, _) = slot_mode(s);
        let g = domain.laplacian_mode(l, &w.slots[s]);
        let op = domain.stencil(l);
        let mut eta = vec![T::zero(); m];
        for i in 0..m - 1 {
            let prev = if i > 0 {
                op.lower[i] * eta[i - 1]
            } else {
                T::zero()
            };
            eta[i + 1] = (g[i] - prev - op.diag[i] * eta[i]) / op.upper[i];
        }
        for (v, e) in out.slots[s].iter_mut().zip(&eta) {
            *v -= *e;
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct RungReport {
    pub rung: usize,
    pub q: f64,
    pub terms: usize,
    pub remainder_order: f64,
    pub remainder_ode_residual: f64,
}

#[derive(Clone, Debug)]
pub struct ExpansionReport<T> {
    pub expansion: Expansion<T>,
    pub remainder_order: f64,
    pub rungs: Vec<RungReport>,
}

/// Shifts `q` off every resonance `c_l = 2 + q`, `l ≤ l_max`.
pub fn avoid_resonance<T: Real>(beta: T, l_max: usize, q: T) -> T {
    let mut q = q;
    for _ in 0..8 {
        let hit = (0..=l_max).any(|l| {
            let c = T::from_usize_lossy(l) / (beta + T::one());
            (c - (T::lit(2.0) + q)).abs() < T::lit(RESONANCE_SHIFT)
        });
        if !hit {
            break;
        }
        q += T::lit(RESONANCE_SHIFT);
    }
    q
}

/// Bootstrap extraction of an expansion up to `q_target` for `u` with `Δ̃u = f(u)`.
pub fn expand_solution<T: Real>(
    domain: &Domain<T>,
    u: &SpectralField<T>,
    rhs_builder: impl Fn(&SpectralField<T>) -> Result<SpectralField<T>>,
    q_target: T,
) -> Result<ExpansionReport<T>> {
    if !(q_target > T::zero()) {
        return Err(Error::Precondition("q_target must be positive".into()));
    }
    let beta = domain.surface.beta;
    let q_target = avoid_resonance(beta, domain.l_max, q_target);
    let f = rhs_builder(u)?;
    if !f.same_shape(u) {
        return Err(Error::Shape("right-hand side does not match u".into()));
    }
    let m = cone_node_count(domain)?;
    let nodes = &domain.nodes()[..m];
    let mut q = (T::lit(0.9) * T::lit(2.0).min(T::one() / (beta + T::one()))).min(q_target);
    let mut rungs = Vec::new();
    let mut best: Option<(Expansion<T>, f64)> = None;
    for rung in 0.. {
        let xi_f = project_onto_terms(domain, &f, q)?;
        let xi_u = invert_laplacian_span(&xi_f);
        let f_o = f.sub(&xi_f.synthesize(domain)?);
        let scale = f.max_coefficient();
        let mut masked = f_o.clone();
        let mut orders = Vec::with_capacity(f_o.slot_count());
        for s in 0..f_o.slot_count() {
            let (l, _) = slot_mode(s);
            let part = &f_o.slots[s][..m];
            let sup = part.iter().fold(T::zero(), |a, v| a.max(v.abs()));
            if sup <= T::lit(1e-13) * scale.max(T::lit(1e-300)) {
                masked.slots[s].iter_mut().for_each(|v| *v = T::zero());
                orders.push(q);
                continue;
            }
            let nominal = q.max(domain.surface.mode_exponent(l));
            let measured = radial_decay_order(nodes, part)?.order;
            let mut ql = if measured.is_finite() {
                nominal.min(T::lit(measured))
            } else {
                nominal
            };
            let c = domain.surface.mode_exponent(l);
            if (c - (T::lit(2.0) + ql)).abs() < T::lit(RESONANCE_SHIFT) {
                ql -= T::lit(RESONANCE_SHIFT);
            }
            orders.push(ql);
        }
        let w_o = solve_remainder_modes(domain, &masked, &orders)?;
        let w_h = u.sub(&xi_u.synthesize(domain)?).sub(&w_o.w);
        let harmonic = harmonic_expand(domain, &remove_grid_defect(domain, &w_h, m), q)?;
        let mut e = Expansion::new(beta, q);
        for (t, c) in xi_u.terms.iter().chain(&harmonic.terms) {
            e.push(*t, *c);
        }
        e.truncate();
        let remainder = u.sub(&e.synthesize(domain)?);
        let order = decay_order_estimate(domain, &remainder)?.order;
        rungs.push(RungReport {
            rung,
            q: q.to_f64_lossy(),
            terms: e.terms.len(),
            remainder_order: order,
            remainder_ode_residual: w_o.max_relative_residual.to_f64_lossy(),
        });
        if order < q.to_f64_lossy() - 0.15 {
            return Err(Error::DecayStall {
                rung,
                q: q.to_f64_lossy(),
                order,
            });
        }
        e.remainder = Some(remainder);
        best = Some((e, order));
        if q >= q_target {
            break;
        }
        q = (q + T::one()).min(q_target);
    }
    let (expansion, remainder_order) = best.expect("at least one rung");
    Ok(ExpansionReport {
        expansion,
        remainder_order,
        rungs,
    })
}

/// `u ↦ Δ̃u` with the grid Laplacian.
pub fn discrete_rhs<T: Real>(
    domain: &Domain<T>,
) -> impl Fn(&SpectralField<T>) -> Result<SpectralField<T>> + '_ {
    move |u: &SpectralField<T>| Ok(domain.laplacian(u))
}

/// `Δ̃u = e^{2u}(∂ₜu − r/2) + K̃` for a flow snapshot, with `∂ₜu` from the flow equation.
pub fn flow_rhs<T: Real>(
    domain: &Domain<T>,
    r: T,
) -> impl Fn(&SpectralField<T>) -> Result<SpectralField<T>> + '_ {
    move |u: &SpectralField<T>| {
        let c = crate::flow::time_derivatives(domain, u, r, 1)?;
        let two = T::lit(2.0);
        let e2u = domain.synthesize(u).map(|x| (two * x).exp());
        let d1 = domain.synthesize(&c.derivatives[0]);
        let half_r = T::lit(0.5) * r;
        let k = SpectralField::radial(domain.curvature.clone(), domain.l_max);
        Ok(domain
            .from_samples(&e2u.zip(&d1, |a, b| a * (b - half_r)))
            .add(&k))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LogFit {
    pub coefficient: f64,
    pub std_error: f64,
    pub regressors: usize,
}

/// Fits mode `(l, trig)` of `field` by the terms with `σ < q` plus `ρ^σ ln ρ`,
/// weighted by `ρ^{−2q}`, and reports the log coefficient with its regression
/// standard error.
pub fn log_correction_fit<T: Real>(
    domain: &Domain<T>,
    field: &SpectralField<T>,
    l: usize,
    trig: Trig,
    q: T,
    sigma: T,
) -> Result<LogFit> {
    let beta = domain.surface.beta.to_f64_lossy();
    let trig = if l == 0 { Trig::Cos } else { trig };
    let basis: Vec<ExpansionTerm> = enumerate_terms(beta, q.to_f64_lossy())
        .into_iter()
        .filter(|t| t.l == l && t.trig == trig)
        .collect();
    let idx = fit_nodes(domain)?;
    let rho: Vec<f64> = idx
        .iter()
        .map(|&i| domain.nodes()[i].to_f64_lossy())
        .collect();
    let sg = sigma.to_f64_lossy();
    let qf = q.to_f64_lossy();
    let rows: Vec<Vec<f64>> = rho
        .iter()
        .map(|&r| {
            let mut row: Vec<f64> = basis.iter().map(|t| r.powf(t.exponent(beta))).collect();
            row.push(r.powf(sg) * r.ln());
            row
        })
        .collect();
    let s = slot(l, trig);
    let y: Vec<f64> = idx
        .iter()
        .map(|&i| field.slots[s][i].to_f64_lossy())
        .collect();
    let w: Vec<f64> = rho.iter().map(|r| r.powf(-2.0 * qf)).collect();
    let fit = weighted_least_squares(&rows, &y, &w)
        .ok_or_else(|| Error::Unresolved("log-correction fit".into()))?;
    let last = basis.len();
    Ok(LogFit {
        coefficient: fit.coefficients[last],
        std_error: fit.std_errors[last],
        regressors: last + 1,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct LogTest {
    pub l: usize,
    pub trig: Trig,
    pub sigma: f64,
    pub coefficient: f64,
    pub regression_error: f64,
    /// Change of the coefficient under one grid refinement.
    pub resolution_change: f64,
    pub total_error: f64,
    pub passed: bool,
}

/// Log-correction test with an uncertainty combining the regression standard
/// error and the grid-refinement change of the coefficient.
pub fn log_correction_test<T: Real>(
    coarse: (&Domain<T>, &SpectralField<T>),
    fine: (&Domain<T>, &SpectralField<T>),
    l: usize,
    trig: Trig,
    q: T,
    sigma: T,
) -> Result<LogTest> {
    let a = log_correction_fit(coarse.0, coarse.1, l, trig, q, sigma)?;
    let b = log_correction_fit(fine.0, fine.1, l, trig, q, sigma)?;
    let change = (a.coefficient - b.coefficient).abs();
    let total = (a.std_error * a.std_error + change * change).sqrt();
    Ok(LogTest {
        l,
        trig: if l == 0 { Trig::Cos } else { trig },
        sigma: sigma.to_f64_lossy(),
        coefficient: a.coefficient,
        regression_error: a.std_error,
        resolution_change: change,
        total_error: total,
        passed: a.coefficient.abs() <= 3.0 * total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_examples() {
        let t = enumerate_terms(0.0f64, 1.5);
        assert_eq!(t.len(), 3);
        assert_eq!(t[0], ExpansionTerm::constant());
        assert_eq!((t[1].l, t[1].trig), (1, Trig::Cos));
        assert_eq!((t[2].l, t[2].trig), (1, Trig::Sin));
        let t = enumerate_terms(1.0f64, 1.1);
        let got: Vec<(usize, usize, usize, Trig)> =
            t.iter().map(|t| (t.j, t.k, t.l, t.trig)).collect();
        assert_eq!(
            got,
            vec![
                (0, 0, 0, Trig::Cos),
                (0, 1, 1, Trig::Cos),
                (0, 1, 1, Trig::Sin),
                (0, 2, 0, Trig::Cos),
                (0, 2, 2, Trig::Cos),
                (0, 2, 2, Trig::Sin),
            ]
        );
    }

    #[test]
    fn square_of_first_harmonic() {
        let t = ExpansionTerm::harmonic(1, Trig::Cos);
        let p = multiply_terms::<f64>(&t, &t);
        assert_eq!(p.len(), 2);
        assert_eq!(p[0], (ExpansionTerm::new(0, 2, 0, Trig::Cos).unwrap(), 0.5));
        assert_eq!(p[1], (ExpansionTerm::new(0, 2, 2, Trig::Cos).unwrap(), 0.5));
    }

    #[test]
    fn constant_is_multiplicative_identity() {
        let one = ExpansionTerm::constant();
        let t = ExpansionTerm::new(2, 5, 3, Trig::Sin).unwrap();
        assert_eq!(multiply_terms::<f64>(&one, &t), vec![(t, 1.0)]);
        assert_eq!(multiply_terms::<f64>(&t, &one), vec![(t, 1.0)]);
    }

    #[test]
    fn laplacian_of_terms() {
        let h = ExpansionTerm::harmonic(3, Trig::Cos);
        assert!(laplacian_term(&h, 0.7f64).unwrap().is_none());
        let r2 = ExpansionTerm::new(1, 0, 0, Trig::Cos).unwrap();
        let (t, c) = laplacian_term(&r2, 0.0f64).unwrap().unwrap();
        assert_eq!(t, ExpansionTerm::constant());
        assert!((c - 4.0).abs() < 1e-15);
        let t = ExpansionTerm::new(1, 1, 1, Trig::Cos).unwrap();
        let (out, c) = laplacian_term(&t, 1.0f64).unwrap().unwrap();
        assert_eq!(out, ExpansionTerm::harmonic(1, Trig::Cos));
        assert!((c - 6.0).abs() < 1e-14);
    }

    #[test]
    fn inverse_of_flat_constant() {
        let mut e = Expansion::new(0.0f64, 0.5);
        e.push(ExpansionTerm::constant(), 1.0);
        let v = invert_laplacian_span(&e);
        assert_eq!(v.terms.len(), 1);
        assert_eq!(
            v.terms[0].0,
            ExpansionTerm::new(1, 0, 0, Trig::Cos).unwrap()
        );
        assert!((v.terms[0].1 - 0.25).abs() < 1e-15);
        assert!(invert_laplacian_span(&Expansion::new(0.0f64, 1.0))
            .terms
            .is_empty());
    }

    #[test]
    fn radial_ode_reproduces_power() {
        let nodes: Vec<f64> = (0..200)
            .map(|i| 1e-4 * 1.05f64.powi(i))
            .filter(|r| *r <= 1.0)
            .collect();
        let q = 0.7;
        let a: Vec<f64> = nodes.iter().map(|r| r.powf(q)).collect();
        let sol = radial_ode_solve(0, 0.5, &nodes, &a, q).unwrap();
        for (r, v) in nodes.iter().zip(&sol.values) {
            let exact = r.powf(q + 2.0) / ((q + 2.0) * (q + 2.0));
            assert!((v - exact).abs() <= 1e-10 * exact, "{r}: {v} vs {exact}");
        }
        assert!(sol.relative_residual(&a, 1e-3) < 1e-6);
    }

    #[test]
    fn radial_ode_rejects_resonance() {
        let nodes: Vec<f64> = (0..100).map(|i| 1e-3 * 1.08f64.powi(i)).collect();
        let a: Vec<f64> = nodes.iter().map(|r| r * r).collect();
        let e = radial_ode_solve(4, 0.0, &nodes, &a, 2.0).unwrap_err();
        assert!(matches!(e, Error::Resonance { .. }));
    }

    #[test]
    fn radial_ode_zero_input() {
        let nodes: Vec<f64> = (0..100).map(|i| 1e-3 * 1.07f64.powi(i)).collect();
        let a = vec![0.0; nodes.len()];
        let sol = radial_ode_solve(2, 1.0, &nodes, &a, 1.0).unwrap();
        assert!(sol.values.iter().all(|v| *v == 0.0));
    }
}
