//! The normalized conical Ricci flow `∂ₜu = e^{−2u}Δ̃u + r/2 − e^{−2u}K̃`.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::domain::Domain;
use crate::elliptic::{potential_h0, potential_phi0};
use crate::error::{Error, Result};
use crate::field::{Samples, SpectralField};
use crate::linear::{advance, CoefficientSample, TimeScheme};
use crate::scalar::Real;

/// Step rejection threshold on the relative growth of `sup|K|`.
pub const CURVATURE_JUMP: f64 = 1.5;
/// Smallest admissible step before blow-up is declared.
pub const DT_MIN: f64 = 1e-8;

#[derive(Clone, Debug, Serialize)]
pub struct HistoryRow {
    pub t: f64,
    pub volume: f64,
    pub gauss_bonnet: f64,
    pub sup_k: f64,
    pub sup_u: f64,
    pub energy: f64,
    pub dt_energy_cum: f64,
}

#[derive(Clone, Debug)]
pub struct FlowState<T> {
    pub t: T,
    pub u: SpectralField<T>,
    /// Gauss curvature of `e^{2u}g̃`.
    pub k: SpectralField<T>,
    pub r: T,
    pub v0: T,
    pub history: Vec<HistoryRow>,
}

/// `∫ e^{2u} dṼ`.
pub fn volume<T: Real>(domain: &Domain<T>, u: &SpectralField<T>) -> T {
    domain.integrate(&domain.pointwise(u, |x| (x + x).exp()))
}

/// `r = 4πχ(S,β)/V₀`, making `r/2` the mean curvature of `e^{2u₀}g̃`.
pub fn normalization_constant<T: Real>(domain: &Domain<T>, u0: &SpectralField<T>) -> Result<T> {
    if !domain.surface.is_closed() {
        return Err(Error::Precondition(
            "normalization is defined on closed surfaces only".into(),
        ));
    }
    let chi = domain.surface.euler_characteristic();
    Ok(T::lit(4.0) * T::PI() * chi / volume(domain, u0))
}

/// Point samples of `K = e^{−2u}(−Δ̃u + K̃)`.
pub fn curvature_point_samples<T: Real>(domain: &Domain<T>, u: &SpectralField<T>) -> Samples<T> {
    let us = domain.synthesize(u);
    let lap = domain.synthesize(&domain.laplacian(u));
    let mut k = lap.clone();
    for i in 0..us.n_rho {
        let kt = domain.curvature[i];
        for j in 0..us.n_theta {
            k.set(
                i,
                j,
                (-(us.get(i, j) * T::lit(2.0))).exp() * (kt - lap.get(i, j)),
            );
        }
    }
    k
}

pub fn gauss_curvature<T: Real>(domain: &Domain<T>, u: &SpectralField<T>) -> SpectralField<T> {
    domain.from_samples(&curvature_point_samples(domain, u))
}

/// `∫ K dV_t`, computed as `∫ (K̃ − Δ̃u) dṼ` pointwise.
pub fn gauss_bonnet_integral<T: Real>(domain: &Domain<T>, u: &SpectralField<T>) -> T {
    let k = curvature_point_samples(domain, u);
    let e2u = domain.synthesize(u).map(|x| (x + x).exp());
    domain.integrate(&domain.from_samples(&k.zip(&e2u, |a, b| a * b)))
}

fn flow_coefficients<T: Real>(
    domain: &Domain<T>,
    u: &SpectralField<T>,
    r: T,
) -> CoefficientSample<T> {
    let a = domain.synthesize(u).map(|x| (-(x + x)).exp());
    let mut f = a.clone();
    let half_r = T::lit(0.5) * r;
    for i in 0..a.n_rho {
        for j in 0..a.n_theta {
            f.set(i, j, half_r - a.get(i, j) * domain.curvature[i]);
        }
    }
    CoefficientSample {
        a,
        b: None,
        f: Some(f),
    }
}

impl<T: Real> FlowState<T> {
    /// Initial state with `r` from the volume normalization.
    pub fn new(domain: &Domain<T>, u0: SpectralField<T>) -> Result<Self> {
        let r = normalization_constant(domain, &u0)?;
        Self::with_r(domain, u0, r)
    }

    /// Initial state with a prescribed normalization constant.
    pub fn with_r(domain: &Domain<T>, u0: SpectralField<T>, r: T) -> Result<Self> {
        if !u0.same_shape(&domain.zeros()) {
            return Err(Error::Shape(
                "initial data does not match the domain".into(),
            ));
        }
        let v0 = volume(domain, &u0);
        let k = gauss_curvature(domain, &u0);
        let mut s = Self {
            t: T::zero(),
            u: u0,
            k,
            r,
            v0,
            history: Vec::new(),
        };
        s.record(domain, T::zero());
        Ok(s)
    }

    fn record(&mut self, domain: &Domain<T>, dt_energy_cum: T) {
        let ks = curvature_point_samples(domain, &self.u);
        let row = HistoryRow {
            t: self.t.to_f64_lossy(),
            volume: volume(domain, &self.u).to_f64_lossy(),
            gauss_bonnet: gauss_bonnet_integral(domain, &self.u).to_f64_lossy(),
            sup_k: ks.sup_abs().to_f64_lossy(),
            sup_u: domain.sup_abs(&self.u).to_f64_lossy(),
            energy: domain.dirichlet_energy(&self.u).to_f64_lossy(),
            dt_energy_cum: dt_energy_cum.to_f64_lossy(),
        };
        self.history.push(row);
    }

    pub fn sup_curvature(&self, domain: &Domain<T>) -> T {
        curvature_point_samples(domain, &self.u).sup_abs()
    }

    /// Snapshot without the history.
    pub fn snapshot(&self) -> Snapshot<T> {
        Snapshot {
            t: self.t,
            u: self.u.clone(),
        }
    }
}

/// A recorded time level of a flow run.
#[derive(Clone, Debug)]
pub struct Snapshot<T> {
    pub t: T,
    pub u: SpectralField<T>,
}

/// One unguarded step of the flow with the given scheme.
pub fn flow_increment<T: Real>(
    domain: &Domain<T>,
    u: &SpectralField<T>,
    r: T,
    t: T,
    dt: T,
    scheme: TimeScheme,
) -> Result<SpectralField<T>> {
    advance(domain, u, t, dt, scheme, |_, v| {
        Ok(flow_coefficients(domain, v, r))
    })
}

fn guarded_step<T: Real>(
    domain: &Domain<T>,
    u: &SpectralField<T>,
    r: T,
    t: T,
    dt: T,
    scheme: TimeScheme,
    sup_k: T,
) -> Result<SpectralField<T>> {
    let trial = flow_increment(domain, u, r, t, dt, scheme);
    let accepted = trial.ok().and_then(|next| {
        let k = curvature_point_samples(domain, &next).sup_abs();
        let finite = k.is_finite() && next.max_coefficient().is_finite();
        (finite && k <= T::lit(CURVATURE_JUMP) * sup_k.max(T::min_positive_value())).then_some(next)
    });
    if let Some(next) = accepted {
        return Ok(next);
    }
    let half = T::lit(0.5) * dt;
    if half < T::lit(DT_MIN) {
        return Err(Error::BlowUp {
            t: t.to_f64_lossy(),
            sup_k: sup_k.to_f64_lossy(),
            dt: dt.to_f64_lossy(),
        });
    }
    let mid = guarded_step(domain, u, r, t, half, scheme, sup_k)?;
    let k_mid = curvature_point_samples(domain, &mid).sup_abs();
    guarded_step(domain, &mid, r, t + half, half, scheme, k_mid)
}

/// Advances the state by `dt`, halving on curvature jumps; appends a history row.
pub fn step_flow<T: Real>(
    domain: &Domain<T>,
    state: &FlowState<T>,
    dt: T,
    scheme: TimeScheme,
) -> Result<FlowState<T>> {
    if !(dt > T::zero()) {
        return Err(Error::Precondition(format!("dt = {dt} must be positive")));
    }
    let sup_k = state.sup_curvature(domain);
    let u = guarded_step(domain, &state.u, state.r, state.t, dt, scheme, sup_k)?;
    let d = u.sub(&state.u);
    let cum =
        T::lit(state.history.last().map_or(0.0, |h| h.dt_energy_cum)) + domain.inner(&d, &d) / dt;
    let mut next = FlowState {
        t: state.t + dt,
        k: gauss_curvature(domain, &u),
        u,
        r: state.r,
        v0: state.v0,
        history: state.history.clone(),
    };
    next.record(domain, cum);
    Ok(next)
}

#[derive(Clone, Debug)]
pub struct FlowRun<T> {
    pub state: FlowState<T>,
    /// Snapshots every `record_every` steps, including the initial one.
    pub snapshots: Vec<Snapshot<T>>,
    pub dt: T,
    /// Set when the run stopped on curvature blow-up.
    pub blow_up: Option<BlowUpReport>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BlowUpReport {
    pub t: f64,
    pub sup_k: f64,
    pub dt: f64,
}

/// Runs the flow to `t_end` with fixed nominal step `dt`.
pub fn run_flow<T: Real>(
    domain: &Domain<T>,
    initial: FlowState<T>,
    dt: T,
    t_end: T,
    scheme: TimeScheme,
    record_every: usize,
) -> Result<FlowRun<T>> {
    if !(dt > T::zero()) || !(t_end >= T::zero()) {
        return Err(Error::Precondition(
            "dt must be positive and t_end nonnegative".into(),
        ));
    }
    let steps = (t_end / dt).round().to_usize().unwrap_or(0);
    let every = record_every.max(1);
    let mut snapshots = vec![initial.snapshot()];
    let mut state = initial;
    let t0 = state.t;
    let mut blow_up = None;
    for n in 0..steps {
        match step_flow(domain, &state, dt, scheme) {
            Ok(mut next) => {
                next.t = t0 + dt * T::from_usize_lossy(n + 1);
                if let Some(h) = next.history.last_mut() {
                    h.t = next.t.to_f64_lossy();
                }
                state = next;
                if (n + 1) % every == 0 {
                    snapshots.push(state.snapshot());
                }
            }
            Err(Error::BlowUp { t, sup_k, dt }) => {
                blow_up = Some(BlowUpReport { t, sup_k, dt });
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(FlowRun {
        state,
        snapshots,
        dt: dt * T::from_usize_lossy(every),
        blow_up,
    })
}

#[derive(Clone, Debug)]
pub struct PicardResult<T> {
    /// The last iterate at step times `0, dt, …`.
    pub trajectory: Vec<SpectralField<T>>,
    /// `‖u_{i+1} − u_i‖` over space and step times.
    pub differences: Vec<T>,
    /// Successive ratios of `differences`.
    pub ratios: Vec<T>,
    pub iterations: usize,
}

impl<T: Real> PicardResult<T> {
    /// Ratio of the first two differences.
    pub fn contraction_factor(&self) -> Option<T> {
        self.ratios.first().copied()
    }
}

struct Iterate<T> {
    steps: Vec<SpectralField<T>>,
    halves: Vec<SpectralField<T>>,
}

/// Picard iteration `∂ₜu_i = e^{−2u_{i−1}}Δ̃u_i + r/2 − e^{−2u_{i−1}}K̃`, `u_i(0) = u₀`.
///
/// Each iterate is advanced by the extrapolated semi-implicit scheme with
/// coefficients read from the previous iterate, so the fixed point coincides
/// with the direct solver.
pub fn picard_local_solve<T: Real>(
    domain: &Domain<T>,
    u0: &SpectralField<T>,
    r: T,
    t_end: T,
    dt: T,
    tol: T,
    max_iters: usize,
) -> Result<PicardResult<T>> {
    if !(dt > T::zero()) || !(t_end > T::zero()) || !(tol > T::zero()) {
        return Err(Error::Precondition("dt, T and tol must be positive".into()));
    }
    let steps = (t_end / dt).round().to_usize().unwrap_or(0).max(1);
    let mut prev = Iterate {
        steps: vec![u0.clone(); steps + 1],
        halves: vec![u0.clone(); steps],
    };
    let mut differences = Vec::new();
    let mut ratios = Vec::new();
    let half = T::lit(0.5) * dt;
    for it in 1..=max_iters {
        let mut next = Iterate {
            steps: Vec::with_capacity(steps + 1),
            halves: Vec::with_capacity(steps),
        };
        next.steps.push(u0.clone());
        for n in 0..steps {
            let u = &next.steps[n];
            let c0 = flow_coefficients(domain, &prev.steps[n], r);
            let c1 = flow_coefficients(domain, &prev.halves[n], r);
            let full = crate::linear::semi_implicit_euler(domain, u, &c0, dt)?;
            let h1 = crate::linear::semi_implicit_euler(domain, u, &c0, half)?;
            let h2 = crate::linear::semi_implicit_euler(domain, &h1, &c1, half)?;
            next.steps.push(h2.scale(T::lit(2.0)).sub(&full));
            next.halves.push(h1);
        }
        let diff = next
            .steps
            .iter()
            .zip(&prev.steps)
            .fold(T::zero(), |m, (a, b)| m.max(domain.sup_abs(&a.sub(b))));
        if let Some(&last) = differences.last() {
            if last > T::zero() {
                ratios.push(diff / last);
            }
        }
        differences.push(diff);
        prev = next;
        if diff <= tol {
            return Ok(PicardResult {
                trajectory: prev.steps,
                differences,
                ratios,
                iterations: it,
            });
        }
    }
    Err(Error::NonContraction {
        iterations: max_iters,
        ratio: ratios.last().map_or(f64::NAN, |r| r.to_f64_lossy()),
    })
}

/// Exponential integrator for `φ′ = rφ + 2u + 2h₀` with `u` linear over each step.
#[derive(Clone, Debug)]
pub struct PotentialTracker<T> {
    pub phi: SpectralField<T>,
    pub h0: SpectralField<T>,
    pub r: T,
    pub v0: T,
}

/// `(E₁, W₁) = (∫₀ʰ e^{r(h−s)} ds, ∫₀ʰ e^{r(h−s)} s/h ds)`.
fn exp_weights<T: Real>(r: T, h: T) -> (T, T) {
    let z = r * h;
    if z.abs() < T::one() {
        let mut e1 = T::zero();
        let mut w1 = T::zero();
        let mut term = T::one();
        for n in 0..30 {
            let nf = T::from_usize_lossy(n);
            // term = zⁿ / n!
            e1 += term / (nf + T::one());
            w1 += term / ((nf + T::one()) * (nf + T::lit(2.0)));
            term = term * z / (nf + T::one());
        }
        (h * e1, h * w1)
    } else {
        let e = z.exp();
        let e1 = (e - T::one()) / r;
        let w1 = (e - T::one() - z) / (r * z);
        (e1, w1)
    }
}

impl<T: Real> PotentialTracker<T> {
    /// Starts from `h₀` and `φ₀` solved for the flow's `r`, `V₀` and `u₀`.
    pub fn new(domain: &Domain<T>, u0: &SpectralField<T>, r: T, v0: T) -> Result<Self> {
        let h0 = potential_h0(domain, r, v0)?;
        let phi = potential_phi0(domain, u0, v0)?;
        Ok(Self { phi, h0, r, v0 })
    }

    /// Advances `φ` over a step of length `h` from `u_old` to `u_new`.
    pub fn advance(&mut self, u_old: &SpectralField<T>, u_new: &SpectralField<T>, h: T) {
        let (e1, w1) = exp_weights(self.r, h);
        let two = T::lit(2.0);
        let decay = (self.r * h).exp();
        let mut phi = self.phi.scale(decay);
        phi = phi.axpy(two * (e1 - w1), u_old);
        phi = phi.axpy(two * w1, u_new);
        phi = phi.axpy(two * e1, &self.h0);
        self.phi = phi;
    }

    /// `‖Δ̃φ − (e^{2u} − V₀/Ṽ)‖∞` over the collocation points.
    pub fn residual(&self, domain: &Domain<T>, u: &SpectralField<T>) -> T {
        potential_residual(domain, &self.phi, u, self.v0)
    }
}

pub fn potential_residual<T: Real>(
    domain: &Domain<T>,
    phi: &SpectralField<T>,
    u: &SpectralField<T>,
    v0: T,
) -> T {
    let lap = domain.synthesize(&domain.laplacian(phi));
    let e2u = domain.synthesize(u).map(|x| (x + x).exp());
    let mean = v0 / domain.volume();
    lap.zip(&e2u, |a, b| a - b + mean).sup_abs()
}

#[derive(Clone, Debug)]
pub struct PotentialReport<T> {
    pub phi: Vec<SpectralField<T>>,
    pub residuals: Vec<T>,
}

/// Integrates the potential along a snapshot sequence with uniform spacing.
pub fn evolve_potential<T: Real>(
    domain: &Domain<T>,
    snapshots: &[Snapshot<T>],
    r: T,
    v0: T,
) -> Result<PotentialReport<T>> {
    let first = snapshots
        .first()
        .ok_or_else(|| Error::Precondition("empty snapshot sequence".into()))?;
    let mut tracker = PotentialTracker::new(domain, &first.u, r, v0)?;
    let mut phi = vec![tracker.phi.clone()];
    let mut residuals = vec![tracker.residual(domain, &first.u)];
    for w in snapshots.windows(2) {
        tracker.advance(&w[0].u, &w[1].u, w[1].t - w[0].t);
        residuals.push(tracker.residual(domain, &w[1].u));
        phi.push(tracker.phi.clone());
    }
    Ok(PotentialReport { phi, residuals })
}

fn uniform_spacing<T: Real>(snapshots: &[Snapshot<T>], min_len: usize) -> Result<T> {
    if snapshots.len() < min_len {
        return Err(Error::Precondition(format!(
            "need at least {min_len} snapshots, got {}",
            snapshots.len()
        )));
    }
    let dt = snapshots[1].t - snapshots[0].t;
    let uniform = snapshots
        .windows(2)
        .all(|w| ((w[1].t - w[0].t) - dt).abs() <= T::lit(1e-9) * dt.abs().max(T::one()));
    if !(dt > T::zero()) || !uniform {
        return Err(Error::Precondition(
            "snapshots must be uniformly spaced in time".into(),
        ));
    }
    Ok(dt)
}

/// Default distance from the poles below which fourth and higher spatial
/// derivatives are dominated by rounding, as a fraction of `L`.
pub const POLE_FLOOR_FRACTION: f64 = 1.0 / 32.0;

/// Per interior snapshot, `sup|∂ₜK − e^{−2u}Δ̃K − K(2K − r)|` with centered `∂ₜK`,
/// taken over nodes at distance at least `floor` from the poles.
pub fn curvature_evolution_residual<T: Real>(
    domain: &Domain<T>,
    snapshots: &[Snapshot<T>],
    r: T,
    floor: T,
) -> Result<Vec<T>> {
    let dt = uniform_spacing(snapshots, 3)?;
    let ks: Vec<SpectralField<T>> = snapshots
        .iter()
        .map(|s| gauss_curvature(domain, &s.u))
        .collect();
    let two = T::lit(2.0);
    let mut out = Vec::with_capacity(snapshots.len() - 2);
    for n in 1..snapshots.len() - 1 {
        let dk = domain
            .synthesize(&ks[n + 1].sub(&ks[n - 1]))
            .map(|x| x / (two * dt));
        let rhs = curvature_rhs(domain, &snapshots[n].u, &ks[n], r);
        out.push(domain.sup_beyond(&dk.zip(&rhs, |a, b| a - b), floor));
    }
    Ok(out)
}

fn curvature_rhs<T: Real>(
    domain: &Domain<T>,
    u: &SpectralField<T>,
    k: &SpectralField<T>,
    r: T,
) -> Samples<T> {
    let a = domain.synthesize(u).map(|x| (-(x + x)).exp());
    let lap = domain.synthesize(&domain.laplacian(k));
    let ks = domain.synthesize(k);
    let two = T::lit(2.0);
    let mut out = lap.clone();
    for (o, ((&a, &l), &kv)) in out
        .data
        .iter_mut()
        .zip(a.data.iter().zip(&lap.data).zip(&ks.data))
    {
        *o = a * l + kv * (two * kv - r);
    }
    out
}

/// Residual of `∂ₜw = e^{−2u}Δ̃w + w(6K − 2r) − K(2K − r)²` with `w = ∂ₜK`
/// taken from the curvature equation and `∂ₜw` from second differences of `K`.
pub fn curvature_second_residual<T: Real>(
    domain: &Domain<T>,
    snapshots: &[Snapshot<T>],
    r: T,
    floor: T,
) -> Result<Vec<T>> {
    let dt = uniform_spacing(snapshots, 3)?;
    let ks: Vec<SpectralField<T>> = snapshots
        .iter()
        .map(|s| gauss_curvature(domain, &s.u))
        .collect();
    let two = T::lit(2.0);
    let six = T::lit(6.0);
    let mut out = Vec::with_capacity(snapshots.len() - 2);
    for n in 1..snapshots.len() - 1 {
        let u = &snapshots[n].u;
        let k = &ks[n];
        let w = domain.from_samples(&curvature_rhs(domain, u, k, r));
        let a = domain.synthesize(u).map(|x| (-(x + x)).exp());
        let lap_w = domain.synthesize(&domain.laplacian(&w));
        let ws = domain.synthesize(&w);
        let kss = domain.synthesize(k);
        let second = domain
            .synthesize(&ks[n + 1].sub(&k.scale(two)).add(&ks[n - 1]))
            .map(|x| x / (dt * dt));
        let mut defect = second.clone();
        for idx in 0..second.data.len() {
            let kv = kss.data[idx];
            let q = two * kv - r;
            let rhs =
                a.data[idx] * lap_w.data[idx] + ws.data[idx] * (six * kv - two * r) - kv * q * q;
            defect.data[idx] = second.data[idx] - rhs;
        }
        out.push(domain.sup_beyond(&defect, floor));
    }
    Ok(out)
}

/// Highest supported cascade order.
pub const CASCADE_MAX: usize = 4;

/// Polynomial in the time derivatives `D₁ = ∂ₜu, …, D₅` with constant coefficients.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DerivativePoly {
    /// Monomial exponents of `(D₁, …, D₅)` mapped to coefficients.
    pub terms: BTreeMap<[u8; 5], f64>,
}

impl DerivativePoly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        let mut p = Self::zero();
        p.push([0; 5], c);
        p
    }

    /// `c·D_i` for `i ≥ 1`.
    pub fn variable(i: usize, c: f64) -> Self {
        let mut e = [0u8; 5];
        e[i - 1] = 1;
        let mut p = Self::zero();
        p.push(e, c);
        p
    }

    fn push(&mut self, e: [u8; 5], c: f64) {
        let v = self.terms.entry(e).or_insert(0.0);
        *v += c;
        if *v == 0.0 {
            self.terms.remove(&e);
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut p = self.clone();
        for (&e, &c) in &other.terms {
            p.push(e, c);
        }
        p
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut p = Self::zero();
        for (&e, &c) in &self.terms {
            p.push(e, c * s);
        }
        p
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut p = Self::zero();
        for (ea, &ca) in &self.terms {
            for (eb, &cb) in &other.terms {
                let mut e = [0u8; 5];
                for i in 0..5 {
                    e[i] = ea[i] + eb[i];
                }
                p.push(e, ca * cb);
            }
        }
        p
    }

    /// Time derivative by the chain rule `∂ₜD_i = D_{i+1}`.
    pub fn time_derivative(&self) -> Self {
        let mut p = Self::zero();
        for (e, &c) in &self.terms {
            for i in 0..5 {
                if e[i] == 0 {
                    continue;
                }
                assert!(i + 1 < 5, "derivative leaves the supported variables");
                let mut f = *e;
                f[i] -= 1;
                f[i + 1] += 1;
                p.push(f, c * f64::from(e[i]));
            }
        }
        p
    }

    /// Largest variable index that occurs.
    pub fn depth(&self) -> usize {
        self.terms
            .keys()
            .filter_map(|e| e.iter().rposition(|&x| x > 0))
            .max()
            .map_or(0, |i| i + 1)
    }

    pub fn eval<T: Real>(&self, d: &[T]) -> T {
        let mut acc = T::zero();
        for (e, &c) in &self.terms {
            let mut m = T::lit(c);
            for (i, &p) in e.iter().enumerate() {
                if p > 0 {
                    m *= d[i].powi(i32::from(p));
                }
            }
            acc += m;
        }
        acc
    }
}

/// `(P_l, Q_l)` for `l = 1..=l_max` in `∂ₜ^{l+1}u = e^{−2u}Δ̃∂ₜ^l u + P_l∂ₜ^l u + Q_l`.
pub fn cascade_polynomials(r: f64, l_max: usize) -> Vec<(DerivativePoly, DerivativePoly)> {
    let d1 = DerivativePoly::variable(1, 1.0);
    let mut out = Vec::with_capacity(l_max);
    let mut p = d1.scale(-2.0);
    let mut q = d1.scale(r);
    for l in 1..=l_max {
        out.push((p.clone(), q.clone()));
        if l == l_max {
            break;
        }
        let dl = DerivativePoly::variable(l, 1.0);
        let next_p = d1.scale(-2.0).add(&p);
        let next_q = d1
            .scale(2.0)
            .mul(&p.mul(&dl).add(&q))
            .add(&p.time_derivative().mul(&dl))
            .add(&q.time_derivative());
        p = next_p;
        q = next_q;
    }
    out
}

#[derive(Clone, Debug)]
pub struct CascadeLevel<T> {
    /// `∂ₜ^l u` for `l = 1..=l_max`.
    pub derivatives: Vec<SpectralField<T>>,
}

/// `∂ₜ^l u`, `1 ≤ l ≤ l_max`, evaluated spatially from `u` alone.
pub fn time_derivatives<T: Real>(
    domain: &Domain<T>,
    u: &SpectralField<T>,
    r: T,
    l_max: usize,
) -> Result<CascadeLevel<T>> {
    if l_max == 0 || l_max > CASCADE_MAX {
        return Err(Error::CascadeOrder(l_max));
    }
    let polys = cascade_polynomials(r.to_f64_lossy(), l_max);
    let a = domain.synthesize(u).map(|x| (-(x + x)).exp());
    let k = curvature_point_samples(domain, u);
    let d1 = k.map(|kv| T::lit(0.5) * r - kv);
    let mut fields = vec![domain.from_samples(&d1)];
    let mut samples = vec![d1];
    for l in 1..l_max {
        let (p, q) = &polys[l - 1];
        let lap = domain.synthesize(&domain.laplacian(&fields[l - 1]));
        let mut next = lap.clone();
        let mut vars = [T::zero(); 5];
        for idx in 0..next.data.len() {
            for (v, s) in vars.iter_mut().zip(&samples) {
                *v = s.data[idx];
            }
            let dl = samples[l - 1].data[idx];
            next.data[idx] = a.data[idx] * lap.data[idx] + p.eval(&vars) * dl + q.eval(&vars);
        }
        fields.push(domain.from_samples(&next));
        samples.push(next);
    }
    Ok(CascadeLevel {
        derivatives: fields,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CascadeReport {
    pub l_max: usize,
    pub delta: f64,
    pub pole_floor: f64,
    /// `sup |∂ₜ^l u|` over snapshots with `t ≥ δ` and nodes beyond the pole floor, index `l − 1`.
    pub sup_norms: Vec<f64>,
    /// The same sup over all nodes.
    pub sup_norms_all_nodes: Vec<f64>,
}

/// Sup norms of `∂ₜ^l u` over the snapshots with `t ≥ delta`.
pub fn time_derivative_cascade<T: Real>(
    domain: &Domain<T>,
    snapshots: &[Snapshot<T>],
    r: T,
    l_max: usize,
    delta: T,
    floor: T,
) -> Result<CascadeReport> {
    if l_max == 0 || l_max > CASCADE_MAX {
        return Err(Error::CascadeOrder(l_max));
    }
    let mut sup = vec![0.0f64; l_max];
    let mut sup_all = vec![0.0f64; l_max];
    for s in snapshots.iter().filter(|s| s.t >= delta - T::lit(1e-12)) {
        let c = time_derivatives(domain, &s.u, r, l_max)?;
        for (l, f) in c.derivatives.iter().enumerate() {
            let samples = domain.synthesize(f);
            sup[l] = sup[l].max(domain.sup_beyond(&samples, floor).to_f64_lossy());
            sup_all[l] = sup_all[l].max(samples.sup_abs().to_f64_lossy());
        }
    }
    Ok(CascadeReport {
        l_max,
        delta: delta.to_f64_lossy(),
        pole_floor: floor.to_f64_lossy(),
        sup_norms: sup,
        sup_norms_all_nodes: sup_all,
    })
}
