use std::f64::consts::PI;

use conic_flow::geometry::{conformal_radius_map, conformal_radius_inverse, DEFAULT_BLEND_WIDTH};
use conic_flow::*;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

#[test]
fn euler_characteristic_of_footballs() {
    for (beta, chi) in [(1.0, 4.0), (0.0, 2.0), (-0.5, 1.0)] {
        let s = ConeSurface::football_cc(beta).unwrap();
        assert_eq!(s.euler_characteristic(), chi);
        let s = ConeSurface::football_flatcap(beta, DEFAULT_BLEND_WIDTH).unwrap();
        assert_eq!(s.euler_characteristic(), chi);
    }
}

#[test]
fn conformal_radius_examples() {
    assert!(close(conformal_radius_map(0.0, 0.5), 0.5, 1e-15));
    assert!(close(conformal_radius_map(1.0, 1.0), 0.5, 1e-15));
    assert!(close(conformal_radius_map(-0.5, 0.25), 1.0, 1e-15));
    for beta in [-0.5, 0.0, 2.0] {
        let r = 0.37;
        assert!(close(conformal_radius_inverse(beta, conformal_radius_map(beta, r)), r, 1e-13));
    }
}

#[test]
fn volume_weight_examples() {
    let cc = ConeSurface::football_cc(1.0).unwrap();
    assert!(close(cc.volume_weight(PI / 2.0).unwrap(), 2.0, 1e-15));
    assert_eq!(cc.volume_weight(0.0).unwrap(), 0.0);
    let disk = ConeSurface::cone_disk(1.0).unwrap();
    assert!(close(disk.volume_weight(0.5).unwrap(), 1.0, 1e-15));
    assert_eq!(disk.volume_weight(0.0).unwrap(), 0.0);
    assert!(matches!(
        disk.volume_weight(1.5),
        Err(Error::OutOfDomain { .. })
    ));
}

#[test]
fn invalid_cone_order_is_rejected() {
    assert!(matches!(ConeSurface::football_cc(-1.0), Err(Error::Surface(_))));
    assert!(matches!(ConeSurface::cone_disk(-2.0), Err(Error::Surface(_))));
    assert!(ConeSurface::football_flatcap(1.0, 3.5).is_err());
}

#[test]
fn surfaces_are_conical_at_the_poles() {
    for s in [
        ConeSurface::football_cc(0.7).unwrap(),
        ConeSurface::football_flatcap(0.7, DEFAULT_BLEND_WIDTH).unwrap(),
    ] {
        for d in [1e-2, 1e-3] {
            let slope = s.warp(d) / d;
            let slope_south = s.warp(s.length - d) / d;
            assert!((slope - 1.7).abs() <= 1.7 * d * d, "{:?} {slope}", s.kind);
            assert!((slope_south - 1.7).abs() <= 1.7 * d * d);
        }
        assert!(s.warp(0.0).abs() < 1e-15 && s.warp(s.length).abs() < 1e-12);
    }
    let cc = ConeSurface::football_cc(1.0).unwrap();
    for rho in [0.1, 1.0, 2.5] {
        assert_eq!(cc.background_curvature(rho), 1.0);
    }
}

#[test]
fn grids_are_monotone_and_end_correctly() {
    let cc = Domain::reference(ConeSurface::football_cc(1.0).unwrap()).unwrap();
    let n = cc.nodes();
    assert!(n[0] > 0.0 && *n.last().unwrap() < PI);
    assert!(n.windows(2).all(|w| w[1] > w[0]));
    let disk = Domain::reference(ConeSurface::cone_disk(0.0).unwrap()).unwrap();
    assert_eq!(*disk.nodes().last().unwrap(), 1.0);
}

#[test]
fn analysis_examples() {
    let beta = 1.0;
    let d = Domain::reference(ConeSurface::cone_disk(beta).unwrap()).unwrap();
    let f = d.analyze_fn(|_, th| th.cos());
    for s in 0..f.slot_count() {
        let want = if s == field::slot(1, Trig::Cos) { 1.0 } else { 0.0 };
        assert!(f.slots[s].iter().all(|v| (v - want).abs() < 1e-14));
    }
    let f = d.analyze_fn(|_, _| 3.0);
    assert!(f.slots[0].iter().all(|v| (v - 3.0).abs() < 1e-14));
    assert!(f.slots[1..].iter().flatten().all(|v| v.abs() < 1e-14));
    let c = 1.0 / (beta + 1.0);
    let f = d.analyze_fn(|r, th| r.powf(c) * (2.0 * th).sin());
    let s = field::slot(2, Trig::Sin);
    for (i, &r) in d.nodes().iter().enumerate() {
        assert!((f.slots[s][i] - r.powf(c)).abs() < 1e-14);
    }
    let others: f64 = (0..f.slot_count())
        .filter(|&k| k != s)
        .flat_map(|k| f.slots[k].iter().map(|v| v.abs()))
        .fold(0.0, f64::max);
    assert!(others < 1e-14);
}

#[test]
fn synthesis_inverts_analysis_on_band_limited_fields() {
    let d = Domain::reference(ConeSurface::football_cc(0.5).unwrap()).unwrap();
    let f = d.analyze_fn(|r, th| r.sin() * (1.0 + 0.3 * (3.0 * th).cos() - 0.2 * (16.0 * th).sin()));
    let back = d.analyze(&d.synthesize(&f)).unwrap();
    let err = f.sub(&back).max_coefficient();
    assert!(err < 1e-13, "{err}");
}

fn interior_error(d: &Domain, got: &SpectralField, want: impl Fn(f64) -> f64, slot: usize, band: (f64, f64)) -> f64 {
    d.nodes()
        .iter()
        .enumerate()
        .filter(|(_, &r)| r > band.0 && r < band.1)
        .map(|(i, &r)| (got.slots[slot][i] - want(r)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn laplacian_annihilates_cone_harmonics() {
    for beta in [-0.5, 0.0, 1.5] {
        let coarse = Domain::reference(ConeSurface::cone_disk(beta).unwrap()).unwrap();
        let mut errs = Vec::new();
        for d in [coarse.clone(), coarse.refine()] {
            for k in [1usize, 3] {
                let c = d.surface.mode_exponent(k);
                let u = d.single_mode(k, Trig::Cos, |r| r.powf(c));
                let lap = d.laplacian(&u);
                errs.push(interior_error(&d, &lap, |_| 0.0, field::slot(k, Trig::Cos), (0.05, 0.9)));
            }
        }
        for k in 0..2 {
            let (a, b) = (errs[k], errs[k + 2]);
            assert!(a < 5e-2, "beta {beta}: {a}");
            assert!(b < a / 3.0 || b < 1e-9, "beta {beta}: {a} -> {b}");
        }
    }
}

#[test]
fn laplacian_of_monomials() {
    let coarse = Domain::reference(ConeSurface::cone_disk(0.0).unwrap()).unwrap();
    let mut errs = Vec::new();
    for d in [coarse.clone(), coarse.refine()] {
        let u = d.single_mode(0, Trig::Cos, |r| r * r);
        errs.push(interior_error(&d, &d.laplacian(&u), |_| 4.0, 0, (1e-3, 0.99)));
    }
    assert!(errs[0] < 3e-2 && errs[1] < errs[0] / 3.0, "{errs:?}");

    let coarse = Domain::reference(ConeSurface::cone_disk(1.0).unwrap()).unwrap();
    let s = field::slot(2, Trig::Cos);
    let mut errs = Vec::new();
    for d in [coarse.clone(), coarse.refine()] {
        let u = d.single_mode(2, Trig::Cos, |r| r.powi(4));
        errs.push(interior_error(&d, &d.laplacian(&u), |r| 15.0 * r * r, s, (1e-3, 0.99)));
    }
    assert!(errs[0] < 5e-2 && errs[1] < errs[0] / 3.0, "{errs:?}");
}

fn simpson(g: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut acc = g(a) + g(b);
    for i in 1..n {
        acc += g(a + h * i as f64) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

#[test]
fn integration_examples() {
    let beta = 1.0;
    let d = Domain::reference(ConeSurface::football_cc(beta).unwrap()).unwrap();
    let vol = d.integrate(&d.constant(1.0));
    assert!(close(vol, 4.0 * PI * (beta + 1.0), 1e-8), "{vol}");
    let cos = d.single_mode(1, Trig::Cos, |_| 1.0);
    assert_eq!(d.integrate(&cos), 0.0);
    let u = d.single_mode(0, Trig::Cos, f64::sin);
    let oracle = 2.0 * PI * simpson(|r| r.sin() * (beta + 1.0) * r.sin(), 0.0, PI, 2560);
    assert!(close(d.integrate(&u), oracle, 1e-8), "{} vs {oracle}", d.integrate(&u));
}

#[test]
fn dirichlet_energy_examples() {
    let beta = 1.0;
    let d = Domain::reference(ConeSurface::cone_disk(beta).unwrap()).unwrap();
    assert!(d.dirichlet_energy(&d.constant(2.5)).abs() < 1e-12);
    let c = 1.0 / (beta + 1.0);
    let u = d.single_mode(1, Trig::Cos, |r| r.powf(c));
    let e = d.dirichlet_energy(&u);
    // Conformal chart: z = r e^{iφ} with ρ = r^{β+1}/(β+1); the disk ρ ≤ 1 is r ≤ R.
    let big_r = (beta + 1.0f64).powf(c);
    let value = |x: f64, y: f64| {
        let r = x.hypot(y);
        conformal_radius_map(beta, r).powf(c) * y.atan2(x).cos()
    };
    let m = 800;
    let h = 2.0 * big_r / m as f64;
    let mut oracle = 0.0;
    for i in 0..m {
        for j in 0..m {
            let (x, y) = (-big_r + h * (i as f64 + 0.5), -big_r + h * (j as f64 + 0.5));
            if x.hypot(y) >= big_r {
                continue;
            }
            let dx = (value(x + 0.5 * h, y) - value(x - 0.5 * h, y)) / h;
            let dy = (value(x, y + 0.5 * h) - value(x, y - 0.5 * h)) / h;
            oracle += (dx * dx + dy * dy) * h * h;
        }
    }
    assert!((e - oracle).abs() < 1e-2 * oracle, "{e} vs {oracle}");
    let scaled = d.dirichlet_energy(&u.scale(3.0));
    assert!((scaled - 9.0 * e).abs() <= 1e-12 * scaled);
}

#[test]
fn dyadic_profile_examples() {
    let d = Domain::reference(ConeSurface::cone_disk(0.0).unwrap()).unwrap();
    let q = 1.3;
    let p = d.dyadic_sup_profile(&d.single_mode(0, Trig::Cos, |r| r.powf(q))).unwrap();
    for &(k, s) in &p {
        let want = 0.5f64.powf(k as f64 * q);
        assert!((s - want).abs() < 1e-5 * want, "annulus {k}: {s} vs {want}");
    }
    let p = d.dyadic_sup_profile(&d.constant(1.0)).unwrap();
    assert!(p.iter().all(|&(_, s)| (s - 1.0).abs() < 1e-13));
    let u = d.single_mode(1, Trig::Cos, |r| r.sqrt());
    let p = d.dyadic_sup_profile(&u).unwrap();
    let (_, s3) = p.iter().find(|(k, _)| *k == 3).copied().unwrap();
    assert!((s3 - 0.5f64.powf(1.5)).abs() < 1e-3);
}

#[test]
fn f32_domain_agrees_with_f64() {
    let d32 = domain::Domain::<f32>::reference(geometry::ConeSurface::<f32>::football_cc(1.0).unwrap()).unwrap();
    let d64 = Domain::reference(ConeSurface::football_cc(1.0).unwrap()).unwrap();
    let v32 = d32.volume() as f64;
    assert!((v32 - d64.volume()).abs() < 1e-4 * d64.volume());
}
