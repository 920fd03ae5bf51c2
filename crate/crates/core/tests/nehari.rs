mod common;

use std::sync::{Arc, OnceLock};

use common::*;
use curlground::nehari::{
    energy, energy_identity_gap, energy_split, fiber_maximize, geometry_check, grad_energy, ground_starts, minimize_on_manifold, nehari_residual,
    ray_maximizer, FiberOptions, GroundOptions, GroundStart,
};
use curlground::sobolev::{self, SobolevOptions, StartKind};
use curlground::{integrate_power, split, EnergyParams, Error, Field, GroundStateResult, Potential};
use proptest::prelude::*;

fn params(g: &Arc<curlground::AxiGrid<f64>>, v: Potential<f64>, p: f64) -> EnergyParams<f64> {
    EnergyParams::new(p, Arc::new(split(&op(g, v), None).unwrap())).unwrap()
}

fn bump(g: &Arc<curlground::AxiGrid<f64>>, width: f64, shift: f64) -> Field<f64> {
    Field::from_fn(g, |r, z| r * (-(r * r + (z - shift) * (z - shift)) / (width * width)).exp())
}

/// Root of `a - t^{p-2} b - t⁴ d` by plain bisection on `[0, T]`.
fn bisect_ray(a: f64, b: f64, d: f64, p: f64) -> f64 {
    let f = |t: f64| a - t.powf(p - 2.0) * b - t.powi(4) * d;
    let mut hi = 1.0;
    while f(hi) > 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    while hi - lo > 1e-15 * hi {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid
        } else {
            hi = mid
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn ray_maximizer_matches_closed_form() {
    // p = 4: t² = 2a / (b + (b² + 4ad)^{1/2})
    for (a, b, d) in [(1.0f64, 1.0f64, 1.0f64), (37.0, 0.2, 5.0), (1e-3, 4.0, 0.5)] {
        let t2: f64 = 2.0 * a / (b + (b * b + 4.0 * a * d).sqrt());
        assert!((ray_maximizer(a, b, d, 4.0) - t2.sqrt()).abs() <= 1e-13 * t2.sqrt());
    }
}

#[test]
fn regime_gate_and_exponent_range() {
    let g = grid(4.0, 4.0, 16, 25);
    let free = Arc::new(split(&op(&g, Potential::zero()), None).unwrap());
    let well = Arc::new(split(&op(&g, Potential::well_r(10.0)), None).unwrap());
    assert!(well.dim_minus() > 0);
    for p in [2.0, 6.0, f64::NAN, 1.0] {
        assert!(matches!(EnergyParams::new(p, free.clone()), Err(Error::InvalidArgument(_))));
    }
    assert!(EnergyParams::new(2.5, free.clone()).is_ok());
    for p in [2.5, 3.0, 4.0] {
        match EnergyParams::new(p, well.clone()) {
            Err(Error::RegimeGate { p: q, dim_minus }) => assert_eq!((q, dim_minus), (p, well.dim_minus())),
            other => panic!("expected the regime gate, got {other:?}"),
        }
    }
    assert!(EnergyParams::new(4.0001, well).is_ok());
}

// central differences of J along φ converge to ⟨J'(u), φ⟩ at second order
#[test]
fn gradient_matches_central_differences() {
    let g = grid(3.0, 3.0, 12, 25);
    let cases = [params(&g, Potential::zero(), 4.5), params(&g, Potential::well_r(10.0), 5.0)];
    let mut pairs = 0;
    for seed in 0..10u64 {
        for par in &cases {
            let u = random_field(&g, 2 * seed);
            let phi = random_field(&g, 2 * seed + 1);
            let exact = grad_energy(par, &u).unwrap().dot_w(&phi).unwrap();
            let d = |h: f64| {
                let plus = energy(par, &u.add(&phi.scaled(h)).unwrap()).unwrap();
                let minus = energy(par, &u.sub(&phi.scaled(h)).unwrap()).unwrap();
                (plus - minus) / (2.0 * h)
            };
            let (e1, e2) = ((d(0.02) - exact).abs(), (d(0.01) - exact).abs());
            let order = (e1 / e2).log2();
            assert!(order >= 1.9, "seed {seed}: order {order} ({e1:e}, {e2:e})");
            pairs += 1;
        }
    }
    assert_eq!(pairs, 20);
}

#[test]
fn fiber_matches_bisection_without_negative_space() {
    let g = grid(4.0, 4.0, 16, 33);
    for (v, p) in [(Potential::zero(), 3.0), (Potential::constant(1.0), 2.5), (Potential::well_r(2.0), 5.0)] {
        let par = params(&g, v, p);
        assert_eq!(par.dim_minus(), 0);
        for w in [bump(&g, 1.0, 0.0), bump(&g, 0.6, 1.0), random_field(&g, 9)] {
            let fp = fiber_maximize(&par, &w, &FiberOptions::default()).unwrap();
            let a = par.operator().quadratic_form(&w).unwrap();
            let t = bisect_ray(a, integrate_power(&w, p).unwrap(), integrate_power(&w, 6.0).unwrap(), p);
            assert!((fp.t - t).abs() <= 1e-10 * t, "{} vs {t}", fp.t);
            let j = energy(&par, &w.scaled(t)).unwrap();
            assert!((fp.value - j).abs() <= 1e-10 * j.abs());
            assert!(fp.coeffs.is_empty());
        }
    }
}

#[test]
fn indefinite_fiber_point_is_a_maximum_on_the_manifold() {
    let g = grid(4.0, 4.0, 16, 33);
    let par = params(&g, Potential::well_r(10.0), 4.5);
    let m = par.dim_minus();
    assert!(m >= 1);
    let w = bump(&g, 0.8, 0.5);
    let opts = FiberOptions::default();
    let fp = fiber_maximize(&par, &w, &opts).unwrap();
    assert!(fp.residual <= opts.tol);
    assert!(nehari_residual(&par, &fp.point).unwrap() <= 1e-8);
    assert!(energy_identity_gap(&par, &fp.point).unwrap() <= 1e-8 * fp.value);
    assert_eq!(fp.coeffs.len(), m);
    // perturbing within ℝ₊w ⊕ E⁻ lowers J
    let (wp, _) = par.split().project(&w).unwrap();
    let basis: Vec<Field<f64>> = std::iter::once(wp).chain(par.split().neg_eigenpairs().iter().map(|e| e.vector.clone())).collect();
    let x: Vec<f64> = std::iter::once(fp.t).chain(fp.coeffs.iter().copied()).collect();
    let at = |x: &[f64]| {
        let mut u = Field::zeros(&g);
        for (c, b) in x.iter().zip(&basis) {
            u.axpy(*c, b).unwrap();
        }
        energy(&par, &u).unwrap()
    };
    assert!((at(&x) - fp.value).abs() <= 1e-10 * fp.value);
    for k in 0..x.len() {
        for s in [-1.0, 1.0] {
            let mut y = x.clone();
            y[k] += s * 1e-3 * (1.0 + x[k].abs());
            assert!(at(&y) < fp.value, "direction {k}");
        }
    }
}

#[test]
fn fiber_error_cases() {
    let g = grid(4.0, 4.0, 16, 33);
    let par = params(&g, Potential::zero(), 3.0);
    assert!(matches!(fiber_maximize(&par, &Field::zeros(&g), &FiberOptions::default()), Err(Error::InvalidArgument(_))));
    assert!(nehari_residual(&par, &Field::zeros(&g)).is_err());
}

#[test]
fn energy_identity_vanishes_only_on_the_manifold() {
    let g = grid(4.0, 4.0, 16, 33);
    let par = params(&g, Potential::zero(), 3.0);
    let fp = fiber_maximize(&par, &bump(&g, 1.0, 0.0), &FiberOptions::default()).unwrap();
    assert!(energy_identity_gap(&par, &fp.point).unwrap() <= 1e-10 * fp.value);
    assert!(energy_identity_gap(&par, &fp.point.scaled(1.1)).unwrap() > 1e-3 * fp.value);
}

fn s_hat() -> f64 {
    static S: OnceLock<f64> = OnceLock::new();
    *S.get_or_init(|| {
        let g = grid(8.0, 8.0, 64, 129);
        sobolev::minimize_rayleigh(&g, &SobolevOptions { starts: vec![StartKind::AubinTalenti], ..SobolevOptions::default() }).unwrap().s_hat
    })
}

fn ground(l: f64, n_r: usize, p: f64) -> GroundStateResult<f64> {
    let g = grid(l, l, n_r, 2 * n_r + 1);
    let par = params(&g, Potential::zero(), p);
    minimize_on_manifold(&par, &GroundOptions { s_hat: Some(s_hat()), ..GroundOptions::default() }).unwrap()
}

#[test]
fn free_ground_state() {
    let res = ground(4.0, 64, 3.0);
    assert!(res.c > 0.0);
    assert!(res.nehari_residual <= 1e-8, "{:e}", res.nehari_residual);
    assert!(res.pde_residual <= 1e-6, "{:e}", res.pde_residual);
    assert!(res.threshold_margin.unwrap() > 0.0);
    assert!(res.energy_identity_gap <= 1e-6 * res.c);
    assert!(res.flags.is_empty(), "{:?}", res.flags);
    assert!(res.norm_floor > 0.0);
    let h = &res.history;
    assert!(!h.is_empty());
    for w in h.windows(2) {
        assert!(w[1].energy <= w[0].energy + 1e-9 * res.c.abs(), "{w:?}");
    }
    let converged = res.starts.iter().filter(|s| s.c.is_some()).count();
    assert!(converged >= 2);
    for s in &res.starts {
        if let Some(c) = s.c {
            assert!(c >= res.c);
        }
    }
}

// h = 1/16 on both boxes, so E(Ω₁) embeds in E(Ω₂) by zero extension
#[test]
fn larger_domain_lowers_the_level() {
    let c1 = ground(3.0, 48, 3.0).c;
    let c2 = ground(4.0, 64, 3.0).c;
    assert!(c2 <= c1 + 1e-6, "{c2} > {c1}");
}

#[test]
fn ground_start_list() {
    let mut o = GroundOptions::<f64> { random_starts: 2, seed: 5, ..GroundOptions::default() };
    let a = ground_starts(&o);
    assert_eq!(&a[..2], &[GroundStart::LowestPositive, GroundStart::Gaussian]);
    assert!(matches!(a[2], GroundStart::Random(_)) && a.len() == 4);
    assert_eq!(a, ground_starts(&o));
    o.phi_eps = Some(Field::zeros(&grid(2.0, 2.0, 8, 9)));
    assert_eq!(ground_starts(&o)[2], GroundStart::PhiEps);
    let g = grid(4.0, 4.0, 16, 33);
    let par = params(&g, Potential::zero(), 3.0);
    assert!(minimize_on_manifold(&par, &o).is_err(), "phi_eps on a foreign grid");
    assert!(minimize_on_manifold(&par, &GroundOptions { tol: 0.0, ..GroundOptions::default() }).is_err());
}

#[test]
fn mountain_pass_geometry() {
    let g = grid(4.0, 4.0, 24, 49);
    let par = params(&g, Potential::well_r(10.0), 4.5);
    let rep = geometry_check(&par, &bump(&g, 0.5, 0.0), 1.0, 1e-3, 32, 3).unwrap();
    assert!(rep.big_radius.is_some() && rep.max_j_outer <= 0.0);
    assert!(rep.max_j_minus.unwrap() <= 0.0);
    assert!(rep.min_j_inner > 0.0);
    assert!((rep.quadratic_coefficient - 0.5).abs() < 0.01, "{}", rep.quadratic_coefficient);
    assert!(geometry_check(&par, &bump(&g, 0.5, 0.0), 1.0, 2.0, 8, 0).is_err());
    assert!(geometry_check(&par, &bump(&g, 0.5, 0.0), 1.0, 0.1, 0, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn fiber_depends_only_on_the_ray(seed in 0u64..1000, alpha in 0.01f64..100.0) {
        let g = grid(4.0, 4.0, 16, 33);
        let par = params(&g, Potential::well_r(10.0), 5.0);
        let w = bump(&g, 0.7, 0.0).add(&random_field(&g, seed).scaled(0.05)).unwrap();
        let a = fiber_maximize(&par, &w, &FiberOptions::default()).unwrap();
        let b = fiber_maximize(&par, &w.scaled(alpha), &FiberOptions::default()).unwrap();
        prop_assert!((a.value - b.value).abs() <= 1e-9 * a.value);
        prop_assert!(a.point.sub(&b.point).unwrap().norm_w() <= 1e-7 * a.point.norm_w());
    }

    #[test]
    fn split_energy_agrees(seed in any::<u64>(), amp in 0.01f64..2.0) {
        let g = grid(3.0, 3.0, 12, 25);
        let par = params(&g, Potential::well_r(10.0), 4.5);
        let u = random_field(&g, seed).scaled(amp);
        let (a, b) = (energy(&par, &u).unwrap(), energy_split(&par, &u).unwrap());
        let scale = par.operator().norm_estimate() * u.norm_w() * u.norm_w();
        prop_assert!((a - b).abs() <= 1e-10 * scale);
    }
}
