mod common;

use std::f64::consts::PI;

use common::*;
use curlground::io::{self, GridHeader};
use curlground::operator::Builtin;
use curlground::{free_form, integrate_power, AxiGrid, Error, Field, Potential, PotentialKind, PotentialSpec};
use proptest::prelude::*;

fn gauss_bump(g: &std::sync::Arc<AxiGrid<f64>>) -> Field<f64> {
    Field::from_fn(g, |r, z| r * (-(r * r + z * z)).exp())
}

#[test]
fn rejects_bad_grids() {
    assert!(matches!(AxiGrid::<f64>::new(0.0, 1.0, 16, 16), Err(Error::InvalidArgument(_))));
    assert!(matches!(AxiGrid::<f64>::new(1.0, f64::INFINITY, 16, 16), Err(Error::InvalidArgument(_))));
    assert!(matches!(AxiGrid::<f64>::new(1.0, 1.0, 7, 16), Err(Error::InvalidArgument(_))));
}

#[test]
fn node_layout() {
    let g = grid(4.0, 3.0, 16, 25);
    assert_eq!(g.dr(), 0.25);
    assert_eq!(g.dz(), 0.25);
    assert_eq!(g.r_nodes()[0], 0.25);
    assert_eq!(*g.r_nodes().last().unwrap(), 4.0);
    assert_eq!(g.z_nodes()[0], -3.0);
    assert_eq!(g.z_nodes()[12], 0.0);
    assert_eq!(g.coords(g.idx(3, 5)), (1.0, -1.75));
    assert_eq!(g.interior_len(), 15 * 23);
    for k in 0..g.len() {
        assert_eq!(g.mirror(g.mirror(k)), k);
        let (r, z) = g.coords(k);
        assert_eq!(g.coords(g.mirror(k)), (r, -z));
    }
}

#[test]
fn volume_is_exact() {
    for (r, z, n_r, n_z) in [(4.0, 3.0, 16, 25), (1.0, 7.0, 9, 40)] {
        let g = grid(r, z, n_r, n_z);
        let exact = PI * r * r * 2.0 * z;
        assert!((g.volume() - exact).abs() < 1e-12 * exact);
    }
}

// ∫ e^{-2|x|²} dx = (π/2)^{3/2}
#[test]
fn gaussian_l2_quadrature_converges() {
    let exact = (PI / 2.0).powf(1.5);
    let err = |n: usize| {
        let g = grid(6.0, 6.0, n, 2 * n + 1);
        let u = Field::from_fn(&g, |r, z| (-(r * r + z * z)).exp());
        (integrate_power(&u, 2.0).unwrap() - exact).abs() / exact
    };
    let (e1, e2) = (err(32), err(64));
    assert!(e2 < 5e-3, "{e2}");
    let order = (e1 / e2).log2();
    assert!(order > 1.8, "order {order}");
}

// u = r e^{-ρ}: ∫|∇u|² + u²/r² = (5π/4)·(π/2)^{1/2}
#[test]
fn dirichlet_form_converges_at_second_order() {
    let exact = 1.25 * PI * (PI / 2.0).sqrt();
    let err = |n: usize| {
        let g = grid(6.0, 6.0, n, 2 * n + 1);
        (free_form(&gauss_bump(&g)) - exact).abs() / exact
    };
    let (e1, e2, e3) = (err(24), err(48), err(96));
    assert!(e3 < 1e-3, "{e3}");
    for (a, b) in [(e1, e2), (e2, e3)] {
        let order = (a / b).log2();
        assert!(order > 1.8 && order < 2.3, "order {order}");
    }
}

// -Δu + u/r² = (10r - 4r³ - 4r z²) e^{-ρ} for u = r e^{-ρ}
fn nodal_errors(n: usize) -> (f64, f64) {
    let g = grid(6.0, 6.0, n, 2 * n + 1);
    let o = op(&g, Potential::zero());
    let lu = o.apply(&gauss_bump(&g)).unwrap();
    let (mut inner, mut axis) = (0.0f64, 0.0f64);
    for k in 0..g.len() {
        let (r, z) = g.coords(k);
        if r > 2.0 || z.abs() > 2.0 {
            continue;
        }
        let exact = (10.0 * r - 4.0 * r.powi(3) - 4.0 * r * z * z) * (-(r * r + z * z)).exp();
        let e = (lu.values()[k] - exact).abs();
        if r >= 0.5 {
            inner = inner.max(e);
        } else if r == g.dr() {
            axis = axis.max(e);
        }
    }
    (inner, axis)
}

#[test]
fn nodal_operator_is_consistent() {
    let (i1, a1) = nodal_errors(32);
    let (i2, a2) = nodal_errors(64);
    let order = (i1 / i2).log2();
    assert!(order > 1.8, "order {order} ({i1:e}, {i2:e})");
    // next to the axis the flux stencil is only first order pointwise
    assert!(a2 < 0.8 * a1, "{a1:e} {a2:e}");
}

#[test]
fn potential_terms() {
    let v = Potential::sum(vec![Potential::constant(0.5), Potential::cos2pi_z(2.0), Potential::well_r(3.0)]);
    let (r, z): (f64, f64) = (0.7, 0.3);
    let want = 0.5 + 2.0 * (2.0 * PI * z).cos() - 3.0 * (-r * r).exp();
    assert!((v.eval(r, z) - want).abs() < 1e-15);
    assert_eq!(v.bound(), 5.5);
    assert_eq!(v.kind(), PotentialKind::AnalyticPeriodic);
    assert_eq!(v.period_z(), Some(1.0));
    assert!(Potential::<f64>::zero().is_identically_zero());
    assert!(!Potential::cos2pi_z(1e-300).is_identically_zero());
    let spec = PotentialSpec::Sum {
        terms: vec![
            PotentialSpec::Constant { value: 0.5 },
            PotentialSpec::AnalyticPeriodic { expr: Builtin::Cos2PiZ, amplitude: 2.0 },
            PotentialSpec::AnalyticPeriodic { expr: Builtin::WellR, amplitude: 3.0 },
        ],
    };
    assert_eq!(v.spec(), &spec);
    let rebuilt = Potential::<f64>::from_spec(&spec, None).unwrap();
    assert_eq!(rebuilt.eval(r, z), v.eval(r, z));
    let text = serde_json::to_string(&spec).unwrap();
    assert!(text.contains("\"kind\":\"analytic-periodic\"") && text.contains("\"cos2pi_z\""));
    assert_eq!(serde_json::from_str::<PotentialSpec>(&text).unwrap(), spec);
}

#[test]
fn tabulated_potential_interpolates_its_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let header = GridHeader { n_r: 12, n_z: 17, r_max: 3.0, z_max: 2.0 };
    let g = header.build::<f64>().unwrap();
    let exact = Potential::<f64>::well_r(4.0);
    let values: Vec<f64> = (0..g.len())
        .map(|k| {
            let (r, z) = g.coords(k);
            exact.eval(r, z) + z
        })
        .collect();
    let path = dir.path().join("v.axifield");
    io::write_raw(&header, &values, std::fs::File::create(&path).unwrap()).unwrap();
    let spec = PotentialSpec::Tabulated { path: "v.axifield".into() };
    let v = Potential::<f64>::from_spec(&spec, Some(dir.path())).unwrap();
    assert_eq!(v.kind(), PotentialKind::Tabulated);
    assert_eq!(v.period_z(), None);
    for (k, want) in values.iter().enumerate() {
        let (r, z) = g.coords(k);
        assert!((v.eval(r, z) - want).abs() < 1e-12);
    }
    // linear in z between nodes, clamped outside
    let (r, z) = g.coords(g.idx(4, 6));
    let mid = v.eval(r, z + 0.5 * g.dz());
    assert!((mid - 0.5 * (values[g.idx(4, 6)] + values[g.idx(4, 7)])).abs() < 1e-12);
    assert_eq!(v.eval(r, 50.0), v.eval(r, 2.0));
    assert!(Potential::<f64>::tabulated(header, values[1..].to_vec(), "x").is_err());
    assert!(Potential::<f64>::from_spec(&PotentialSpec::Tabulated { path: "missing.axifield".into() }, Some(dir.path())).is_err());
}

#[test]
fn field_constructors_check_input() {
    let g = grid(2.0, 2.0, 8, 9);
    assert!(Field::from_values(&g, vec![0.0; g.len() - 1]).is_err());
    let mut v = vec![0.0; g.len()];
    v[g.idx(2, 3)] = f64::NAN;
    assert!(Field::from_values(&g, v.clone()).is_err());
    v[g.idx(2, 3)] = 1.0;
    assert!(Field::from_values(&g, v.clone()).is_ok());
    v[g.idx(2, 0)] = 1.0;
    assert!(Field::from_values(&g, v).is_err());
    let f = Field::from_fn(&g, |_, _| 1.0);
    for k in 0..g.len() {
        assert_eq!(f.values()[k] == 0.0, g.is_boundary(k));
    }
    let other = grid(2.0, 2.0, 8, 11);
    assert!(f.add(&Field::zeros(&other)).is_err());
    assert!(Field::zeros(&grid(2.0, 2.0, 8, 9)).same_grid(&f).is_ok(), "grids with equal parameters interoperate");
}

#[test]
fn bilinear_sampling() {
    let g = grid(2.0, 2.0, 8, 9);
    let f = Field::from_fn(&g, |r, z| 1.0 + 2.0 * r - z + 0.5 * r * z);
    for k in 0..g.len() {
        let (r, z) = g.coords(k);
        assert_eq!(f.sample(r, z), f.values()[k]);
    }
    // bilinear data is reproduced inside interior cells
    let (r, z) = (0.9, -0.3);
    assert!((f.sample(r, z) - (1.0 + 2.0 * r - z + 0.5 * r * z)).abs() < 1e-13);
    // the axis ghost carries 0: halfway to the first node halves the value
    let z0 = g.z_nodes()[4];
    assert!((f.sample(0.5 * g.dr(), z0) - 0.5 * f.sample(g.dr(), z0)).abs() < 1e-14);
    assert_eq!(f.sample(0.0, z0), 0.0);
    assert_eq!(f.sample(2.5, 0.0), 0.0);
    assert_eq!(f.sample(1.0, -2.5), 0.0);
}

#[test]
fn axifield_rejects_corruption() {
    let g = grid(2.0, 2.0, 8, 9);
    let f = random_field(&g, 3);
    let mut bytes = Vec::new();
    io::write_axifield(&f, &mut bytes).unwrap();
    assert_eq!(&bytes[..16], &io::AXIFIELD_MAGIC);
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(io::read_axifield::<f64, _>(&bad[..]), Err(Error::Format(_))));
    assert!(io::read_axifield::<f64, _>(&bytes[..bytes.len() - 3]).is_err());
    let mut longer = bytes.clone();
    longer.extend_from_slice(&[0u8; 8]);
    assert!(matches!(io::read_axifield::<f64, _>(&longer[..]), Err(Error::Format(_))));
    let mut csv = Vec::new();
    io::write_csv(&f, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("r,x3,value"));
    assert_eq!(lines.count(), g.len());
}

#[test]
fn stiffness_is_symmetric() {
    let g = grid(3.0, 3.0, 9, 12);
    let o = op(&g, Potential::sum(vec![Potential::well_r(7.0), Potential::cos2pi_z(1.0)]));
    let (k, w) = o.dense_stiffness();
    let m = w.len();
    for i in 0..m {
        for j in 0..i {
            assert_eq!(k[i * m + j], k[j * m + i]);
        }
    }
    let (vals, _) = dense_eigen(&o);
    assert!(o.norm_estimate() >= vals.iter().fold(0.0f64, |a, v| a.max(v.abs())));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn laplacian_matches_dirichlet_form(a in any::<u64>(), b in any::<u64>()) {
        let g = grid(3.0, 2.0, 10, 13);
        let (u, v) = (random_field(&g, a), random_field(&g, b));
        let lhs = g.dot_w(&g.neg_laplacian(u.values()), v.values());
        let rhs = g.gradient_inner(u.values(), v.values());
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
    }

    #[test]
    fn operator_is_self_adjoint(a in any::<u64>(), b in any::<u64>(), amp in -20.0f64..20.0) {
        let g = grid(3.0, 2.0, 10, 13);
        let o = op(&g, Potential::sum(vec![Potential::well_r(amp), Potential::cos2pi_z(0.3 * amp)]));
        let (u, v) = (random_field(&g, a), random_field(&g, b));
        let buv = o.bilinear(&u, &v).unwrap();
        let bvu = o.bilinear(&v, &u).unwrap();
        let scale = o.norm_estimate() * u.norm_w() * v.norm_w();
        prop_assert!((buv - bvu).abs() <= 1e-13 * scale);
        let via_apply = o.apply(&u).unwrap().dot_w(&v).unwrap();
        prop_assert!((via_apply - buv).abs() <= 1e-12 * scale);
    }

    #[test]
    fn symmetrized_is_even_and_idempotent(a in any::<u64>()) {
        let g = grid(2.0, 2.0, 8, 11);
        let s = random_field(&g, a).symmetrized();
        for k in 0..g.len() {
            prop_assert_eq!(s.values()[k], s.values()[g.mirror(k)]);
        }
        prop_assert_eq!(s.symmetrized(), s);
    }

    #[test]
    fn axifield_round_trips(a in any::<u64>(), n_r in 8usize..20, n_z in 8usize..20, r in 0.5f64..9.0, z in 0.5f64..9.0) {
        let g = grid(r, z, n_r, n_z);
        let f = random_field(&g, a);
        let mut bytes = Vec::new();
        io::write_axifield(&f, &mut bytes).unwrap();
        let back: Field<f64> = io::read_axifield(&bytes[..]).unwrap();
        prop_assert_eq!(back, f);
    }

    #[test]
    fn integrate_power_is_homogeneous(a in any::<u64>(), q in 1.0f64..7.0, s in 0.1f64..3.0) {
        let g = grid(2.0, 2.0, 8, 11);
        let f = random_field(&g, a);
        let base = integrate_power(&f, q).unwrap();
        let scaled = integrate_power(&f.scaled(s), q).unwrap();
        prop_assert!((scaled - s.powf(q) * base).abs() <= 1e-12 * scaled.abs().max(1e-300));
    }
}
