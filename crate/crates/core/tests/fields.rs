use approx::assert_relative_eq;
use eek_core::fields::*;
use eek_core::{EekError, Grid, GridField};
use proptest::prelude::*;

fn gaussian(grid: Grid, a: f64, c: [f64; 3]) -> GridField {
    GridField::scalar_fn(grid, |x| {
        let d2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2) + (x[2] - c[2]).powi(2);
        (-a * d2).exp()
    })
}

#[test]
fn grid_validation() {
    assert!(Grid::new(15, 1.0).is_err());
    assert!(Grid::new(14, 1.0).is_err());
    assert!(Grid::new(17, 1.0).is_err());
    assert!(Grid::new(16, 0.0).is_err());
    assert!(Grid::new(16, f64::NAN).is_err());
    let g = Grid::new(16, 4.0).unwrap();
    assert_eq!(g.spacing(), 0.5);
    assert_eq!(g.coord(0), -4.0);
    assert_eq!(g.index(1, 2, 3), (3 * 16 + 2) * 16 + 1);
    assert_eq!(g.unravel(g.index(1, 2, 3)), [1, 2, 3]);
}

#[test]
fn field_validation() {
    let g = Grid::new(16, 4.0).unwrap();
    assert!(GridField::new(g, 1, vec![0.0; 100]).is_err());
    let mut v = vec![0.0; g.len()];
    v[7] = f64::NAN;
    assert!(GridField::new(g, 1, v).is_err());
    assert!(GridField::new(g, 0, vec![]).is_err());
    assert!(SobolevIndex::new(-0.5, 0.0).is_err());
}

#[test]
fn io_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let g = Grid::new(16, 3.5).unwrap();
    let u = GridField::from_fn(g, 3, |x, out| {
        out[0] = x[0].sin();
        out[1] = 1e-300 * x[1];
        out[2] = -x[2] / 7.0;
    });
    let p = dir.path().join("u.eek");
    write_field(&p, &u).unwrap();
    let back = read_field(&p).unwrap();
    assert_eq!(back.grid(), u.grid());
    assert_eq!(back.components(), 3);
    for (a, b) in back.data().iter().zip(u.data()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn io_header_shape_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let g = Grid::new(16, 2.0).unwrap();
    let u = GridField::zeros(g, 10);
    let p = dir.path().join("metric.eek");
    write_field(&p, &u).unwrap();
    let back = read_field(&p).unwrap();
    assert_eq!((back.components(), back.component(0).len()), (10, 4096));

    let mut bytes = std::fs::read(&p).unwrap();
    bytes[0] = b'X';
    let bad = dir.path().join("bad.eek");
    std::fs::write(&bad, &bytes).unwrap();
    match read_field(&bad) {
        Err(EekError::Format { field, .. }) => assert_eq!(field, "magic"),
        other => panic!("expected a format error, got {other:?}"),
    }

    let bytes = std::fs::read(&p).unwrap();
    std::fs::write(&bad, &bytes[..bytes.len() - 8]).unwrap();
    match read_field(&bad) {
        Err(EekError::Format { field, .. }) => assert_eq!(field, "payload"),
        other => panic!("expected a format error, got {other:?}"),
    }
    std::fs::write(&bad, &bytes[..6]).unwrap();
    match read_field(&bad) {
        Err(EekError::Format { field, .. }) => assert_eq!(field, "n_per_axis"),
        other => panic!("expected a format error, got {other:?}"),
    }
}

#[test]
fn scale_identity_and_errors() {
    let g = Grid::new(16, 3.0).unwrap();
    let u = gaussian(g, 1.0, [0.2, 0.0, -0.4]);
    let v = scale_field(&u, 1.0).unwrap();
    for (a, b) in u.data().iter().zip(v.data()) {
        assert!((a - b).abs() < 1e-14);
    }
    assert!(scale_field(&u, f64::NAN).is_err());
    assert!(scale_field(&u, 0.0).is_err());
}

#[test]
fn scaled_gaussian_matches_analytic() {
    let g = Grid::new(64, 4.0).unwrap();
    let u = gaussian(g, 1.0, [0.0; 3]);
    let v = scale_field(&u, 2.0).unwrap();
    let h = g.spacing();
    // Source spacing h, second derivatives of e^{−t²} bounded by 2 per axis:
    // three trilinear directions give at most 3·(h²/8)·2.
    let bound = 0.75 * h * h;
    let mut err: f64 = 0.0;
    for idx in 0..g.len() {
        let x = g.point(idx);
        let exact = (-4.0 * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp();
        err = err.max((v.at(0, idx) - exact).abs());
    }
    assert!(err <= bound, "error {err} above {bound}");
    // Points mapped outside the source read as zero.
    let far = scale_field(&GridField::scalar_fn(g, |_| 1.0), 4.0).unwrap();
    assert_eq!(far.at(0, g.index(0, 0, 0)), 0.0);
}

#[test]
fn l2_scaling_identity() {
    let g = Grid::new(64, 6.0).unwrap();
    let u = gaussian(g, 1.0, [0.3, 0.0, 0.0]);
    for eps in [2.0, 4.0] {
        let v = scale_field(&u, eps).unwrap();
        let ratio = v.l2_norm().powi(2) / u.l2_norm().powi(2);
        assert_relative_eq!(ratio, 1.0 / (eps * eps * eps), max_relative = 0.01);
    }
}

#[test]
fn bessel_norm_oracles() {
    let g = Grid::new(64, 8.0).unwrap();
    assert_eq!(bessel_norm(&GridField::zeros(g, 1), 1.5).unwrap(), 0.0);
    assert!(bessel_norm(&GridField::zeros(g, 1), -1.0).is_err());
    // ∫exp(−2|x|²) = (π/2)^{3/2}; the Riemann sum is spectrally accurate here.
    let u = gaussian(g, 1.0, [0.0; 3]);
    let exact = (std::f64::consts::PI / 2.0).powf(0.75);
    assert_relative_eq!(bessel_norm(&u, 0.0).unwrap(), exact, max_relative = 1e-10);
    assert_relative_eq!(bessel_norm(&u, 0.0).unwrap(), u.l2_norm(), max_relative = 1e-10);
}

#[test]
fn bessel_single_mode_ratio() {
    let g = Grid::new(64, 12.0).unwrap();
    let k = [3.0, 0.0, 1.0];
    let u = GridField::scalar_fn(g, |x| {
        let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
        (k[0] * x[0] + k[1] * x[1] + k[2] * x[2]).sin() * (-r2 / 18.0).exp()
    });
    let ratio = (bessel_norm(&u, 1.0).unwrap() / bessel_norm(&u, 0.0).unwrap()).powi(2);
    let k2: f64 = k.iter().map(|v| v * v).sum();
    assert_relative_eq!(ratio, 1.0 + k2, max_relative = 0.05);
}

#[test]
fn multi_component_norm_is_root_sum_square() {
    let g = Grid::new(16, 4.0).unwrap();
    let a = gaussian(g, 1.0, [0.0; 3]);
    let b = gaussian(g, 0.5, [0.5, 0.0, 0.0]);
    let c = gaussian(g, 2.0, [0.0, -0.5, 0.0]);
    let both = GridField::stack(&[&a, &b, &c]).unwrap();
    let expect = [&a, &b, &c].iter().map(|f| bessel_norm(f, 1.5).unwrap().powi(2)).sum::<f64>().sqrt();
    assert_relative_eq!(bessel_norm(&both, 1.5).unwrap(), expect, max_relative = 1e-12);
}

#[test]
fn stencils_exact_on_polynomials() {
    let g = Grid::new(16, 2.0).unwrap();
    let p = GridField::scalar_fn(g, |x| x[0] * x[0] + 3.0 * x[1] * x[2] - x[2]);
    let d = stencil::diff1(p.component(0), &g, 0);
    let dyz = stencil::diff2(p.component(0), &g, 1, 2);
    let dxx = stencil::diff2(p.component(0), &g, 0, 0);
    for idx in 0..g.len() {
        let x = g.point(idx);
        assert!((d[idx] - 2.0 * x[0]).abs() < 1e-12);
        assert!((dyz[idx] - 3.0).abs() < 1e-11);
        if !g.is_boundary(idx) {
            assert!((dxx[idx] - 2.0).abs() < 1e-11);
        }
    }
    let cubic = GridField::scalar_fn(g, |x| x[1].powi(4));
    let d4 = stencil::diff1_order4(cubic.component(0), &g, 1);
    for idx in 0..g.len() {
        let j = g.unravel(idx)[1];
        if (2..14).contains(&j) {
            let y = g.point(idx)[1];
            assert!((d4[idx] - 4.0 * y.powi(3)).abs() < 1e-10);
        }
    }
}

#[test]
fn spectral_derivative_of_gaussian() {
    let g = Grid::new(32, 8.0).unwrap();
    let u = gaussian(g, 0.5, [0.0; 3]);
    let spec = Spectral::for_grid(&g);
    let (d, _) = spec.apply_multiplier(u.component(0), None, false, |i| spec.derivative_symbol(2, i));
    for idx in 0..g.len() {
        let x = g.point(idx);
        let exact = -x[2] * u.at(0, idx);
        assert!((d[idx] - exact).abs() < 1e-8);
    }
}

#[test]
fn decay_check_warns_only() {
    let g = Grid::new(16, 2.0).unwrap();
    assert!(!GridField::scalar_fn(g, |_| 1.0).check_decay("constant", 1e-8));
    assert!(gaussian(g, 8.0, [0.0; 3]).check_decay("narrow", 1e-8));
}

fn random_field(seed: u64) -> GridField {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let g = Grid::new(16, 4.0).unwrap();
    let data = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    GridField::new(g, 1, data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn triangle_inequality(a in 0u64..10_000, b in 0u64..10_000, s in 0.0f64..3.0) {
        let (u, v) = (random_field(a), random_field(b));
        let sum = u.zip_map(&v, |x, y| x + y).unwrap();
        let lhs = bessel_norm(&sum, s).unwrap();
        let rhs = bessel_norm(&u, s).unwrap() + bessel_norm(&v, s).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12));
    }

    #[test]
    fn monotone_in_order(a in 0u64..10_000, s1 in 0.0f64..3.0, ds in 0.0f64..2.0) {
        let u = random_field(a);
        prop_assert!(bessel_norm(&u, s1).unwrap() <= bessel_norm(&u, s1 + ds).unwrap());
    }

    #[test]
    fn io_round_trip_random(a in 0u64..10_000) {
        let u = random_field(a);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.eek");
        write_field(&p, &u).unwrap();
        prop_assert_eq!(read_field(&p).unwrap(), u);
    }
}
