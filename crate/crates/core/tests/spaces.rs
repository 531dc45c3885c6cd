use approx::assert_relative_eq;
use eek_core::fields::SobolevIndex;
use eek_core::spaces::*;
use eek_core::{EekError, Grid, GridField};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn shell_bump(grid: Grid, r0: f64, width: f64) -> GridField {
    GridField::scalar_fn(grid, |x| {
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        (-(r - r0).powi(2) / (2.0 * width * width)).exp()
    })
}

#[test]
fn smooth_step_limits() {
    assert_eq!(smooth_step(-1.0), 0.0);
    assert_eq!(smooth_step(0.0), 0.0);
    assert_eq!(smooth_step(1.0), 1.0);
    assert_eq!(smooth_step(0.5), 0.5);
    for i in 1..100 {
        let t = i as f64 / 100.0;
        assert!(smooth_step(t) >= smooth_step(t - 0.01));
    }
}

#[test]
fn single_bump_partition() {
    let p = build_partition(0);
    assert_eq!(p.j_max(), 0);
    assert_eq!(p.psi(0, 0.0), 1.0);
    assert_eq!(p.psi(0, 4.0), 1.0);
    assert_eq!(p.psi(0, 8.0), 0.0);
}

#[test]
fn plateaus_and_supports() {
    let p = build_partition(6);
    for j in 0..=6 {
        let (a, b) = p.plateau(j);
        let (lo, hi) = p.support(j);
        for i in 0..=200 {
            let r = a + (b - a) * i as f64 / 200.0;
            assert_eq!(p.psi(j, r), 1.0, "j = {j}, r = {r}");
        }
        for i in 0..=200 {
            let r = hi * (1.0 + 3.0 * i as f64 / 200.0);
            assert_eq!(p.psi(j, r), 0.0);
            if j >= 1 {
                assert_eq!(p.psi(j, lo * i as f64 / 200.0), 0.0);
            }
        }
    }
    for j in 1..=6 {
        for i in 0..50 {
            let x = 0.1 + 0.7 * i as f64;
            assert!((p.psi(j, x) - p.psi(1, 2f64.powi(1 - j as i32) * x)).abs() < 1e-14);
        }
    }
}

#[test]
fn partition_sum_bounds() {
    let p = build_partition(6);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..500 {
        let r = rng.gen_range(0.0..2f64.powi(8));
        let s = p.sum(r);
        assert!((1.0..=7.0).contains(&s), "sum {s} at r = {r}");
    }
}

#[test]
fn derivative_decay_and_consistency() {
    let p = build_partition(8);
    let mut fitted = Vec::new();
    for j in 0..=8 {
        let (lo, hi) = p.support(j);
        let mut m: f64 = 0.0;
        for i in 0..4000 {
            let r = lo + (hi - lo) * (i as f64 + 0.5) / 4000.0;
            let d = p.dpsi(j, r);
            let h = 1e-6 * r.max(1.0);
            let fd = (p.psi(j, r + h) - p.psi(j, r - h)) / (2.0 * h);
            assert!((d - fd).abs() < 1e-5 * (1.0 + d.abs()) * 2f64.powi(-(j as i32)) + 1e-8, "j {j} r {r}");
            m = m.max(d.abs());
        }
        fitted.push(m * 2f64.powi(j as i32));
    }
    let c = fitted.iter().cloned().fold(0.0, f64::max);
    for (j, f) in fitted.iter().enumerate() {
        assert!(*f <= c && *f > 0.0, "shell {j}");
    }
    // j ≥ 1 shells are exact dilates, so their fitted constants coincide.
    for f in &fitted[2..] {
        assert_relative_eq!(*f, fitted[1], max_relative = 1e-2);
    }
}

#[test]
fn partition_for_grid_covers_box() {
    let g = Grid::new(16, 10.0).unwrap();
    let p = DyadicPartition::for_grid(&g);
    let (lo, _) = p.support(p.j_max());
    assert!(lo < 3f64.sqrt() * 10.0);
    assert!(2f64.powi(p.j_max() as i32 + 1 - 4) >= 3f64.sqrt() * 10.0);
}

#[test]
fn zero_field_norms() {
    let g = Grid::new(16, 8.0).unwrap();
    let p = DyadicPartition::for_grid(&g);
    let z = GridField::zeros(g, 1);
    let r = weighted_norm(&z, SobolevIndex::new(2.5, -1.0).unwrap(), &p, 1).unwrap();
    assert_eq!(r.dyadic, 0.0);
    assert!(r.shell_terms.iter().all(|&t| t == 0.0));
    assert_eq!(integral_norm(&z, 2, 0.0).unwrap(), 0.0);
}

#[test]
fn integral_norm_oracles() {
    let g = Grid::new(16, 4.0).unwrap();
    let u = shell_bump(g, 1.0, 1.0);
    assert_relative_eq!(integral_norm(&u, 0, 0.0).unwrap(), u.l2_norm(), max_relative = 1e-10);
    assert!(matches!(integral_norm(&u, 3, 0.0), Err(EekError::UnsupportedOrder(3))));
}

#[test]
fn integral_norm_matches_radial_quadrature() {
    // sqrt ∫ 4πr²[(1+r)⁻²u² + u'²] dr for u = exp(−(r−8)²/2), by adaptive quadrature.
    let oracle = 27.3317352744583;
    let g = Grid::new(160, 14.0).unwrap();
    let u = shell_bump(g, 8.0, 1.0);
    let v = integral_norm(&u, 1, -1.0).unwrap();
    assert_relative_eq!(v, oracle, max_relative = 0.01);
}

#[test]
fn gamma_psi_and_registry() {
    let g = Grid::new(16, 8.0).unwrap();
    let p = DyadicPartition::for_grid(&g);
    let u = shell_bump(g, 0.0, 1.0);
    let idx = SobolevIndex::new(1.0, 0.0).unwrap();
    assert!(weighted_norm(&u, idx, &p, 3).is_err());
    let reg = NormRegistry::default();
    assert_eq!(reg.names(), vec!["dyadic", "dyadic-resampled", "integral"]);
    assert!(reg.get("nope").is_err());
    let r = reg.get("integral").unwrap().evaluate(&u, idx, &p, 1).unwrap();
    assert_eq!(r.integral, Some(r.dyadic));
    assert!(reg.get("integral").unwrap().evaluate(&u, SobolevIndex::new(1.5, 0.0).unwrap(), &p, 1).is_err());
    // The undilated shell is resolved on both grids, so the two strategies agree there.
    let g = Grid::new(64, 8.0).unwrap();
    let p = DyadicPartition::for_grid(&g);
    let u = shell_bump(g, 0.0, 1.0);
    let a = reg.get("dyadic").unwrap().evaluate(&u, idx, &p, 1).unwrap();
    let b = reg.get("dyadic-resampled").unwrap().evaluate(&u, idx, &p, 1).unwrap();
    assert_relative_eq!(a.shell_terms[0], b.shell_terms[0], max_relative = 0.02);
}

#[test]
fn truncation_warning_flag() {
    let g = Grid::new(32, 16.0).unwrap();
    let p = DyadicPartition::for_grid(&g);
    let idx = SobolevIndex::new(0.0, 0.0).unwrap();
    let decayed = shell_bump(g, 0.0, 1.0);
    assert!(!weighted_norm(&decayed, idx, &p, 1).unwrap().truncation_warning);
    let wide = shell_bump(g, 14.0, 3.0);
    assert!(weighted_norm(&wide, idx, &build_partition(2), 1).unwrap().truncation_warning);
}

#[test]
fn kato_ponce_trivial_cases() {
    let g = Grid::new(32, 8.0).unwrap();
    let u = shell_bump(g, 0.0, 1.0);
    let r = kato_ponce_check(&u, &u, 0.0).unwrap();
    assert!(r.lhs < 1e-13);
    let one = GridField::scalar_fn(g, |_| 1.0);
    let narrow = shell_bump(g, 0.0, 0.8);
    let r = kato_ponce_check(&one, &narrow, 2.0).unwrap();
    let scale = kato_ponce_check(&narrow, &narrow, 2.0).unwrap().lhs;
    assert!(r.lhs < 1e-6 * scale.max(1.0), "lhs {}", r.lhs);
    let z = GridField::zeros(g, 1);
    let r = kato_ponce_check(&z, &z, 2.0).unwrap();
    assert!(!r.anomaly && r.ratio == 0.0);
}

#[test]
fn kato_ponce_gaussian_widths() {
    let g = Grid::new(48, 16.0).unwrap();
    let ratios: Vec<f64> = [1.0, 2.0, 4.0]
        .iter()
        .map(|&w| {
            let u = shell_bump(g, 0.0, w);
            kato_ponce_check(&u, &u, 2.0).unwrap().ratio
        })
        .collect();
    let max = ratios.iter().cloned().fold(0.0, f64::max);
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(max <= 1.0 && max / min < 10.0, "{ratios:?}");
}

#[test]
fn property_registry_dispatch() {
    let reg = PropertyRegistry::default();
    assert!(reg.names().contains(&"kato-ponce"));
    assert!(reg.get("unknown").is_err());
    assert!(property_suite(&[]).is_err());
    let g = Grid::new(16, 10.0).unwrap();
    let fam = gaussian_family(g, 3, 9);
    assert_eq!(fam, gaussian_family(g, 3, 9));
    let d = reg.get("derivative").unwrap().run(&fam).unwrap();
    assert!(d.constant.is_finite());
}

#[test]
fn from_ratios_rules() {
    let r = PropertyResult::from_ratios("x", vec![1.0, 2.0, 5.0], Some(4.0));
    assert_eq!((r.constant, r.variation, r.pass), (5.0, 5.0, false));
    let r = PropertyResult::from_ratios("x", vec![1.0, 2.0, 5.0], None);
    assert!(r.pass);
    let r = PropertyResult::from_ratios("x", vec![1.0, 20.0], None);
    assert!(!r.pass);
    let r = PropertyResult::from_ratios("x", vec![1.0, f64::INFINITY], None);
    assert!(!r.pass);
}

fn annulus_field(seed: u64) -> GridField {
    // Smooth bumps placed at radii ≥ 3 so the field vanishes on |x| < 2.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Grid::new(16, 8.0).unwrap();
    let r0 = rng.gen_range(3.5..5.0);
    let amp = rng.gen_range(0.5..2.0);
    GridField::scalar_fn(g, |x| {
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        let t = (r - r0) / 1.2;
        if t.abs() < 1.0 {
            amp * (1.0 - 1.0 / (1.0 - t * t)).exp() * (1.0 + 0.3 * x[0] / r)
        } else {
            0.0
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn shell_invariants(seed in 0u64..1000, s in 0.0f64..3.0, delta in -2.0f64..1.0) {
        let u = annulus_field(seed);
        let p = DyadicPartition::for_grid(u.grid());
        let r = weighted_norm(&u, SobolevIndex::new(s, delta).unwrap(), &p, 2).unwrap();
        prop_assert!(r.shell_terms.iter().all(|&t| t >= 0.0));
        let sq: f64 = r.shell_terms.iter().map(|t| t * t).sum();
        prop_assert!((r.dyadic * r.dyadic - sq).abs() <= 1e-12 * sq.max(1e-300));
    }

    #[test]
    fn monotone_in_delta(seed in 0u64..1000, s in 0.0f64..3.0, d1 in -2.0f64..1.0, dd in 0.0f64..1.0) {
        let u = annulus_field(seed);
        let p = DyadicPartition::for_grid(u.grid());
        let a = weighted_norm(&u, SobolevIndex::new(s, d1).unwrap(), &p, 1).unwrap().dyadic;
        let b = weighted_norm(&u, SobolevIndex::new(s, d1 + dd).unwrap(), &p, 1).unwrap().dyadic;
        prop_assert!(a <= b * (1.0 + 1e-12));
    }

    #[test]
    fn inclusion_summandwise(seed in 0u64..1000, s in 0.0f64..3.0, ds in 0.0f64..1.0, d in -2.0f64..1.0, dd in 0.0f64..1.0) {
        let u = annulus_field(seed);
        let p = DyadicPartition::for_grid(u.grid());
        let lo = weighted_norm(&u, SobolevIndex::new(s, d).unwrap(), &p, 1).unwrap();
        let hi = weighted_norm(&u, SobolevIndex::new(s + ds, d + dd).unwrap(), &p, 1).unwrap();
        for (a, b) in lo.shell_terms.iter().zip(&hi.shell_terms) {
            prop_assert!(*a <= *b * (1.0 + 1e-12));
        }
    }
}
