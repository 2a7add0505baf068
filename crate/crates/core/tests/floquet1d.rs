use std::f64::consts::PI;

use proptest::prelude::*;
use spectral_tori::floquet1d::*;
use spectral_tori::surface::RevolutionTorus;
use spectral_tori::{c, C64};

fn lambda_grid(n: usize) -> Vec<C64> {
    (0..n)
        .map(|i| {
            let a = i as f64 / n as f64;
            c(-3.0 + 6.0 * a, 0.5 * (7.0 * a).sin())
        })
        .collect()
}

#[test]
fn determinant_is_one() {
    let m = Monodromy1D::new(Potential1D::from_fn(|x| 0.4 + 0.3 * x.cos() - 0.1 * (2.0 * x).sin(), 2.0 * PI, 64).unwrap());
    let worst = lambda_grid(100)
        .into_iter()
        .map(|l| (m.monodromy(l).unwrap().determinant() - 1.0).norm())
        .fold(0.0, f64::max);
    assert!(worst < 1e-10, "{worst}");
}

#[test]
fn constant_potential_matches_eigendecomposition() {
    let t = 1.7;
    let cc = 0.35;
    let m = Monodromy1D::new(Potential1D::constant(cc, t));
    for l in lambda_grid(20) {
        let tr = m.trace(l).unwrap();
        assert!((tr - constant_trace_oracle(cc, l, t)).norm() < 1e-9);
        let closed = ((l * l + 4.0 * cc * cc).sqrt() * t).cos() * 2.0;
        assert!((tr - closed).norm() < 1e-9);
    }
}

#[test]
fn zero_potential_roots_are_double_half_integers() {
    let m = Monodromy1D::new(Potential1D::constant(0.0, 2.0 * PI));
    let sc = branch_points(&m, Rect::new(-1.3, 1.3, -0.4, 0.4), RootSearch::default()).unwrap();
    assert!(sc.complete);
    assert!(sc.branch_points.is_empty(), "{:?}", sc.branch_points);
    let want: Vec<f64> = vec![-1.0, -0.5, 0.0, 0.5, 1.0];
    assert_eq!(sc.resonance_points.len(), want.len(), "{:?}", sc.resonance_points);
    for (z, w) in sc.resonance_points.iter().zip(&want) {
        assert!((z - c(*w, 0.0)).norm() < 1e-6, "{z}");
    }
}

#[test]
fn constant_potential_branch_points() {
    // Tr = 2cos(T√(λ²+4C²)): simple zeros of Tr²−4 at ±2iC, double zeros where T√(λ²+4C²) = nπ, n ≠ 0
    let t = 2.0 * PI;
    let cc = 0.2;
    let m = Monodromy1D::new(Potential1D::constant(cc, t));
    let sc = branch_points(&m, Rect::new(-1.2, 1.2, -0.7, 0.7), RootSearch::default()).unwrap();
    assert_eq!(sc.branch_points.len(), 2, "{:?}", sc.branch_points);
    for w in [c(0.0, -2.0 * cc), c(0.0, 2.0 * cc)] {
        assert!(sc.branch_points.iter().any(|z| (z - w).norm() < 1e-9));
    }
    assert_eq!(sc.genus_estimate, Some(0));
    for z in &sc.resonance_points {
        let w = (z * z + 4.0 * cc * cc).sqrt() * t / PI;
        assert!((w.re - w.re.round()).abs() < 1e-6 && w.re.round() != 0.0, "{z}");
    }
    let n1 = ((PI / t).powi(2) - 4.0 * cc * cc).sqrt();
    assert!(sc.resonance_points.iter().any(|z| (z - c(n1, 0.0)).norm() < 1e-6));
}

#[test]
fn empty_region_gives_nothing() {
    let m = Monodromy1D::new(Potential1D::constant(0.3, 1.0));
    let sc = branch_points(&m, Rect::new(1.0, 1.0, 0.0, 1.0), RootSearch::default()).unwrap();
    assert!(sc.branch_points.is_empty() && sc.resonance_points.is_empty());
}

#[test]
fn root_sets_symmetric_for_real_potential() {
    let m = Monodromy1D::new(Potential1D::from_fn(|x| 0.3 + 0.25 * x.cos(), 2.0 * PI, 64).unwrap());
    let sc = branch_points(&m, Rect::new(-1.1, 1.1, -0.9, 0.9), RootSearch::default()).unwrap();
    assert!(!sc.branch_points.is_empty());
    for z in &sc.branch_points {
        let mirror = -z.conj();
        assert!(sc.branch_points.iter().any(|w| (w - mirror).norm() < 1e-7), "{z}");
    }
}

#[test]
fn schrodinger_oracle_fixes_miura_convention() {
    let m = Monodromy1D::new(Potential1D::from_fn(|x| 0.3 + 0.2 * x.cos() + 0.1 * (2.0 * x).sin(), 2.0 * PI, 64).unwrap());
    for l in [c(0.7, 0.1), c(-0.3, 0.4), c(1.3, -0.2)] {
        let good = schrodinger_residual(&m, l, MiuraConvention::ZakharovShabat, 128).unwrap();
        let bad = schrodinger_residual(&m, l, MiuraConvention::Reduced, 128).unwrap();
        assert!(good < 1e-8, "{good}");
        assert!(bad > 1e-2, "{bad}");
    }
}

#[test]
fn miura_of_cosine() {
    let t = 3.0;
    let a = 0.4;
    let u = Potential1D::from_fn(move |x| a * (2.0 * PI * x / t).cos(), t, 64).unwrap();
    let q = miura(&u, MiuraConvention::ZakharovShabat);
    for (j, v) in q.samples.iter().enumerate() {
        let x = t * j as f64 / 64.0;
        let w = 2.0 * PI * x / t;
        let exact = c(-4.0 * a * a * w.cos().powi(2), -4.0 * PI * a / t * w.sin());
        assert!((v - exact).norm() < 1e-12);
    }
}

#[test]
fn kruskal_elementary_values() {
    let t = 2.5;
    let q = SchrodingerPotential { samples: vec![c(0.7, 0.0); 64], period: t };
    let k = kruskal_invariants(&q, 3).unwrap();
    assert!((k.h[0] - c(0.7 * t, 0.0)).norm() < 1e-12);
    assert!((k.h[1] - c(0.49 * t, 0.0)).norm() < 1e-12);
    assert!((k.h[2] - c(2.0 * 0.343 * t, 0.0)).norm() < 1e-12);
    let a = 0.6;
    let q = SchrodingerPotential {
        samples: (0..64).map(|j| c(a * (2.0 * PI * j as f64 / 64.0).cos(), 0.0)).collect(),
        period: t,
    };
    let k = kruskal_invariants(&q, 3).unwrap();
    assert!(k.h[0].norm() < 1e-12);
    assert!((k.h[1] - c(a * a * t / 2.0, 0.0)).norm() < 1e-12);
    assert!((k.h[2] - c(-2.0 * PI * PI * a * a / t, 0.0)).norm() < 1e-11);
    assert!(kruskal_invariants(&q, 0).is_err());
}

#[test]
fn recursion_matches_closed_forms() {
    let u = Potential1D::from_fn(|x| 0.3 + 0.2 * x.cos() + 0.05 * (3.0 * x).sin(), 2.0 * PI, 128).unwrap();
    let q = miura(&u, MiuraConvention::ZakharovShabat);
    let k = kruskal_invariants(&q, 3).unwrap();
    let closed = kruskal_closed_forms(&q);
    for l in 0..3 {
        assert!((k.h[l] - closed[l]).norm() < 1e-10 * (1.0 + closed[l].norm()), "{l}");
    }
}

#[test]
fn theorem8_on_revolution_tori() {
    for (rr, r) in [(2.0, 1.0), (2f64.sqrt(), 1.0)] {
        let tor = RevolutionTorus::new(rr, r).unwrap();
        let f = tor.immersion(128, 32).unwrap();
        let rep = theorem8_check(&f, 3).unwrap();
        for l in 0..3 {
            assert!(rep.rel_differences[l] < 1e-6, "{rr}: {:?}", rep);
        }
        assert!((rep.k_u[0].re - tor.willmore()).abs() < 1e-6);
        assert!((rep.k_u[0].re - rep.willmore).abs() < 1e-6);
    }
    let tor = RevolutionTorus::new(2f64.sqrt(), 1.0).unwrap();
    let rep = theorem8_check(&tor.immersion(128, 32).unwrap(), 1).unwrap();
    assert!((rep.k_u[0].re - 2.0 * PI * PI).abs() < 1e-6);
}

#[test]
fn flat_potential_has_zero_invariants() {
    let q = miura(&Potential1D::constant(0.0, 1.0), MiuraConvention::ZakharovShabat);
    let k = kruskal_invariants(&q, 3).unwrap();
    assert!(k.k.iter().all(|v| v.norm() == 0.0));
}

#[test]
fn round_torus_is_isospectral_to_its_dual() {
    let tor = RevolutionTorus::new(2.0, 1.0).unwrap();
    let t = tor.period();
    let m = Monodromy1D::new(Potential1D::from_fn(move |x| tor.potential(x), t, 128).unwrap());
    let md = Monodromy1D::new(Potential1D::constant(tor.dual_potential(), t));
    for l in lambda_grid(12) {
        assert!((m.trace(l).unwrap() - md.trace(l).unwrap()).norm() < 1e-8 * (1.0 + md.trace(l).unwrap().norm()));
    }
    let sc = branch_points(&m, Rect::new(-1.5, 1.5, -1.5, 1.5), RootSearch::default()).unwrap();
    assert_eq!(sc.branch_points.len(), 2);
    assert!(sc.branch_points.iter().any(|z| (z - c(0.0, 1.0)).norm() < 1e-8));
    assert_eq!(sc.genus_estimate, Some(0));
}

#[test]
fn csv_header_only_when_empty() {
    assert_eq!(trace_csv(&[]), "lambda_re,lambda_im,trace_re,trace_im,mu1_re,mu1_im,mu2_re,mu2_im\n");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn multipliers_have_unit_product(a in -1.0f64..1.0, b in -1.0f64..1.0, lr in -3.0f64..3.0, li in -1.0f64..1.0) {
        let m = Monodromy1D::new(Potential1D::from_fn(move |x| a + b * x.sin(), 1.0 + a.abs(), 32).unwrap());
        let (k1, k2) = floquet_multipliers(&m, c(lr, li)).unwrap();
        prop_assert!((k1 * k2 - 1.0).norm() < 1e-14);
        prop_assert!(k1.norm() >= k2.norm());
    }

    #[test]
    fn monodromy_is_unimodular(a in -1.0f64..1.0, b in -1.0f64..1.0, lr in -4.0f64..4.0, li in -2.0f64..2.0) {
        let m = Monodromy1D::new(Potential1D::from_fn(move |x| a + b * (2.0 * x).cos(), PI, 32).unwrap());
        let d = m.monodromy(c(lr, li)).unwrap().determinant();
        prop_assert!((d - 1.0).norm() < 1e-10);
    }
}
