use std::f64::consts::PI;

use nalgebra::DVector;
use proptest::prelude::*;
use spectral_tori::lax::*;
use spectral_tori::linalg::multiset_distance;
use spectral_tori::surface::{dual_isothermic, fundamental_forms, spinor_from_surface, RevolutionTorus, CONFORMAL_TOL, ISOTHERMIC_TOL};
use spectral_tori::{c, C64};

fn field() -> SinhGordonField {
    SinhGordonField::periodic(1.0, 128).unwrap()
}

fn torus_data(n: usize) -> IsothermicData {
    IsothermicData::revolution(&RevolutionTorus::new(2.0, 1.0).unwrap(), n).unwrap()
}

fn phase_fit(a: &[C64], b: &[C64]) -> (C64, f64) {
    let num: C64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    let den: f64 = a.iter().map(|x| x.norm_sqr()).sum();
    let p = num / den;
    (p, a.iter().zip(b).map(|(x, y)| (x * p - y).norm()).fold(0.0, f64::max))
}

#[test]
fn vacuum_is_flat() {
    let u = SinhGordonField::vacuum(2.0, 32).unwrap();
    assert_eq!(u.residual, 0.0);
    for t in [0.0, 0.4, 1.3, 2.9] {
        let l = C64::from_polar(1.0, t);
        for conn in [LaxConnection::cmc_geom(&u), LaxConnection::cmc_zcc(&u)] {
            assert!(zero_curvature_residual(&conn, l).unwrap() < 1e-12);
        }
    }
}

#[test]
fn shooting_produces_a_periodic_solution() {
    let u = field();
    assert!(u.is_accepted(), "{}", u.residual);
    assert!(u.residual < 1e-10);
    let e = u.energy();
    let spread = e.iter().fold(0.0f64, |a, v| a.max((v - e[0]).abs()));
    assert!(spread < 1e-9, "{spread}");
    assert!((e[0] - 4.0 * 1f64.cosh()).abs() < 1e-9);
    // antisymmetry u(x + T/2) = −u(x)
    for j in 0..64 {
        assert!((u.samples[j] + u.samples[j + 64]).abs() < 1e-10);
    }
    // small oscillations of u'' = −4u have period π
    let small = SinhGordonField::periodic(1e-4, 32).unwrap();
    assert!((small.period - PI).abs() < 1e-6, "{}", small.period);
    assert!(SinhGordonField::periodic(0.0, 32).is_err());
    assert!(SinhGordonField::periodic(f64::NAN, 32).is_err());
}

#[test]
fn sinh_gordon_residual_is_small_and_lambda_independent() {
    let u = field();
    for conn in [LaxConnection::cmc_geom(&u), LaxConnection::cmc_zcc(&u)] {
        let curve = residual_curve(&conn, &[c(1.0, 0.0), c(0.0, 1.0), c(2.0, 0.0), c(0.5, 0.0), C64::from_polar(1.0, 0.8)]).unwrap();
        let r0 = curve[0].1;
        for (l, r) in &curve {
            assert!(*r < 1e-8, "{:?} λ={l}: {r}", conn.kind);
            assert!((r - r0).abs() < 1e-9, "{:?} λ={l}: {r} vs {r0}", conn.kind);
        }
    }
}

#[test]
fn perturbed_field_has_visible_residual() {
    let u = field();
    let t = u.period;
    let n = u.len();
    let s: Vec<f64> = u.samples.iter().enumerate().map(|(j, v)| v + 1e-3 * (2.0 * PI * j as f64 / n as f64).cos()).collect();
    let p = SinhGordonField::from_samples(s, t).unwrap();
    assert!(!p.is_accepted());
    let r = zero_curvature_residual(&LaxConnection::cmc_geom(&p), c(1.0, 0.0)).unwrap();
    assert!(r > 1e-4 && r < 1e-1, "{r}");
}

#[test]
fn lambda_zero_is_a_pole_of_the_cmc_pencils() {
    let u = field();
    assert!(zero_curvature_residual(&LaxConnection::cmc_zcc(&u), c(0.0, 0.0)).is_err());
    assert!(cmc_monodromy(&u, c(0.0, 0.0)).is_err());
    let iso = LaxConnection::isothermic(&torus_data(64)).unwrap();
    assert!(zero_curvature_residual(&iso, c(0.0, 0.0)).unwrap() < 1e-8);
}

#[test]
fn vacuum_monodromy_matches_exponential() {
    let t = 1.7;
    let u = SinhGordonField::vacuum(t, 16).unwrap();
    for l in [c(0.6, 0.2), c(1.0, 0.0), c(-0.3, 1.1)] {
        let m = cmc_monodromy(&u, l).unwrap();
        let s = (l.inv() - l) * 0.5;
        let want = [(s * t).exp(), (-s * t).exp()];
        assert!(multiset_distance(&m.eigenvalues, &want) < 1e-10 * want[0].norm().max(want[1].norm()), "{l}");
    }
}

#[test]
fn cmc_monodromy_identities() {
    let u = field();
    for l in [c(1.0, 0.0), C64::from_polar(1.0, 1.1), c(0.5, 0.3)] {
        let m = cmc_monodromy(&u, l).unwrap();
        assert!((m.det - m.liouville).norm() < 1e-10, "{l}: {}", (m.det - m.liouville).norm());
        let inv = sigma_involution(&LaxConnection::cmc_zcc(&u), l).unwrap();
        assert!(inv.set_distance < 1e-10, "{l}: {inv:?}");
        assert!(inv.matrix_defect < 1e-10);
    }
}

#[test]
fn prop_map_on_vacuum() {
    let u = SinhGordonField::vacuum(2.0, 32).unwrap();
    let l = C64::from_polar(1.0, 0.3);
    let zcc = LaxConnection::cmc_zcc(&u);
    for phi in floquet_profiles(&zcc, l, 32).unwrap() {
        assert!(profile_residual(&zcc, l, &phi).unwrap() < 1e-10);
        let m = cmc_prop_map(&phi, &u, l).unwrap();
        assert!(!m.degenerate);
        assert!(m.target_residual.unwrap() < 1e-10, "{:?}", m.target_residual);
    }
}

#[test]
fn prop_map_on_sinh_gordon_data() {
    let u = field();
    let zcc = LaxConnection::cmc_zcc(&u);
    let geom = LaxConnection::cmc_geom(&u);
    // λ = 1 is skipped: there the monodromy is the identity and the eigenvalue match loses half the digits
    for l in [C64::from_polar(1.0, 0.7), C64::from_polar(1.0, 1.4), C64::from_polar(1.0, 2.0)] {
        let mz = monodromy(&zcc, l).unwrap();
        let mg = monodromy(&geom, l).unwrap();
        let scale = mz.eigenvalues.iter().map(|e| e.norm()).fold(1.0, f64::max);
        assert!(multiset_distance(&mz.eigenvalues, &mg.eigenvalues) < 1e-9 * scale);
        for phi in floquet_profiles(&zcc, l, 128).unwrap() {
            assert!(profile_residual(&zcc, l, &phi).unwrap() < 1e-8);
            let m = cmc_prop_map(&phi, &u, l).unwrap();
            let r = m.target_residual.unwrap();
            assert!(r < 1e-8, "λ={l}: {r}");
            let d = mg.eigenvalues.iter().map(|e| (e - m.psi.mu).norm()).fold(f64::INFINITY, f64::min);
            assert!(d < 1e-9 * scale, "{d}");
        }
    }
}

#[test]
fn prop_map_at_zero_is_degenerate() {
    let u = field();
    let phi = floquet_profiles(&LaxConnection::cmc_zcc(&u), c(1.0, 0.0), 64).unwrap().remove(0);
    let m = cmc_prop_map(&phi, &u, c(0.0, 0.0)).unwrap();
    assert!(m.degenerate);
    assert!(m.target_residual.is_none());
    assert!(m.psi.component(0).iter().all(|z| z.norm() == 0.0));
}

#[test]
fn revolution_data_are_isothermic() {
    let d = torus_data(64);
    let (r1, r2) = d.codazzi_residuals();
    assert!(r1 < 1e-12 && r2 < 1e-12, "{r1} {r2}");
    assert!(d.dual_potential().iter().all(|v| (v + 0.5).abs() < 1e-13));
    let tor = RevolutionTorus::new(2.0, 1.0).unwrap();
    for (j, v) in d.potential().iter().enumerate() {
        assert!((v - tor.potential(tor.period() * j as f64 / 64.0)).abs() < 1e-13);
    }
    // the numeric route through the fundamental forms
    let f = tor.immersion(64, 16).unwrap();
    let sd = fundamental_forms(&f, CONFORMAL_TOL).unwrap();
    let e = IsothermicData::from_surface(&sd, 1e-8).unwrap();
    for j in 0..64 {
        assert!((e.alpha[j] - d.alpha[j]).abs() < 1e-8);
        assert!((e.k1[j] - d.k1[j]).abs() < 1e-8 && (e.k2[j] - d.k2[j]).abs() < 1e-8);
    }
}

#[test]
fn non_isothermic_data_rejected() {
    let mut d = torus_data(64);
    d.k2[3] += 1e-3;
    let e = LaxConnection::isothermic(&d).unwrap_err().to_string();
    assert!(e.contains("Codazzi"), "{e}");
}

#[test]
fn isothermic_pencil_is_flat() {
    let conn = LaxConnection::isothermic(&torus_data(64)).unwrap();
    for l in [c(0.5, 0.0), c(1.0, 0.0), c(0.0, 2.0), c(0.0, 0.0)] {
        let r = zero_curvature_residual(&conn, l).unwrap();
        assert!(r < 1e-8, "{l}: {r}");
    }
}

#[test]
fn isothermic_monodromy_involution() {
    let conn = LaxConnection::isothermic(&torus_data(64)).unwrap();
    for l in [c(0.5, 0.0), c(0.3, 0.4), c(0.0, 1.0)] {
        let m = isothermic_monodromy(&conn, l).unwrap();
        assert!((m.det - m.liouville).norm() < 1e-10 * m.liouville.norm());
        let inv = sigma_involution(&conn, l).unwrap();
        assert!(inv.set_distance < 1e-9, "{l}: {inv:?}");
    }
    let u = field();
    assert!(isothermic_monodromy(&LaxConnection::cmc_zcc(&u), c(1.0, 0.0)).is_err());
}

#[test]
fn extracted_dirac_pair() {
    let d = torus_data(64);
    let conn = LaxConnection::isothermic(&d).unwrap();
    for l in [c(0.7, 0.0), c(0.2, 0.3)] {
        for phi in floquet_profiles(&conn, l, 64).unwrap() {
            assert!(profile_residual(&conn, l, &phi).unwrap() < 1e-8);
            let pair = extract_dirac_pair(&phi, &d).unwrap();
            assert!(pair.residual < 1e-7 && pair.residual_star < 1e-7, "{l}: {} {}", pair.residual, pair.residual_star);
            // the multiplier of both extractions is a Zakharov–Shabat multiplier at κ
            assert!(zs_multiplier_defect(&pair.psi, &pair.potential).unwrap() < 1e-9);
            assert!(zs_multiplier_defect(&pair.psi_star, &pair.dual_potential).unwrap() < 1e-9);
        }
    }
}

#[test]
fn lambda_zero_lift_reproduces_dual_spinor() {
    let tor = RevolutionTorus::new(2.0, 1.0).unwrap();
    let f = tor.immersion(128, 16).unwrap();
    let sd = fundamental_forms(&f, CONFORMAL_TOL).unwrap();
    let psi = spinor_from_surface(&f).unwrap();
    let lift = lift_spinor(&psi);
    let r = isothermic_field_residual(&sd, c(0.0, 0.0), &lift).unwrap();
    assert!(r < 1e-7, "{r}");
    // at λ ≠ 0 the lift is no longer a solution
    assert!(isothermic_field_residual(&sd, c(0.5, 0.0), &lift).unwrap() > 1e-2);
    let (a, b) = extract_dirac_fields(&lift, &sd.exp_alpha);
    assert!(a[0].max_diff(&psi.psi1) < 1e-9 && a[1].max_diff(&psi.psi2) < 1e-9);
    let dual = spinor_from_surface(&dual_isothermic(&f, ISOTHERMIC_TOL).unwrap()).unwrap();
    let got: Vec<C64> = b[0].values().iter().chain(b[1].values()).cloned().collect();
    let want: Vec<C64> = dual.psi1.values().iter().chain(dual.psi2.values()).cloned().collect();
    let (p, err) = phase_fit(&got, &want);
    assert!((p.norm() - 1.0).abs() < 1e-7, "{p}");
    assert!(err < 1e-7, "{err}");
}

#[test]
fn sign_flip_leaves_dirac_residual_unchanged() {
    let d = torus_data(64);
    let conn = LaxConnection::isothermic(&d).unwrap();
    let phi = floquet_profiles(&conn, c(0.7, 0.0), 64).unwrap().remove(0);
    let pair = extract_dirac_pair(&phi, &d).unwrap();
    let mut flipped = pair.psi.clone();
    for v in &mut flipped.samples {
        *v = DVector::from_vec(vec![v[0], -v[1]]);
    }
    let neg: Vec<f64> = pair.potential.iter().map(|u| -u).collect();
    let r = dirac_profile_residual(&flipped, &neg).unwrap();
    assert!((r - pair.residual).abs() < 1e-15);
    assert!(zs_multiplier_defect(&flipped, &neg).unwrap() < 1e-9);
}

#[test]
fn mismatched_potential_rejected() {
    let d = torus_data(64);
    let phi = floquet_profiles(&LaxConnection::isothermic(&d).unwrap(), c(0.7, 0.0), 64).unwrap().remove(0);
    let pair = extract_dirac_pair(&phi, &d).unwrap();
    assert!(dirac_profile_residual(&pair.psi, &pair.potential[..10]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn cmc_involution_for_random_lambda(r in 0.4f64..2.0, t in 0.0f64..6.28) {
        let u = SinhGordonField::periodic(0.6, 64).unwrap();
        let inv = sigma_involution(&LaxConnection::cmc_zcc(&u), C64::from_polar(r, t)).unwrap();
        prop_assert!(inv.set_distance < 1e-9 * (1.0 + inv.eigvec_condition));
    }

    #[test]
    fn isothermic_residual_for_random_lambda(a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let conn = LaxConnection::isothermic(&torus_data(64)).unwrap();
        prop_assert!(zero_curvature_residual(&conn, c(a, b)).unwrap() < 1e-8);
    }
}

#[test]
fn extractions_hold_along_a_lambda_path() {
    let d = torus_data(64);
    let path: Vec<C64> = (0..6).map(|i| C64::from_polar(0.3 * i as f64, 0.5 * i as f64)).collect();
    for (l, r) in extraction_residual_curve(&d, &path, 64).unwrap() {
        assert!(r < 1e-7, "{l}: {r}");
    }
}
