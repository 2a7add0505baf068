use std::f64::consts::PI;

use proptest::prelude::*;
use spectral_tori::floquet2d::*;
use spectral_tori::{c, FundamentalGrid, Lattice, PeriodicField, Sl2z, C64};

fn field(lat: Lattice, n: usize, f: impl Fn(f64, f64) -> f64) -> PeriodicField {
    PeriodicField::from_xy(FundamentalGrid::new(lat, n, n).unwrap(), f).unwrap()
}

fn qp(a: (f64, f64), b: (f64, f64)) -> QuasimomentumPoint {
    QuasimomentumPoint::new(c(a.0, a.1), c(b.0, b.1))
}

/// Solve f0 + u·f1 + v·f2 = 0 over reals.
fn solve_real(f0: C64, f1: C64, f2: C64) -> Option<(f64, f64)> {
    let det = f1.re * f2.im - f2.re * f1.im;
    if det.abs() < 1e-14 {
        return None;
    }
    Some(((-f0.re * f2.im + f2.re * f0.im) / det, (-f1.re * f0.im + f0.re * f1.im) / det))
}

/// Intersections of a linear slice with the free sheets.
fn free_intersections(lat: &Lattice, base: QuasimomentumPoint, d1: QuasimomentumPoint, d2: QuasimomentumPoint, range: i64) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for m in -range..=range {
        for n in -range..=range {
            let a = lat.dzbar_symbol(m as f64, n as f64);
            let b = lat.dz_symbol(m as f64, n as f64);
            for p in [solve_real(base.w() + a, d1.w(), d2.w()), solve_real(base.lambda() + b, d1.lambda(), d2.lambda())]
                .into_iter()
                .flatten()
            {
                if !out.iter().any(|q| (q.0 - p.0).abs() + (q.1 - p.1).abs() < 1e-9) {
                    out.push(p);
                }
            }
        }
    }
    out
}

#[test]
fn zero_potential_zeros_lie_on_planes() {
    let lat = Lattice::square();
    let p = TruncatedPencil::new(&field(lat, 16, |_, _| 0.0), 12).unwrap();
    let base = qp((0.11, 0.07), (-0.03, 0.13));
    let d1 = qp((1.0, 0.2), (0.3, -0.1));
    let d2 = qp((-0.2, 0.4), (0.9, 0.5));
    let slice = Slice::linear(base, d1, d2, (-1.5, 1.5), (-1.5, 1.5), 41);
    let scan = spectrum_scan(&p, &slice, &ScanOptions::default()).unwrap();
    assert!(!scan.flagged.is_empty());
    for f in &scan.flagged {
        assert!(free_plane_distance(&lat, &f.sample.k, 14) < 1e-12, "{:?}", f);
    }
    let (du, dv) = slice.cell();
    for (u, v) in free_intersections(&lat, base, d1, d2, 14) {
        if slice.is_interior(u, v, 1.0) {
            assert!(
                scan.flagged.iter().any(|f| (f.u - u).abs() < du && (f.v - v).abs() < dv),
                "missed ({u}, {v})"
            );
        }
    }
}

#[test]
fn zero_potential_resonances_square_lattice() {
    let lat = Lattice::square();
    let p = TruncatedPencil::new(&field(lat, 16, |_, _| 0.0), 12).unwrap();
    let slice = Slice::lambda_plane((-10.6, 10.6), (-10.6, 10.6), 41);
    let opts = ScanOptions { which: 1, ..ScanOptions::default() };
    let scan = spectrum_scan(&p, &slice, &opts).unwrap();
    let (du, _) = slice.cell();
    let mut want = Vec::new();
    for m in -3i64..=3 {
        for n in -3i64..=3 {
            want.push(c(PI * n as f64, PI * m as f64));
        }
    }
    for w in &want {
        let hit = scan.flagged.iter().find(|f| (c(f.u, f.v) - w).norm() < du);
        let hit = hit.unwrap_or_else(|| panic!("missing resonance {w}"));
        assert!((c(hit.u, hit.v) - w).norm() < 1e-10);
    }
    for f in &scan.flagged {
        assert!(want.iter().any(|w| (c(f.u, f.v) - w).norm() < 1e-9), "spurious {} {}", f.u, f.v);
    }
    // the partner on the ψ₂ sheet has λ₋ = π(n − im)
    for m in -3i64..=3 {
        for n in -3i64..=3 {
            let lp = c(PI * n as f64, PI * m as f64);
            let k = QuasimomentumPoint::from_spectral(lp, c(0.0, 0.0));
            let lm = resonance_partner(&lat, &k, (-m, -n));
            assert!((lm - c(PI * n as f64, -PI * m as f64)).norm() < 1e-12);
            let kp = k.translate(lat.dual_vector(-m, -n));
            assert!(kp.lambda().norm() < 1e-12);
        }
    }
}

#[test]
fn zero_potential_resonances_hexagonal_lattice() {
    let lat = Lattice::hexagonal();
    let p = TruncatedPencil::new(&field(lat, 16, |_, _| 0.0), 12).unwrap();
    let slice = Slice::lambda_plane((-9.3, 9.3), (-9.3, 9.3), 41);
    let scan = spectrum_scan(&p, &slice, &ScanOptions { which: 1, ..ScanOptions::default() }).unwrap();
    let mut want: Vec<C64> = free_resonances(&lat, 12).into_iter().map(|r| r.2).collect();
    want.push(c(0.0, 0.0));
    let (du, _) = slice.cell();
    let inside: Vec<C64> = want.iter().copied().filter(|w| slice.is_interior(w.re, w.im, 1.0)).collect();
    assert!(inside.len() > 20);
    for w in &inside {
        assert!(scan.flagged.iter().any(|f| (c(f.u, f.v) - w).norm() < 1e-10), "missing {w}");
    }
    for f in &scan.flagged {
        let d = want.iter().map(|w| (c(f.u, f.v) - w).norm()).fold(f64::INFINITY, f64::min);
        assert!(d < du, "spurious {} {}", f.u, f.v);
    }
}

#[test]
fn constant_potential_family() {
    let cc = 0.2;
    let lat = Lattice::square();
    let p = TruncatedPencil::new(&field(lat, 16, |_, _| cc), 6).unwrap();
    for l in [c(0.7, 0.3), c(-2.0, 1.1), c(5.0, -0.4)] {
        let k = QuasimomentumPoint::from_spectral(l, -c(cc * cc, 0.0) / l);
        let t = p.triplet(&k, 0).unwrap();
        assert!(t.sigma < 1e-13);
        // null vector ∝ (1, −C/λ) on the zero mode
        let v = t.null_vector();
        let (a, b) = (v[0], v[1]);
        assert!((b / a + c(cc, 0.0) / l).norm() < 1e-12);
    }
}

#[test]
fn constant_potential_resonances() {
    let cc = 0.2;
    let lat = Lattice::square();
    let p = TruncatedPencil::new(&field(lat, 16, |_, _| cc), 6).unwrap();
    let slice = Slice::spectral(move |l| -c(cc * cc, 0.0) / l, (-7.9, 7.9), (-7.9, 7.9), 40);
    let scan = spectrum_scan(&p, &slice, &ScanOptions { which: 1, ..ScanOptions::default() }).unwrap();
    let want: Vec<C64> = constant_resonances(&lat, cc, 4).into_iter().filter(|l| l.norm() > 1.0).collect();
    let (du, _) = slice.cell();
    for w in want.iter().filter(|w| slice.is_interior(w.re, w.im, 1.0)) {
        assert!(scan.flagged.iter().any(|f| (c(f.u, f.v) - w).norm() < 1e-9), "missing {w}");
    }
    for f in scan.flagged.iter().filter(|f| c(f.u, f.v).norm() > 1.0) {
        let d = want.iter().map(|w| (c(f.u, f.v) - w).norm()).fold(f64::INFINITY, f64::min);
        assert!(d < du);
    }
}

#[test]
fn dual_translation_invariance() {
    let lat = Lattice::square();
    let u = field(lat, 32, |x, y| 0.3 + 0.2 * (2.0 * PI * x).cos() + 0.1 * (2.0 * PI * y).sin());
    let p = TruncatedPencil::new(&u, 8).unwrap();
    for k in [qp((0.2, 0.1), (-0.3, 0.05)), qp((-0.4, 0.3), (0.1, -0.2))] {
        let w0 = p.witness(&k);
        for (a, b) in [(1, 0), (0, 1), (-1, 1)] {
            let w1 = p.witness(&k.translate(lat.dual_vector(a, b)));
            assert!((w0 - w1).abs() < 1e-10, "{w0} {w1}");
        }
    }
}

#[test]
fn involutions_of_flagged_set() {
    let lat = Lattice::square();
    let u = field(lat, 32, |x, y| 0.3 + 0.2 * (2.0 * PI * x).cos() + 0.15 * (2.0 * PI * y).sin());
    let p = TruncatedPencil::new(&u, 3).unwrap();
    // real d1 and imaginary d2 make the slice invariant under k → −k and k → −k̄
    let slice = Slice::linear(
        QuasimomentumPoint::real(0.0, 0.0),
        qp((1.0, 0.0), (0.35, 0.0)),
        qp((0.0, 0.25), (0.0, 0.9)),
        (-1.3, 1.3),
        (-1.3, 1.3),
        41,
    );
    let scan = spectrum_scan(&p, &slice, &ScanOptions::default()).unwrap();
    assert!(scan.flagged.len() >= 4, "{}", scan.flagged.len());
    let (du, dv) = slice.cell();
    let cell = du.hypot(dv) * 1.4;
    assert!(symmetry_residual(&scan, &slice, |k| k.neg()) < cell);
    assert!(symmetry_residual(&scan, &slice, |k| k.neg_conj()) < cell);
    // pointwise: the witness itself is symmetric
    for f in &scan.flagged {
        assert!(p.witness(&f.sample.k.neg()) < 1e-9);
        assert!(p.witness(&f.sample.k.neg_conj()) < 1e-9);
    }
}

#[test]
fn truncation_converges() {
    let lat = Lattice::square();
    let u = field(lat, 32, |x, _| 0.25 + 0.2 * (2.0 * PI * x).cos() + 0.05 * (4.0 * PI * x).sin());
    let a = TruncatedPencil::new(&u, 8).unwrap();
    let b = TruncatedPencil::new(&u, 12).unwrap();
    for k in [qp((0.2, 0.1), (-0.3, 0.05)), qp((0.05, -0.2), (0.4, 0.3))] {
        assert!((a.witness(&k) - b.witness(&k)).abs() < 1e-8);
    }
}

#[test]
fn cutoff_warning() {
    let lat = Lattice::square();
    let u = field(lat, 32, |x, _| 0.1 * (2.0 * PI * 5.0 * x).cos());
    assert!(!TruncatedPencil::new(&u, 3).unwrap().warnings.is_empty());
    assert!(TruncatedPencil::new(&u, 6).unwrap().warnings.is_empty());
    assert!(TruncatedPencil::new(&u, 0).is_err());
}

fn path(a: C64, b: C64, n: usize) -> Vec<C64> {
    (1..=n).map(|j| a + (b - a) * (j as f64 / n as f64)).collect()
}

#[test]
fn trace_branch_zero_potential_is_plane() {
    let lat = Lattice::square();
    let p = TruncatedPencil::new(&field(lat, 16, |_, _| 0.0), 8).unwrap();
    let seed = p.sample(QuasimomentumPoint::from_spectral(c(1.0, PI / 2.0), c(1e-3, 0.0)));
    let br = trace_branch(&p, &seed, &path(c(1.0, PI / 2.0), c(20.0, PI / 2.0), 30), &NewtonOptions::default());
    assert!(br.complete);
    assert!(br.w.iter().all(|w| w.norm() < 1e-10));
}

#[test]
fn trace_branch_constant_potential() {
    let cc = 0.2;
    let lat = Lattice::square();
    let p = TruncatedPencil::new(&field(lat, 16, |_, _| cc), 8).unwrap();
    let l0 = c(1.0, PI / 2.0);
    let seed = p.sample(QuasimomentumPoint::from_spectral(l0, c(0.0, 0.0)));
    let br = trace_branch(&p, &seed, &path(l0, c(30.0, PI / 2.0), 40), &NewtonOptions::default());
    assert!(br.complete);
    for (l, w) in br.lambdas.iter().zip(&br.w) {
        assert!((w + c(cc * cc, 0.0) / l).norm() < 1e-10);
    }
    for s in &br.samples {
        let (m1, m2) = s.multipliers;
        let (l, w) = (s.k.lambda(), s.k.w());
        assert!((m1 - (l + w).exp()).norm() < 1e-10 * m1.norm());
        assert!((m2 - (l * c(0.0, 1.0) - w * c(0.0, 1.0)).exp()).norm() < 1e-10 * m2.norm());
    }
}

#[test]
fn trace_branch_perturbed_potential_stays_close() {
    let cc = 0.2;
    let lat = Lattice::square();
    let p = TruncatedPencil::new(&field(lat, 32, |x, _| cc + 0.01 * (2.0 * PI * x).cos()), 10).unwrap();
    let l0 = c(4.0, PI / 2.0);
    let seed = p.sample(QuasimomentumPoint::from_spectral(l0, c(0.0, 0.0)));
    let br = trace_branch(&p, &seed, &path(l0, c(30.0, PI / 2.0), 30), &NewtonOptions::default());
    assert!(br.complete, "{:?}", br.message);
    for (l, w) in br.lambdas.iter().zip(&br.w) {
        let d = (w + c(cc * cc, 0.0) / l).norm();
        assert!(d < 0.01 * 0.2 / l.norm() * 4.0, "{l}: {d}");
    }
}

#[test]
fn branch_loss_is_reported() {
    let lat = Lattice::square();
    let p = TruncatedPencil::new(&field(lat, 16, |_, _| 0.2), 4).unwrap();
    let seed = p.sample(QuasimomentumPoint::from_spectral(c(1.0, 0.0), c(0.0, 0.0)));
    let opts = NewtonOptions { tol: 1e-11, max_iter: 1 };
    let br = trace_branch(&p, &seed, &[c(2.0, 0.5), c(3.0, 0.5)], &opts);
    assert!(!br.complete && br.message.is_some());
}

#[test]
fn c1_zero_and_constant() {
    let lat = Lattice::square();
    let p = TruncatedPencil::new(&field(lat, 16, |_, _| 0.0), 8).unwrap();
    let e = extract_c1(&p, &FitOptions::default()).unwrap();
    assert!(e.c1.norm() < 1e-12);
    let cc = 0.2;
    let p = TruncatedPencil::new(&field(lat, 16, |_, _| cc), 8).unwrap();
    let e = extract_c1(&p, &FitOptions::default()).unwrap();
    assert!((e.c1 + c(cc * cc, 0.0)).norm() < 1e-4);
    assert!((e.willmore_from_c1 - e.willmore_direct).abs() < 1e-4);
    assert!((e.willmore_direct - 4.0 * cc * cc).abs() < 1e-14);
    assert!(e.reliable);
}

#[test]
fn c1_nonconstant_potential() {
    let lat = Lattice::square();
    let u = field(lat, 64, |x, _| 0.3 + 0.2 * (2.0 * PI * x).cos() + 0.05 * (4.0 * PI * x).sin());
    let p = TruncatedPencil::new(&u, 16).unwrap();
    let e = extract_c1(&p, &FitOptions::default()).unwrap();
    let direct = e.willmore_direct;
    assert!((4.0 * (0.09 + 0.02 + 0.00125) - direct).abs() < 1e-12);
    assert!((e.willmore_from_c1 - direct).abs() < 1e-3 * direct, "{} {}", e.willmore_from_c1, direct);
    assert!(e.reliable, "{}", e.fit_residual);
}

#[test]
fn c1_on_rectangular_lattice() {
    let lat = Lattice::rectangular(1.3, 0.8).unwrap();
    let u = field(lat, 32, |x, _| 0.15 + 0.1 * (2.0 * PI * x / 1.3).cos());
    let p = TruncatedPencil::new(&u, 12).unwrap();
    let e = extract_c1(&p, &FitOptions::default()).unwrap();
    assert!((e.willmore_from_c1 - e.willmore_direct).abs() < 1e-3 * e.willmore_direct);
}

#[test]
fn multiplier_law_examples() {
    let mu = (c(0.3, 1.2), c(-2.0, 0.4));
    assert_eq!(transform_multipliers(mu, &Sl2z::IDENTITY).unwrap(), mu);
    let m = Sl2z::new(1, 1, 0, 1).unwrap();
    let t = transform_multipliers(mu, &m).unwrap();
    assert!((t.0 - mu.0 * mu.1).norm() < 1e-15 && t.1 == mu.1);
    let back = transform_multipliers(t, &m.inverse()).unwrap();
    assert!((back.0 - mu.0).norm() < 1e-12 && (back.1 - mu.1).norm() < 1e-12);
    assert!(transform_multipliers(mu, &Sl2z { a: 2, b: 0, c: 0, d: 1 }).is_err());
}

#[test]
fn spectra_in_two_bases() {
    let lat = Lattice::square();
    let u = field(lat, 32, |x, _| 0.25 + 0.1 * (2.0 * PI * x).cos());
    let m = Sl2z::new(1, 1, 0, 1).unwrap();
    let u2 = u.change_basis(&m, 32, 32).unwrap();
    let p1 = TruncatedPencil::new(&u, 8).unwrap();
    let p2 = TruncatedPencil::new(&u2, 8).unwrap();
    let base = qp((0.13, 0.04), (-0.07, 0.11));
    let slice = Slice::linear(base, qp((1.0, 0.1), (0.2, 0.0)), qp((0.1, 0.6), (-0.3, 0.8)), (-1.2, 1.2), (-1.2, 1.2), 41);
    let s1 = spectrum_scan(&p1, &slice, &ScanOptions::default()).unwrap();
    let s2 = spectrum_scan(&p2, &slice, &ScanOptions::default()).unwrap();
    assert!(s1.flagged.len() >= 3);
    let mapped = multiplier_basis_change(&s1.flagged.iter().map(|f| f.sample).collect::<Vec<_>>(), &m).unwrap();
    let mut matched = 0;
    for a in &mapped {
        let Some(b) = s2.flagged.iter().find(|b| b.sample.k.distance(&a.k) < 1e-8) else { continue };
        matched += 1;
        let (x, y) = (a.multipliers, b.sample.multipliers);
        assert!((x.0 - y.0).norm() < 1e-7 * x.0.norm() && (x.1 - y.1).norm() < 1e-7 * x.1.norm());
    }
    assert_eq!(matched, s1.flagged.len());
    assert_eq!(s1.flagged.len(), s2.flagged.len());
}

#[test]
fn csv_header_only_when_empty() {
    assert_eq!(samples_csv(&[]), "k1_re,k1_im,k2_re,k2_im,witness,mu1_re,mu1_im,mu2_re,mu2_im\n");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn multiplier_law_is_exact(a in -3i64..4, b in -3i64..4, kr in -0.5f64..0.5, ki in -0.2f64..0.2, lr in -0.5f64..0.5) {
        let lat = Lattice::hexagonal();
        // build an SL(2,Z) matrix [[a', b],[c, d]] by completing (1 + a·b, b) etc.
        let m = Sl2z::new(1 + a * b, a, b, 1).unwrap();
        let k = QuasimomentumPoint::new(c(kr, ki), c(lr, -ki));
        let mu = k.multipliers(&lat);
        let lat2 = lat.change_basis(&m).unwrap();
        let direct = k.multipliers(&lat2);
        let law = transform_multipliers(mu, &m).unwrap();
        prop_assert!((direct.0 - law.0).norm() < 1e-12 * (1.0 + law.0.norm()));
        prop_assert!((direct.1 - law.1).norm() < 1e-12 * (1.0 + law.1.norm()));
    }

    #[test]
    fn witness_symmetries(kr in -0.5f64..0.5, ki in -0.5f64..0.5, lr in -0.5f64..0.5, li in -0.5f64..0.5) {
        let lat = Lattice::square();
        let u = field(lat, 16, |x, y| 0.2 + 0.1 * (2.0 * PI * x).cos() - 0.1 * (2.0 * PI * y).sin());
        let p = TruncatedPencil::new(&u, 3).unwrap();
        let k = QuasimomentumPoint::new(c(kr, ki), c(lr, li));
        let w = p.witness(&k);
        prop_assert!((p.witness(&k.neg()) - w).abs() < 1e-12 * (1.0 + w));
        prop_assert!((p.witness(&k.neg_conj()) - w).abs() < 1e-12 * (1.0 + w));
    }
}
