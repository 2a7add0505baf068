use std::f64::consts::PI;

use spectral_tori::surface::*;
use spectral_tori::{c, FundamentalGrid, Lattice, C64};

fn torus21(n: usize) -> (RevolutionTorus, ImmersionR3) {
    let t = RevolutionTorus::new(2.0, 1.0).unwrap();
    (t, t.immersion(n, n).unwrap())
}

#[test]
fn codazzi_and_gauss_identities() {
    let (_, f) = torus21(128);
    let sd = fundamental_forms(&f, CONFORMAL_TOL).unwrap();
    let (r1, r2) = sd.codazzi_residuals().unwrap();
    assert!(r1 < 1e-7 && r2 < 1e-7, "{r1} {r2}");
    for i in 0..f.grid().len() {
        let e = sd.exp_alpha.values()[i].re;
        let h = sd.mean_curv.values()[i].re;
        let b = sd.b.values()[i].re;
        assert!((b - 0.5 * h * e * e).abs() < 1e-12);
        let n: f64 = (0..3).map(|ci| sd.normal[ci].values()[i].re.powi(2)).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }
}

#[test]
fn spinor_of_revolution_torus() {
    let (tor, f) = torus21(128);
    let psi = spinor_from_surface(&f).unwrap();
    assert!(psi.dirac_residual().unwrap() < 1e-8);
    let g = *f.grid();
    // y-independence and the closed form of U
    for j in 0..g.n1 {
        let x = g.point(j, 0).re;
        for k in 0..g.n2 {
            assert!((psi.potential.at(j, k).re - psi.potential.at(j, 0).re).abs() < 1e-10);
        }
        assert!((psi.potential.at(j, 0).re - tor.potential(x)).abs() < 1e-8);
    }
    let ea = psi.exp_alpha();
    let sd = fundamental_forms(&f, CONFORMAL_TOL).unwrap();
    assert!(ea.max_diff(&sd.exp_alpha) < 1e-9);
    let (g1, g2) = psi.gauss_weingarten_residuals(&sd.hopf).unwrap();
    assert!(g1 < 1e-7 && g2 < 1e-7, "{g1} {g2}");
}

#[test]
fn round_trip_reproduces_torus() {
    let (_, f) = torus21(128);
    let psi = spinor_from_surface(&f).unwrap();
    let g = surface_from_spinor(&psi, f.position(0, 0)).unwrap();
    let p = f.positions();
    let q = g.positions();
    let shift = p[0] - q[0];
    let err = p.iter().zip(&q).map(|(a, b)| (a - b - shift).norm()).fold(0.0, f64::max);
    assert!(err < 1e-6, "{err}");
    assert!(g.periods()[0].norm() + g.periods()[1].norm() < 1e-8);
    for d in psi.closure_defect().unwrap() {
        assert!(d.norm() < 1e-8);
    }
    // spinor -> surface -> spinor up to a global sign per component
    let psi2 = spinor_from_surface(&g).unwrap();
    let e1 = psi2.psi1.max_diff(&psi.psi1).min(psi2.psi1.max_diff(&psi.psi1.scale(c(-1.0, 0.0))));
    let e2 = psi2.psi2.max_diff(&psi.psi2).min(psi2.psi2.max_diff(&psi.psi2.scale(c(-1.0, 0.0))));
    assert!(e1 < 1e-7 && e2 < 1e-7);
}

#[test]
fn willmore_routes_agree() {
    let (tor, f) = torus21(128);
    let sd = fundamental_forms(&f, CONFORMAL_TOL).unwrap();
    let w = willmore_direct(&sd).unwrap();
    let psi = spinor_from_surface(&f).unwrap();
    let wu = psi.willmore().unwrap();
    // independent 1D quadrature of 4∫U² over the period in x, times 2π
    let n = 4000;
    let tp = tor.period();
    let q: f64 = (0..n).map(|j| tor.potential(tp * j as f64 / n as f64).powi(2)).sum::<f64>() * tp / n as f64;
    let w1d = 4.0 * q * 2.0 * PI;
    assert!((w - w1d).abs() < 1e-8, "{w} {w1d}");
    assert!((wu - w1d).abs() < 1e-8);
    assert!((w - tor.willmore()).abs() < 1e-8);
    assert!((w - wu).abs() < 1e-6 * (1.0 + w));
}

#[test]
fn dual_surface_properties() {
    let (tor, f) = torus21(128);
    let sd = fundamental_forms(&f, CONFORMAL_TOL).unwrap();
    let fd = dual_isothermic(&f, ISOTHERMIC_TOL).unwrap();
    let sdd = fundamental_forms(&fd, CONFORMAL_TOL).unwrap();
    for ci in 0..3 {
        assert!(sdd.normal[ci].add(&sd.normal[ci]).max_abs() < 1e-8);
    }
    // metric e^{-2α}
    let em = sd.exp_alpha.map(|e| c(1.0 / e.re, 0.0));
    assert!(sdd.exp_alpha.max_diff(&em) < 1e-9);
    // potentials through curvatures
    let (kx, ky) = sd.coordinate_curvatures();
    let u = kx.add(&ky).mul(&sd.exp_alpha).scale(c(0.25, 0.0));
    assert!(u.max_diff(&sd.potential()) < 1e-8);
    let ustar = ky.sub(&kx).mul(&sd.exp_alpha).scale(c(0.25, 0.0));
    assert!(sdd.potential().max_diff(&ustar) < 1e-8);
    assert!(sd.dual_potential().max_diff(&ustar) < 1e-8);
    assert!(ustar.map(|v| v - tor.dual_potential()).max_abs() < 1e-8);
    // F** = F modulo translation
    let fdd = dual_isothermic(&fd, ISOTHERMIC_TOL).unwrap();
    let p = f.positions();
    let q = fdd.positions();
    let shift = p[0] - q[0];
    let err = p.iter().zip(&q).map(|(a, b)| (a - b - shift).norm()).fold(0.0, f64::max);
    assert!(err < 1e-7, "{err}");
}

#[test]
fn non_isothermic_rejected() {
    // the torus in the rotated parameter w = e^{iπ/4}z has Hopf differential A/i
    let tor = RevolutionTorus::new(2.0, 1.0).unwrap();
    let rot = C64::from_polar(1.0, PI / 4.0);
    let l = tor.lattice();
    let lat = Lattice::new(l.gamma1 * rot, l.gamma2 * rot).unwrap();
    let g = FundamentalGrid::new(lat, 64, 64).unwrap();
    let f = ImmersionR3::from_xy(g, |x, y| {
        let z = c(x, y) / rot;
        tor.point(z.re, z.im)
    })
    .unwrap();
    let e = dual_isothermic(&f, ISOTHERMIC_TOL).unwrap_err().to_string();
    assert!(e.contains("not isothermic"), "{e}");
}

#[test]
fn non_conformal_rejected() {
    let g = FundamentalGrid::new(Lattice::square(), 16, 16).unwrap();
    let f = ImmersionR3::from_samples(
        g,
        &g.points().iter().map(|z| V3::new(2.0 * z.re, z.im, 0.0)).collect::<Vec<_>>(),
        [V3::new(2.0, 0.0, 0.0), V3::new(0.0, 1.0, 0.0)],
    )
    .unwrap();
    let e = fundamental_forms(&f, CONFORMAL_TOL).unwrap_err().to_string();
    assert!(e.contains("not conformal"));
}

#[test]
fn obj_counts() {
    let (_, f) = torus21(64);
    let obj = f.to_obj();
    assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 4096);
    assert_eq!(obj.lines().filter(|l| l.starts_with("f ")).count(), 4096);
}

#[test]
fn minimal_patch_has_zero_willmore() {
    let g = FundamentalGrid::new(Lattice::square(), 16, 16).unwrap();
    let f = ImmersionR3::plane(g);
    let sd = fundamental_forms(&f, CONFORMAL_TOL).unwrap();
    assert_eq!(willmore_direct(&sd).unwrap(), 0.0);
}

#[test]
fn sign_flip_isospectrality() {
    let (_, f) = torus21(64);
    let psi = spinor_from_surface(&f).unwrap();
    let flipped = psi.sign_flipped();
    let (a, b) = psi.dirac_residuals().unwrap();
    let (a2, b2) = flipped.dirac_residuals().unwrap();
    assert!((a - a2).abs() < 1e-15 && (b - b2).abs() < 1e-15);
}
