//! Clifford torus in S³: conformal factor, potential, Hopf differential,
//! Hitchin monodromy and the Willmore energy of its stereographic image.

use spectral_tori::s3::{clifford_checks, HitchinFamily, Placement, SU2Immersion};
use spectral_tori::surface::{fundamental_forms, willmore_direct, CONFORMAL_TOL};
use spectral_tori::c;

fn main() -> spectral_tori::Result<()> {
    let (s, ch) = clifford_checks(64)?;
    println!("e^a error {:.2e}, V error {:.2e}, |A| error {:.2e}", ch.exp_alpha_error, ch.potential_error, ch.hopf_modulus_error);

    let fam = HitchinFamily::new(&s)?;
    for l in [c(1.0, 0.0), c(0.0, 1.0), c(2.0, 0.0)] {
        let m = fam.monodromy(l, Placement::Eigenfunction, 0)?;
        println!("lambda = {l}: flatness {:.2e}, det defect {:.2e}", fam.flatness_residual(l, Placement::Eigenfunction)?, m.det_defect);
    }

    let f = SU2Immersion::clifford(128, 128)?.stereographic_image()?;
    let w = willmore_direct(&fundamental_forms(&f, CONFORMAL_TOL)?)?;
    println!("Willmore of the projection {w:.12} (2 pi^2 = {:.12})", 2.0 * std::f64::consts::PI.powi(2));
    Ok(())
}
