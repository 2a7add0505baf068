//! Torus of revolution: fundamental forms, Willmore energy, the spinor round
//! trip and the isothermic dual, with OBJ exports in the working directory.

use spectral_tori::surface::{
    dual_isothermic, spinor_from_surface, surface_from_spinor, surface_report, RevolutionTorus, ISOTHERMIC_TOL,
};

fn main() -> spectral_tori::Result<()> {
    let tor = RevolutionTorus::new(2.0, 1.0)?;
    let f = tor.immersion(96, 48)?;
    let rep = surface_report(&f)?;
    println!("Willmore {:.12} (closed form {:.12})", rep.willmore, tor.willmore());
    println!("isothermic defect {:.2e}", rep.isothermic_defect);

    let psi = spinor_from_surface(&f)?;
    let g = surface_from_spinor(&psi, f.position(0, 0))?;
    let err = f.positions().iter().zip(g.positions()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    println!("round trip vertex error {err:.2e}");

    let d = dual_isothermic(&f, ISOTHERMIC_TOL)?;
    std::fs::write("torus.obj", f.to_obj())?;
    std::fs::write("torus_dual.obj", d.to_obj())?;
    println!("wrote torus.obj and torus_dual.obj");
    Ok(())
}
