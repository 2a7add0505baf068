//! 1D Dirac monodromy of the revolution-torus potential: traces, branch
//! points, and the Kruskal invariants of the torus and its dual.

use spectral_tori::c;
use spectral_tori::floquet1d::{branch_points, theorem8_check, Monodromy1D, Potential1D, Rect, RootSearch};
use spectral_tori::surface::{spinor_from_surface, RevolutionTorus};

fn main() -> spectral_tori::Result<()> {
    let f = RevolutionTorus::new(2.0, 1.0)?.immersion(128, 32)?;
    let u = spinor_from_surface(&f)?.potential;
    let m = Monodromy1D::new(Potential1D::from_field_row(&u)?);
    for l in [c(0.0, 0.0), c(0.5, 0.0), c(0.0, 0.5)] {
        println!("tr T({l}) = {:.10}", m.trace(l)?);
    }
    let curve = branch_points(&m, Rect::new(-1.5, 1.5, -1.5, 1.5), RootSearch::default())?;
    println!("branch points {:?}", curve.branch_points);
    println!("resonance points {:?}", curve.resonance_points);

    let rep = theorem8_check(&f, 3)?;
    println!("K(U)  = {:?}", rep.k_u);
    println!("K(U*) = {:?}", rep.k_dual);
    println!("relative differences {:?}", rep.rel_differences);
    Ok(())
}
