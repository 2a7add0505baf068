//! Möbius invariance: invert the torus of revolution in a sphere centred on
//! its axis and compare potentials, branch points and Kruskal invariants.

use spectral_tori::s3::{apply_moebius, theorem11_check, MoebiusMap, MoebiusPrimitive, Theorem11Options};
use spectral_tori::surface::RevolutionTorus;

fn main() -> spectral_tori::Result<()> {
    let f = RevolutionTorus::new(2.0, 1.0)?.immersion(128, 64)?;
    let map = MoebiusMap::new(vec![
        MoebiusPrimitive::Homothety { factor: 0.5 },
        MoebiusPrimitive::Inversion { center: [0.0, 0.0, 1.5] },
    ])?;
    let img = apply_moebius(&map, &f)?;
    if let Some(d) = img.min_center_distance {
        println!("closest approach to the inversion centre {d:.4}");
    }
    std::fs::write("inverted.obj", img.immersion.to_obj())?;

    let rep = theorem11_check(&f, &map, &Theorem11Options::default())?;
    println!("min(|V - U*|, |V + U*|) = {:.2e}", rep.defect);
    println!("Willmore before {:.10}, after {:.10}", rep.willmore_before, rep.willmore_after);
    if let Some(sp) = rep.spectra {
        println!("branch point distance {:.2e}, Kruskal relative defect {:.2e}", sp.branch_distance, sp.k_rel_defect);
    }
    Ok(())
}
