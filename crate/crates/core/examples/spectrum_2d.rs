//! 2D Floquet spectrum: zeros of the truncated pencil on a slice, for the
//! zero potential and for a constant one, plus the C1 asymptotic fit.

use spectral_tori::floquet2d::{
    extract_c1, free_plane_distance, spectrum_scan, FitOptions, QuasimomentumPoint, ScanOptions, Slice, TruncatedPencil,
};
use spectral_tori::{c, FundamentalGrid, Lattice, PeriodicField};

fn main() -> spectral_tori::Result<()> {
    let lat = Lattice::hexagonal();
    let grid = FundamentalGrid::new(lat, 16, 16)?;
    let zero = PeriodicField::constant(grid, c(0.0, 0.0));
    let p = TruncatedPencil::new(&zero, 8)?;
    // a generic complex 2-plane cuts each free sheet in isolated points
    let slice = Slice::linear(
        QuasimomentumPoint::new(c(0.11, 0.07), c(-0.03, 0.13)),
        QuasimomentumPoint::new(c(1.0, 0.2), c(0.3, -0.1)),
        QuasimomentumPoint::new(c(-0.2, 0.4), c(0.9, 0.5)),
        (-1.5, 1.5),
        (-1.5, 1.5),
        41,
    );
    let scan = spectrum_scan(&p, &slice, &ScanOptions::default())?;
    let d = scan.flagged.iter().map(|z| free_plane_distance(&lat, &z.sample.k, 10)).fold(0.0, f64::max);
    println!("U = 0: {} flagged zeros, max distance to the free planes {d:.2e}", scan.flagged.len());

    let u = PeriodicField::constant(FundamentalGrid::new(Lattice::square(), 16, 16)?, c(0.2, 0.0));
    let p = TruncatedPencil::new(&u, 8)?;
    let fit = extract_c1(&p, &FitOptions::default())?;
    println!("U = 0.2: C1 = {:.10} (expected {:.10})", fit.c1, -0.04);
    println!("Willmore from C1 {:.10}, direct {:.10}", fit.willmore_from_c1, fit.willmore_direct);
    Ok(())
}
