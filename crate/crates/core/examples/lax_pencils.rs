//! Lax pencils: a periodic sinh-Gordon solution and its CMC monodromy, and
//! the isothermic pencil of the torus of revolution.

use spectral_tori::c;
use spectral_tori::lax::{cmc_monodromy, monodromy, sigma_involution, zero_curvature_residual, IsothermicData, LaxConnection, SinhGordonField};
use spectral_tori::surface::RevolutionTorus;

fn main() -> spectral_tori::Result<()> {
    let u = SinhGordonField::periodic(1.0, 128)?;
    println!("sinh-Gordon period {:.10}, ODE residual {:.2e}", u.period, u.residual);
    let zcc = LaxConnection::cmc_zcc(&u);
    for l in [c(1.0, 0.0), c(0.0, 1.0), c(0.5, 0.3)] {
        let m = cmc_monodromy(&u, l)?;
        println!(
            "lambda = {l}: eigenvalues {:?}, zero curvature {:.2e}, involution {:.2e}",
            m.eigenvalues,
            zero_curvature_residual(&zcc, l)?,
            sigma_involution(&zcc, l)?.set_distance
        );
    }

    let data = IsothermicData::revolution(&RevolutionTorus::new(2.0, 1.0)?, 128)?;
    let conn = LaxConnection::isothermic(&data)?;
    let m = monodromy(&conn, c(0.7, 0.0))?;
    println!("isothermic pencil at 0.7: eigenvalues {:?}", m.eigenvalues);
    Ok(())
}
