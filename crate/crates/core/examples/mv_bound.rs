//! Multivariate bound diagnostics as τ shrinks. Values are known only up
//! to a dimension-dependent constant.

use pgn::bounds::{mv_integral_diag, mv_moment_factor};
use pgn::radial::{radial_match, sigma_tau, RadialLevySpec};
use pgn::sphere::{DirFn, SphereMeasure};

fn main() -> pgn::Result<()> {
    let spec = RadialLevySpec {
        nu: SphereMeasure::UniformSpherical { d: 2, total_mass: 1.0 },
        a: DirFn::constant(0.5),
        c: DirFn::constant(1.0),
        r0: 1.0,
        symmetric: true,
        direction_independent: true,
    };
    for tau in [0.3, 0.1, 0.03, 0.01] {
        let field = radial_match(&spec, tau)?;
        let (_, a) = sigma_tau(&field)?;
        let rep = mv_integral_diag(&field, &a, 10)?;
        println!(
            "τ = {tau:<5} moment factor {:.3e} radical {:.3e} bound/c {:.3e}",
            mv_moment_factor(&field, &a, 10)?,
            rep.radical,
            rep.bound_modulo_constant
        );
    }
    Ok(())
}
