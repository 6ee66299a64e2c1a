//! Fit the approximation to a truncated stable measure at several radii.

use pgn::levy::LevyMeasure1D;
use pgn::matching::{match5, match_sym9, stable_p_asym};
use pgn::validation::quadrature_match_check;

fn main() -> pgn::Result<()> {
    let measure = LevyMeasure1D::trunc_stable(1.0, 1.0, 1.0);
    println!("closed-form p for a = 1: {}", stable_p_asym(1.0)?);
    for r in [1.0, 0.1, 0.01] {
        let fit = match5(&measure, r)?;
        let sym = match_sym9(&measure, r)?;
        println!(
            "r = {r:<5} p = {:.6} s = {:.3e} σ = {:.3e} | sym p = {:.6} | residuals {:.1e} {:.1e}",
            fit.p,
            fit.s,
            fit.sigma,
            sym.p,
            quadrature_match_check(&measure, &fit)?,
            quadrature_match_check(&measure, &sym)?,
        );
    }
    Ok(())
}
