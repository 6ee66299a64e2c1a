//! Radial fit on the circle, then sample the approximation and compare
//! its covariance with Σ_τ.

use pgn::radial::{calibration_residual, radial_match, sample_mv, sigma_tau, MvPart, RadialLevySpec};
use pgn::sphere::{DirFn, SphereMeasure};

fn main() -> pgn::Result<()> {
    let spec = RadialLevySpec {
        nu: SphereMeasure::UniformSpherical { d: 2, total_mass: 1.0 },
        a: DirFn::constant(1.0),
        c: DirFn::constant(1.0),
        r0: 1.0,
        symmetric: true,
        direction_independent: true,
    };
    let field = radial_match(&spec, 0.1)?;
    let (sigma, _) = sigma_tau(&field)?;
    println!("r_τ = {:.4}, jump rate bound {:.2}", field.r_max, field.essup_b);
    println!("calibration residual {:.2e}", calibration_residual(&field, 256)?);

    let batch = sample_mv(&field, MvPart::T, 200_000, 3)?;
    let n = batch.n() as f64;
    let mut cov = [[0.0; 2]; 2];
    for i in 0..batch.n() {
        let x = batch.row(i);
        for a in 0..2 {
            for b in 0..2 {
                cov[a][b] += x[a] * x[b] / n;
            }
        }
    }
    println!("empirical cov {cov:.5?}");
    println!("Σ_τ           {sigma:.5}");
    Ok(())
}
